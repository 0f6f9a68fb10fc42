//! LOCC protocol trees: one-way local rounds, LOCC linking, execution into
//! instruments, and the normalization / outcome-compression pipeline.
//!
//! A tree is partitioned into levels. At every node one party applies a
//! local Kraus operator for each branch and broadcasts the branch label;
//! the other parties may apply a unitary conditioned on that label. Leaves
//! sit at a common depth and are mapped to final outcome labels by a
//! coarse-graining table keyed by measurement history.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::caratheodory::caratheodory_reduce_minimal;
use crate::error::{Error, Result};
use crate::instrument::{choi_of_map, matrix_from_json, matrix_to_json, Instrument, KrausMap};
use crate::linalg::{self, hermitian_to_real_vec, polar_decompose, CMatrix};

/// Separator used when a measurement history is written as a single string.
pub const HISTORY_SEPARATOR: &str = "/";

/// Label of the single branch of an inserted identity node.
pub const TRIVIAL_LABEL: &str = "0";

/// Local dimensions of the parties sharing the system.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartyStructure {
    dims: Vec<usize>,
}

impl PartyStructure {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidProtocol(format!(
                "need at least two parties, got {}",
                dims.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidProtocol("zero local dimension".into()));
        }
        Ok(Self { dims })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn count(&self) -> usize {
        self.dims.len()
    }

    pub fn dim(&self, party: usize) -> usize {
        self.dims[party]
    }

    /// `D = Π_K d_K`.
    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }
}

/// One outcome of a node.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub label: String,
    /// Square Kraus operator on the acting party.
    pub kraus: CMatrix,
    /// Unitaries applied by other parties on this outcome, keyed by party.
    pub conditionals: BTreeMap<usize, CMatrix>,
    pub child: Option<Box<ProtocolNode>>,
}

impl Branch {
    pub fn new(label: impl Into<String>, kraus: CMatrix) -> Self {
        Self {
            label: label.into(),
            kraus,
            conditionals: BTreeMap::new(),
            child: None,
        }
    }

    pub fn with_conditional(mut self, party: usize, unitary: CMatrix) -> Self {
        self.conditionals.insert(party, unitary);
        self
    }

    pub fn with_child(mut self, child: ProtocolNode) -> Self {
        self.child = Some(Box::new(child));
        self
    }
}

/// A one-way local round performed at a fixed history.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolNode {
    pub party: usize,
    pub branches: Vec<Branch>,
}

impl ProtocolNode {
    pub fn new(party: usize, branches: Vec<Branch>) -> Self {
        Self { party, branches }
    }

    /// Identity node with a single branch labelled [`TRIVIAL_LABEL`].
    pub fn trivial(party: usize, dim: usize, child: Option<ProtocolNode>) -> Self {
        let mut b = Branch::new(TRIVIAL_LABEL, CMatrix::identity(dim));
        b.child = child.map(Box::new);
        Self::new(party, vec![b])
    }

    /// Single branch, identity Kraus operator and no non-identity conditionals.
    pub fn is_trivial(&self, tol: f64) -> bool {
        self.branches.len() == 1
            && self.branches[0].kraus.is_identity(tol)
            && self.branches[0]
                .conditionals
                .values()
                .all(|u| u.is_identity(tol))
    }

    /// Global Kraus operator of a branch: the local operator on the acting
    /// party tensored with conditionals (or identities) elsewhere.
    pub fn global_operator(&self, branch: &Branch, parties: &PartyStructure) -> CMatrix {
        let factors: Vec<CMatrix> = (0..parties.count())
            .map(|p| {
                if p == self.party {
                    branch.kraus.clone()
                } else {
                    branch
                        .conditionals
                        .get(&p)
                        .cloned()
                        .unwrap_or_else(|| CMatrix::identity(parties.dim(p)))
                }
            })
            .collect();
        linalg::tensor_all(&factors)
    }

    /// The one-way local instrument implemented at this node.
    pub fn instrument(&self, parties: &PartyStructure) -> Result<Instrument> {
        let maps = self
            .branches
            .iter()
            .map(|b| KrausMap::single(parties.dims().to_vec(), self.global_operator(b, parties)))
            .collect::<Result<Vec<_>>>()?;
        Instrument::new(
            self.branches.iter().map(|b| b.label.clone()).collect(),
            maps,
        )
    }

    fn leaf_depth(&self) -> Result<usize> {
        let mut depth = None;
        for b in &self.branches {
            let d = match &b.child {
                Some(c) => c.leaf_depth()? + 1,
                None => 1,
            };
            match depth {
                None => depth = Some(d),
                Some(prev) if prev != d => {
                    return Err(Error::InvalidProtocol(format!(
                        "leaves at depths {} and {}",
                        prev, d
                    )))
                }
                _ => {}
            }
        }
        depth.ok_or_else(|| Error::InvalidProtocol("node without branches".into()))
    }
}

/// A finite-round LOCC protocol.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolTree {
    parties: PartyStructure,
    root: ProtocolNode,
    depth: usize,
    coarse_grain: BTreeMap<Vec<String>, String>,
}

/// A leaf of the tree with its accumulated global Kraus operator.
#[derive(Clone, Debug)]
pub struct Leaf {
    pub history: Vec<String>,
    pub operator: CMatrix,
}

const STRUCTURE_TOL: f64 = 1e-9;

impl ProtocolTree {
    /// Validates and assembles a tree.
    ///
    /// An empty `coarse_grain` table keeps every leaf as its own outcome,
    /// labelled by its joined history. A non-empty table must cover exactly
    /// the leaf histories.
    pub fn new(
        parties: PartyStructure,
        root: ProtocolNode,
        coarse_grain: BTreeMap<Vec<String>, String>,
    ) -> Result<Self> {
        let depth = root.leaf_depth()?;
        let tree = Self {
            parties,
            root,
            depth,
            coarse_grain,
        };
        tree.check_nodes(&tree.root)?;
        if !tree.coarse_grain.is_empty() {
            let leaves: BTreeSet<Vec<String>> = tree.leaf_histories().into_iter().collect();
            let keys: BTreeSet<Vec<String>> = tree.coarse_grain.keys().cloned().collect();
            if leaves != keys {
                let missing = leaves.difference(&keys).next();
                let extra = keys.difference(&leaves).next();
                return Err(Error::InvalidProtocol(format!(
                    "coarse-graining table does not match the leaves (missing {:?}, extra {:?})",
                    missing, extra
                )));
            }
        }
        Ok(tree)
    }

    fn check_nodes(&self, node: &ProtocolNode) -> Result<()> {
        let n = self.parties.count();
        if node.party >= n {
            return Err(Error::InvalidProtocol(format!(
                "party {} out of range",
                node.party
            )));
        }
        let d = self.parties.dim(node.party);
        let mut labels = BTreeSet::new();
        let mut effect = CMatrix::zeros(d, d);
        for b in &node.branches {
            if b.label.contains(HISTORY_SEPARATOR) {
                return Err(Error::InvalidProtocol(format!(
                    "label {:?} contains the history separator",
                    b.label
                )));
            }
            if !labels.insert(b.label.as_str()) {
                return Err(Error::InvalidProtocol(format!(
                    "duplicate branch label {:?}",
                    b.label
                )));
            }
            if b.kraus.shape() != (d, d) {
                return Err(Error::DimensionMismatch(format!(
                    "Kraus operator for party {} must be {}x{}",
                    node.party, d, d
                )));
            }
            for (&j, u) in &b.conditionals {
                if j >= n || j == node.party {
                    return Err(Error::InvalidProtocol(format!(
                        "conditional on party {} at a node of party {}",
                        j, node.party
                    )));
                }
                if u.shape() != (self.parties.dim(j), self.parties.dim(j))
                    || !u.is_unitary(STRUCTURE_TOL)
                {
                    return Err(Error::InvalidProtocol(format!(
                        "conditional for party {} on branch {:?} is not a unitary",
                        j, b.label
                    )));
                }
            }
            effect += &b.kraus.gram();
            if let Some(c) = &b.child {
                self.check_nodes(c)?;
            }
        }
        let deviation = (&effect - &CMatrix::identity(d)).frobenius_norm();
        if deviation > STRUCTURE_TOL {
            return Err(Error::NotTracePreserving { deviation });
        }
        Ok(())
    }

    pub fn parties(&self) -> &PartyStructure {
        &self.parties
    }

    pub fn root(&self) -> &ProtocolNode {
        &self.root
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn coarse_grain_table(&self) -> &BTreeMap<Vec<String>, String> {
        &self.coarse_grain
    }

    /// Final outcome label of a leaf history.
    pub fn outcome_label(&self, history: &[String]) -> String {
        self.coarse_grain
            .get(history)
            .cloned()
            .unwrap_or_else(|| history.join(HISTORY_SEPARATOR))
    }

    /// Leaf histories in depth-first branch order.
    pub fn leaf_histories(&self) -> Vec<Vec<String>> {
        fn walk(node: &ProtocolNode, prefix: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
            for b in &node.branches {
                prefix.push(b.label.clone());
                match &b.child {
                    Some(c) => walk(c, prefix, out),
                    None => out.push(prefix.clone()),
                }
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut Vec::new(), &mut out);
        out
    }

    /// All leaves with the product of global operators along their path.
    pub fn leaves(&self) -> Vec<Leaf> {
        fn walk(
            node: &ProtocolNode,
            parties: &PartyStructure,
            prefix: &mut Vec<String>,
            acc: &CMatrix,
            out: &mut Vec<Leaf>,
        ) {
            for b in &node.branches {
                prefix.push(b.label.clone());
                let op = node.global_operator(b, parties).matmul(acc);
                match &b.child {
                    Some(c) => walk(c, parties, prefix, &op, out),
                    None => out.push(Leaf {
                        history: prefix.clone(),
                        operator: op,
                    }),
                }
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        let id = CMatrix::identity(self.parties.total_dim());
        walk(&self.root, &self.parties, &mut Vec::new(), &id, &mut out);
        out
    }

    /// Nodes grouped by level (level 0 holds the root).
    pub fn levels(&self) -> Vec<Vec<&ProtocolNode>> {
        fn walk<'a>(node: &'a ProtocolNode, l: usize, out: &mut Vec<Vec<&'a ProtocolNode>>) {
            if out.len() <= l {
                out.push(Vec::new());
            }
            out[l].push(node);
            for b in &node.branches {
                if let Some(c) = &b.child {
                    walk(c, l + 1, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, 0, &mut out);
        out
    }

    /// Largest branch count of any node, per level.
    pub fn max_branches_per_level(&self) -> Vec<usize> {
        self.levels()
            .iter()
            .map(|nodes| nodes.iter().map(|n| n.branches.len()).max().unwrap_or(0))
            .collect()
    }

    /// Distinct final outcome labels, sorted.
    pub fn outcome_labels(&self) -> Vec<String> {
        let set: BTreeSet<String> = self
            .leaf_histories()
            .iter()
            .map(|h| self.outcome_label(h))
            .collect();
        set.into_iter().collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ProtocolFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ProtocolFile = serde_json::from_str(s)?;
        file.try_into()
    }
}

/// One-way local instrument: party `k` applies `local`, every other party `J`
/// applies the trace-preserving map `conditionals[label][J]` (identity when absent).
pub fn one_way_local(
    k: usize,
    parties: &PartyStructure,
    local: &Instrument,
    conditionals: &BTreeMap<String, BTreeMap<usize, KrausMap>>,
    tol: f64,
) -> Result<Instrument> {
    if k >= parties.count() {
        return Err(Error::InvalidProtocol(format!("party {} out of range", k)));
    }
    if local.party_dims() != [parties.dim(k)] || local.out_dims() != [parties.dim(k)] {
        return Err(Error::DimensionMismatch(format!(
            "local instrument acts on {:?}, party {} has dimension {}",
            local.party_dims(),
            k,
            parties.dim(k)
        )));
    }
    if let Some(l) = conditionals.keys().find(|l| local.get(l).is_none()) {
        return Err(Error::LabelNotInIndexSet(l.clone()));
    }
    let mut maps = Vec::with_capacity(local.len());
    for (label, e) in local.iter() {
        let conds = conditionals.get(label);
        let mut acc: Option<KrausMap> = None;
        for p in 0..parties.count() {
            let factor = if p == k {
                e.clone()
            } else {
                match conds.and_then(|c| c.get(&p)) {
                    Some(t) => {
                        if t.party_dims() != [parties.dim(p)] || t.out_dims() != [parties.dim(p)] {
                            return Err(Error::DimensionMismatch(format!(
                                "conditional for party {} acts on {:?}",
                                p,
                                t.party_dims()
                            )));
                        }
                        let deviation = t.tp_deviation();
                        if deviation > tol {
                            return Err(Error::NotTracePreserving { deviation });
                        }
                        t.clone()
                    }
                    None => KrausMap::identity(vec![parties.dim(p)]),
                }
            };
            acc = Some(match acc {
                None => factor,
                Some(a) => a.tensor(&factor),
            });
        }
        maps.push(acc.expect("at least two parties"));
    }
    Instrument::new(local.labels().to_vec(), maps)
}

/// Follows `j` by the conditional instrument of each outcome and coarse-grains
/// the pair `(a, b)` of outcomes to `f(a, b)`.
///
/// Output labels appear in order of first occurrence.
pub fn locc_link(
    j: &Instrument,
    conditionals: &BTreeMap<String, Instrument>,
    f: impl Fn(&str, &str) -> String,
) -> Result<Instrument> {
    let mut labels: Vec<String> = Vec::new();
    let mut maps: Vec<KrausMap> = Vec::new();
    let mut slot: HashMap<String, usize> = HashMap::new();
    for (a, first) in j.iter() {
        let cond = conditionals.get(a).ok_or_else(|| {
            Error::InvalidProtocol(format!("no conditional instrument for outcome {:?}", a))
        })?;
        for (b, second) in cond.iter() {
            let composed = first.then(second)?;
            let target = f(a, b);
            match slot.get(&target) {
                Some(&i) => maps[i] = maps[i].sum(&composed)?,
                None => {
                    slot.insert(target.clone(), labels.len());
                    labels.push(target);
                    maps.push(composed);
                }
            }
        }
    }
    Instrument::new(labels, maps)
}

/// Executes a tree into an instrument whose labels are sorted.
pub fn run_protocol(t: &ProtocolTree) -> Result<Instrument> {
    let dims = t.parties.dims().to_vec();
    let mut grouped: BTreeMap<String, Vec<CMatrix>> = BTreeMap::new();
    for leaf in t.leaves() {
        grouped
            .entry(t.outcome_label(&leaf.history))
            .or_default()
            .push(leaf.operator);
    }
    let (labels, maps): (Vec<String>, Vec<KrausMap>) = grouped
        .into_iter()
        .map(|(l, ops)| KrausMap::new(dims.clone(), ops).map(|m| (l, m)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    Instrument::new(labels, maps)
}

/// Executes a tree level by level through [`locc_link`], then applies the
/// final coarse-graining. Labels are sorted. Serves as an independent path
/// to [`run_protocol`].
pub fn run_protocol_by_linking(t: &ProtocolTree) -> Result<Instrument> {
    let mut current = t.root.instrument(&t.parties)?;
    let mut frontier: HashMap<String, &ProtocolNode> = HashMap::new();
    for b in &t.root.branches {
        if let Some(c) = &b.child {
            frontier.insert(b.label.clone(), c);
        }
    }
    for _ in 1..t.depth {
        let mut conds = BTreeMap::new();
        let mut next = HashMap::new();
        for (hist, node) in &frontier {
            conds.insert(hist.clone(), node.instrument(&t.parties)?);
            for b in &node.branches {
                if let Some(c) = &b.child {
                    next.insert(
                        format!("{}{}{}", hist, HISTORY_SEPARATOR, b.label),
                        c.as_ref(),
                    );
                }
            }
        }
        current = locc_link(&current, &conds, |a, b| {
            format!("{}{}{}", a, HISTORY_SEPARATOR, b)
        })?;
        frontier = next;
    }
    let fine = current.coarse_grain(|h| {
        let hist: Vec<String> = h.split(HISTORY_SEPARATOR).map(String::from).collect();
        t.outcome_label(&hist)
    });
    Ok(fine.sorted())
}

/// Measurement-ordered expansion followed by polar pushing.
///
/// The result has exactly one acting party per level, every non-final Kraus
/// operator is positive semidefinite, and non-final nodes carry no
/// conditionals. The implemented instrument is unchanged.
pub fn normalize_protocol(t: &ProtocolTree) -> Result<ProtocolTree> {
    let expanded = measurement_ordered_expansion(t, STRUCTURE_TOL)?;
    polar_push(&expanded)
}

/// Inserts identity nodes so that a single predetermined party acts at each level.
pub fn measurement_ordered_expansion(t: &ProtocolTree, tol: f64) -> Result<ProtocolTree> {
    let plans: Vec<Vec<usize>> = t
        .levels()
        .iter()
        .map(|nodes| {
            let acting: BTreeSet<usize> = nodes
                .iter()
                .filter(|n| !n.is_trivial(tol))
                .map(|n| n.party)
                .collect();
            if acting.is_empty() {
                vec![nodes.iter().map(|n| n.party).min().unwrap_or(0)]
            } else {
                acting.into_iter().collect()
            }
        })
        .collect();

    struct Expander<'a> {
        tree: &'a ProtocolTree,
        plans: Vec<Vec<usize>>,
        table: BTreeMap<Vec<String>, String>,
        tol: f64,
    }

    impl Expander<'_> {
        fn node(
            &mut self,
            node: &ProtocolNode,
            l: usize,
            sub: usize,
            orig: &[String],
            new: &[String],
        ) -> ProtocolNode {
            let party_here = self.plans[l][sub];
            let trivial = node.is_trivial(self.tol);
            let acts_here = if trivial {
                sub == 0
            } else {
                node.party == party_here
            };
            let dims = self.tree.parties.dims().to_vec();
            if !acts_here {
                let mut new_hist = new.to_vec();
                new_hist.push(TRIVIAL_LABEL.to_string());
                let child = self.node(node, l, sub + 1, orig, &new_hist);
                return ProtocolNode::trivial(party_here, dims[party_here], Some(child));
            }
            let party = if trivial { party_here } else { node.party };
            let branches = node
                .branches
                .iter()
                .map(|b| {
                    let mut o = orig.to_vec();
                    o.push(b.label.clone());
                    let mut n = new.to_vec();
                    n.push(b.label.clone());
                    let kraus = if trivial {
                        CMatrix::identity(dims[party])
                    } else {
                        b.kraus.clone()
                    };
                    let conditionals = if trivial {
                        BTreeMap::new()
                    } else {
                        b.conditionals.clone()
                    };
                    Branch {
                        label: b.label.clone(),
                        kraus,
                        conditionals,
                        child: self
                            .rest(b.child.as_deref(), l, sub + 1, &o, &n)
                            .map(Box::new),
                    }
                })
                .collect();
            ProtocolNode::new(party, branches)
        }

        fn rest(
            &mut self,
            child: Option<&ProtocolNode>,
            l: usize,
            sub: usize,
            orig: &[String],
            new: &[String],
        ) -> Option<ProtocolNode> {
            if sub < self.plans[l].len() {
                let party = self.plans[l][sub];
                let mut n = new.to_vec();
                n.push(TRIVIAL_LABEL.to_string());
                let next = self.rest(child, l, sub + 1, orig, &n);
                return Some(ProtocolNode::trivial(
                    party,
                    self.tree.parties.dim(party),
                    next,
                ));
            }
            match child {
                Some(c) => Some(self.node(c, l + 1, 0, orig, new)),
                None => {
                    self.table
                        .insert(new.to_vec(), self.tree.outcome_label(orig));
                    None
                }
            }
        }
    }

    let mut ex = Expander {
        tree: t,
        plans,
        table: BTreeMap::new(),
        tol,
    };
    let root = ex.node(&t.root, 0, 0, &[], &[]);
    ProtocolTree::new(t.parties.clone(), root, ex.table)
}

/// Replaces each non-final Kraus operator `M` by its positive factor `A`
/// (`M = U A`) and defers `U` to the same party's next operation. Other
/// parties' conditionals are deferred in the same way, so they only appear
/// at the final level.
pub fn polar_push(t: &ProtocolTree) -> Result<ProtocolTree> {
    fn push(
        node: &ProtocolNode,
        pending: &[CMatrix],
        parties: &PartyStructure,
    ) -> Result<ProtocolNode> {
        let k = node.party;
        let mut branches = Vec::with_capacity(node.branches.len());
        for b in &node.branches {
            let m_eff = b.kraus.matmul(&pending[k]);
            let t_eff: Vec<CMatrix> = (0..parties.count())
                .map(|p| match b.conditionals.get(&p) {
                    Some(u) => u.matmul(&pending[p]),
                    None => pending[p].clone(),
                })
                .collect();
            let branch = match &b.child {
                Some(c) => {
                    let polar = polar_decompose(&m_eff)?;
                    let mut next = t_eff;
                    next[k] = polar.u;
                    Branch {
                        label: b.label.clone(),
                        kraus: polar.a,
                        conditionals: BTreeMap::new(),
                        child: Some(Box::new(push(c, &next, parties)?)),
                    }
                }
                None => Branch {
                    label: b.label.clone(),
                    kraus: m_eff,
                    conditionals: t_eff
                        .into_iter()
                        .enumerate()
                        .filter(|(p, u)| *p != k && !u.is_identity(1e-14))
                        .collect(),
                    child: None,
                },
            };
            branches.push(branch);
        }
        Ok(ProtocolNode::new(k, branches))
    }
    let pending: Vec<CMatrix> = t
        .parties
        .dims()
        .iter()
        .map(|&d| CMatrix::identity(d))
        .collect();
    let root = push(&t.root, &pending, &t.parties)?;
    ProtocolTree::new(t.parties.clone(), root, t.coarse_grain.clone())
}

/// Checks the preconditions of [`compress_outcomes`].
pub fn check_normalized(t: &ProtocolTree, tol: f64) -> Result<()> {
    let levels = t.levels();
    let last = levels.len() - 1;
    for (l, nodes) in levels.iter().enumerate() {
        let parties: BTreeSet<usize> = nodes.iter().map(|n| n.party).collect();
        if parties.len() != 1 {
            return Err(Error::NotNormalized(format!(
                "level {} has acting parties {:?}",
                l + 1,
                parties
            )));
        }
        if l == last {
            continue;
        }
        for n in nodes {
            for b in &n.branches {
                if !b.kraus.is_psd(tol) {
                    return Err(Error::NotNormalized(format!(
                        "non-final Kraus operator on branch {:?} at level {} is not positive semidefinite",
                        b.label,
                        l + 1
                    )));
                }
                if b.conditionals.values().any(|u| !u.is_identity(tol)) {
                    return Err(Error::NotNormalized(format!(
                        "non-final branch {:?} at level {} carries a conditional",
                        b.label,
                        l + 1
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Upper bound `m · D^{4(r−l+1)}` on branches per node at level `l` (1-based), saturating.
pub fn outcome_bound(m: usize, total_dim: usize, depth: usize, level: usize) -> u128 {
    let exp = 4 * (depth + 1 - level) as u32;
    (total_dim as u128)
        .checked_pow(exp)
        .and_then(|p| p.checked_mul(m as u128))
        .unwrap_or(u128::MAX)
}

/// Relative singular-value threshold below which branch vectors count as affinely dependent.
pub const COMPRESSION_TOL: f64 = 1e-10;

/// Back-to-front Carathéodory compression of a normalized tree.
///
/// At each node, every branch is represented by the Choi matrices (one per
/// final outcome) of the instrument its subtree implements, written as a real
/// vector of length `m·D⁴`. Dividing by the total trace places these vectors
/// on an affine hyperplane; the node's branches are thinned to an affinely
/// independent subset with reweighted Kraus operators, which keeps the
/// weighted sum and therefore the instrument unchanged. Every node ends with
/// at most `m·D⁴ ≤ m·D^{4(r−l+1)}` branches.
pub fn compress_outcomes(t: &ProtocolTree, m: usize) -> Result<ProtocolTree> {
    check_normalized(t, STRUCTURE_TOL)?;
    let labels = t.outcome_labels();
    if labels.len() > m {
        return Err(Error::NotNormalized(format!(
            "tree has {} final outcomes, more than m = {}",
            labels.len(),
            m
        )));
    }
    let index: HashMap<String, usize> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.clone(), i))
        .collect();

    struct Compressor<'a> {
        tree: &'a ProtocolTree,
        index: HashMap<String, usize>,
        m: usize,
        kept: BTreeMap<Vec<String>, String>,
    }

    /// Leaf operators below a node: (outcome index, product of global operators from this node down).
    type Tail = Vec<(usize, CMatrix)>;

    impl Compressor<'_> {
        fn vectorize(&self, tail: &Tail) -> (Vec<f64>, f64) {
            let dims = self.tree.parties.dims().to_vec();
            let d = self.tree.parties.total_dim();
            let mut chois: Vec<CMatrix> = vec![CMatrix::zeros(d * d, d * d); self.m];
            let mut total = 0.0;
            for (lambda, op) in tail {
                let map =
                    KrausMap::single(dims.clone(), op.clone()).expect("global operator shape");
                let c = choi_of_map(&map);
                total += c.trace();
                chois[*lambda] += &c.matrix;
            }
            (
                chois.iter().flat_map(hermitian_to_real_vec).collect(),
                total,
            )
        }

        fn node(
            &mut self,
            node: &ProtocolNode,
            hist: &mut Vec<String>,
        ) -> Result<(ProtocolNode, Tail)> {
            let parties = &self.tree.parties;
            let mut branches = Vec::new();
            let mut tails: Vec<Tail> = Vec::new();
            for b in &node.branches {
                hist.push(b.label.clone());
                let g = node.global_operator(b, parties);
                let (child, tail) = match &b.child {
                    Some(c) => {
                        let (cn, ct) = self.node(c, hist)?;
                        let tail = ct.into_iter().map(|(l, op)| (l, op.matmul(&g))).collect();
                        (Some(Box::new(cn)), tail)
                    }
                    None => {
                        let lambda = self.index[&self.tree.outcome_label(hist)];
                        (None, vec![(lambda, g)])
                    }
                };
                hist.pop();
                if b.kraus.frobenius_norm() == 0.0 {
                    continue;
                }
                branches.push(Branch {
                    label: b.label.clone(),
                    kraus: b.kraus.clone(),
                    conditionals: b.conditionals.clone(),
                    child,
                });
                tails.push(tail);
            }
            if branches.len() > 1 {
                let vecs: Vec<(Vec<f64>, f64)> = tails.iter().map(|t| self.vectorize(t)).collect();
                let points: Vec<Vec<f64>> = vecs
                    .iter()
                    .map(|(v, w)| v.iter().map(|x| x / w).collect())
                    .collect();
                let weights: Vec<f64> = vecs.iter().map(|(_, w)| *w).collect();
                let red = caratheodory_reduce_minimal(&points, &weights, COMPRESSION_TOL)?;
                let mut new_branches = Vec::with_capacity(red.kept.len());
                let mut new_tails = Vec::with_capacity(red.kept.len());
                for (&i, &w) in red.kept.iter().zip(&red.weights) {
                    let s = (w / weights[i]).sqrt();
                    let mut b = branches[i].clone();
                    b.kraus = b.kraus.scale_real(s);
                    new_branches.push(b);
                    new_tails.push(
                        tails[i]
                            .iter()
                            .map(|(l, op)| (*l, op.scale_real(s)))
                            .collect(),
                    );
                }
                branches = new_branches;
                tails = new_tails;
            }
            Ok((
                ProtocolNode::new(node.party, branches),
                tails.into_iter().flatten().collect(),
            ))
        }

        fn record(&mut self, node: &ProtocolNode, hist: &mut Vec<String>) {
            for b in &node.branches {
                hist.push(b.label.clone());
                match &b.child {
                    Some(c) => self.record(c, hist),
                    None => {
                        self.kept
                            .insert(hist.clone(), self.tree.outcome_label(hist));
                    }
                }
                hist.pop();
            }
        }
    }

    let mut comp = Compressor {
        tree: t,
        index,
        m,
        kept: BTreeMap::new(),
    };
    let (root, _) = comp.node(&t.root, &mut Vec::new())?;
    comp.record(&root, &mut Vec::new());
    let table = std::mem::take(&mut comp.kept);
    ProtocolTree::new(t.parties.clone(), root, table)
}

type JsonMatrix = Vec<Vec<[f64; 2]>>;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct BranchFile {
    label: String,
    kraus: JsonMatrix,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    conditionals: BTreeMap<String, JsonMatrix>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct NodeFile {
    party: usize,
    branches: Vec<BranchFile>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    children: BTreeMap<String, NodeFile>,
}

/// Interchange format for protocol trees.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProtocolFile {
    parties: Vec<usize>,
    root: NodeFile,
    #[serde(default)]
    coarse_grain: BTreeMap<String, String>,
}

impl From<&ProtocolNode> for NodeFile {
    fn from(n: &ProtocolNode) -> Self {
        Self {
            party: n.party,
            branches: n
                .branches
                .iter()
                .map(|b| BranchFile {
                    label: b.label.clone(),
                    kraus: matrix_to_json(&b.kraus),
                    conditionals: b
                        .conditionals
                        .iter()
                        .map(|(p, u)| (p.to_string(), matrix_to_json(u)))
                        .collect(),
                })
                .collect(),
            children: n
                .branches
                .iter()
                .filter_map(|b| {
                    b.child
                        .as_ref()
                        .map(|c| (b.label.clone(), NodeFile::from(c.as_ref())))
                })
                .collect(),
        }
    }
}

impl NodeFile {
    fn into_node(self) -> Result<ProtocolNode> {
        let mut children = self.children;
        let mut branches = Vec::with_capacity(self.branches.len());
        for b in self.branches {
            let mut conditionals = BTreeMap::new();
            for (p, u) in &b.conditionals {
                let party: usize = p.parse().map_err(|_| {
                    Error::Parse(format!("conditional key {:?} is not a party index", p))
                })?;
                conditionals.insert(party, matrix_from_json(u)?);
            }
            let child = children
                .remove(&b.label)
                .map(|c| c.into_node())
                .transpose()?;
            branches.push(Branch {
                kraus: matrix_from_json(&b.kraus)?,
                label: b.label,
                conditionals,
                child: child.map(Box::new),
            });
        }
        if let Some(extra) = children.keys().next() {
            return Err(Error::Parse(format!(
                "child {:?} has no matching branch",
                extra
            )));
        }
        Ok(ProtocolNode::new(self.party, branches))
    }
}

impl From<&ProtocolTree> for ProtocolFile {
    fn from(t: &ProtocolTree) -> Self {
        Self {
            parties: t.parties.dims().to_vec(),
            root: NodeFile::from(&t.root),
            coarse_grain: t
                .coarse_grain
                .iter()
                .map(|(h, l)| (h.join(HISTORY_SEPARATOR), l.clone()))
                .collect(),
        }
    }
}

impl TryFrom<ProtocolFile> for ProtocolTree {
    type Error = Error;

    fn try_from(f: ProtocolFile) -> Result<Self> {
        let parties = PartyStructure::new(f.parties)?;
        let root = f.root.into_node()?;
        let table = f
            .coarse_grain
            .into_iter()
            .map(|(h, l)| (h.split(HISTORY_SEPARATOR).map(String::from).collect(), l))
            .collect();
        ProtocolTree::new(parties, root, table)
    }
}
