//! Completely positive maps in Kraus form, quantum instruments and their Choi matrices.
//!
//! Choi matrices use the unnormalized maximally entangled vector
//! `Φ = Σ_w |ww⟩` per party, with spaces interleaved as `(A′, A, B′, B, …)`:
//! the primed (input copy) factor of each party sits directly left of the
//! party's output factor.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, cr, CMatrix, C64};

/// A completely positive map `ρ ↦ Σ_i M_i ρ M_i†`.
///
/// An empty Kraus list is the zero map.
#[derive(Clone, Debug, PartialEq)]
pub struct KrausMap {
    kraus: Vec<CMatrix>,
    party_dims: Vec<usize>,
    out_dims: Vec<usize>,
}

impl KrausMap {
    /// Map whose output factorization equals its input factorization.
    pub fn new(party_dims: Vec<usize>, kraus: Vec<CMatrix>) -> Result<Self> {
        let out = party_dims.clone();
        Self::with_dims(party_dims, out, kraus)
    }

    pub fn with_dims(
        party_dims: Vec<usize>,
        out_dims: Vec<usize>,
        kraus: Vec<CMatrix>,
    ) -> Result<Self> {
        if party_dims.is_empty() || party_dims.len() != out_dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "input dims {:?} and output dims {:?} must list the same parties",
                party_dims, out_dims
            )));
        }
        if party_dims.iter().chain(&out_dims).any(|&d| d == 0) {
            return Err(Error::DimensionMismatch("zero local dimension".into()));
        }
        let din: usize = party_dims.iter().product();
        let dout: usize = out_dims.iter().product();
        for (i, k) in kraus.iter().enumerate() {
            if k.shape() != (dout, din) {
                return Err(Error::DimensionMismatch(format!(
                    "Kraus operator {} is {}x{}, expected {}x{}",
                    i,
                    k.rows(),
                    k.cols(),
                    dout,
                    din
                )));
            }
        }
        Ok(Self {
            kraus,
            party_dims,
            out_dims,
        })
    }

    pub fn zero(party_dims: Vec<usize>) -> Self {
        let out = party_dims.clone();
        Self {
            kraus: Vec::new(),
            party_dims,
            out_dims: out,
        }
    }

    pub fn identity(party_dims: Vec<usize>) -> Self {
        let d = party_dims.iter().product();
        let out = party_dims.clone();
        Self {
            kraus: vec![CMatrix::identity(d)],
            party_dims,
            out_dims: out,
        }
    }

    /// Single-Kraus map `ρ ↦ M ρ M†` on a square space.
    pub fn single(party_dims: Vec<usize>, m: CMatrix) -> Result<Self> {
        Self::new(party_dims, vec![m])
    }

    pub fn kraus(&self) -> &[CMatrix] {
        &self.kraus
    }

    pub fn into_kraus(self) -> Vec<CMatrix> {
        self.kraus
    }

    pub fn party_dims(&self) -> &[usize] {
        &self.party_dims
    }

    pub fn out_dims(&self) -> &[usize] {
        &self.out_dims
    }

    pub fn dim_in(&self) -> usize {
        self.party_dims.iter().product()
    }

    pub fn dim_out(&self) -> usize {
        self.out_dims.iter().product()
    }

    pub fn is_zero(&self) -> bool {
        self.kraus.is_empty()
    }

    /// `Σ_i M_i† M_i`.
    pub fn effect(&self) -> CMatrix {
        let mut acc = CMatrix::zeros(self.dim_in(), self.dim_in());
        for k in &self.kraus {
            acc += &k.gram();
        }
        acc
    }

    /// Unnormalized output `Σ_i M_i ρ M_i†`.
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let mut acc = CMatrix::zeros(self.dim_out(), self.dim_out());
        for k in &self.kraus {
            acc += &k.conjugate(rho);
        }
        acc
    }

    /// Frobenius deviation of `Σ M†M` from the identity.
    pub fn tp_deviation(&self) -> f64 {
        (&self.effect() - &CMatrix::identity(self.dim_in())).frobenius_norm()
    }

    pub fn is_trace_preserving(&self, tol: f64) -> bool {
        self.tp_deviation() <= tol
    }

    /// `Σ M†M ≤ I` within `tol`.
    pub fn is_trace_nonincreasing(&self, tol: f64) -> bool {
        let gap = &CMatrix::identity(self.dim_in()) - &self.effect();
        gap.is_psd(tol)
    }

    /// Kraus operators multiplied by `√λ`, so the Choi matrix scales by `λ`.
    pub fn scaled(&self, lambda: f64) -> Self {
        let s = lambda.sqrt();
        Self {
            kraus: self.kraus.iter().map(|k| k.scale_real(s)).collect(),
            party_dims: self.party_dims.clone(),
            out_dims: self.out_dims.clone(),
        }
    }

    /// Sequential composition: `self` first, then `after`.
    pub fn then(&self, after: &KrausMap) -> Result<Self> {
        if after.party_dims != self.out_dims {
            return Err(Error::DimensionMismatch(format!(
                "cannot compose: output dims {:?} feed input dims {:?}",
                self.out_dims, after.party_dims
            )));
        }
        let mut kraus = Vec::with_capacity(self.kraus.len() * after.kraus.len());
        for b in &after.kraus {
            for a in &self.kraus {
                kraus.push(b.matmul(a));
            }
        }
        Ok(Self {
            kraus,
            party_dims: self.party_dims.clone(),
            out_dims: after.out_dims.clone(),
        })
    }

    /// Tensor product with parties of `other` appended after those of `self`.
    pub fn tensor(&self, other: &KrausMap) -> Self {
        let mut kraus = Vec::with_capacity(self.kraus.len() * other.kraus.len());
        for a in &self.kraus {
            for b in &other.kraus {
                kraus.push(a.kron(b));
            }
        }
        let mut party_dims = self.party_dims.clone();
        party_dims.extend_from_slice(&other.party_dims);
        let mut out_dims = self.out_dims.clone();
        out_dims.extend_from_slice(&other.out_dims);
        Self {
            kraus,
            party_dims,
            out_dims,
        }
    }

    /// Concatenates Kraus lists (the CP map sum).
    pub fn sum(&self, other: &KrausMap) -> Result<Self> {
        if self.party_dims != other.party_dims || self.out_dims != other.out_dims {
            return Err(Error::DimensionMismatch(format!(
                "cannot add maps on {:?}->{:?} and {:?}->{:?}",
                self.party_dims, self.out_dims, other.party_dims, other.out_dims
            )));
        }
        let mut kraus = self.kraus.clone();
        kraus.extend(other.kraus.iter().cloned());
        Ok(Self {
            kraus,
            party_dims: self.party_dims.clone(),
            out_dims: self.out_dims.clone(),
        })
    }

    pub fn choi(&self) -> Choi {
        choi_of_map(self)
    }
}

/// Choi matrix with interleaved `(K′, K)` spaces per party.
#[derive(Clone, Debug, PartialEq)]
pub struct Choi {
    pub matrix: CMatrix,
    pub party_dims: Vec<usize>,
    pub out_dims: Vec<usize>,
}

impl Choi {
    /// Dimensions of the interleaved factors `(d_in(0), d_out(0), d_in(1), …)`.
    pub fn space_dims(&self) -> Vec<usize> {
        self.party_dims
            .iter()
            .zip(&self.out_dims)
            .flat_map(|(&i, &o)| [i, o])
            .collect()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }
}

/// Choi matrix `(𝓘 ⊗ 𝓔)(⊗_K Φ^{K′K})`.
pub fn choi_of_map(m: &KrausMap) -> Choi {
    let din = m.dim_in();
    let dout = m.dim_out();
    let n = m.party_dims.len();
    let mut old_dims = m.party_dims.clone();
    old_dims.extend_from_slice(&m.out_dims);
    let perm: Vec<usize> = (0..n).flat_map(|k| [k, n + k]).collect();
    let size = din * dout;
    let mut acc = CMatrix::zeros(size, size);
    for k in &m.kraus {
        let mut v = vec![cr(0.0); size];
        for w in 0..din {
            for o in 0..dout {
                v[w * dout + o] = k[(o, w)];
            }
        }
        let v = linalg::permute_vector(&v, &old_dims, &perm)
            .expect("dims are consistent by construction");
        acc += &CMatrix::outer(&v);
    }
    Choi {
        matrix: acc,
        party_dims: m.party_dims.clone(),
        out_dims: m.out_dims.clone(),
    }
}

/// Result of [`Instrument::validate`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    /// `‖Σ_j Σ_i M_{ji}† M_{ji} − I‖_F`.
    pub deviation: f64,
    /// Per-map `Σ M†M ≤ I` check, in label order.
    pub trace_bounded: Vec<bool>,
    pub valid: bool,
}

/// One outcome of [`Instrument::apply`].
#[derive(Clone, Debug)]
pub struct Outcome {
    pub label: String,
    pub probability: f64,
    /// Normalized post-measurement state, `None` when the probability is zero.
    pub state: Option<CMatrix>,
}

/// A finite family of CP maps indexed by string labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Instrument {
    labels: Vec<String>,
    maps: Vec<KrausMap>,
}

impl Instrument {
    pub fn new(labels: Vec<String>, maps: Vec<KrausMap>) -> Result<Self> {
        if labels.len() != maps.len() {
            return Err(Error::InvalidInstrument(format!(
                "{} labels for {} maps",
                labels.len(),
                maps.len()
            )));
        }
        if maps.is_empty() {
            return Err(Error::InvalidInstrument(
                "instrument has no outcomes".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::InvalidInstrument(format!("duplicate label {:?}", l)));
            }
        }
        let (pd, od) = (&maps[0].party_dims, &maps[0].out_dims);
        if let Some(bad) = maps
            .iter()
            .position(|m| &m.party_dims != pd || &m.out_dims != od)
        {
            return Err(Error::DimensionMismatch(format!(
                "map {:?} has dims {:?}->{:?}, expected {:?}->{:?}",
                labels[bad], maps[bad].party_dims, maps[bad].out_dims, pd, od
            )));
        }
        Ok(Self { labels, maps })
    }

    /// Builds an instrument from `(label, map)` pairs.
    pub fn from_pairs<S: Into<String>>(
        pairs: impl IntoIterator<Item = (S, KrausMap)>,
    ) -> Result<Self> {
        let (labels, maps): (Vec<String>, Vec<KrausMap>) =
            pairs.into_iter().map(|(l, m)| (l.into(), m)).unzip();
        Self::new(labels, maps)
    }

    /// One-outcome instrument.
    pub fn single(label: impl Into<String>, map: KrausMap) -> Self {
        Self {
            labels: vec![label.into()],
            maps: vec![map],
        }
    }

    /// The identity instrument with a single outcome labelled `"0"`.
    pub fn identity(party_dims: Vec<usize>) -> Self {
        Self::single("0", KrausMap::identity(party_dims))
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn maps(&self) -> &[KrausMap] {
        &self.maps
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &KrausMap)> {
        self.labels.iter().map(String::as_str).zip(&self.maps)
    }

    pub fn get(&self, label: &str) -> Option<&KrausMap> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| &self.maps[i])
    }

    pub fn party_dims(&self) -> &[usize] {
        &self.maps[0].party_dims
    }

    pub fn out_dims(&self) -> &[usize] {
        &self.maps[0].out_dims
    }

    pub fn dim_in(&self) -> usize {
        self.maps[0].dim_in()
    }

    /// Total number of Kraus operators over all outcomes.
    pub fn kraus_count(&self) -> usize {
        self.maps.iter().map(|m| m.kraus.len()).sum()
    }

    /// The fully coarse-grained channel.
    pub fn total_map(&self) -> KrausMap {
        let mut kraus = Vec::new();
        for m in &self.maps {
            kraus.extend(m.kraus.iter().cloned());
        }
        KrausMap {
            kraus,
            party_dims: self.party_dims().to_vec(),
            out_dims: self.out_dims().to_vec(),
        }
    }

    /// Checks that the maps sum to a trace-preserving map.
    pub fn validate(&self, tol: f64) -> ValidationReport {
        let din = self.dim_in();
        let mut total = CMatrix::zeros(din, din);
        let mut trace_bounded = Vec::with_capacity(self.maps.len());
        for m in &self.maps {
            let e = m.effect();
            trace_bounded.push((&CMatrix::identity(din) - &e).is_psd(tol));
            total += &e;
        }
        let deviation = (&total - &CMatrix::identity(din)).frobenius_norm();
        ValidationReport {
            deviation,
            valid: deviation <= tol && trace_bounded.iter().all(|&b| b),
            trace_bounded,
        }
    }

    /// Applies the instrument to a density matrix.
    pub fn apply(&self, rho: &CMatrix, tol: f64) -> Result<Vec<Outcome>> {
        check_density(rho, self.dim_in(), tol)?;
        Ok(self
            .iter()
            .map(|(label, m)| {
                let out = m.apply(rho);
                let p = out.trace().re;
                let state = (p > tol).then(|| out.scale_real(1.0 / p));
                Outcome {
                    label: label.to_string(),
                    probability: p.max(0.0),
                    state,
                }
            })
            .collect())
    }

    pub fn chois(&self) -> Vec<Choi> {
        self.maps.iter().map(choi_of_map).collect()
    }

    /// Merges outcomes through `f`; output labels keep order of first appearance.
    pub fn coarse_grain(&self, f: impl Fn(&str) -> String) -> Self {
        let mut labels: Vec<String> = Vec::new();
        let mut maps: Vec<KrausMap> = Vec::new();
        let mut slot: HashMap<String, usize> = HashMap::new();
        for (label, m) in self.iter() {
            let target = f(label);
            match slot.get(&target) {
                Some(&i) => maps[i].kraus.extend(m.kraus.iter().cloned()),
                None => {
                    slot.insert(target.clone(), labels.len());
                    labels.push(target);
                    maps.push(m.clone());
                }
            }
        }
        Self { labels, maps }
    }

    /// Coarse-grains through an explicit table; every label must be mapped.
    pub fn coarse_grain_with(&self, table: &HashMap<String, String>) -> Result<Self> {
        if let Some(missing) = self.labels.iter().find(|l| !table.contains_key(*l)) {
            return Err(Error::InvalidInstrument(format!(
                "coarse-graining table has no entry for {:?}",
                missing
            )));
        }
        Ok(self.coarse_grain(|l| table[l].clone()))
    }

    /// Re-indexes onto `theta`, inserting zero maps for new labels.
    pub fn pad(&self, theta: &[String]) -> Result<Self> {
        let target: BTreeSet<&str> = theta.iter().map(String::as_str).collect();
        if target.len() != theta.len() {
            return Err(Error::InvalidInstrument(
                "padding target has duplicate labels".into(),
            ));
        }
        if let Some(missing) = self.labels.iter().find(|l| !target.contains(l.as_str())) {
            return Err(Error::LabelNotInIndexSet(missing.clone()));
        }
        let maps = theta
            .iter()
            .map(|l| {
                self.get(l).cloned().unwrap_or_else(|| KrausMap {
                    kraus: Vec::new(),
                    party_dims: self.party_dims().to_vec(),
                    out_dims: self.out_dims().to_vec(),
                })
            })
            .collect();
        Ok(Self {
            labels: theta.to_vec(),
            maps,
        })
    }

    /// Tensors every map with `other`, appending `other`'s parties.
    pub fn extend_with(&self, other: &KrausMap) -> Self {
        Self {
            labels: self.labels.clone(),
            maps: self.maps.iter().map(|m| m.tensor(other)).collect(),
        }
    }

    /// Composes every map with a trailing map (`self` first).
    pub fn then_map(&self, after: &KrausMap) -> Result<Self> {
        Ok(Self {
            labels: self.labels.clone(),
            maps: self
                .maps
                .iter()
                .map(|m| m.then(after))
                .collect::<Result<_>>()?,
        })
    }

    /// Sorts outcomes by label.
    pub fn sorted(&self) -> Self {
        let mut idx: Vec<usize> = (0..self.labels.len()).collect();
        idx.sort_by(|&a, &b| self.labels[a].cmp(&self.labels[b]));
        Self {
            labels: idx.iter().map(|&i| self.labels[i].clone()).collect(),
            maps: idx.iter().map(|&i| self.maps[i].clone()).collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&InstrumentFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: InstrumentFile = serde_json::from_str(s)?;
        file.try_into()
    }
}

/// Checks that `rho` is a density matrix of size `dim`.
pub fn check_density(rho: &CMatrix, dim: usize, tol: f64) -> Result<()> {
    if rho.shape() != (dim, dim) {
        return Err(Error::InvalidDensity(format!(
            "expected {}x{}, got {}x{}",
            dim,
            dim,
            rho.rows(),
            rho.cols()
        )));
    }
    if !rho.is_hermitian(tol) {
        return Err(Error::InvalidDensity("not Hermitian".into()));
    }
    let tr = rho.trace();
    if (tr - cr(1.0)).norm() > tol {
        return Err(Error::InvalidDensity(format!(
            "trace {} differs from 1",
            tr.re
        )));
    }
    if !rho.is_psd(tol) {
        return Err(Error::InvalidDensity("not positive semidefinite".into()));
    }
    Ok(())
}

/// `D_Choi(j1, j2) = Σ_j ‖Ω_j − Ω̃_j‖₁` over a shared index set.
pub fn instrument_choi_distance(j1: &Instrument, j2: &Instrument) -> Result<f64> {
    let a: BTreeSet<&str> = j1.labels.iter().map(String::as_str).collect();
    let b: BTreeSet<&str> = j2.labels.iter().map(String::as_str).collect();
    if a != b {
        return Err(Error::IndexSetMismatch(format!(
            "{:?} vs {:?}",
            j1.labels, j2.labels
        )));
    }
    if j1.party_dims() != j2.party_dims() || j1.out_dims() != j2.out_dims() {
        return Err(Error::DimensionMismatch(format!(
            "instruments act on {:?} and {:?}",
            j1.party_dims(),
            j2.party_dims()
        )));
    }
    let mut total = 0.0;
    for (label, m) in j1.iter() {
        let other = j2.get(label).expect("label sets are equal");
        let diff = &m.choi().matrix - &other.choi().matrix;
        total += hermitian_trace_norm(&diff);
    }
    Ok(total)
}

/// Trace norm of a Hermitian matrix via its spectrum.
pub(crate) fn hermitian_trace_norm(m: &CMatrix) -> f64 {
    match linalg::hermitian_eig(m) {
        Ok(e) => e.values.iter().map(|v| v.abs()).sum(),
        Err(_) => linalg::trace_norm(m),
    }
}

/// Convex mixture: Choi of output `j` is `λ·Ω_j + (1−λ)·Ω̃_j` over the label union.
pub fn mix_instruments(j1: &Instrument, j2: &Instrument, lambda: f64) -> Result<Instrument> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!(
            "mixing weight {} outside [0,1]",
            lambda
        )));
    }
    if j1.party_dims() != j2.party_dims() || j1.out_dims() != j2.out_dims() {
        return Err(Error::DimensionMismatch(format!(
            "cannot mix instruments on {:?} and {:?}",
            j1.party_dims(),
            j2.party_dims()
        )));
    }
    let mut labels = j1.labels.clone();
    for l in &j2.labels {
        if !labels.contains(l) {
            labels.push(l.clone());
        }
    }
    let zero = KrausMap {
        kraus: Vec::new(),
        party_dims: j1.party_dims().to_vec(),
        out_dims: j1.out_dims().to_vec(),
    };
    let part = |j: &Instrument, l: &str, w: f64| -> KrausMap {
        if w == 0.0 {
            return zero.clone();
        }
        j.get(l)
            .map(|m| m.scaled(w))
            .unwrap_or_else(|| zero.clone())
    };
    let maps = labels
        .iter()
        .map(|l| part(j1, l, lambda).sum(&part(j2, l, 1.0 - lambda)))
        .collect::<Result<Vec<_>>>()?;
    Instrument::new(labels, maps)
}

/// Row-major matrix of `[re, im]` pairs.
pub type JsonMatrix = Vec<Vec<[f64; 2]>>;

/// Interchange format for instruments.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstrumentFile {
    pub party_dims: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dims: Option<Vec<usize>>,
    pub labels: Vec<String>,
    pub maps: Vec<Vec<JsonMatrix>>,
}

pub fn matrix_to_json(m: &CMatrix) -> JsonMatrix {
    (0..m.rows())
        .map(|r| {
            (0..m.cols())
                .map(|c| [m[(r, c)].re, m[(r, c)].im])
                .collect()
        })
        .collect()
}

pub fn matrix_from_json(rows: &JsonMatrix) -> Result<CMatrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Parse("ragged matrix rows".into()));
    }
    let data: Vec<C64> = rows
        .iter()
        .flatten()
        .map(|&[re, im]| C64::new(re, im))
        .collect();
    CMatrix::new(r, c, data)
}

/// Interchange format for input states.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateFile {
    Density {
        density: JsonMatrix,
    },
    /// Pure state, normalized on load.
    Vector {
        vector: Vec<[f64; 2]>,
    },
}

impl StateFile {
    pub fn into_density(self) -> Result<CMatrix> {
        match self {
            StateFile::Density { density } => matrix_from_json(&density),
            StateFile::Vector { vector } => {
                let v: Vec<C64> = vector.iter().map(|&[re, im]| C64::new(re, im)).collect();
                let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if norm == 0.0 {
                    return Err(Error::InvalidDensity("zero state vector".into()));
                }
                Ok(CMatrix::outer(
                    &v.iter().map(|z| z / norm).collect::<Vec<_>>(),
                ))
            }
        }
    }
}

/// Parses a [`StateFile`] into a density matrix.
pub fn state_from_json(s: &str) -> Result<CMatrix> {
    serde_json::from_str::<StateFile>(s)?.into_density()
}

impl From<&Instrument> for InstrumentFile {
    fn from(j: &Instrument) -> Self {
        let out = (j.out_dims() != j.party_dims()).then(|| j.out_dims().to_vec());
        Self {
            party_dims: j.party_dims().to_vec(),
            out_dims: out,
            labels: j.labels.clone(),
            maps: j
                .maps
                .iter()
                .map(|m| m.kraus.iter().map(matrix_to_json).collect())
                .collect(),
        }
    }
}

impl TryFrom<InstrumentFile> for Instrument {
    type Error = Error;

    fn try_from(f: InstrumentFile) -> Result<Self> {
        let out = f.out_dims.unwrap_or_else(|| f.party_dims.clone());
        let maps = f
            .maps
            .iter()
            .map(|ops| {
                let kraus = ops
                    .iter()
                    .map(matrix_from_json)
                    .collect::<Result<Vec<_>>>()?;
                KrausMap::with_dims(f.party_dims.clone(), out.clone(), kraus)
            })
            .collect::<Result<Vec<_>>>()?;
        Instrument::new(f.labels, maps)
    }
}
