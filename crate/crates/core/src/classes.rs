//! Membership checks for the separable (SEP) and PPT instrument classes.
//!
//! Both checks work one CP map at a time. The PPT test partially transposes
//! the Choi matrix over a set of parties (each party contributing its input
//! copy and output factor). The separability test only certifies: it looks
//! for product structure in the given Kraus operators and answers
//! [`SepVerdict::Unknown`] when that fails.

use serde::Serialize;

use crate::error::Result;
use crate::instrument::{choi_of_map, Instrument, KrausMap};
use crate::linalg::{hermitian_eig, operator_schmidt_rect, partial_transpose, permute_operator};

/// Every nontrivial bipartition of `n` parties, written as the side that
/// excludes party 0. There are `2^{n−1} − 1` of them.
pub fn bipartitions(n: usize) -> Vec<Vec<usize>> {
    if n < 2 {
        return Vec::new();
    }
    (1u64..(1u64 << (n - 1)))
        .map(|mask| (1..n).filter(|&p| mask & (1 << (p - 1)) != 0).collect())
        .collect()
}

/// PPT check of a single cut.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PptCut {
    /// Parties whose Choi factors were transposed.
    pub parties: Vec<usize>,
    pub min_eigenvalue: f64,
    pub ppt: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PptReport {
    pub cuts: Vec<PptCut>,
    pub ppt: bool,
}

impl PptReport {
    /// Most negative partial-transpose eigenvalue over the checked cuts.
    pub fn min_eigenvalue(&self) -> f64 {
        self.cuts
            .iter()
            .map(|c| c.min_eigenvalue)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Checks whether the Choi matrix stays positive under partial transposition.
///
/// With `cut = None` every bipartition is checked.
pub fn is_ppt_map(m: &KrausMap, cut: Option<&[usize]>, tol: f64) -> Result<PptReport> {
    let choi = choi_of_map(m);
    let dims = choi.space_dims();
    let cuts = match cut {
        Some(c) => vec![c.to_vec()],
        None => bipartitions(m.party_dims().len()),
    };
    let mut out = Vec::with_capacity(cuts.len());
    for parties in cuts {
        let spaces: Vec<usize> = parties.iter().flat_map(|&p| [2 * p, 2 * p + 1]).collect();
        let pt = partial_transpose(&choi.matrix, &dims, &spaces)?;
        let min = hermitian_eig(&pt)?.values.last().copied().unwrap_or(0.0);
        out.push(PptCut {
            parties,
            min_eigenvalue: min,
            ppt: min >= -tol,
        });
    }
    Ok(PptReport {
        ppt: out.iter().all(|c| c.ppt),
        cuts: out,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SepVerdict {
    /// Every Kraus operator is a product across every cut.
    Yes,
    /// Some Kraus operator is entangling; another decomposition might still be product.
    Unknown,
}

/// Operator-Schmidt data of one Kraus operator across one cut.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SchmidtWitness {
    pub kraus_index: usize,
    pub cut: Vec<usize>,
    pub rank: usize,
    pub coefficients: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SepReport {
    pub verdict: SepVerdict,
    /// Largest operator-Schmidt rank found.
    pub max_rank: usize,
    /// The first witness of maximal rank.
    pub witness: Option<SchmidtWitness>,
}

/// Certifies separability of a CP map from its Kraus operators.
pub fn is_sep_finegrained(m: &KrausMap, tol: f64) -> Result<SepReport> {
    let n = m.party_dims().len();
    let mut best: Option<SchmidtWitness> = None;
    for (i, k) in m.kraus().iter().enumerate() {
        for cut in bipartitions(n) {
            let rest: Vec<usize> = (0..n).filter(|p| !cut.contains(p)).collect();
            let perm: Vec<usize> = cut.iter().chain(&rest).copied().collect();
            let permuted = permute_operator(k, m.out_dims(), m.party_dims(), &perm)?;
            let prod =
                |dims: &[usize], set: &[usize]| set.iter().map(|&p| dims[p]).product::<usize>();
            let out = (prod(m.out_dims(), &cut), prod(m.out_dims(), &rest));
            let inp = (prod(m.party_dims(), &cut), prod(m.party_dims(), &rest));
            let os = operator_schmidt_rect(&permuted, out, inp)?;
            let rank = os.rank(tol);
            if best.as_ref().is_none_or(|b| rank > b.rank) {
                best = Some(SchmidtWitness {
                    kraus_index: i,
                    cut: cut.clone(),
                    rank,
                    coefficients: os.coefficients.clone(),
                });
            }
        }
    }
    let max_rank = best.as_ref().map_or(0, |b| b.rank);
    Ok(SepReport {
        verdict: if max_rank <= 1 {
            SepVerdict::Yes
        } else {
            SepVerdict::Unknown
        },
        max_rank,
        witness: best,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MapClassification {
    pub label: String,
    pub sep: SepReport,
    pub ppt: PptReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub maps: Vec<MapClassification>,
    /// Yes when every map is certified separable.
    pub sep: SepVerdict,
    pub ppt: bool,
    /// Deviation of the summed effect from the identity.
    pub tp_deviation: f64,
}

/// Runs both checks on every map of an instrument.
pub fn classify_instrument(j: &Instrument, tol: f64) -> Result<ClassificationReport> {
    let maps = j
        .iter()
        .map(|(label, m)| {
            Ok(MapClassification {
                label: label.to_string(),
                sep: is_sep_finegrained(m, tol)?,
                ppt: is_ppt_map(m, None, tol)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sep = if maps.iter().all(|c| c.sep.verdict == SepVerdict::Yes) {
        SepVerdict::Yes
    } else {
        SepVerdict::Unknown
    };
    Ok(ClassificationReport {
        ppt: maps.iter().all(|c| c.ppt.ppt),
        sep,
        tp_deviation: j.validate(tol).deviation,
        maps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CMatrix;

    fn swap() -> CMatrix {
        CMatrix::from_real(
            4,
            4,
            &[
                1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0,
            ],
        )
        .unwrap()
    }

    fn depolarizing() -> KrausMap {
        let paulis = [
            CMatrix::identity(2),
            CMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]).unwrap(),
            CMatrix::new(
                2,
                2,
                vec![
                    crate::linalg::cr(0.0),
                    crate::linalg::C64::new(0.0, -1.0),
                    crate::linalg::C64::new(0.0, 1.0),
                    crate::linalg::cr(0.0),
                ],
            )
            .unwrap(),
            CMatrix::diag_real(&[1.0, -1.0]),
        ];
        let mut kraus = Vec::new();
        for a in &paulis {
            for b in &paulis {
                kraus.push(a.kron(b).scale_real(0.25));
            }
        }
        KrausMap::new(vec![2, 2], kraus).unwrap()
    }

    #[test]
    fn bipartition_counts() {
        assert_eq!(bipartitions(2), vec![vec![1]]);
        assert_eq!(bipartitions(3).len(), 3);
        assert_eq!(bipartitions(4).len(), 7);
    }

    #[test]
    fn depolarizing_is_ppt() {
        let m = depolarizing();
        assert!(m.is_trace_preserving(1e-12));
        let c = m.choi().matrix;
        assert!(c.max_abs_diff(&CMatrix::identity(16).scale_real(0.25)) < 1e-12);
        assert!(is_ppt_map(&m, None, 1e-12).unwrap().ppt);
    }

    #[test]
    fn identity_is_ppt_and_swap_is_not() {
        // the identity's Choi is a product across A′A : B′B, so every cut is positive
        let r = is_ppt_map(&KrausMap::identity(vec![2, 2]), Some(&[1]), 1e-12).unwrap();
        assert!(r.ppt);
        assert!(r.min_eigenvalue().abs() < 1e-12);
        // the swap's Choi is maximally entangled across the cut
        let r = is_ppt_map(
            &KrausMap::single(vec![2, 2], swap()).unwrap(),
            Some(&[1]),
            1e-12,
        )
        .unwrap();
        assert!(!r.ppt);
        assert!((r.min_eigenvalue() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn product_and_swap_separability() {
        let id = KrausMap::identity(vec![2, 2]);
        assert_eq!(
            is_sep_finegrained(&id, 1e-10).unwrap().verdict,
            SepVerdict::Yes
        );
        let sw = KrausMap::single(vec![2, 2], swap()).unwrap();
        let r = is_sep_finegrained(&sw, 1e-10).unwrap();
        assert_eq!(r.verdict, SepVerdict::Unknown);
        assert_eq!(r.max_rank, 4);
    }

    #[test]
    fn rectangular_product_is_separable() {
        let a = CMatrix::from_real(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let b = CMatrix::from_real(2, 2, &[0.5, 0.0, 0.0, 0.5]).unwrap();
        let m = KrausMap::with_dims(vec![2, 2], vec![3, 2], vec![a.kron(&b)]).unwrap();
        assert_eq!(
            is_sep_finegrained(&m, 1e-10).unwrap().verdict,
            SepVerdict::Yes
        );
    }

    #[test]
    fn zero_map_is_separable_and_ppt() {
        let z = KrausMap::zero(vec![2, 2]);
        assert_eq!(
            is_sep_finegrained(&z, 1e-10).unwrap().verdict,
            SepVerdict::Yes
        );
        assert!(is_ppt_map(&z, None, 1e-12).unwrap().ppt);
    }
}
