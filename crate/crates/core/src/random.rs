//! Seeded random matrices, states and instruments for property tests and sampling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use std::collections::BTreeMap;

use crate::instrument::{Instrument, KrausMap};
use crate::linalg::{polar_decompose, CMatrix, C64};
use crate::protocol::{Branch, PartyStructure, ProtocolNode, ProtocolTree};

/// Deterministic generator used across the crate.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Matrix with i.i.d. standard complex Gaussian entries.
pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// Haar-distributed unitary from the polar factor of a Gaussian matrix.
pub fn unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    polar_decompose(&gaussian_matrix(d, d, rng))
        .expect("square input")
        .u
}

/// Random isometry `C^cols → C^rows`.
pub fn isometry<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    polar_decompose(&gaussian_matrix(rows, cols, rng))
        .expect("rows >= cols")
        .u
}

/// Random pure state vector of dimension `d`.
pub fn pure_state<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<C64> {
    let g = gaussian_matrix(d, 1, rng).into_vec();
    let norm = g.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    g.into_iter().map(|z| z / norm).collect()
}

/// Random full-rank density matrix `G G† / tr(G G†)`.
pub fn density<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    let g = gaussian_matrix(d, d, rng);
    let rho = g.matmul(&g.adjoint());
    let tr = rho.trace().re;
    rho.scale_real(1.0 / tr).hermitian_part()
}

/// `n` square Kraus operators on dimension `d` with `Σ M†M = I`, cut from one isometry.
pub fn complete_kraus_set<R: Rng + ?Sized>(d: usize, n: usize, rng: &mut R) -> Vec<CMatrix> {
    let v = isometry(n * d, d, rng);
    (0..n)
        .map(|k| CMatrix::from_fn(d, d, |r, c| v[(k * d + r, c)]))
        .collect()
}

/// Random fine-grained instrument with `n` single-Kraus outcomes labelled `"0"`, `"1"`, ….
pub fn instrument<R: Rng + ?Sized>(party_dims: &[usize], n: usize, rng: &mut R) -> Instrument {
    let d = party_dims.iter().product();
    let maps = complete_kraus_set(d, n, rng)
        .into_iter()
        .map(|k| KrausMap::single(party_dims.to_vec(), k).expect("shape matches"))
        .collect();
    Instrument::new((0..n).map(|i| i.to_string()).collect(), maps).expect("distinct labels")
}

/// Random instrument whose outcomes each carry several Kraus operators.
pub fn coarse_instrument<R: Rng + ?Sized>(
    party_dims: &[usize],
    outcomes: usize,
    kraus_per_outcome: usize,
    rng: &mut R,
) -> Instrument {
    let fine = instrument(party_dims, outcomes * kraus_per_outcome, rng);
    fine.coarse_grain(|l| {
        let i: usize = l.parse().expect("numeric label");
        (i / kraus_per_outcome).to_string()
    })
}

/// Random protocol tree with `levels` rounds; party `l mod N` acts at level `l`.
///
/// Each node has between 1 and `max_outcomes` outcomes, and each branch
/// carries a random unitary correction on the next party with probability ½.
pub fn protocol_tree<R: Rng + ?Sized>(
    dims: &[usize],
    levels: usize,
    max_outcomes: usize,
    rng: &mut R,
) -> ProtocolTree {
    fn node<R: Rng + ?Sized>(
        dims: &[usize],
        level: usize,
        levels: usize,
        max: usize,
        rng: &mut R,
    ) -> ProtocolNode {
        let party = level % dims.len();
        let d = dims[party];
        let n = rng.random_range(1..=max.max(1));
        let branches = complete_kraus_set(d, n, rng)
            .into_iter()
            .enumerate()
            .map(|(i, k)| {
                let mut b = Branch::new(i.to_string(), k);
                if rng.random_bool(0.5) {
                    let other = (party + 1) % dims.len();
                    b = b.with_conditional(other, unitary(dims[other], rng));
                }
                if level + 1 < levels {
                    b = b.with_child(node(dims, level + 1, levels, max, rng));
                }
                b
            })
            .collect();
        ProtocolNode::new(party, branches)
    }
    let parties = PartyStructure::new(dims.to_vec()).expect("at least two parties");
    let root = node(dims, 0, levels.max(1), max_outcomes, rng);
    ProtocolTree::new(parties, root, BTreeMap::new()).expect("generated tree is valid")
}
