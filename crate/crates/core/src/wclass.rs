//! Three-qubit W-class states, the random-concurrence monotone 𝒞, binary
//! local measurements acting on the W-class representation, and the
//! two-qubit Wootters concurrence.
//!
//! A W-class state is locally equivalent to
//! `√x₀|000⟩ + √x_A|100⟩ + √x_B|010⟩ + √x_C|001⟩` and is represented by
//! `x = (x_A, x_B, x_C)` with `x₀ = 1 − x_A − x_B − x_C`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instrument::check_density;
use crate::linalg::{cr, hermitian_eig, svd, CMatrix, C64};
use crate::random;

/// One of the three qubit holders.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Party {
    A,
    B,
    C,
}

impl Party {
    pub const ALL: [Party; 3] = [Party::A, Party::B, Party::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// The two other parties in index order.
    pub fn others(self) -> [Party; 2] {
        match self {
            Party::A => [Party::B, Party::C],
            Party::B => [Party::A, Party::C],
            Party::C => [Party::A, Party::B],
        }
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Party::A => "A",
            Party::B => "B",
            Party::C => "C",
        };
        f.write_str(s)
    }
}

impl FromStr for Party {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" | "0" => Ok(Party::A),
            "B" | "b" | "1" => Ok(Party::B),
            "C" | "c" | "2" => Ok(Party::C),
            other => Err(Error::Parse(format!("unknown party {:?}", other))),
        }
    }
}

const ZERO_TOL: f64 = 1e-14;
const X0_SNAP: f64 = 64.0 * f64::EPSILON;

/// The representative `(x_A, x_B, x_C)` of a W-class state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WClassVector {
    x: [f64; 3],
}

impl WClassVector {
    pub fn new(xa: f64, xb: f64, xc: f64) -> Result<Self> {
        let x = [xa, xb, xc];
        if x.iter().any(|v| !v.is_finite() || *v < -ZERO_TOL) {
            return Err(Error::InvalidParameter(format!(
                "negative component in {:?}",
                x
            )));
        }
        if xa + xb + xc > 1.0 + 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "components {:?} sum above 1",
                x
            )));
        }
        Ok(Self {
            x: x.map(|v| v.max(0.0)),
        })
    }

    /// `|W⟩ = (|100⟩ + |010⟩ + |001⟩)/√3`.
    pub fn w() -> Self {
        Self { x: [1.0 / 3.0; 3] }
    }

    pub fn components(&self) -> [f64; 3] {
        self.x
    }

    pub fn get(&self, p: Party) -> f64 {
        self.x[p.index()]
    }

    /// `1 − Σx`, with rounding residue snapped to zero since it enters
    /// amplitudes through a square root.
    pub fn x0(&self) -> f64 {
        let r = 1.0 - self.x.iter().sum::<f64>();
        if r <= X0_SNAP {
            0.0
        } else {
            r
        }
    }

    /// Canonical representative.
    ///
    /// Two or more vanishing components give `(1, 0, 0)`. Exactly one
    /// vanishing component leaves a two-qubit pure state; its Schmidt
    /// weights become the pair's entries with `x₀ = 0`, the larger weight
    /// going to the lower-indexed party of the pair (so `x_A` is the larger
    /// whenever A belongs to the pair, and `x_B ≥ x_C` otherwise).
    pub fn canonical(&self) -> Self {
        let zeros: Vec<usize> = (0..3).filter(|&i| self.x[i] <= ZERO_TOL).collect();
        match zeros.len() {
            0 => *self,
            1 => {
                let z = zeros[0];
                let pair: Vec<usize> = (0..3).filter(|&i| i != z).collect();
                let (xj, xk) = (self.x[pair[0]], self.x[pair[1]]);
                let s = 1.0 - self.x[z];
                let disc = (s * s - 4.0 * xj * xk).max(0.0).sqrt();
                let hi = (s + disc) / 2.0;
                let lo = xj * xk / hi;
                let mut x = [0.0; 3];
                x[pair[0]] = hi;
                x[pair[1]] = lo;
                Self { x }
            }
            _ => Self { x: [1.0, 0.0, 0.0] },
        }
    }

    /// State vector `√x₀|000⟩ + √x_A|100⟩ + √x_B|010⟩ + √x_C|001⟩` (index `4a + 2b + c`).
    pub fn state(&self) -> Vec<C64> {
        let mut v = vec![cr(0.0); 8];
        v[0] = cr(self.x0().sqrt());
        v[4] = cr(self.x[0].sqrt());
        v[2] = cr(self.x[1].sqrt());
        v[1] = cr(self.x[2].sqrt());
        v
    }

    /// The party among `others(star)` with the larger component (`n₁`), ties to the lower index.
    pub fn n1(&self, star: Party) -> Party {
        let [j, k] = star.others();
        if self.get(k) > self.get(j) {
            k
        } else {
            j
        }
    }
}

fn amp(psi: &[C64], a: usize, b: usize, c: usize) -> C64 {
    psi[4 * a + 2 * b + c]
}

/// Residual-state 3-tangle `4|d₁ − 2d₂ + 4d₃|` (Cayley hyperdeterminant).
pub fn three_tangle(psi: &[C64]) -> f64 {
    let a = |i: usize, j: usize, k: usize| amp(psi, i, j, k);
    let d1 = a(0, 0, 0).powi(2) * a(1, 1, 1).powi(2)
        + a(0, 0, 1).powi(2) * a(1, 1, 0).powi(2)
        + a(0, 1, 0).powi(2) * a(1, 0, 1).powi(2)
        + a(1, 0, 0).powi(2) * a(0, 1, 1).powi(2);
    let d2 = a(0, 0, 0) * a(1, 1, 1) * a(0, 1, 1) * a(1, 0, 0)
        + a(0, 0, 0) * a(1, 1, 1) * a(1, 0, 1) * a(0, 1, 0)
        + a(0, 0, 0) * a(1, 1, 1) * a(1, 1, 0) * a(0, 0, 1)
        + a(0, 1, 1) * a(1, 0, 0) * a(1, 0, 1) * a(0, 1, 0)
        + a(0, 1, 1) * a(1, 0, 0) * a(1, 1, 0) * a(0, 0, 1)
        + a(1, 0, 1) * a(0, 1, 0) * a(1, 1, 0) * a(0, 0, 1);
    let d3 = a(0, 0, 0) * a(1, 1, 0) * a(1, 0, 1) * a(0, 1, 1)
        + a(1, 1, 1) * a(0, 0, 1) * a(0, 1, 0) * a(1, 0, 0);
    4.0 * (d1 - d2 * 2.0 + d3 * 4.0).norm()
}

/// Concurrence of `ρ = Σ_i |v_i⟩⟨v_i|` on two qubits from any ensemble of
/// subnormalized vectors: the singular values of `Vᵀ (σ_y ⊗ σ_y) V`.
pub fn concurrence_from_ensemble(vectors: &[Vec<C64>]) -> f64 {
    if vectors.is_empty() {
        return 0.0;
    }
    // (σ_y ⊗ σ_y)|ab⟩ = −(−1)^{a+b}|āb̄⟩ up to the sign pattern below
    let yy = |v: &[C64]| -> Vec<C64> { vec![-v[3], v[2], v[1], -v[0]] };
    let n = vectors.len();
    let t = CMatrix::from_fn(n, n, |i, j| {
        let w = yy(&vectors[j]);
        vectors[i].iter().zip(&w).map(|(a, b)| a * b).sum()
    });
    let mut s = svd(&t).s;
    s.resize(4.max(s.len()), 0.0);
    (s[0] - s[1..].iter().sum::<f64>()).max(0.0)
}

/// Wootters concurrence of a two-qubit density matrix.
pub fn wootters_concurrence(rho: &CMatrix, tol: f64) -> Result<f64> {
    check_density(rho, 4, tol)?;
    let e = hermitian_eig(rho)?;
    let top = e.values[0];
    let ensemble: Vec<Vec<C64>> = e
        .values
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > ZERO_TOL * top)
        .map(|(k, &l)| e.vectors.col(k).into_iter().map(|z| z * l.sqrt()).collect())
        .collect();
    Ok(concurrence_from_ensemble(&ensemble))
}

/// Pairwise concurrence of parties `(j, k)` in a three-qubit pure state.
pub fn pure_pair_concurrence(psi: &[C64], j: Party, k: Party) -> f64 {
    let traced = Party::ALL
        .into_iter()
        .find(|p| *p != j && *p != k)
        .expect("three parties");
    let ensemble: Vec<Vec<C64>> = (0..2)
        .map(|t| {
            let mut v = vec![cr(0.0); 4];
            for a in 0..2 {
                for b in 0..2 {
                    let mut idx = [0usize; 3];
                    idx[j.index()] = a;
                    idx[k.index()] = b;
                    idx[traced.index()] = t;
                    v[2 * a + b] = amp(psi, idx[0], idx[1], idx[2]);
                }
            }
            v
        })
        .collect();
    concurrence_from_ensemble(&ensemble)
}

/// Canonical representative of a normalized three-qubit pure state.
pub fn canonical_from_state(psi: &[C64], tol: f64) -> Result<WClassVector> {
    if psi.len() != 8 {
        return Err(Error::DimensionMismatch(format!(
            "expected 8 amplitudes, got {}",
            psi.len()
        )));
    }
    let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    if (norm - 1.0).abs() > tol {
        return Err(Error::InvalidDensity(format!(
            "state norm² {} differs from 1",
            norm
        )));
    }
    let tau = three_tangle(psi);
    if tau > tol {
        return Err(Error::NotWClass(format!("3-tangle {:.3e} is nonzero", tau)));
    }
    let c_ab = pure_pair_concurrence(psi, Party::A, Party::B);
    let c_ac = pure_pair_concurrence(psi, Party::A, Party::C);
    let c_bc = pure_pair_concurrence(psi, Party::B, Party::C);
    let nz = [c_ab, c_ac, c_bc].iter().filter(|&&c| c > tol).count();
    match nz {
        3 => {
            let xa = c_ab * c_ac / (2.0 * c_bc);
            let xb = c_ab * c_bc / (2.0 * c_ac);
            let xc = c_ac * c_bc / (2.0 * c_ab);
            let sum = xa + xb + xc;
            if sum > 1.0 + tol {
                return Err(Error::NotWClass(format!(
                    "pair concurrences imply x₀ = {:.3e} < 0",
                    1.0 - sum
                )));
            }
            let scale = if sum > 1.0 { 1.0 / sum } else { 1.0 };
            WClassVector::new(xa * scale, xb * scale, xc * scale)
        }
        1 => {
            let (c, pair) = if c_ab > tol {
                (c_ab, (0, 1))
            } else if c_ac > tol {
                (c_ac, (0, 2))
            } else {
                (c_bc, (1, 2))
            };
            let r = (1.0 - c * c).max(0.0).sqrt();
            let mut x = [0.0; 3];
            x[pair.0] = (1.0 + r) / 2.0;
            x[pair.1] = (1.0 - r) / 2.0;
            WClassVector::new(x[0], x[1], x[2])
        }
        0 => Ok(WClassVector { x: [1.0, 0.0, 0.0] }),
        _ => Err(Error::NotWClass(format!(
            "exactly two nonzero pair concurrences ({:.3e}, {:.3e}, {:.3e})",
            c_ab, c_ac, c_bc
        ))),
    }
}

/// `𝒞(x) = 2√(x⋆x_{n₁}) + (2/3)x_{n₂}√(x⋆/x_{n₁})`, and 0 when `x_{n₁} = 0`.
pub fn monotone_c(x: &WClassVector, star: Party) -> f64 {
    let n1 = x.n1(star);
    let n2 = star
        .others()
        .into_iter()
        .find(|&p| p != n1)
        .expect("two others");
    let (xs, x1, x2) = (x.get(star), x.get(n1), x.get(n2));
    if x1 <= 0.0 {
        return 0.0;
    }
    2.0 * (xs * x1).sqrt() + (2.0 / 3.0) * x2 * (xs / x1).sqrt()
}

/// Upper-triangular local Kraus operator `[[√a, b], [0, √c]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Triangular {
    pub a: f64,
    pub b: C64,
    pub c: f64,
}

impl Triangular {
    pub fn new(a: f64, b: C64, c: f64) -> Self {
        Self { a, b, c }
    }

    pub fn matrix(&self) -> CMatrix {
        CMatrix::new(
            2,
            2,
            vec![cr(self.a.sqrt()), self.b, cr(0.0), cr(self.c.sqrt())],
        )
        .expect("2x2")
    }

    /// `after · self`, which is again upper triangular.
    pub fn then(&self, after: &Triangular) -> Triangular {
        Triangular {
            a: after.a * self.a,
            c: after.c * self.c,
            b: self.b * after.a.sqrt() + after.b * self.c.sqrt(),
        }
    }
}

/// A two-outcome local measurement on one qubit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryMeasurement {
    pub party: Party,
    pub outcomes: [Triangular; 2],
}

impl BinaryMeasurement {
    /// `|a₁ − c₁| + |b₁|`; zero exactly for the trivial measurement `a₁ = c₁`, `b₁ = 0`.
    pub fn strength(&self) -> f64 {
        let o = self.outcomes[0];
        (o.a - o.c).abs() + o.b.norm()
    }

    /// `‖Σ M_λ†M_λ − I‖_F`.
    pub fn completeness_deviation(&self) -> f64 {
        let mut acc = CMatrix::zeros(2, 2);
        for o in &self.outcomes {
            acc += &o.matrix().gram();
        }
        (&acc - &CMatrix::identity(2)).frobenius_norm()
    }
}

/// Completes `(a₁, c₁, b₁)` to a binary measurement on `party`.
pub fn complete_measurement(party: Party, a1: f64, c1: f64, b1: C64) -> Result<BinaryMeasurement> {
    if !(a1 > 0.0 && a1 < 1.0) {
        return Err(Error::InfeasibleMeasurement(format!(
            "a₁ = {} outside (0, 1)",
            a1
        )));
    }
    if c1.is_nan() || c1 < 0.0 {
        return Err(Error::InfeasibleMeasurement(format!(
            "c₁ = {} is negative",
            c1
        )));
    }
    let a2 = 1.0 - a1;
    let b2 = -b1 * (a1 / a2).sqrt();
    let c2 = 1.0 - c1 - b1.norm_sqr() - b2.norm_sqr();
    if c2 < -1e-15 {
        return Err(Error::InfeasibleMeasurement(format!(
            "completion needs c₂ = {:.3e} < 0",
            c2
        )));
    }
    Ok(BinaryMeasurement {
        party,
        outcomes: [
            Triangular::new(a1, b1, c1),
            Triangular::new(a2, b2, c2.max(0.0)),
        ],
    })
}

/// Applies upper-triangular Kraus operators on `party` to the state of `x`.
///
/// Returns `(p_λ, canonical x_λ)` for every outcome with nonzero probability.
pub fn apply_local_kraus(
    x: &WClassVector,
    party: Party,
    ops: &[Triangular],
) -> Vec<(f64, WClassVector)> {
    let k = party.index();
    let x0 = x.x0();
    let xs = x.components();
    let mut out = Vec::with_capacity(ops.len());
    for op in ops {
        let amp0 = cr((op.a * x0).sqrt()) + op.b * xs[k].sqrt();
        let others: f64 = (0..3).filter(|&i| i != k).map(|i| xs[i]).sum();
        let p = amp0.norm_sqr() + op.c * xs[k] + op.a * others;
        if p <= 0.0 {
            continue;
        }
        let mut post = [0.0; 3];
        for (i, v) in post.iter_mut().enumerate() {
            *v = if i == k {
                op.c * xs[i] / p
            } else {
                op.a * xs[i] / p
            };
        }
        let total: f64 = post.iter().sum();
        if total > 1.0 {
            post.iter_mut().for_each(|v| *v /= total);
        }
        out.push((p, WClassVector { x: post }.canonical()));
    }
    out
}

pub fn apply_binary_measurement(
    x: &WClassVector,
    m: &BinaryMeasurement,
) -> Vec<(f64, WClassVector)> {
    apply_local_kraus(x, m.party, &m.outcomes)
}

/// `Δ̄𝒞 = Σ_λ p_λ 𝒞(x_λ) − 𝒞(x)`.
pub fn avg_delta_c(x: &WClassVector, star: Party, m: &BinaryMeasurement) -> f64 {
    let x = x.canonical();
    let after: f64 = apply_binary_measurement(&x, m)
        .iter()
        .map(|(p, xl)| p * monotone_c(xl, star))
        .sum();
    after - monotone_c(&x, star)
}

fn require_x0_zero(x: &WClassVector, tol: f64) -> Result<()> {
    if x.x0() > tol {
        return Err(Error::InvalidParameter(format!(
            "formula needs x₀ = 0, got {:.3e}",
            x.x0()
        )));
    }
    Ok(())
}

/// Concurrence of assistance `2√(x_J x_K)` for the target pair.
pub fn coa(x: &WClassVector, pair: (Party, Party), tol: f64) -> Result<f64> {
    require_x0_zero(x, tol)?;
    if pair.0 == pair.1 {
        return Err(Error::InvalidParameter(
            "target pair needs two distinct parties".into(),
        ));
    }
    Ok(2.0 * (x.get(pair.0) * x.get(pair.1)).sqrt())
}

/// Optimal random EPR-combing probability with `common` shared by both target pairs.
pub fn epr_combing_prob(x: &WClassVector, common: Party, tol: f64) -> Result<f64> {
    require_x0_zero(x, tol)?;
    let [j, l] = common.others();
    let (xk, xj, xl) = (x.get(common), x.get(j), x.get(l));
    if xk > 0.0 && xk >= xj.max(xl) {
        Ok(2.0 * (xj + xl - xj * xl / xk))
    } else {
        Ok(2.0 * xk)
    }
}

/// Who measures in a sampled trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Measurer {
    /// Uniform over the three parties.
    Any,
    Fixed(Party),
    /// Uniform over `⋆` and `n₁`.
    StarOrN1,
}

/// Configuration of a randomized monotonicity run.
#[derive(Clone, Debug, Serialize)]
pub struct SuiteConfig {
    pub samples: usize,
    pub seed: u64,
    pub measurer: Measurer,
    /// `None` draws `⋆` uniformly per sample.
    pub star: Option<Party>,
    /// Draw complex `b₁` (|b₁| < 0.5) instead of `b₁ = 0`.
    pub complex_b: bool,
    /// Measurements weaker than this are redrawn.
    pub min_strength: f64,
    /// Vectors with a component below this are redrawn.
    pub min_component: f64,
    /// Evaluate at a fixed vector instead of drawing `x`.
    pub fixed_x: Option<WClassVector>,
    /// How many of the largest `Δ̄𝒞` values to keep.
    pub keep_worst: usize,
}

impl SuiteConfig {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self {
            samples,
            seed,
            measurer: Measurer::Any,
            star: None,
            complex_b: false,
            min_strength: 0.0,
            min_component: 0.0,
            fixed_x: None,
            keep_worst: 100,
        }
    }
}

/// One sampled trial.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MonotoneSample {
    pub x: [f64; 3],
    pub star: Party,
    pub measurement: BinaryMeasurement,
    pub delta: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteResult {
    pub samples: usize,
    pub max_delta: f64,
    pub min_delta: f64,
    /// Largest deviation of `Σ p_λ` from 1.
    pub max_probability_error: f64,
    /// Trials with the largest `Δ̄𝒞`, descending.
    pub worst: Vec<MonotoneSample>,
}

impl SuiteResult {
    /// CSV of the kept trials with full double precision.
    pub fn worst_csv(&self) -> String {
        let mut s = String::from("x_a,x_b,x_c,star,party,a1,c1,b1_re,b1_im,strength,delta\n");
        for w in &self.worst {
            let o = w.measurement.outcomes[0];
            s.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                w.x[0],
                w.x[1],
                w.x[2],
                w.star,
                w.measurement.party,
                o.a,
                o.c,
                o.b.re,
                o.b.im,
                w.measurement.strength(),
                w.delta
            ));
        }
        s
    }
}

/// Number of independent streams; stream `i` is seeded with `seed + i`.
pub const SUITE_STREAMS: usize = 64;

fn draw_simplex<R: Rng>(rng: &mut R, min_component: f64) -> WClassVector {
    loop {
        let e: [f64; 3] = [rng.sample(Exp1), rng.sample(Exp1), rng.sample(Exp1)];
        let s: f64 = e.iter().sum();
        let x = e.map(|v| v / s);
        if x.iter().all(|&v| v >= min_component && v > 0.0) {
            return WClassVector { x };
        }
    }
}

fn draw_trial<R: Rng>(cfg: &SuiteConfig, rng: &mut R) -> (WClassVector, Party, BinaryMeasurement) {
    let x = cfg
        .fixed_x
        .unwrap_or_else(|| draw_simplex(rng, cfg.min_component));
    let star = cfg
        .star
        .unwrap_or_else(|| Party::ALL[rng.random_range(0..3)]);
    let party = match cfg.measurer {
        Measurer::Any => Party::ALL[rng.random_range(0..3)],
        Measurer::Fixed(p) => p,
        Measurer::StarOrN1 => {
            if rng.random_bool(0.5) {
                star
            } else {
                x.n1(star)
            }
        }
    };
    loop {
        let a1: f64 = rng.random();
        let c1: f64 = rng.random();
        let b1 = if cfg.complex_b {
            let r: f64 = 0.5 * rng.random::<f64>();
            let th: f64 = std::f64::consts::TAU * rng.random::<f64>();
            C64::from_polar(r, th)
        } else {
            cr(0.0)
        };
        if let Ok(m) = complete_measurement(party, a1, c1, b1) {
            if m.strength() >= cfg.min_strength {
                return (x, star, m);
            }
        }
    }
}

/// Samples random vectors and binary measurements and records `Δ̄𝒞`.
///
/// Work is split into [`SUITE_STREAMS`] seeded streams evaluated in
/// parallel and merged in stream order, so the result depends only on the
/// configuration.
pub fn run_monotone_suite(cfg: &SuiteConfig) -> SuiteResult {
    let per = cfg.samples / SUITE_STREAMS;
    let extra = cfg.samples % SUITE_STREAMS;
    let chunks: Vec<(f64, f64, f64, Vec<MonotoneSample>)> = (0..SUITE_STREAMS)
        .into_par_iter()
        .map(|i| {
            let n = per + usize::from(i < extra);
            let mut rng = random::rng(cfg.seed.wrapping_add(i as u64));
            let mut max_d = f64::NEG_INFINITY;
            let mut min_d = f64::INFINITY;
            let mut perr: f64 = 0.0;
            let mut kept: Vec<MonotoneSample> = Vec::new();
            for _ in 0..n {
                let (x, star, m) = draw_trial(cfg, &mut rng);
                let outs = apply_binary_measurement(&x, &m);
                let ptot: f64 = outs.iter().map(|(p, _)| p).sum();
                perr = perr.max((ptot - 1.0).abs());
                let delta = avg_delta_c(&x, star, &m);
                max_d = max_d.max(delta);
                min_d = min_d.min(delta);
                kept.push(MonotoneSample {
                    x: x.components(),
                    star,
                    measurement: m,
                    delta,
                });
                if kept.len() > 4 * cfg.keep_worst.max(1) {
                    kept.sort_by(|a, b| b.delta.total_cmp(&a.delta));
                    kept.truncate(cfg.keep_worst);
                }
            }
            kept.sort_by(|a, b| b.delta.total_cmp(&a.delta));
            kept.truncate(cfg.keep_worst);
            (max_d, min_d, perr, kept)
        })
        .collect();
    let mut worst: Vec<MonotoneSample> = Vec::new();
    let (mut max_delta, mut min_delta, mut perr) = (f64::NEG_INFINITY, f64::INFINITY, 0.0f64);
    for (mx, mn, pe, kept) in chunks {
        max_delta = max_delta.max(mx);
        min_delta = min_delta.min(mn);
        perr = perr.max(pe);
        worst.extend(kept);
    }
    worst.sort_by(|a, b| b.delta.total_cmp(&a.delta));
    worst.truncate(cfg.keep_worst);
    SuiteResult {
        samples: cfg.samples,
        max_delta,
        min_delta,
        max_probability_error: perr,
        worst,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn v(a: f64, b: f64, c: f64) -> WClassVector {
        WClassVector::new(a, b, c).unwrap()
    }

    #[test]
    fn canonical_vectors() {
        let w = canonical_from_state(&WClassVector::w().state(), 1e-10).unwrap();
        for x in w.components() {
            assert!(close(x, 1.0 / 3.0, 1e-12));
        }
        assert!(w.x0().abs() < 1e-12);

        let mut prod = vec![cr(0.0); 8];
        prod[0] = cr(1.0);
        assert_eq!(
            canonical_from_state(&prod, 1e-10).unwrap().components(),
            [1.0, 0.0, 0.0]
        );

        // |0⟩ ⊗ (|01⟩ + |10⟩)/√2 on BC
        let mut bell = vec![cr(0.0); 8];
        bell[1] = cr(0.5f64.sqrt());
        bell[2] = cr(0.5f64.sqrt());
        let x = canonical_from_state(&bell, 1e-10).unwrap();
        assert!(close(x.get(Party::A), 0.0, 1e-12));
        assert!(close(x.get(Party::B), 0.5, 1e-12));
        assert!(close(x.get(Party::C), 0.5, 1e-12));
    }

    #[test]
    fn ghz_is_rejected() {
        let mut ghz = vec![cr(0.0); 8];
        ghz[0] = cr(0.5f64.sqrt());
        ghz[7] = cr(0.5f64.sqrt());
        assert!(matches!(
            canonical_from_state(&ghz, 1e-10),
            Err(Error::NotWClass(_))
        ));
    }

    #[test]
    fn canonical_orders_pairs() {
        let x = v(0.0, 0.3, 0.7).canonical();
        assert!(close(x.get(Party::B), 0.7, 1e-15) && close(x.get(Party::C), 0.3, 1e-15));
        let x = v(0.2, 0.0, 0.8).canonical();
        assert!(close(x.get(Party::A), 0.8, 1e-15));
        assert_eq!(v(0.0, 0.0, 0.4).canonical().components(), [1.0, 0.0, 0.0]);
        // x₀ > 0 with one zero is folded into Schmidt weights
        let x = v(0.0, 0.25, 0.25).canonical();
        assert!(close(x.x0(), 0.0, 1e-15));
        assert!(close(x.get(Party::B) * x.get(Party::C), 0.0625, 1e-15));
    }

    #[test]
    fn monotone_values() {
        for star in Party::ALL {
            assert!(close(
                monotone_c(&WClassVector::w(), star),
                8.0 / 9.0,
                1e-15
            ));
        }
        assert_eq!(monotone_c(&v(0.0, 0.5, 0.5), Party::A), 0.0);
        assert!(close(monotone_c(&v(0.0, 0.5, 0.5), Party::B), 1.0, 1e-15));
    }

    #[test]
    fn completion_examples() {
        let m = complete_measurement(Party::A, 0.5, 0.5, cr(0.0)).unwrap();
        assert_eq!(m.outcomes[1], Triangular::new(0.5, cr(0.0), 0.5));
        assert_eq!(m.strength(), 0.0);
        let m = complete_measurement(Party::A, 0.75, 0.25, cr(0.0)).unwrap();
        assert!(close(m.outcomes[1].a, 0.25, 1e-15) && close(m.outcomes[1].c, 0.75, 1e-15));
        let m = complete_measurement(Party::B, 0.5, 0.3, cr(0.2)).unwrap();
        assert!((m.outcomes[1].b - cr(-0.2)).norm() < 1e-15);
        assert!(close(m.outcomes[1].c, 0.62, 1e-15));
        assert!(m.completeness_deviation() < 1e-15);
        assert!(complete_measurement(Party::A, 0.5, 0.9, cr(0.5)).is_err());
        assert!(complete_measurement(Party::A, 1.0, 0.5, cr(0.0)).is_err());
    }

    #[test]
    fn measurement_on_w() {
        let m = complete_measurement(Party::A, 0.75, 0.25, cr(0.0)).unwrap();
        let outs = apply_binary_measurement(&WClassVector::w(), &m);
        assert!(close(outs[0].0, 7.0 / 12.0, 1e-15));
        let x1 = outs[0].1.components();
        assert!(
            close(x1[0], 1.0 / 7.0, 1e-15)
                && close(x1[1], 3.0 / 7.0, 1e-15)
                && close(x1[2], 3.0 / 7.0, 1e-15)
        );
        assert!(close(outs.iter().map(|o| o.0).sum::<f64>(), 1.0, 1e-15));

        let d = avg_delta_c(&WClassVector::w(), Party::A, &m);
        let closed = (8.0 / 9.0) * (2.0 * 0.1875f64.sqrt() - 1.0);
        assert!(close(d, closed, 1e-14));
        assert!(close(d, -0.11909, 1e-5));
    }

    #[test]
    fn trivial_measurement_changes_nothing() {
        let x = v(0.5, 0.3, 0.2);
        let m = complete_measurement(Party::B, 0.4, 0.4, cr(0.0)).unwrap();
        for (_, xl) in apply_binary_measurement(&x, &m) {
            for (a, b) in xl.components().iter().zip(x.components()) {
                assert!(close(*a, b, 1e-15));
            }
        }
        assert!(avg_delta_c(&x, Party::A, &m).abs() < 1e-15);
    }

    #[test]
    fn n2_measurement_without_b_is_neutral() {
        // ⋆ = A, n₁ = B, n₂ = C; C measures weakly with c₁ + c₂ = 1
        let x = v(0.4, 0.35, 0.25);
        let m = complete_measurement(Party::C, 0.5, 0.52, cr(0.0)).unwrap();
        assert!(avg_delta_c(&x, Party::A, &m).abs() < 1e-15);
    }

    #[test]
    fn offset_amplitude_only_moves_x0() {
        let x = v(0.3, 0.3, 0.2);
        let m = complete_measurement(Party::A, 0.6, 0.3, C64::new(0.1, 0.2)).unwrap();
        let outs = apply_binary_measurement(&x, &m);
        for (o, (p, xl)) in m.outcomes.iter().zip(&outs) {
            let xs = xl.components();
            assert!(close(xs[0], o.c * 0.3 / p, 1e-15));
            assert!(close(xs[1], o.a * 0.3 / p, 1e-15));
            assert!(close(xs[2], o.a * 0.2 / p, 1e-15));
        }
        assert!(close(outs.iter().map(|o| o.0).sum::<f64>(), 1.0, 1e-14));
    }

    #[test]
    fn wootters_values() {
        let mut bell = CMatrix::zeros(4, 4);
        for (r, c) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
            bell[(r, c)] = cr(0.5);
        }
        assert!(close(
            wootters_concurrence(&bell, 1e-12).unwrap(),
            1.0,
            1e-12
        ));
        assert!(
            wootters_concurrence(&CMatrix::unit(4, 1, 1), 1e-12)
                .unwrap()
                .abs()
                < 1e-12
        );
        let mut omega = CMatrix::zeros(4, 4);
        omega[(1, 1)] = cr(1.0 / 3.0);
        omega[(1, 2)] = cr(4.0 / 9.0);
        omega[(2, 1)] = cr(4.0 / 9.0);
        omega[(2, 2)] = cr(2.0 / 3.0);
        assert!(close(
            wootters_concurrence(&omega, 1e-12).unwrap(),
            8.0 / 9.0,
            1e-10
        ));
        assert!(wootters_concurrence(&CMatrix::identity(4), 1e-12).is_err());
    }

    #[test]
    fn comparison_formulas() {
        let w = WClassVector::w();
        assert!(close(
            coa(&w, (Party::A, Party::B), 1e-12).unwrap(),
            2.0 / 3.0,
            1e-15
        ));
        assert_eq!(
            coa(&v(0.0, 0.5, 0.5), (Party::A, Party::B), 1e-12).unwrap(),
            0.0
        );
        assert!(close(
            coa(&v(0.5, 0.5, 0.0), (Party::A, Party::B), 1e-12).unwrap(),
            1.0,
            1e-15
        ));
        assert!(coa(&v(0.2, 0.2, 0.2), (Party::A, Party::B), 1e-12).is_err());

        assert!(close(
            epr_combing_prob(&w, Party::A, 1e-12).unwrap(),
            2.0 / 3.0,
            1e-15
        ));
        assert_eq!(
            epr_combing_prob(&v(1.0, 0.0, 0.0), Party::A, 1e-12).unwrap(),
            0.0
        );
        assert!(close(
            epr_combing_prob(&v(0.2, 0.5, 0.3), Party::A, 1e-12).unwrap(),
            0.4,
            1e-15
        ));
    }

    #[test]
    fn composition_of_triangular_kraus() {
        // x-space drops the phase of the |000⟩ amplitude, which would rotate
        // the next b, so the first step keeps that amplitude positive
        let first = complete_measurement(Party::B, 0.55, 0.45, cr(0.0)).unwrap();
        let second = complete_measurement(Party::B, 0.48, 0.5, C64::new(0.05, -0.02)).unwrap();
        let x = v(0.3, 0.45, 0.25);
        let mut sequential = Vec::new();
        for (p1, x1) in apply_binary_measurement(&x, &first) {
            for (p2, x2) in apply_binary_measurement(&x1, &second) {
                sequential.push((p1 * p2, x2));
            }
        }
        let combined: Vec<Triangular> = first
            .outcomes
            .iter()
            .flat_map(|o1| second.outcomes.iter().map(move |o2| o1.then(o2)))
            .collect();
        let direct = apply_local_kraus(&x, Party::B, &combined);
        assert_eq!(direct.len(), sequential.len());
        for ((p, xa), (q, xb)) in direct.iter().zip(&sequential) {
            assert!(close(*p, *q, 1e-14));
            for (a, b) in xa.components().iter().zip(xb.components()) {
                assert!(close(*a, b, 1e-14));
            }
        }
        // matrix form agrees with the parameter rule
        let o1 = first.outcomes[0];
        let o2 = second.outcomes[1];
        assert!(
            o2.matrix()
                .matmul(&o1.matrix())
                .max_abs_diff(&o1.then(&o2).matrix())
                < 1e-15
        );
    }

    #[test]
    fn small_suite_is_deterministic_and_monotone() {
        let cfg = SuiteConfig::new(2000, 5);
        let a = run_monotone_suite(&cfg);
        let b = run_monotone_suite(&cfg);
        assert_eq!(a.max_delta, b.max_delta);
        assert_eq!(a.worst, b.worst);
        assert!(a.max_delta <= 1e-9);
        assert!(a.max_probability_error <= 1e-12);
        assert_eq!(a.worst.len(), 100);
        assert!(a.worst_csv().lines().count() == 101);
    }
}
