//! A two-qubit instrument that is a limit of finite-round LOCC instruments
//! without being finite-round LOCC itself, plus the numerical certificates
//! for both halves of that statement and for the gap to SEP.
//!
//! The target `𝔍 = (𝓔₀₀, 𝓔₀₁, 𝓔₁₀)` is approached by `𝔍_ν`: both parties
//! repeatedly apply the weak measurement `M₀ = √(1−ε)|0⟩⟨0| + |1⟩⟨1|`,
//! `M₁ = √ε|0⟩⟨0|` and stop at the first joint outcome other than `00`,
//! for at most `ν` rounds.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::classes::{classify_instrument, SepVerdict};
use crate::error::{Error, Result};
use crate::instrument::{instrument_choi_distance, Instrument, KrausMap};
use crate::linalg::{cr, partial_trace, permute_subsystems, CMatrix, C64};
use crate::protocol::{
    compress_outcomes, outcome_bound, run_protocol, Branch, PartyStructure, ProtocolNode,
    ProtocolTree,
};
use crate::wclass::{
    avg_delta_c, complete_measurement, monotone_c, run_monotone_suite, wootters_concurrence,
    Measurer, Party, SuiteConfig, SuiteResult, WClassVector,
};

/// Outcome labels of the target instrument.
pub const TARGET_LABELS: [&str; 3] = ["00", "01", "10"];
/// Outcome labels of `𝔍_ν`; the target is padded with a zero map on `"11"`.
pub const JNU_LABELS: [&str; 4] = ["00", "01", "10", "11"];

/// Iteration count and measurement weakness of `𝔍_ν`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IterationParams {
    pub nu: usize,
    pub eps: f64,
    /// Exponent when `ε = ν^{−c}`.
    pub c: Option<f64>,
}

impl IterationParams {
    pub fn new(nu: usize, eps: f64) -> Result<Self> {
        if nu == 0 {
            return Err(Error::InvalidParameter("ν must be at least 1".into()));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "ε = {} outside (0, 1)",
                eps
            )));
        }
        Ok(Self { nu, eps, c: None })
    }

    /// `ε = ν^{−c}`. For `ν = 1` this gives `ε = 1`, which is rejected.
    pub fn coupled(nu: usize, c: f64) -> Result<Self> {
        if !(c > 0.0 && c < 1.0) {
            return Err(Error::InvalidParameter(format!("c = {} outside (0, 1)", c)));
        }
        let mut p = Self::new(nu, (nu as f64).powf(-c))?;
        p.c = Some(c);
        Ok(p)
    }
}

pub fn m0(eps: f64) -> CMatrix {
    CMatrix::diag_real(&[(1.0 - eps).sqrt(), 1.0])
}

pub fn m1(eps: f64) -> CMatrix {
    CMatrix::diag_real(&[eps.sqrt(), 0.0])
}

pub fn t1() -> CMatrix {
    CMatrix::diag_real(&[1.0 / 3f64.sqrt(), 1.0 / 3f64.sqrt()])
}

pub fn t2() -> CMatrix {
    CMatrix::diag_real(&[1.0 / 6f64.sqrt(), (2.0f64 / 3.0).sqrt()])
}

fn proj(i: usize) -> CMatrix {
    CMatrix::unit(2, i, i)
}

/// The target instrument on two qubits.
pub fn build_target_j() -> Instrument {
    let e00 = KrausMap::single(vec![2, 2], proj(1).kron(&proj(1))).expect("4x4");
    let e01 =
        KrausMap::new(vec![2, 2], vec![t1().kron(&proj(0)), t2().kron(&proj(0))]).expect("4x4");
    let e10 =
        KrausMap::new(vec![2, 2], vec![proj(0).kron(&t1()), proj(0).kron(&t2())]).expect("4x4");
    Instrument::new(
        TARGET_LABELS.iter().map(|s| s.to_string()).collect(),
        vec![e00, e01, e10],
    )
    .expect("distinct labels")
}

/// The target padded onto the four labels of `𝔍_ν`.
pub fn padded_target() -> Instrument {
    let theta: Vec<String> = JNU_LABELS.iter().map(|s| s.to_string()).collect();
    build_target_j()
        .pad(&theta)
        .expect("target labels are a subset")
}

/// `𝔍_ν` from its four Kraus families.
pub fn build_jnu(p: &IterationParams) -> Instrument {
    let (a0, a1) = (m0(p.eps), m1(p.eps));
    // M₀^μ for μ = 0..=ν
    let mut powers = vec![CMatrix::identity(2)];
    for k in 1..=p.nu {
        powers.push(powers[k - 1].matmul(&a0));
    }
    let stop = |mu: usize| a1.matmul(&powers[mu - 1]);
    let e00 = vec![powers[p.nu].kron(&powers[p.nu])];
    let e01 = (1..=p.nu).map(|mu| powers[mu].kron(&stop(mu))).collect();
    let e10 = (1..=p.nu).map(|mu| stop(mu).kron(&powers[mu])).collect();
    let e11 = (1..=p.nu).map(|mu| stop(mu).kron(&stop(mu))).collect();
    let maps = [e00, e01, e10, e11]
        .into_iter()
        .map(|k| KrausMap::new(vec![2, 2], k).expect("4x4"))
        .collect();
    Instrument::new(JNU_LABELS.iter().map(|s| s.to_string()).collect(), maps)
        .expect("distinct labels")
}

/// `tr Ω_{ν,11} = ε²(1 − (1−ε)^{2ν}) / (1 − (1−ε)²)`.
pub fn branch11_trace(p: &IterationParams) -> f64 {
    let q = 1.0 - p.eps;
    p.eps * p.eps * (1.0 - q.powi(2 * p.nu as i32)) / (1.0 - q * q)
}

/// The `{|00⟩, |11⟩}_{A′A}` block of `Ω_{ν,01}` as `ν → ∞` at fixed `ε`.
pub fn omega01_block_limit(eps: f64) -> [[f64; 2]; 2] {
    let q = 1.0 - eps;
    let s = |r: f64| r / (1.0 - r);
    let pre = eps / q;
    let off = pre * s(q.powf(1.5));
    [[pre * s(q * q), off], [off, pre * s(q)]]
}

fn measurement_outcomes(eps: f64, split: usize) -> Vec<(String, char, CMatrix)> {
    if split <= 1 {
        return vec![("0".into(), '0', m0(eps)), ("1".into(), '1', m1(eps))];
    }
    let w = 1.0 / (split as f64).sqrt();
    let mut out = Vec::with_capacity(2 * split);
    for (base, m) in [('0', m0(eps)), ('1', m1(eps))] {
        for i in 0..split {
            out.push((format!("{}.{}", base, i), base, m.scale_real(w)));
        }
    }
    out
}

/// `2·rounds` alternating identity levels, Alice first.
fn idle_chain(rounds: usize) -> Option<ProtocolNode> {
    (0..2 * rounds).fold(None, |child, k| {
        let party = if k % 2 == 0 { 1 } else { 0 };
        Some(ProtocolNode::trivial(party, 2, child))
    })
}

fn round(eps: f64, rounds_left: usize, split: usize) -> ProtocolNode {
    let outcomes = measurement_outcomes(eps, split);
    let bob = |a: char| {
        let branches = outcomes
            .iter()
            .map(|(label, b, k)| {
                let child = if rounds_left == 1 {
                    None
                } else if a == '0' && *b == '0' {
                    Some(round(eps, rounds_left - 1, split))
                } else {
                    idle_chain(rounds_left - 1)
                };
                let mut br = Branch::new(label.clone(), k.clone());
                br.child = child.map(Box::new);
                br
            })
            .collect();
        ProtocolNode::new(1, branches)
    };
    let branches = outcomes
        .iter()
        .map(|(label, a, k)| Branch::new(label.clone(), k.clone()).with_child(bob(*a)))
        .collect();
    ProtocolNode::new(0, branches)
}

/// Final label of a history: the first joint outcome other than `00`.
fn stopping_label(history: &[String]) -> String {
    let base = |s: &str| s.split('.').next().unwrap_or(s).to_string();
    for pair in history.chunks(2) {
        let l = format!("{}{}", base(&pair[0]), base(&pair[1]));
        if l != "00" {
            return l;
        }
    }
    "00".into()
}

fn iterated_tree(eps: f64, nu: usize, split: usize) -> Result<ProtocolTree> {
    let parties = PartyStructure::new(vec![2, 2])?;
    let root = round(eps, nu, split);
    let bare = ProtocolTree::new(parties.clone(), root, BTreeMap::new())?;
    let table = bare
        .leaf_histories()
        .into_iter()
        .map(|h| {
            let l = stopping_label(&h);
            (h, l)
        })
        .collect();
    ProtocolTree::new(parties, bare.root().clone(), table)
}

/// `𝔍_ν` as a `2ν`-level protocol tree alternating Alice and Bob.
///
/// Branches that already stopped continue through identity levels so every
/// leaf sits at the same depth.
pub fn jnu_tree(p: &IterationParams) -> Result<ProtocolTree> {
    iterated_tree(p.eps, p.nu, 1)
}

/// Two-iteration tree (four levels, `D = 4`, four outcomes) in which every
/// measurement outcome has been split into `split` equal copies.
pub fn redundant_demo_tree(eps: f64, split: usize) -> Result<ProtocolTree> {
    iterated_tree(eps, 2, split)
}

/// One row of the convergence table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub nu: usize,
    pub eps: f64,
    pub distance: f64,
    pub branch11_trace: f64,
}

/// `D_Choi(𝔍_ν, pad(𝔍))` along a ladder of `ν` with `ε = ν^{−c}`.
pub fn convergence_table(nus: &[usize], c: f64) -> Result<Vec<ConvergenceRow>> {
    let target = padded_target();
    nus.iter()
        .map(|&nu| {
            let p = IterationParams::coupled(nu, c)?;
            Ok(ConvergenceRow {
                nu,
                eps: p.eps,
                distance: instrument_choi_distance(&build_jnu(&p), &target)?,
                branch11_trace: branch11_trace(&p),
            })
        })
        .collect()
}

/// Powers of ten from 10 up to `nu_max`.
pub fn nu_ladder(nu_max: usize) -> Vec<usize> {
    std::iter::successors(Some(10usize), |&n| n.checked_mul(10))
        .take_while(|&n| n <= nu_max)
        .collect()
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut s = String::from("nu,eps,distance,branch11_trace\n");
    for r in rows {
        s.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e}\n",
            r.nu, r.eps, r.distance, r.branch11_trace
        ));
    }
    s
}

/// A named numerical check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable target such as `= 0.5 ± 1e-12` or `≤ 1e-9`.
    pub target: String,
    pub passed: bool,
}

impl Check {
    pub fn close(name: impl Into<String>, value: f64, expected: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            value,
            target: format!("= {:.12} ± {:.0e}", expected, tol),
            passed: (value - expected).abs() <= tol,
        }
    }

    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            target: format!("≤ {:e}", bound),
            passed: value <= bound,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            target: format!("≥ {:e}", bound),
            passed: value >= bound,
        }
    }

    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        Self {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            target: "true".into(),
            passed: ok,
        }
    }
}

/// A titled list of checks.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub title: String,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            checks: Vec::new(),
        }
    }

    pub fn push(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Turns the first failing check into an error.
    pub fn ensure(&self) -> Result<()> {
        match self.checks.iter().find(|c| !c.passed) {
            None => Ok(()),
            Some(c) => Err(Error::CheckFailed(format!(
                "{}: {} = {:.6e}, expected {}",
                self.title, c.name, c.value, c.target
            ))),
        }
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.title)?;
        for c in &self.checks {
            writeln!(
                f,
                "  [{}] {:<44} {:>22.15e}  {}",
                if c.passed { "ok" } else { "FAIL" },
                c.name,
                c.value,
                c.target
            )?;
        }
        Ok(())
    }
}

/// `ω` from the W-state transformation, on the qubit pair `(n, ⋆)`.
pub fn omega() -> CMatrix {
    let mut w = CMatrix::zeros(4, 4);
    w[(1, 1)] = cr(1.0 / 3.0);
    w[(1, 2)] = cr(4.0 / 9.0);
    w[(2, 1)] = cr(4.0 / 9.0);
    w[(2, 2)] = cr(2.0 / 3.0);
    w
}

/// `|W⟩⟨W|` on three qubits.
pub fn w_density() -> CMatrix {
    CMatrix::outer(&WClassVector::w().state())
}

/// Probability and post-state of `label` after applying `j ⊗ 𝕀_C` to `|W⟩`.
fn on_w(j: &Instrument, tol: f64) -> Result<Vec<(String, f64, Option<CMatrix>)>> {
    let ext = j.extend_with(&KrausMap::identity(vec![2]));
    Ok(ext
        .apply(&w_density(), tol)?
        .into_iter()
        .map(|o| (o.label, o.probability, o.state))
        .collect())
}

/// Tolerances used by the certificate checks.
pub const PROBABILITY_TOL: f64 = 1e-12;
pub const STATE_TOL: f64 = 1e-12;
pub const CONCURRENCE_TOL: f64 = 1e-10;

/// Applies the target instrument (tensored with Charlie's identity) to `|W⟩`
/// and compares against `ω^{AC} ⊗ |0⟩⟨0|^B` and `|0⟩⟨0|^A ⊗ ω^{BC}`.
pub fn w_transform_check() -> Result<Report> {
    let mut r = Report::new("W-state transformation under the target instrument");
    let outs = on_w(&build_target_j(), PROBABILITY_TOL)?;
    let zero = proj(0);
    // ω ⊗ |0⟩⟨0| is ordered (A, C, B); move B back to the middle
    let expected_01 = permute_subsystems(&omega().kron(&zero), &[2, 2, 2], &[0, 2, 1])?;
    let expected_10 = zero.kron(&omega());
    let mut average = 0.0;
    for (label, p, state) in &outs {
        let (want_p, want_state, keep) = match label.as_str() {
            "00" => (0.0, None, None),
            "01" => (0.5, Some(&expected_01), Some([0usize, 2])),
            "10" => (0.5, Some(&expected_10), Some([1usize, 2])),
            other => {
                return Err(Error::CheckFailed(format!(
                    "unexpected outcome {:?}",
                    other
                )))
            }
        };
        r.push(Check::close(
            format!("p({})", label),
            *p,
            want_p,
            PROBABILITY_TOL,
        ));
        if let (Some(want), Some(keep)) = (want_state, keep) {
            let got = state.as_ref().ok_or_else(|| {
                Error::CheckFailed(format!("outcome {} has no post-state", label))
            })?;
            r.push(Check::at_most(
                format!("‖post-state({}) − expected‖_F", label),
                (got - want).frobenius_norm(),
                STATE_TOL,
            ));
            let pair = partial_trace(got, &[2, 2, 2], &keep)?;
            average += p * wootters_concurrence(&pair, 1e-10)?;
        }
    }
    let c_omega = wootters_concurrence(&omega(), 1e-12)?;
    r.push(Check::close("C(ω)", c_omega, 8.0 / 9.0, CONCURRENCE_TOL));
    let c_w = monotone_c(&WClassVector::w(), Party::C);
    r.push(Check::close("𝒞(W)", c_w, 8.0 / 9.0, 1e-15));
    r.push(Check::close(
        "average concurrence after",
        average,
        8.0 / 9.0,
        CONCURRENCE_TOL,
    ));
    r.push(Check::close(
        "slack: average − 𝒞(W)",
        average - c_w,
        0.0,
        CONCURRENCE_TOL,
    ));
    Ok(r)
}

/// The separable instrument `(Π₁, Π₂, Π₃)`.
pub fn pi_instrument() -> Instrument {
    let weak = CMatrix::diag_real(&[std::f64::consts::FRAC_1_SQRT_2, 1.0]);
    let maps = [
        weak.kron(&proj(0)),
        proj(0).kron(&weak),
        proj(1).kron(&proj(1)),
    ]
    .into_iter()
    .map(|k| KrausMap::single(vec![2, 2], k).expect("4x4"))
    .collect();
    Instrument::new(vec!["1".into(), "2".into(), "3".into()], maps).expect("distinct labels")
}

/// Concurrence of a three-qubit branch state in which one party is left in
/// a pure product state: that party is traced out and Wootters' formula is
/// applied to the remaining pair.
pub fn bipartite_branch_concurrence(rho: &CMatrix, tol: f64) -> Result<f64> {
    for (drop, keep) in [(0usize, [1usize, 2]), (1, [0, 2]), (2, [0, 1])] {
        let single = partial_trace(rho, &[2, 2, 2], &[drop])?;
        let purity = single.matmul(&single).trace().re;
        if (purity - 1.0).abs() <= tol {
            let pair = partial_trace(rho, &[2, 2, 2], &keep)?;
            return wootters_concurrence(&pair, tol);
        }
    }
    Err(Error::CheckFailed(
        "branch state has no party in a pure product state".into(),
    ))
}

/// Average concurrence produced by `(Π₁, Π₂, Π₃) ⊗ 𝕀` on `|W⟩`, against the LOCC ceiling `𝒞(W)`.
pub fn sep_gap_check() -> Result<Report> {
    let mut r = Report::new("SEP instrument beating the LOCC ceiling on W");
    let pi = pi_instrument();
    r.push(Check::at_most(
        "completeness deviation",
        pi.validate(1e-12).deviation,
        1e-12,
    ));
    let cls = classify_instrument(&pi, 1e-10)?;
    r.push(Check::flag(
        "every map is a product (SEP certified)",
        cls.sep == SepVerdict::Yes,
    ));
    let mut average = 0.0;
    for (_, p, state) in on_w(&pi, PROBABILITY_TOL)? {
        if let Some(s) = state {
            average += p * bipartite_branch_concurrence(&s, 1e-10)?;
        }
    }
    let ceiling = monotone_c(&WClassVector::w(), Party::C);
    r.push(Check::close(
        "average concurrence",
        average,
        2.0 * 2f64.sqrt() / 3.0,
        CONCURRENCE_TOL,
    ));
    r.push(Check::close(
        "excess over 𝒞(W)",
        average - ceiling,
        2.0 * 2f64.sqrt() / 3.0 - 8.0 / 9.0,
        CONCURRENCE_TOL,
    ));
    r.push(Check::at_least(
        "excess is positive",
        average - ceiling,
        1e-3,
    ));
    Ok(r)
}

/// Outcome of the impossibility certificate.
#[derive(Clone, Debug, Serialize)]
pub struct ImpossibilityCertificate {
    pub report: Report,
    /// `η = −max Δ̄𝒞` over the sampled measurements.
    pub eta: f64,
    pub delta: f64,
    pub suite: SuiteResult,
}

/// Minimum strength of the sampled first measurements.
pub const DEFAULT_DELTA: f64 = 0.05;
/// Required decrease for the certificate.
pub const MIN_ETA: f64 = 1e-6;

/// Pairs the zero slack of the W transformation with a strict decrease of
/// `𝒞` under sampled nontrivial first measurements by `⋆` or `n₁`.
pub fn impossibility_certificate(
    samples: usize,
    seed: u64,
    delta: f64,
) -> Result<ImpossibilityCertificate> {
    if delta.is_nan() || delta <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "δ = {} must be positive",
            delta
        )));
    }
    let mut r = Report::new("first nontrivial measurement on W strictly lowers 𝒞");
    let transform = w_transform_check()?;
    let slack = transform
        .get("slack: average − 𝒞(W)")
        .map(|c| c.value)
        .expect("slack check present");
    r.push(Check::close(
        "required slack after the transformation",
        slack,
        0.0,
        CONCURRENCE_TOL,
    ));

    let mut cfg = SuiteConfig::new(samples, seed);
    cfg.fixed_x = Some(WClassVector::w());
    cfg.measurer = Measurer::StarOrN1;
    cfg.complex_b = true;
    cfg.min_strength = delta;
    let suite = run_monotone_suite(&cfg);
    let eta = -suite.max_delta;
    r.push(Check::at_least(
        format!("η = −max Δ̄𝒞 (strength ≥ {})", delta),
        eta,
        MIN_ETA,
    ));

    let w = WClassVector::w();
    let trivial = complete_measurement(Party::A, 0.5, 0.5, C64::new(0.0, 0.0))?;
    r.push(Check::at_most(
        "|Δ̄𝒞| at the trivial measurement",
        avg_delta_c(&w, Party::A, &trivial).abs(),
        1e-9,
    ));
    let spot = complete_measurement(Party::A, 0.75, 0.25, C64::new(0.0, 0.0))?;
    r.push(Check::close(
        "Δ̄𝒞 at (a₁, c₁) = (0.75, 0.25), ⋆ measures",
        avg_delta_c(&w, Party::A, &spot),
        (8.0 / 9.0) * (2.0 * 0.1875f64.sqrt() - 1.0),
        1e-12,
    ));
    Ok(ImpossibilityCertificate {
        report: r,
        eta,
        delta,
        suite,
    })
}

/// Result of compressing the redundant demo tree.
#[derive(Clone, Debug, Serialize)]
pub struct CompressionDemo {
    pub report: Report,
    pub branches_before: Vec<usize>,
    pub branches_after: Vec<usize>,
    pub distance: f64,
}

/// Compresses [`redundant_demo_tree`] and checks the per-level branch bound,
/// preservation of the instrument and recovery of minimal support.
pub fn compression_demo(eps: f64, split: usize) -> Result<CompressionDemo> {
    let t = redundant_demo_tree(eps, split)?;
    let m = t.outcome_labels().len();
    let compressed = compress_outcomes(&t, m)?;
    let before = t.max_branches_per_level();
    let after = compressed.max_branches_per_level();
    let d_total = t.parties().total_dim();
    let mut r = Report::new(format!(
        "outcome compression of a {}-level tree (D = {}, m = {})",
        t.depth(),
        d_total,
        m
    ));
    for (l, &n) in after.iter().enumerate() {
        let bound = outcome_bound(m, d_total, t.depth(), l + 1);
        r.push(Check::at_most(
            format!("level {} branches", l + 1),
            n as f64,
            bound as f64,
        ));
    }
    let distance = instrument_choi_distance(&run_protocol(&t)?, &run_protocol(&compressed)?)?;
    r.push(Check::at_most(
        "D_Choi(original, compressed)",
        distance,
        1e-8,
    ));
    r.push(Check::flag(
        "every node back to the unsplit support (≤ 2 branches)",
        after.iter().all(|&n| n <= 2),
    ));
    Ok(CompressionDemo {
        report: r,
        branches_before: before,
        branches_after: after,
        distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classes::is_sep_finegrained;

    #[test]
    fn target_is_valid_and_separable() {
        let j = build_target_j();
        assert!(j.validate(1e-12).deviation <= 1e-12);
        for (_, m) in j.iter() {
            assert_eq!(
                is_sep_finegrained(m, 1e-10).unwrap().verdict,
                SepVerdict::Yes
            );
        }
    }

    #[test]
    fn params_validation() {
        assert!(IterationParams::new(0, 0.1).is_err());
        assert!(IterationParams::new(3, 1.0).is_err());
        assert!(IterationParams::coupled(1, 0.5).is_err());
        assert!(IterationParams::coupled(4, 1.5).is_err());
        let p = IterationParams::coupled(100, 0.5).unwrap();
        assert!((p.eps - 0.1).abs() < 1e-15);
    }

    #[test]
    fn single_round_branch_11() {
        let p = IterationParams::new(1, 0.3).unwrap();
        let j = build_jnu(&p);
        let k = &j.get("11").unwrap().kraus()[0];
        assert!(k.max_abs_diff(&m1(0.3).kron(&m1(0.3))) < 1e-15);
        assert!((j.get("11").unwrap().choi().trace() - 0.09).abs() < 1e-15);
        assert!((branch11_trace(&p) - 0.09).abs() < 1e-15);
    }

    #[test]
    fn branch_11_closed_form() {
        let p = IterationParams::new(50, 0.1).unwrap();
        let j = build_jnu(&p);
        assert!(j.validate(1e-12).valid);
        let tr = j.get("11").unwrap().choi().trace();
        assert!((tr - branch11_trace(&p)).abs() <= 1e-12);
    }

    #[test]
    fn tree_matches_kraus_families() {
        for nu in [1, 2, 5] {
            let p = IterationParams::new(nu, 0.2).unwrap();
            let t = jnu_tree(&p).unwrap();
            assert_eq!(t.depth(), 2 * nu);
            let a = run_protocol(&t).unwrap();
            assert_eq!(a.labels(), JNU_LABELS);
            assert!(instrument_choi_distance(&a, &build_jnu(&p)).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn block_limit_approaches_target() {
        let b = omega01_block_limit(1e-6);
        assert!((b[0][0] - 0.5).abs() < 1e-5);
        assert!((b[0][1] - 2.0 / 3.0).abs() < 1e-5);
        assert!((b[1][1] - 1.0).abs() < 1e-5);
        // finite ν with (1−ε)^ν negligible already sits on the ν → ∞ value
        let p = IterationParams::new(3000, 0.02).unwrap();
        let c = build_jnu(&p).get("01").unwrap().choi().matrix;
        // interleaved (A′, A, B′, B): |00⟩_{A′A}|00⟩_{B′B} is index 0, |11⟩_{A′A}|00⟩ is index 12
        let lim = omega01_block_limit(0.02);
        assert!((c[(0, 0)].re - lim[0][0]).abs() < 1e-12);
        assert!((c[(0, 12)].re - lim[0][1]).abs() < 1e-12);
        assert!((c[(12, 12)].re - lim[1][1]).abs() < 1e-12);
    }

    #[test]
    fn convergence_rows_are_consistent() {
        let rows = convergence_table(&[10, 100], 0.5).unwrap();
        assert!(rows[1].distance < rows[0].distance);
        for row in &rows {
            assert!(row.distance >= row.branch11_trace);
            let p = IterationParams::coupled(row.nu, 0.5).unwrap();
            let direct = instrument_choi_distance(&build_jnu(&p), &padded_target()).unwrap();
            assert_eq!(direct, row.distance);
        }
        let csv = convergence_csv(&rows);
        assert!(csv.starts_with("nu,eps,distance,branch11_trace\n10,"));
        assert_eq!(nu_ladder(10_000), vec![10, 100, 1000, 10_000]);
        assert_eq!(nu_ladder(5), Vec::<usize>::new());
    }

    #[test]
    fn w_transformation() {
        let r = w_transform_check().unwrap();
        assert!(r.passed(), "{}", r);
    }

    #[test]
    fn sep_gap() {
        let r = sep_gap_check().unwrap();
        assert!(r.passed(), "{}", r);
        assert!((r.get("average concurrence").unwrap().value - 0.942809).abs() < 1e-6);
    }

    #[test]
    fn small_certificate() {
        let c = impossibility_certificate(2000, 3, DEFAULT_DELTA).unwrap();
        assert!(c.report.passed(), "{}", c.report);
        assert!(c.eta > 0.0);
    }

    #[test]
    fn compression_restores_support() {
        let d = compression_demo(0.3, 3).unwrap();
        assert!(d.report.passed(), "{}", d.report);
        assert_eq!(d.branches_before[0], 6);
        assert_eq!(d.branches_after[0], 2);
    }

    #[test]
    fn failing_report_errors() {
        let mut r = Report::new("t");
        r.push(Check::at_most("x", 2.0, 1.0));
        assert!(!r.passed());
        assert!(matches!(r.ensure(), Err(Error::CheckFailed(_))));
    }
}
