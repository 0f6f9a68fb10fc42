//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;

use locc_core::caratheodory::caratheodory_reduce;
use locc_core::classes::{is_ppt_map, is_sep_finegrained, SepVerdict};
use locc_core::gap::{
    branch11_trace, build_target_j, compression_demo, convergence_table, sep_gap_check,
    w_transform_check, IterationParams,
};
use locc_core::instrument::mix_instruments;
use locc_core::linalg::{permute_subsystems, polar_decompose, CMatrix};
use locc_core::protocol::{locc_link, run_protocol};
use locc_core::random;
use locc_core::wclass::{monotone_c, run_monotone_suite, Measurer, SuiteConfig, WClassVector};
use locc_core::{choi_of_map, instrument_choi_distance, Instrument, KrausMap};

const CHOI_TOL: f64 = 1e-12;
const CHOI_RUNTIME: Duration = Duration::from_millis(1);
const CONVERGENCE_LADDER: [usize; 4] = [10, 100, 1_000, 10_000];
const CONVERGENCE_C: f64 = 0.5;
const CONVERGENCE_FINAL_MAX: f64 = 0.1;
const BRANCH11_TOL: f64 = 1e-12;
const CONVERGENCE_RUNTIME: Duration = Duration::from_secs(10);
const MONOTONE_SAMPLES: usize = 100_000;
const MONOTONE_SEED: u64 = 20_240_101;
const MONOTONE_MAX_DELTA: f64 = 1e-9;
const STRICT_STRENGTH: f64 = 0.05;
const STRICT_MIN_COMPONENT: f64 = 0.01;
const STRICT_MAX_DELTA: f64 = -1e-6;
const MONOTONE_RUNTIME: Duration = Duration::from_secs(60);
const COMPRESSION_SPLIT: usize = 4;
const COMPRESSION_EPS: f64 = 0.3;
const COMPRESSION_TOL: f64 = 1e-8;
const CARATHEODORY_INSTANCES: usize = 500;
const CARATHEODORY_TOL: f64 = 1e-10;
const PROPERTY_TOL: f64 = 1e-10;
const RANDOM_PROTOCOLS: usize = 100;
const POLAR_MATRICES: usize = 1000;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn criterion_1() -> Outcome {
    let j = build_target_j();
    let m = j.get("01").expect("label 01");
    let start = Instant::now();
    let choi = choi_of_map(m);
    let elapsed = start.elapsed();
    let block = [[0.5, 2.0 / 3.0], [2.0 / 3.0, 1.0]];
    let ket00 = CMatrix::unit(4, 0, 0);
    let expected = CMatrix::from_fn(4, 4, |r, c| {
        let (i, j) = (r / 3, c / 3);
        if r % 3 == 0 && c % 3 == 0 {
            locc_core::C64::new(block[i][j], 0.0)
        } else {
            locc_core::C64::new(0.0, 0.0)
        }
    })
    .kron(&ket00);
    let err = choi.matrix.max_abs_diff(&expected);
    outcome(
        err <= CHOI_TOL && elapsed < CHOI_RUNTIME,
        format!(
            "max entry error {:.2e} (≤ {:.0e}), {:?} (< {:?})",
            err, CHOI_TOL, elapsed, CHOI_RUNTIME
        ),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let rows = match convergence_table(&CONVERGENCE_LADDER, CONVERGENCE_C) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let elapsed = start.elapsed();
    let decreasing = rows.windows(2).all(|w| w[1].distance < w[0].distance);
    let last = rows.last().map(|r| r.distance).unwrap_or(f64::INFINITY);
    let mut b11 = 0.0f64;
    for r in &rows {
        let p = IterationParams::coupled(r.nu, CONVERGENCE_C).expect("valid");
        let j = locc_core::gap::build_jnu(&p);
        let tr = j.get("11").expect("label 11").choi().trace();
        b11 = b11.max((tr - branch11_trace(&p)).abs());
    }
    let distances: Vec<String> = rows.iter().map(|r| format!("{:.4e}", r.distance)).collect();
    outcome(
        decreasing
            && last < CONVERGENCE_FINAL_MAX
            && b11 <= BRANCH11_TOL
            && elapsed < CONVERGENCE_RUNTIME,
        format!(
            "D = [{}], strictly decreasing {}, final < {}, branch-11 error {:.2e}, {:.2?}",
            distances.join(", "),
            decreasing,
            CONVERGENCE_FINAL_MAX,
            b11,
            elapsed
        ),
    )
}

fn criterion_3() -> Outcome {
    match w_transform_check() {
        Ok(r) => {
            let p = r.get("p(01)").map(|c| c.value).unwrap_or(f64::NAN);
            let c = r.get("C(ω)").map(|c| c.value).unwrap_or(f64::NAN);
            outcome(
                r.passed(),
                format!(
                    "p(01) = {:.15}, C(ω) = {:.15}, {} checks",
                    p,
                    c,
                    r.checks.len()
                ),
            )
        }
        Err(e) => outcome(false, e.to_string()),
    }
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let c_w = monotone_c(&WClassVector::w(), locc_core::wclass::Party::A);
    let exact = c_w == 8.0 / 9.0;

    let main = run_monotone_suite(&SuiteConfig::new(MONOTONE_SAMPLES, MONOTONE_SEED));
    let mut complex_cfg = SuiteConfig::new(MONOTONE_SAMPLES, MONOTONE_SEED + 1);
    complex_cfg.complex_b = true;
    let complex = run_monotone_suite(&complex_cfg);

    let mut strict_cfg = SuiteConfig::new(MONOTONE_SAMPLES, MONOTONE_SEED + 2);
    strict_cfg.measurer = Measurer::StarOrN1;
    strict_cfg.complex_b = true;
    strict_cfg.min_strength = STRICT_STRENGTH;
    strict_cfg.min_component = STRICT_MIN_COMPONENT;
    let strict = run_monotone_suite(&strict_cfg);
    let elapsed = start.elapsed();

    let max_any = main.max_delta.max(complex.max_delta);
    let prob = main
        .max_probability_error
        .max(complex.max_probability_error);
    outcome(
        exact
            && max_any <= MONOTONE_MAX_DELTA
            && prob <= 1e-12
            && strict.max_delta <= STRICT_MAX_DELTA
            && elapsed < MONOTONE_RUNTIME,
        format!(
            "𝒞(W) = {:.17} (exact {}), max Δ̄𝒞 = {:.3e} over 2×{} draws, strict max Δ̄𝒞 = {:.3e} (≤ {:.0e}), Σp error {:.1e}, {:.2?}",
            c_w, exact, max_any, MONOTONE_SAMPLES, strict.max_delta, STRICT_MAX_DELTA, prob, elapsed
        ),
    )
}

fn criterion_5() -> Outcome {
    match sep_gap_check() {
        Ok(r) => {
            let avg = r
                .get("average concurrence")
                .map(|c| c.value)
                .unwrap_or(f64::NAN);
            let excess = r
                .get("excess over 𝒞(W)")
                .map(|c| c.value)
                .unwrap_or(f64::NAN);
            outcome(
                r.passed(),
                format!("average concurrence {:.15}, excess {:.6}", avg, excess),
            )
        }
        Err(e) => outcome(false, e.to_string()),
    }
}

fn criterion_6() -> Outcome {
    match compression_demo(COMPRESSION_EPS, COMPRESSION_SPLIT) {
        Ok(d) => outcome(
            d.report.passed() && d.distance <= COMPRESSION_TOL,
            format!(
                "branches per level {:?} → {:?}, D_Choi {:.2e} (≤ {:.0e})",
                d.branches_before, d.branches_after, d.distance, COMPRESSION_TOL
            ),
        ),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn criterion_7() -> Outcome {
    let mut rng = random::rng(7);
    let mut worst_err = 0.0f64;
    let mut worst_excess = 0i64;
    for _ in 0..CARATHEODORY_INSTANCES {
        let n = rng.random_range(1..=10usize);
        let k = rng.random_range(1..=4 * (n + 1));
        let points: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
        let before = locc_core::caratheodory::weighted_sum(&points, &weights);
        match caratheodory_reduce(&points, &weights) {
            Ok(r) => {
                let after = r.weighted_sum();
                let err = before
                    .iter()
                    .zip(&after)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                let mass = (weights.iter().sum::<f64>() - r.weights.iter().sum::<f64>()).abs();
                worst_err = worst_err.max(err).max(mass);
                worst_excess = worst_excess.max(r.support() as i64 - (n as i64 + 1));
            }
            Err(e) => return outcome(false, e.to_string()),
        }
    }
    outcome(
        worst_err <= CARATHEODORY_TOL && worst_excess <= 0,
        format!(
            "{} instances, worst barycenter error {:.2e}, worst support − (n+1) = {}",
            CARATHEODORY_INSTANCES, worst_err, worst_excess
        ),
    )
}

/// `E(ρ) = Σ_ij ρ_ij E(|i⟩⟨j|)` read off the Choi matrix.
fn apply_via_choi(m: &KrausMap, rho: &CMatrix) -> CMatrix {
    let choi = choi_of_map(m);
    let n = m.party_dims().len();
    let dims = choi.space_dims();
    let perm: Vec<usize> = (0..n)
        .map(|k| 2 * k)
        .chain((0..n).map(|k| 2 * k + 1))
        .collect();
    let grouped = permute_subsystems(&choi.matrix, &dims, &perm).expect("valid permutation");
    let (din, dout) = (m.dim_in(), m.dim_out());
    CMatrix::from_fn(dout, dout, |r, c| {
        let mut acc = locc_core::C64::new(0.0, 0.0);
        for i in 0..din {
            for j in 0..din {
                acc += rho[(i, j)] * grouped[(i * dout + r, j * dout + c)];
            }
        }
        acc
    })
}

fn criterion_8() -> Outcome {
    let mut rng = random::rng(8);
    let mut notes = Vec::new();
    let mut ok = true;

    // closure of valid instruments
    let mut closure_dev = 0.0f64;
    for _ in 0..50 {
        let j1 = random::coarse_instrument(&[2, 2], 3, 2, &mut rng);
        let j2 = random::instrument(&[2, 2], 4, &mut rng);
        let coarse = j2.coarse_grain(|l| {
            if l == "0" || l == "1" {
                "a".into()
            } else {
                "b".into()
            }
        });
        let mut theta: Vec<String> = j1.labels().to_vec();
        theta.push("extra".into());
        let padded = j1.pad(&theta).expect("superset");
        let mixed = mix_instruments(&j1, &j2, rng.random_range(0.0..1.0)).expect("λ in range");
        let conds: BTreeMap<String, Instrument> = j1
            .labels()
            .iter()
            .map(|l| (l.clone(), random::instrument(&[2, 2], 2, &mut rng)))
            .collect();
        let linked =
            locc_link(&j1, &conds, |a, b| format!("{}{}", a, b)).expect("every label covered");
        for j in [&coarse, &padded, &mixed, &linked] {
            closure_dev = closure_dev.max(j.validate(PROPERTY_TOL).deviation);
        }
    }
    ok &= closure_dev <= PROPERTY_TOL;
    notes.push(format!("closure deviation {:.1e}", closure_dev));

    // finite-round protocols land in SEP and PPT
    let mut sep_failures = 0;
    for _ in 0..RANDOM_PROTOCOLS {
        let t = random::protocol_tree(&[2, 2], 2, 3, &mut rng);
        let j = run_protocol(&t).expect("valid tree");
        let coarse = j.coarse_grain(|l| l.split('/').next().unwrap_or(l).to_string());
        for inst in [&j, &coarse] {
            for (_, m) in inst.iter() {
                let sep = is_sep_finegrained(m, 1e-9).expect("runs").verdict == SepVerdict::Yes;
                let ppt = is_ppt_map(m, None, 1e-9).expect("runs").ppt;
                if !(sep && ppt) {
                    sep_failures += 1;
                }
            }
        }
    }
    ok &= sep_failures == 0;
    notes.push(format!(
        "{} protocols, {} non-SEP/PPT maps",
        RANDOM_PROTOCOLS, sep_failures
    ));

    // Choi and Kraus actions agree
    let mut duality = 0.0f64;
    for _ in 0..100 {
        let j = random::coarse_instrument(&[2, 3], 2, 2, &mut rng);
        let rho = random::density(6, &mut rng);
        for (_, m) in j.iter() {
            duality = duality.max(apply_via_choi(m, &rho).max_abs_diff(&m.apply(&rho)));
        }
    }
    ok &= duality <= PROPERTY_TOL;
    notes.push(format!("apply/Choi gap {:.1e}", duality));

    // polar decomposition reconstructs
    let mut polar = 0.0f64;
    for i in 0..POLAR_MATRICES {
        let cols = 1 + i % 6;
        let rows = cols + (i / 6) % 3;
        let m = random::gaussian_matrix(rows, cols, &mut rng);
        let p = polar_decompose(&m).expect("rows ≥ cols");
        let recon = p.u.matmul(&p.a).max_abs_diff(&m);
        let iso = (&p.u.gram() - &CMatrix::identity(cols)).max_abs();
        let psd = if p.a.is_psd(PROPERTY_TOL) { 0.0 } else { 1.0 };
        polar = polar.max(recon).max(iso).max(psd);
    }
    ok &= polar <= PROPERTY_TOL;
    notes.push(format!("polar error {:.1e} over {}", polar, POLAR_MATRICES));

    // a sanity distance: identical instruments are at distance zero
    let j = random::instrument(&[2, 2], 3, &mut rng);
    ok &= instrument_choi_distance(&j, &j)
        .map(|d| d == 0.0)
        .unwrap_or(false);

    outcome(ok, notes.join(", "))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("1 Choi reproduction", criterion_1),
        ("2 convergence of the iterated instruments", criterion_2),
        ("3 W transformation", criterion_3),
        ("4 monotone ceiling", criterion_4),
        ("5 SEP gap", criterion_5),
        ("6 outcome compression bound", criterion_6),
        ("7 Carathéodory reduction", criterion_7),
        ("8 property suites", criterion_8),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let o = run();
        println!(
            "{} criterion {}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            name,
            o.detail
        );
        if !o.passed {
            failed += 1;
        }
    }
    println!("acceptance: {} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
