use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use locc_core::classes::classify_instrument;
use locc_core::gap::{
    build_jnu, build_target_j, compression_demo, convergence_csv, convergence_table,
    impossibility_certificate, jnu_tree, nu_ladder, pi_instrument, redundant_demo_tree,
    sep_gap_check, w_transform_check, Check, IterationParams, Report, DEFAULT_DELTA,
};
use locc_core::instrument::{matrix_to_json, state_from_json, JsonMatrix};
use locc_core::protocol::{
    compress_outcomes, normalize_protocol, outcome_bound, run_protocol, ProtocolTree,
};
use locc_core::wclass::{run_monotone_suite, Measurer, Party, SuiteConfig};
use locc_core::{instrument_choi_distance, Instrument, DEFAULT_TOL};

#[derive(Parser)]
#[command(
    name = "locc",
    version,
    about = "Instruments, LOCC protocol trees and W-class monotones"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reproduce the two-qubit LOCC-closure results
    #[command(subcommand)]
    Demo(Demo),
    /// SEP and PPT checks for every map of an instrument file
    Classify {
        instrument: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Normalize a protocol tree and compress its outcomes
    Reduce {
        protocol: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of final outcomes used in the bound (defaults to the tree's own count)
        #[arg(long)]
        m: Option<usize>,
    },
    /// Run a protocol tree on an input state
    Run {
        protocol: PathBuf,
        #[arg(long)]
        state: PathBuf,
    },
    /// Randomized monotonicity test of the W-class monotone
    MonotoneTest(MonotoneArgs),
    /// Write built-in instruments and protocol trees as JSON
    Export {
        #[arg(value_enum)]
        what: ExportKind,
        #[arg(long, default_value_t = 3)]
        nu: usize,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        /// Copies per outcome for the redundant demo tree
        #[arg(long, default_value_t = 4)]
        split: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum Demo {
    /// Distance between the iterated instruments and the padded target along a ν ladder
    Converge {
        #[arg(long, default_value_t = 10_000)]
        nu_max: usize,
        #[arg(long, default_value_t = 0.5)]
        c: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// W-state transformation and the SEP instrument's excess concurrence
    Gap,
    /// Strict decrease of the monotone under nontrivial first measurements
    Impossibility {
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_DELTA)]
        delta: f64,
        /// CSV of the 100 least negative changes
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Outcome compression of a tree with redundantly split measurements
    Compress {
        #[arg(long, default_value_t = 4)]
        split: usize,
        #[arg(long, default_value_t = 0.3)]
        eps: f64,
    },
}

#[derive(Args)]
struct MonotoneArgs {
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Measuring party (random when omitted)
    #[arg(long, value_enum)]
    party: Option<PartyArg>,
    /// Fixed party ⋆ of the monotone (random when omitted)
    #[arg(long, value_enum)]
    star: Option<PartyArg>,
    /// Draw complex off-diagonal Kraus entries
    #[arg(long)]
    complex_b: bool,
    /// CSV of the 100 largest changes
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PartyArg {
    A,
    B,
    C,
}

impl From<PartyArg> for Party {
    fn from(p: PartyArg) -> Self {
        match p {
            PartyArg::A => Party::A,
            PartyArg::B => Party::B,
            PartyArg::C => Party::C,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportKind {
    /// The three-outcome target instrument
    Target,
    /// The separable Π instrument
    Pi,
    /// The iterated instrument for (ν, ε)
    Jnu,
    /// The iterated instrument as a protocol tree
    JnuTree,
    /// Two-round tree with every outcome split into copies
    DemoTree,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{}", text);
            Ok(())
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn converge(nu_max: usize, c: f64, out: Option<&Path>) -> Result<bool> {
    let ladder = nu_ladder(nu_max);
    if ladder.is_empty() {
        bail!("--nu-max must be at least 10");
    }
    let rows = convergence_table(&ladder, c)?;
    let csv = convergence_csv(&rows);
    let mut report = Report::new(format!("convergence with ε = ν^(-{})", c));
    for w in rows.windows(2) {
        report.push(Check::flag(
            format!("D(ν={}) < D(ν={})", w[1].nu, w[0].nu),
            w[1].distance < w[0].distance,
        ));
    }
    for r in &rows {
        report.push(Check::at_least(
            format!("D(ν={}) − tr Ω₁₁", r.nu),
            r.distance - r.branch11_trace,
            0.0,
        ));
    }
    match out {
        Some(p) => {
            fs::write(p, &csv).with_context(|| format!("writing {}", p.display()))?;
            eprintln!("wrote {}", p.display());
        }
        None => print!("{}", csv),
    }
    eprint!("{}", report);
    Ok(report.passed())
}

fn demo(cmd: Demo) -> Result<bool> {
    match cmd {
        Demo::Converge { nu_max, c, out } => converge(nu_max, c, out.as_deref()),
        Demo::Gap => {
            let a = w_transform_check()?;
            let b = sep_gap_check()?;
            print!("{}\n{}", a, b);
            Ok(a.passed() && b.passed())
        }
        Demo::Impossibility {
            samples,
            seed,
            delta,
            report,
        } => {
            let cert = impossibility_certificate(samples, seed, delta)?;
            print!("{}", cert.report);
            println!("η({}) = {:.6e} over {} samples", delta, cert.eta, samples);
            if let Some(p) = report {
                fs::write(&p, cert.suite.worst_csv())
                    .with_context(|| format!("writing {}", p.display()))?;
            }
            Ok(cert.report.passed())
        }
        Demo::Compress { split, eps } => {
            let d = compression_demo(eps, split)?;
            print!("{}", d.report);
            println!(
                "branches per level {:?} -> {:?}",
                d.branches_before, d.branches_after
            );
            Ok(d.report.passed())
        }
    }
}

fn reduce(protocol: &Path, out: Option<&Path>, m: Option<usize>) -> Result<bool> {
    let t = ProtocolTree::from_json(&read(protocol)?)?;
    let normalized = normalize_protocol(&t)?;
    let m = m.unwrap_or_else(|| normalized.outcome_labels().len());
    let compressed = compress_outcomes(&normalized, m)?;
    let distance = instrument_choi_distance(&run_protocol(&t)?, &run_protocol(&compressed)?)?;
    let mut report = Report::new("protocol reduction");
    let d = compressed.parties().total_dim();
    for (l, &n) in compressed.max_branches_per_level().iter().enumerate() {
        let bound = outcome_bound(m, d, compressed.depth(), l + 1);
        report.push(Check::at_most(
            format!("level {} branches", l + 1),
            n as f64,
            bound as f64,
        ));
    }
    report.push(Check::at_most("D_Choi(original, reduced)", distance, 1e-8));
    eprintln!(
        "branches per level {:?} -> {:?}",
        t.max_branches_per_level(),
        compressed.max_branches_per_level()
    );
    eprint!("{}", report);
    write_or_print(out, &(compressed.to_json()? + "\n"))?;
    Ok(report.passed())
}

#[derive(Serialize)]
struct RunOutcome {
    label: String,
    probability: f64,
    state: Option<JsonMatrix>,
}

fn run(protocol: &Path, state: &Path) -> Result<bool> {
    let t = ProtocolTree::from_json(&read(protocol)?)?;
    let rho = state_from_json(&read(state)?)?;
    let j: Instrument = run_protocol(&t)?;
    let outcomes: Vec<RunOutcome> = j
        .apply(&rho, DEFAULT_TOL)?
        .into_iter()
        .map(|o| RunOutcome {
            label: o.label,
            probability: o.probability,
            state: o.state.as_ref().map(matrix_to_json),
        })
        .collect();
    let total: f64 = outcomes.iter().map(|o| o.probability).sum();
    print_json(&outcomes)?;
    Ok((total - 1.0).abs() <= 1e-9)
}

fn monotone_test(a: MonotoneArgs) -> Result<bool> {
    let mut cfg = SuiteConfig::new(a.samples, a.seed);
    cfg.measurer = a.party.map_or(Measurer::Any, |p| Measurer::Fixed(p.into()));
    cfg.star = a.star.map(Into::into);
    cfg.complex_b = a.complex_b;
    let r = run_monotone_suite(&cfg);
    let mut report = Report::new(format!(
        "monotonicity over {} random measurements",
        a.samples
    ));
    report.push(Check::at_most("max Δ̄𝒞", r.max_delta, 1e-9));
    report.push(Check::at_most(
        "max |Σp − 1|",
        r.max_probability_error,
        1e-12,
    ));
    print!("{}", report);
    if let Some(p) = a.report {
        fs::write(&p, r.worst_csv()).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(report.passed())
}

fn export(what: ExportKind, nu: usize, eps: f64, split: usize, out: Option<&Path>) -> Result<bool> {
    let text = match what {
        ExportKind::Target => build_target_j().to_json()?,
        ExportKind::Pi => pi_instrument().to_json()?,
        ExportKind::Jnu => build_jnu(&IterationParams::new(nu, eps)?).to_json()?,
        ExportKind::JnuTree => jnu_tree(&IterationParams::new(nu, eps)?)?.to_json()?,
        ExportKind::DemoTree => redundant_demo_tree(eps, split)?.to_json()?,
    };
    write_or_print(out, &(text + "\n"))?;
    Ok(true)
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Demo(d) => demo(d),
        Command::Classify { instrument, tol } => {
            let j = Instrument::from_json(&read(&instrument)?)?;
            let report = classify_instrument(&j, tol)?;
            print_json(&report)?;
            Ok(report.tp_deviation <= tol)
        }
        Command::Reduce { protocol, out, m } => reduce(&protocol, out.as_deref(), m),
        Command::Run { protocol, state } => run(&protocol, &state),
        Command::MonotoneTest(a) => monotone_test(a),
        Command::Export {
            what,
            nu,
            eps,
            split,
            out,
        } => export(what, nu, eps, split, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more checks failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(2)
        }
    }
}
