use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cqed_core::experiments::{
    run_fig4, run_fig5, run_gate_check, run_validate, Experiment, SweepConfig, Table, FIG5_REFINEMENT_TOL,
};
use cqed_core::Error;

/// Fidelity studies of a one-control, n-target tunable phase gate in a
/// cavity.
#[derive(Parser, Debug)]
#[command(name = "cqed-phase", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fidelity vs theta for n = 1..15 with deviated couplings (CSV: n,theta,fidelity).
    Fig4(Common),
    /// Lossy fidelity vs b = Delta_c / g (CSV: b,fidelity).
    Fig5(Common),
    /// Protocol vs ideal gate on every basis input for random angles.
    GateCheck(Common),
    /// Run the invariant suite.
    Validate(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path (CSV for fig4/fig5). Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Suppress progress and diagnostics.
    #[arg(long)]
    quiet: bool,
}

const EXIT_FAILED: u8 = 1;
const EXIT_BAD_INPUT: u8 = 2;

fn load(experiment: Experiment, c: &Common) -> Result<SweepConfig, Error> {
    let mut cfg = match &c.config {
        Some(path) => SweepConfig::from_file(experiment, path)?,
        None => SweepConfig::new(experiment),
    };
    for kv in &c.set {
        cfg.apply_override(kv)?;
    }
    if let Some(out) = &c.out {
        cfg.output = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(table: &Table, cfg: &SweepConfig) -> Result<(), Error> {
    match &cfg.output {
        Some(path) => table.write_csv(path),
        None => std::io::stdout()
            .write_all(table.to_csv().as_bytes())
            .map_err(|source| Error::Io { path: "<stdout>".into(), source }),
    }
}

fn run(experiment: Experiment, c: &Common) -> Result<bool, Error> {
    let cfg = load(experiment, c)?;
    let quiet = c.quiet;
    match experiment {
        Experiment::Fig4 => {
            let table = run_fig4::<f64>(&cfg)?;
            emit(&table, &cfg)?;
            if !quiet {
                eprintln!("fig4: {} rows", table.rows.len());
            }
            Ok(true)
        }
        Experiment::Fig5 => {
            let report = run_fig5::<f64>(&cfg)?;
            emit(&report.table(), &cfg)?;
            if !quiet {
                for p in &report.points {
                    let conv = match p.refinement_change {
                        Some(d) if d >= FIG5_REFINEMENT_TOL => format!("  NOT CONVERGED (|dF| {d:.2e})"),
                        Some(d) => format!("  |dF| {d:.2e}"),
                        None => String::new(),
                    };
                    eprintln!(
                        "b = {:>5}  F = {:.6}  steps = {:>6}  trace drift = {:.1e}  min eig = {:.1e}{conv}",
                        p.b, p.fidelity, p.integrator_steps, p.trace_drift, p.min_eigenvalue
                    );
                }
            }
            Ok(report.all_converged())
        }
        Experiment::GateCheck => {
            let report = run_gate_check::<f64>(&cfg)?;
            let worst =
                report.cases.iter().max_by(|a, b| a.max_error.total_cmp(&b.max_error)).expect("at least one case");
            if !quiet || !report.passed() {
                println!(
                    "{} cases, max error {:.3e} (n = {}, input {:?})",
                    report.cases.len(),
                    report.max_error(),
                    worst.n,
                    worst.worst_input
                );
            }
            if !report.passed() {
                println!("FAIL: error exceeds {:e}", report.tolerance);
            }
            Ok(report.passed())
        }
        Experiment::Validate => {
            let report = run_validate::<f64>(&cfg)?;
            if quiet {
                for c in report.checks.iter().filter(|c| !c.passed) {
                    println!("FAIL {} {}", c.name, c.detail);
                }
            } else {
                print!("{}", report.render());
            }
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, common) = match &cli.command {
        Command::Fig4(c) => (Experiment::Fig4, c),
        Command::Fig5(c) => (Experiment::Fig5, c),
        Command::GateCheck(c) => (Experiment::GateCheck, c),
        Command::Validate(c) => (Experiment::Validate, c),
    };
    match run(experiment, common) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAILED),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_BAD_INPUT)
        }
    }
}
