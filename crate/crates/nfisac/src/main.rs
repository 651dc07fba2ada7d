//! Command-line front end: single trials, axis sweeps, and the self-check
//! suite, all driven by a flat key-value config file.

use clap::{Args, Parser, Subcommand};
use nfisac::experiments::{
    run_trial, sweep, validate, write_record_csv, HarnessOptions, Scheme, SweepAxis,
    ValidationHooks,
};
use nfisac::scenario::{load_scenario, Scenario};
use nfisac::solver::{Backend, InnerOptions};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "nfisac",
    about = "Near-field ISAC lab: flexible rate-splitting beams vs. conventional baselines",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario config file (flat `key = value [unit]` text).
    #[arg(long)]
    config: PathBuf,
    /// Subproblem backend.
    #[arg(long, default_value = "exact", value_parser = parse_backend)]
    backend: Backend,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trial of one scheme and write a single-row CSV.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Scheme to run.
        #[arg(long, value_parser = parse_scheme)]
        scheme: Scheme,
        /// Trial seed.
        #[arg(long)]
        seed: u64,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Replace annealing by enumeration (flexible scheme, small K only).
        #[arg(long)]
        exhaustive: bool,
        /// Write the inner-solver iteration trace (tab-separated) here.
        #[arg(long)]
        trace_inner: Option<PathBuf>,
        /// Write the per-step annealing trace (tab-separated) here.
        #[arg(long)]
        trace_sa: Option<PathBuf>,
    },
    /// Sweep user count or rate floor across schemes and write CSV + plot.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Sweep axis.
        #[arg(long, value_parser = parse_axis)]
        axis: SweepAxis,
        /// Comma-separated axis values (user counts or bits/s/Hz).
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        /// Comma-separated schemes.
        #[arg(long, value_delimiter = ',', value_parser = parse_scheme)]
        schemes: Vec<Scheme>,
        /// Trials per (value, scheme) cell.
        #[arg(long)]
        trials: usize,
        /// Output CSV path (a sibling `.gp` plot script is written too).
        #[arg(long)]
        out: PathBuf,
        /// Replace annealing by enumeration (flexible scheme, small K only).
        #[arg(long)]
        exhaustive: bool,
    },
    /// Run the standing invariant suite and print pass/fail per property.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    Scheme::parse(s).ok_or_else(|| format!("unknown scheme `{s}` (expected frs|rs|sdma)"))
}

fn parse_axis(s: &str) -> Result<SweepAxis, String> {
    SweepAxis::parse(s).ok_or_else(|| format!("unknown axis `{s}` (expected users|qos)"))
}

fn parse_backend(s: &str) -> Result<Backend, String> {
    match s {
        "exact" => Ok(Backend::ExactConic),
        "linearized" => Ok(Backend::Linearized),
        _ => Err(format!("unknown backend `{s}` (expected exact|linearized)")),
    }
}

fn load(common: &CommonArgs) -> Result<(Scenario<f64>, HarnessOptions), String> {
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| format!("cannot read {}: {e}", common.config.display()))?;
    let scenario: Scenario<f64> = load_scenario(&text).map_err(|e| e.to_string())?;
    for w in &scenario.warnings {
        eprintln!("warning: {w}");
    }
    let options = HarnessOptions {
        inner: InnerOptions {
            backend: common.backend,
            ..InnerOptions::default()
        },
        ..HarnessOptions::default()
    };
    Ok((scenario, options))
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<ExitCode, String> {
    match Cli::parse().command {
        Command::Run {
            common,
            scheme,
            seed,
            out,
            exhaustive,
            trace_inner,
            trace_sa,
        } => {
            let (scenario, mut options) = load(&common)?;
            options.exhaustive_selection = exhaustive;
            if exhaustive && scenario.k_users() > nfisac::selection::EXHAUSTIVE_LIMIT {
                eprintln!(
                    "warning: --exhaustive needs K ≤ {}; falling back to annealing",
                    nfisac::selection::EXHAUSTIVE_LIMIT
                );
            }
            let record = run_trial(&scenario, scheme, seed, &options);
            write_record_csv(&record, &out).map_err(|e| e.to_string())?;
            if trace_inner.is_some() || trace_sa.is_some() {
                write_traces(&scenario, scheme, seed, &options, trace_inner, trace_sa)?;
            }
            println!(
                "{} seed {} → status {}, objective {:.6e}, rcrb_dist {:.4e} m, rcrb_angle {:.4e} rad ({} outer iters, {} SA steps, {} ms)",
                record.scheme,
                record.seed,
                record.status,
                record.objective,
                record.rcrb_dist_m,
                record.rcrb_angle_rad,
                record.outer_iters,
                record.sa_steps,
                record.wall_ms
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            common,
            axis,
            values,
            schemes,
            trials,
            out,
            exhaustive,
        } => {
            if values.is_empty() || schemes.is_empty() || trials == 0 {
                return Err("sweep needs non-empty --values/--schemes and --trials ≥ 1".into());
            }
            let (scenario, mut options) = load(&common)?;
            options.exhaustive_selection = exhaustive;
            if exhaustive {
                let max_k = match axis {
                    SweepAxis::Users => values.iter().cloned().fold(0.0, f64::max) as usize,
                    SweepAxis::Qos => scenario.k_users(),
                };
                if max_k > nfisac::selection::EXHAUSTIVE_LIMIT {
                    eprintln!(
                        "warning: --exhaustive needs K ≤ {}; larger cells fall back to annealing",
                        nfisac::selection::EXHAUSTIVE_LIMIT
                    );
                }
            }
            let output = sweep(&scenario, axis, &values, &schemes, trials, &out, &options)
                .map_err(|e| e.to_string())?;
            println!(
                "wrote {} data rows to {} (plot script {})",
                output.records.len(),
                output.csv_path.display(),
                output.plot_path.display()
            );
            for cell in &output.cells {
                println!(
                    "  {} @ {}: ok {}/{} mean objective {:.6e}, rcrb_dist {:.4e} m, rcrb_angle {:.4e} rad",
                    cell.scheme,
                    cell.axis_value,
                    cell.n_ok,
                    cell.trials,
                    cell.mean_objective,
                    cell.mean_rcrb_dist,
                    cell.mean_rcrb_angle
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { common } => {
            let (scenario, _) = load(&common)?;
            let checks = validate(&scenario, &ValidationHooks::default());
            let mut all_pass = true;
            for c in &checks {
                println!("{} {} — {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
                all_pass &= c.pass;
            }
            Ok(if all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}

/// Re-run the trial's final configuration to capture the optional debug
/// traces: the inner solve's per-iteration lines and the annealer's per-step
/// lines, both tab-separated.
fn write_traces(
    scenario: &Scenario<f64>,
    scheme: Scheme,
    seed: u64,
    options: &HarnessOptions,
    trace_inner: Option<PathBuf>,
    trace_sa: Option<PathBuf>,
) -> Result<(), String> {
    use nfisac::channel::user_channel;
    use nfisac::rates::SelectionVector;
    use nfisac::scenario::{sample_users, trial_rng};
    use nfisac::selection::{anneal, EvalContext};
    use rand_core::RngCore;

    let user_seed = trial_rng(seed, 0).next_u64();
    let users = sample_users(scenario, user_seed);
    let trial_scenario = scenario.with_users(users);
    let channels: Vec<_> = trial_scenario
        .users
        .iter()
        .map(|u| user_channel(&trial_scenario.geometry, u).expect("valid positions"))
        .collect();
    let ctx = EvalContext::new(trial_scenario, channels, options.inner)
        .map_err(|e| format!("trace run: {e}"))?;
    let k = ctx.k_users();

    let selection = match scheme {
        Scheme::Rs => SelectionVector::all_ones(k),
        Scheme::Sdma => SelectionVector::all_zeros(k),
        Scheme::Frs => {
            let anneal_seed = trial_rng(seed, 1).next_u64();
            let result = anneal(&ctx, anneal_seed).map_err(|e| format!("trace run: {e}"))?;
            if let Some(path) = &trace_sa {
                let mut text = String::from("step\tflipped\tproposed_value\taccepted\ttemperature\n");
                for s in &result.steps {
                    text.push_str(&format!(
                        "{}\t{}\t{}\t{}\t{}\n",
                        s.step, s.flipped, s.proposed_value, s.accepted, s.temperature
                    ));
                }
                std::fs::write(path, text).map_err(|e| e.to_string())?;
            }
            result.selection
        }
    };

    if let Some(path) = &trace_inner {
        let outcome = ctx.evaluate(&selection);
        let mut text = String::from("iteration\tobjective\tstatus\n");
        for t in &outcome.trace {
            text.push_str(&format!("{}\t{}\t{}\n", t.iteration, t.objective, t.status));
        }
        std::fs::write(path, text).map_err(|e| e.to_string())?;
    }
    if trace_sa.is_some() && scheme != Scheme::Frs {
        eprintln!("note: --trace-sa applies to the frs scheme only; no file written");
    }
    Ok(())
}
