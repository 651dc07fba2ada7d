//! Monte-Carlo harness: per-trial runs across schemes, sweeps over user
//! count or the rate floor, CSV/plot-script emission, and the self-check
//! suite behind the `validate` subcommand.
//!
//! Reproducibility: each sweep cell/trial gets its own ChaCha stream spawned
//! from the scenario's root seed by counter, and records are sorted on
//! `(scheme, axis value, seed)` before writing, so a sweep is deterministic
//! up to the wall-clock column (which `zero_wall_clock` pins for
//! byte-for-byte comparisons).

use crate::channel::{array_response, array_response_jacobian, user_channel, ChannelVector};
use crate::precoding::PowerAllocation;
use crate::rates::SelectionVector;
use crate::scalar::{conv, Scalar};
use crate::scenario::{sample_users, trial_rng, unit_uniform, ArraySide, PolarPosition, Scenario};
use crate::selection::{
    anneal, baseline, exhaustive, BaselineScheme, EvalContext, SelectionError, EXHAUSTIVE_LIMIT,
};
use crate::solver::{
    optimize_powers, quadratic_transform_multiplier, verify_probe_elimination, InnerOptions,
    SolveStatus,
};
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Transmission scheme under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Scheme {
    /// Flexible rate splitting: the selection is searched per trial.
    Frs,
    /// Conventional rate splitting: everyone decodes the common stream.
    Rs,
    /// Space division: private streams only, no common beam.
    Sdma,
}

impl Scheme {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "frs" => Some(Self::Frs),
            "rs" => Some(Self::Rs),
            "sdma" => Some(Self::Sdma),
            _ => None,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Frs => "frs",
            Self::Rs => "rs",
            Self::Sdma => "sdma",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordStatus {
    Ok,
    Infeasible,
    Nonconverged,
}

impl fmt::Display for RecordStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ok => "ok",
            Self::Infeasible => "infeasible",
            Self::Nonconverged => "nonconverged",
        })
    }
}

/// One trial's measurements; `rcrb_*` are the square roots of the final
/// bound diagonal reconstructed from the returned powers.
#[derive(Debug, Clone)]
pub struct ExperimentRecord<S> {
    pub scheme: Scheme,
    pub seed: u64,
    pub k_users: usize,
    pub qos_bpshz: S,
    pub objective: S,
    pub rcrb_dist_m: S,
    pub rcrb_angle_rad: S,
    pub outer_iters: usize,
    pub sa_steps: usize,
    pub wall_ms: u64,
    pub status: RecordStatus,
}

/// Harness knobs shared by `run_trial` and `sweep`.
#[derive(Debug, Clone, Copy)]
pub struct HarnessOptions {
    pub inner: InnerOptions,
    /// Replace annealing with full enumeration for the flexible scheme
    /// (small user counts only; used by selection-quality audits).
    pub exhaustive_selection: bool,
    /// Write zero in the wall-clock column so output files are
    /// byte-for-byte reproducible.
    pub zero_wall_clock: bool,
}

impl Default for HarnessOptions {
    fn default() -> Self {
        Self {
            inner: InnerOptions::default(),
            exhaustive_selection: false,
            zero_wall_clock: false,
        }
    }
}

/// Sub-stream purposes spawned from one trial seed.
const STREAM_USERS: u64 = 0;
const STREAM_ANNEAL: u64 = 1;
const STREAM_RESAMPLE_BASE: u64 = 8;

fn build_channels<S: Scalar>(
    scenario: &Scenario<S>,
    users: &[PolarPosition<S>],
) -> Vec<ChannelVector<S>> {
    users
        .iter()
        .map(|u| user_channel(&scenario.geometry, u).expect("validated positions"))
        .collect()
}

/// Run one trial: sample users, build the context, dispatch the scheme, and
/// reconstruct the bound from the final powers. Deterministic per
/// `(scenario, scheme, seed)` apart from the wall clock.
pub fn run_trial<S: Scalar>(
    scenario: &Scenario<S>,
    scheme: Scheme,
    seed: u64,
    options: &HarnessOptions,
) -> ExperimentRecord<S> {
    let started = std::time::Instant::now();
    let k = scenario.k_users();
    let mut record = ExperimentRecord {
        scheme,
        seed,
        k_users: k,
        qos_bpshz: scenario.qos_bpshz,
        objective: S::infinity(),
        rcrb_dist_m: S::nan(),
        rcrb_angle_rad: S::nan(),
        outer_iters: 0,
        sa_steps: 0,
        wall_ms: 0,
        status: RecordStatus::Nonconverged,
    };

    // User geometry occasionally defeats zero-forcing; resample with derived
    // streams a few times before giving up.
    let mut ctx = None;
    for attempt in 0..8u64 {
        let stream = if attempt == 0 {
            STREAM_USERS
        } else {
            STREAM_RESAMPLE_BASE + attempt
        };
        let user_seed = trial_rng(seed, stream).next_u64();
        let users = sample_users(scenario, user_seed);
        let trial_scenario = scenario.with_users(users);
        let channels = build_channels(&trial_scenario, &trial_scenario.users);
        match EvalContext::new(trial_scenario, channels, options.inner) {
            Ok(c) => {
                if attempt > 0 {
                    eprintln!("trial seed {seed}: resampled users {attempt}x (rank-deficient geometry)");
                }
                ctx = Some(c);
                break;
            }
            Err(_) => continue,
        }
    }
    let Some(ctx) = ctx else {
        record.wall_ms = elapsed_ms(started, options);
        return record;
    };

    let (selection, outcome, sa_steps, search_converged) = match scheme {
        Scheme::Rs => (
            SelectionVector::all_ones(k),
            baseline(&ctx, BaselineScheme::Rs),
            0,
            true,
        ),
        Scheme::Sdma => (
            SelectionVector::all_zeros(k),
            baseline(&ctx, BaselineScheme::Sdma),
            0,
            true,
        ),
        Scheme::Frs => {
            if options.exhaustive_selection && k <= EXHAUSTIVE_LIMIT {
                match exhaustive(&ctx, EXHAUSTIVE_LIMIT) {
                    Ok((sel, out)) => (sel, out, 0, true),
                    Err(SelectionError::AllInfeasible) => {
                        record.status = RecordStatus::Infeasible;
                        record.wall_ms = elapsed_ms(started, options);
                        return record;
                    }
                    Err(SelectionError::TooLarge { .. }) => unreachable!("guarded above"),
                }
            } else {
                let anneal_seed = trial_rng(seed, STREAM_ANNEAL).next_u64();
                match anneal(&ctx, anneal_seed) {
                    Ok(result) => {
                        let steps = result.sa_steps();
                        (result.selection, result.outcome, steps, result.converged)
                    }
                    Err(SelectionError::AllInfeasible) => {
                        record.status = RecordStatus::Infeasible;
                        record.wall_ms = elapsed_ms(started, options);
                        return record;
                    }
                    Err(SelectionError::TooLarge { .. }) => unreachable!("anneal has no limit"),
                }
            }
        }
    };

    record.outer_iters = outcome.iterations;
    record.sa_steps = sa_steps;
    record.status = match outcome.status {
        SolveStatus::Infeasible => RecordStatus::Infeasible,
        SolveStatus::NumericalFailure => RecordStatus::Nonconverged,
        SolveStatus::Optimal => {
            if outcome.converged && search_converged {
                RecordStatus::Ok
            } else {
                RecordStatus::Nonconverged
            }
        }
    };
    record.objective = outcome.objective;
    if outcome.status == SolveStatus::Optimal {
        if let Ok(crb) = ctx.crb_for(&selection, &outcome.powers) {
            record.rcrb_dist_m = crb.rcrb_dist;
            record.rcrb_angle_rad = crb.rcrb_angle;
        } else {
            record.status = RecordStatus::Nonconverged;
        }
    }
    record.wall_ms = elapsed_ms(started, options);
    record
}

fn elapsed_ms(started: std::time::Instant, options: &HarnessOptions) -> u64 {
    if options.zero_wall_clock {
        0
    } else {
        started.elapsed().as_millis() as u64
    }
}

/// Sweep axis: user count or the per-user rate floor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Users,
    Qos,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "users" => Some(Self::Users),
            "qos" => Some(Self::Qos),
            _ => None,
        }
    }

    fn column(&self) -> &'static str {
        match self {
            Self::Users => "k_users",
            Self::Qos => "qos_bpshz",
        }
    }

    fn label(&self) -> &'static str {
        match self {
            Self::Users => "users",
            Self::Qos => "rate floor (bits/s/Hz)",
        }
    }
}

/// Per-cell aggregate over `status = ok` rows.
#[derive(Debug, Clone)]
pub struct SummaryCell<S> {
    pub scheme: Scheme,
    pub axis_value: f64,
    pub trials: usize,
    pub n_ok: usize,
    pub mean_objective: S,
    pub mean_rcrb_dist: S,
    pub mean_rcrb_angle: S,
}

#[derive(Debug)]
pub struct SweepOutput<S> {
    pub records: Vec<(f64, ExperimentRecord<S>)>,
    pub cells: Vec<SummaryCell<S>>,
    pub csv_path: PathBuf,
    pub plot_path: PathBuf,
}

pub const CSV_HEADER: &str =
    "scheme,seed,k_users,qos_bpshz,objective,rcrb_dist_m,rcrb_angle_rad,outer_iters,sa_steps,wall_ms,status";

fn csv_row<S: Scalar>(r: &ExperimentRecord<S>) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        r.scheme,
        r.seed,
        r.k_users,
        r.qos_bpshz,
        r.objective,
        r.rcrb_dist_m,
        r.rcrb_angle_rad,
        r.outer_iters,
        r.sa_steps,
        r.wall_ms,
        r.status
    )
}

/// Write one record as a single-row CSV (the `run` subcommand output).
pub fn write_record_csv<S: Scalar>(
    record: &ExperimentRecord<S>,
    path: &Path,
) -> std::io::Result<()> {
    let mut out = std::fs::File::create(path)?;
    writeln!(out, "{CSV_HEADER}")?;
    writeln!(out, "{}", csv_row(record))?;
    Ok(())
}

/// Run `trials` trials per (axis value, scheme) cell with independent seed
/// streams, write the sorted CSV plus a summary block and a gnuplot script,
/// and return the records and per-cell means.
pub fn sweep<S: Scalar>(
    scenario: &Scenario<S>,
    axis: SweepAxis,
    values: &[f64],
    schemes: &[Scheme],
    trials: usize,
    out_csv: &Path,
    options: &HarnessOptions,
) -> std::io::Result<SweepOutput<S>> {
    assert!(!values.is_empty(), "sweep needs at least one axis value");
    let mut jobs = Vec::new();
    for &value in values.iter() {
        let cell_scenario = match axis {
            SweepAxis::Users => scenario.with_k_users(value as usize),
            SweepAxis::Qos => scenario.with_qos(conv::<S>(value)),
        };
        for trial in 0..trials {
            // Trials are mutually independent; within one trial every scheme
            // and every axis cell shares the seed, so scheme comparisons are
            // paired and user draws are common across cells (smaller user
            // counts sample a prefix of larger ones).
            let seed = trial_rng(scenario.seed, trial as u64).next_u64();
            for &scheme in schemes.iter() {
                jobs.push((value, cell_scenario.clone(), scheme, seed));
            }
        }
    }

    let mut records: Vec<(f64, ExperimentRecord<S>)> = jobs
        .into_par_iter()
        .map(|(value, cell_scenario, scheme, seed)| {
            (value, run_trial(&cell_scenario, scheme, seed, options))
        })
        .collect();
    records.sort_by(|(va, ra), (vb, rb)| {
        ra.scheme
            .cmp(&rb.scheme)
            .then(va.total_cmp(vb))
            .then(ra.seed.cmp(&rb.seed))
    });

    let cells = summarize(&records, schemes, values, trials);

    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (_, r) in &records {
        out.push_str(&csv_row(r));
        out.push('\n');
    }
    out.push_str("# summary,scheme,axis_value,trials,n_ok,ok_fraction,mean_objective,mean_rcrb_dist_m,mean_rcrb_angle_rad\n");
    for c in &cells {
        out.push_str(&format!(
            "# summary,{},{},{},{},{},{},{},{}\n",
            c.scheme,
            c.axis_value,
            c.trials,
            c.n_ok,
            c.n_ok as f64 / c.trials.max(1) as f64,
            c.mean_objective,
            c.mean_rcrb_dist,
            c.mean_rcrb_angle
        ));
    }
    std::fs::write(out_csv, out)?;

    let plot_path = out_csv.with_extension("gp");
    std::fs::write(&plot_path, plot_script(out_csv, axis, schemes))?;

    Ok(SweepOutput {
        records,
        cells,
        csv_path: out_csv.to_path_buf(),
        plot_path,
    })
}

fn summarize<S: Scalar>(
    records: &[(f64, ExperimentRecord<S>)],
    schemes: &[Scheme],
    values: &[f64],
    trials: usize,
) -> Vec<SummaryCell<S>> {
    let mut cells = Vec::new();
    for &scheme in schemes {
        for &value in values {
            let ok: Vec<&ExperimentRecord<S>> = records
                .iter()
                .filter(|(v, r)| *v == value && r.scheme == scheme && r.status == RecordStatus::Ok)
                .map(|(_, r)| r)
                .collect();
            let n = ok.len();
            let mean = |f: &dyn Fn(&ExperimentRecord<S>) -> S| -> S {
                if n == 0 {
                    S::nan()
                } else {
                    ok.iter().map(|r| f(r)).fold(S::zero(), |a, b| a + b)
                        / conv::<S>(n as f64)
                }
            };
            cells.push(SummaryCell {
                scheme,
                axis_value: value,
                trials,
                n_ok: n,
                mean_objective: mean(&|r| r.objective),
                mean_rcrb_dist: mean(&|r| r.rcrb_dist_m),
                mean_rcrb_angle: mean(&|r| r.rcrb_angle_rad),
            });
        }
    }
    cells
}

/// Gnuplot script plotting per-cell mean RCRBs (distance in meters, angle in
/// degrees) against the sweep axis, reading the CSV by relative path.
fn plot_script(csv: &Path, axis: SweepAxis, schemes: &[Scheme]) -> String {
    let csv_name = csv
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sweep.csv".into());
    let png_name = csv
        .file_stem()
        .map(|s| format!("{}.png", s.to_string_lossy()))
        .unwrap_or_else(|| "sweep.png".into());
    let scheme_list = schemes
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join(" ");
    let axis_col = axis.column();
    let axis_label = axis.label();
    format!(
        r#"# Mean root bounds per scheme versus {axis_label}; rows with status != ok are skipped.
set datafile separator ','
set datafile commentschars '#'
set datafile missing 'NaN'
set key autotitle columnhead
set terminal pngcairo size 1100,430
set output '{png_name}'
set multiplot layout 1,2
set logscale y
set xlabel '{axis_label}'
set ylabel 'distance RCRB (m)'
plot for [s in "{scheme_list}"] '{csv_name}' \
    using (column("{axis_col}")):((strcol("scheme") eq s && strcol("status") eq "ok") ? column("rcrb_dist_m") : NaN) \
    smooth unique with linespoints title s
set ylabel 'angle RCRB (deg)'
plot for [s in "{scheme_list}"] '{csv_name}' \
    using (column("{axis_col}")):((strcol("scheme") eq s && strcol("status") eq "ok") ? column("rcrb_angle_rad")*180.0/pi : NaN) \
    smooth unique with linespoints title s
unset multiplot
"#
    )
}

// ---------------------------------------------------------------------------
// Validation suite
// ---------------------------------------------------------------------------

/// Fault-injection hooks for negative-control tests.
#[derive(Debug, Clone, Copy)]
pub struct ValidationHooks<S> {
    /// Relative bias multiplied onto the analytic Jacobians before the
    /// finite-difference comparison.
    pub jacobian_bias: S,
}

impl<S: Scalar> Default for ValidationHooks<S> {
    fn default() -> Self {
        Self {
            jacobian_bias: S::zero(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PropertyCheck {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

/// Run the standing invariant suite on a scenario: finite-difference
/// Jacobians, transform exactness, the probe-shift identity, inner-loop
/// monotonicity, and annealing quality against enumeration at small K.
pub fn validate<S: Scalar>(scenario: &Scenario<S>, hooks: &ValidationHooks<S>) -> Vec<PropertyCheck> {
    let mut checks = Vec::new();
    checks.push(check_jacobians(scenario, hooks));
    checks.push(check_transform(scenario));
    checks.push(check_probe_shift(scenario));
    checks.push(check_inner_loop(scenario));
    checks.push(check_annealing(scenario));
    checks
}

fn check_jacobians<S: Scalar>(scenario: &Scenario<S>, hooks: &ValidationHooks<S>) -> PropertyCheck {
    let g = &scenario.geometry;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(scenario.seed ^ 0xA5A5);
    let bias = S::one() + hooks.jacobian_bias;
    let mut worst = S::zero();
    for _ in 0..20 {
        let d = conv::<S>(5.0) + conv::<S>(20.0) * unit_uniform::<S>(&mut rng);
        let th = (unit_uniform::<S>(&mut rng) - conv::<S>(0.5)) * S::FRAC_PI_2();
        let pos = PolarPosition {
            distance_m: d,
            angle_rad: th,
        };
        let (dt, dd) = array_response_jacobian(g, ArraySide::Tx, &pos).expect("valid position");
        let (ht, hd) = (conv::<S>(1e-6), conv::<S>(1e-4));
        let at = |angle: S, dist: S| {
            array_response(
                g,
                ArraySide::Tx,
                &PolarPosition {
                    distance_m: dist,
                    angle_rad: angle,
                },
            )
            .expect("valid position")
        };
        let (tp, tm) = (at(th + ht, d), at(th - ht, d));
        let (dp, dm) = (at(th, d + hd), at(th, d - hd));
        for n in 0..g.n_tx {
            let fd_t = (tp[n] - tm[n]).scale((conv::<S>(2.0) * ht).recip());
            let fd_d = (dp[n] - dm[n]).scale((conv::<S>(2.0) * hd).recip());
            let err_t = (fd_t - dt[n].scale(bias)).norm() / dt[n].norm().max(conv::<S>(1e-30));
            let err_d = (fd_d - dd[n].scale(bias)).norm() / dd[n].norm().max(conv::<S>(1e-30));
            worst = worst.max(err_t).max(err_d);
        }
    }
    PropertyCheck {
        name: "jacobian-finite-difference",
        pass: worst <= conv::<S>(1e-6),
        detail: format!("worst relative error {worst:.3e} (gate 1e-6)"),
    }
}

fn check_transform<S: Scalar>(scenario: &Scenario<S>) -> PropertyCheck {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(scenario.seed ^ 0xB6B6);
    let mut worst_eq = S::zero();
    let mut dominated = true;
    for _ in 0..1000 {
        let pow = |r: &mut rand_chacha::ChaCha8Rng| {
            conv::<S>(10.0).powf(conv::<S>(-9.0) + conv::<S>(12.0) * unit_uniform::<S>(r))
        };
        let s = pow(&mut rng);
        let i = pow(&mut rng);
        let y_star = quadratic_transform_multiplier(s, i);
        let f = |y: S| conv::<S>(2.0) * y * s.sqrt() - y * y * i;
        let ratio = s / i;
        worst_eq = worst_eq.max((f(y_star) - ratio).abs() / ratio);
        for _ in 0..100 {
            let y = y_star
                * conv::<S>(10.0).powf(conv::<S>(2.0) * unit_uniform::<S>(&mut rng) - S::one());
            if f(y) > f(y_star) * (S::one() + conv::<S>(1e-12)) {
                dominated = false;
            }
        }
    }
    PropertyCheck {
        name: "transform-exactness",
        pass: worst_eq <= conv::<S>(1e-12) && dominated,
        detail: format!("worst |f(y*) − s/I| / (s/I) = {worst_eq:.3e}, dominance {dominated}"),
    }
}

fn trial_context<S: Scalar>(scenario: &Scenario<S>) -> Result<EvalContext<S>, PropertyCheck> {
    let channels = build_channels(scenario, &scenario.users);
    EvalContext::new(scenario.clone(), channels, InnerOptions::default()).map_err(|e| {
        PropertyCheck {
            name: "context",
            pass: false,
            detail: format!("zero-forcing failed on the scenario users: {e}"),
        }
    })
}

fn check_probe_shift<S: Scalar>(scenario: &Scenario<S>) -> PropertyCheck {
    let ctx = match trial_context(scenario) {
        Ok(c) => c,
        Err(mut chk) => {
            chk.name = "probe-shift";
            return chk;
        }
    };
    let k = ctx.k_users();
    let selection = SelectionVector::from_mask(0b1010_1010_1010_1010 & ((1 << k) - 1), k);
    let precoders = ctx.precoders_for(&selection);
    let gains = ctx.gains_for(&precoders);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(scenario.seed ^ 0xC7C7);
    let cap = scenario.p_max_w / conv::<S>((2 * (k + 1)) as f64);
    let mut pass = true;
    let mut detail = String::from("covariance bit-identical, SINRs weakly increased on 100 draws");
    for _ in 0..100 {
        let draw =
            |r: &mut rand_chacha::ChaCha8Rng| -> S { cap * unit_uniform::<S>(r) };
        let powers = PowerAllocation {
            comm: (0..=k).map(|_| draw(&mut rng)).collect(),
            probe: (0..=k).map(|_| draw(&mut rng)).collect(),
        };
        let report = verify_probe_elimination(
            &ctx.scenario,
            &gains,
            &ctx.bundle,
            &precoders,
            &selection,
            &powers,
        );
        if !report.covariance_identical || !report.sinrs_weakly_increase {
            pass = false;
            detail = format!(
                "violation: ‖ΔR‖={:e}, min common Δ={:e}, min private Δ={:e}",
                report.covariance_frobenius_diff,
                report.min_common_sinr_delta,
                report.min_private_sinr_delta
            );
            break;
        }
    }
    PropertyCheck {
        name: "probe-shift",
        pass,
        detail,
    }
}

fn check_inner_loop<S: Scalar>(scenario: &Scenario<S>) -> PropertyCheck {
    let ctx = match trial_context(scenario) {
        Ok(c) => c,
        Err(mut chk) => {
            chk.name = "inner-monotonicity";
            return chk;
        }
    };
    let k = ctx.k_users();
    let mut pass = true;
    let mut detail = String::new();
    for selection in [SelectionVector::all_ones(k), SelectionVector::all_zeros(k)] {
        let precoders = ctx.precoders_for(&selection);
        let gains = ctx.gains_for(&precoders);
        let out = optimize_powers(
            &ctx.scenario,
            &gains,
            &ctx.bundle,
            &precoders,
            &selection,
            None,
            &ctx.options,
        );
        if out.status != SolveStatus::Optimal || !out.converged {
            pass = false;
            detail = format!("selection mask {:#b}: status {:?}", selection.mask(), out.status);
            break;
        }
        let objs: Vec<S> = out
            .trace
            .iter()
            .filter(|t| t.status == "optimal")
            .map(|t| t.objective)
            .collect();
        for w in objs.windows(2) {
            if w[1] > w[0] * (S::one() + conv::<S>(1e-6)) {
                pass = false;
                detail = format!("objective rose {:e} → {:e}", w[0], w[1]);
            }
        }
        if detail.is_empty() {
            detail = format!("converged in ≤ {} iterations, monotone", out.iterations);
        }
    }
    PropertyCheck {
        name: "inner-monotonicity",
        pass,
        detail,
    }
}

fn check_annealing<S: Scalar>(scenario: &Scenario<S>) -> PropertyCheck {
    // Enumeration audit at a reduced user count when the scenario is large.
    let k_audit = scenario.k_users().min(5);
    let audit_scenario = if scenario.k_users() == k_audit {
        scenario.clone()
    } else {
        scenario.with_k_users(k_audit)
    };
    let ctx = match trial_context(&audit_scenario) {
        Ok(c) => c,
        Err(mut chk) => {
            chk.name = "annealing-vs-enumeration";
            return chk;
        }
    };
    let optimum = match exhaustive(&ctx, EXHAUSTIVE_LIMIT) {
        Ok((_, out)) => out.objective,
        Err(e) => {
            return PropertyCheck {
                name: "annealing-vs-enumeration",
                pass: false,
                detail: format!("enumeration failed: {e}"),
            }
        }
    };
    match anneal(&ctx, scenario.seed) {
        Ok(result) => {
            let ratio = result.outcome.objective / optimum;
            let never_below = result.outcome.objective >= optimum * (S::one() - conv::<S>(1e-9));
            PropertyCheck {
                name: "annealing-vs-enumeration",
                pass: never_below && ratio <= conv::<S>(1.05),
                detail: format!(
                    "anneal/optimum = {ratio:.6} over {} steps (K = {k_audit})",
                    result.sa_steps()
                ),
            }
        }
        Err(e) => PropertyCheck {
            name: "annealing-vs-enumeration",
            pass: false,
            detail: format!("annealing failed: {e}"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk(k: usize, qos: f64) -> Scenario<f64> {
        let mut s: Scenario<f64> = Scenario::preset(32, 16, k, 7);
        s.qos_bpshz = qos;
        s
    }

    fn fast_options() -> HarnessOptions {
        HarnessOptions {
            zero_wall_clock: true,
            ..HarnessOptions::default()
        }
    }

    #[test]
    fn trials_are_deterministic() {
        let scenario = desk(3, 2.0);
        let opts = fast_options();
        let a = run_trial(&scenario, Scheme::Frs, 11, &opts);
        let b = run_trial(&scenario, Scheme::Frs, 11, &opts);
        assert_eq!(csv_row(&a), csv_row(&b));
        assert_eq!(a.sa_steps > 0, true);
        let c = run_trial(&scenario, Scheme::Sdma, 11, &opts);
        assert_eq!(c.sa_steps, 0);
    }

    #[test]
    fn record_bound_roots_square_to_diagonal() {
        let scenario = desk(3, 2.0);
        let r = run_trial(&scenario, Scheme::Rs, 5, &fast_options());
        assert_eq!(r.status, RecordStatus::Ok);
        // Trace equals the summed squares of the reported roots.
        let total = r.rcrb_dist_m.powi(2) + r.rcrb_angle_rad.powi(2);
        assert!((total - r.objective).abs() <= 1e-4 * r.objective);
    }

    #[test]
    fn sweep_counts_rows_and_cells() {
        let scenario = desk(2, 1.0);
        let dir = std::env::temp_dir().join("nfisac_sweep_count");
        std::fs::create_dir_all(&dir).unwrap();
        let csv = dir.join("count.csv");
        let out = sweep(
            &scenario,
            SweepAxis::Users,
            &[2.0, 3.0],
            &[Scheme::Rs, Scheme::Sdma],
            2,
            &csv,
            &fast_options(),
        )
        .unwrap();
        assert_eq!(out.records.len(), 2 * 2 * 2);
        assert_eq!(out.cells.len(), 4);
        let text = std::fs::read_to_string(&csv).unwrap();
        let data_rows = text.lines().filter(|l| !l.starts_with('#')).count() - 1;
        assert_eq!(data_rows, 8);
        let summary_rows = text.lines().filter(|l| l.starts_with("# summary,")).count();
        assert_eq!(summary_rows, 4 + 1); // header line plus one per cell
        assert!(out.plot_path.exists());
        let plot = std::fs::read_to_string(&out.plot_path).unwrap();
        assert!(plot.contains("count.csv"));
        assert!(plot.contains("180.0/pi"));
    }

    #[test]
    fn sweep_is_byte_reproducible() {
        let scenario = desk(2, 1.0);
        let dir = std::env::temp_dir().join("nfisac_sweep_repro");
        std::fs::create_dir_all(&dir).unwrap();
        let (ca, cb) = (dir.join("a.csv"), dir.join("b.csv"));
        let opts = fast_options();
        sweep(&scenario, SweepAxis::Qos, &[1.0, 2.0], &[Scheme::Rs], 2, &ca, &opts).unwrap();
        sweep(&scenario, SweepAxis::Qos, &[1.0, 2.0], &[Scheme::Rs], 2, &cb, &opts).unwrap();
        assert_eq!(
            std::fs::read_to_string(&ca).unwrap(),
            std::fs::read_to_string(&cb).unwrap()
        );
    }

    #[test]
    fn rows_are_ordered_by_scheme_value_seed() {
        let scenario = desk(2, 1.0);
        let dir = std::env::temp_dir().join("nfisac_sweep_order");
        std::fs::create_dir_all(&dir).unwrap();
        let out = sweep(
            &scenario,
            SweepAxis::Users,
            &[3.0, 2.0],
            &[Scheme::Sdma, Scheme::Rs],
            2,
            &dir.join("order.csv"),
            &fast_options(),
        )
        .unwrap();
        let keys: Vec<(Scheme, f64, u64)> = out
            .records
            .iter()
            .map(|(v, r)| (r.scheme, *v, r.seed))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
        assert_eq!(keys, sorted);
    }

    #[test]
    fn validation_suite_passes_and_detects_bias() {
        let scenario = desk(4, 2.0);
        let checks = validate(&scenario, &ValidationHooks::default());
        assert_eq!(checks.len(), 5);
        for c in &checks {
            assert!(c.pass, "{}: {}", c.name, c.detail);
        }
        // Negative control: a biased Jacobian must fail the FD gate.
        let biased = validate(
            &scenario,
            &ValidationHooks {
                jacobian_bias: 1e-3,
            },
        );
        let jac = biased.iter().find(|c| c.name == "jacobian-finite-difference").unwrap();
        assert!(!jac.pass, "bias injection must be detected");
    }

    #[test]
    fn scheme_and_axis_parsing() {
        assert_eq!(Scheme::parse("frs"), Some(Scheme::Frs));
        assert_eq!(Scheme::parse("rsma"), None);
        assert_eq!(SweepAxis::parse("qos"), Some(SweepAxis::Qos));
        assert_eq!(SweepAxis::parse("power"), None);
        assert_eq!(Scheme::Frs.to_string(), "frs");
        assert_eq!(RecordStatus::Nonconverged.to_string(), "nonconverged");
    }
}
