//! Inner solver: alternating multiplier updates and convex subproblems for a
//! fixed user selection.
//!
//! The fractional SINRs are decoupled by the quadratic transform
//! (`s/I = max_y 2y√s − y²I`, tight at `y* = √s/I`), giving closed-form
//! multiplier updates; for fixed multipliers the remaining program is conic
//! and solved to global optimality. Alternation decreases the bound trace
//! monotonically until the relative decrease falls below the scenario's
//! inner tolerance. Probing powers are eliminated up front: shifting every
//! probing watt onto its communication stream leaves the transmit covariance
//! bit-identical and weakly increases every SINR, so the optimizer only
//! carries communication powers.

mod subproblem;

pub use subproblem::Backend;
pub(crate) use subproblem::{fim_coefficients, Workspace};

use crate::channel::SensingChannelBundle;
use crate::crb::{crb_from_covariance, CrbError, CrbResult};
use crate::linalg::Mat2;
use crate::precoding::{
    signal_covariance, uniform_allocation, BeamGains, PowerAllocation, PrecoderSet,
};
use crate::rates::{common_sinr, private_sinr, RateAllocation, SelectionVector};
use crate::scalar::{conv, Scalar};
use crate::scenario::Scenario;
use subproblem::{solve_subproblem, SubError};

/// Quadratic-transform multipliers, one pair per user. `y_common` is zero
/// outside the rate-splitting group.
#[derive(Debug, Clone)]
pub struct SurrogateMultipliers<S> {
    pub y_common: Vec<S>,
    pub y_private: Vec<S>,
}

/// Optimal multiplier of the transform for signal power `s` and interference
/// `i`: `y* = √s / i`, at which `2y√s − y²·i` equals `s/i` exactly.
pub fn quadratic_transform_multiplier<S: Scalar>(s: S, i: S) -> S {
    debug_assert!(i > S::zero());
    s.sqrt() / i
}

/// Closed-form multiplier update at the current (probe-free) powers.
pub fn update_multipliers<S: Scalar>(
    powers: &PowerAllocation<S>,
    gains: &BeamGains<S>,
    selection: &SelectionVector,
    scenario: &Scenario<S>,
) -> SurrogateMultipliers<S> {
    let k = gains.k_users();
    let noise = scenario.noise_user_w;
    let mut y_common = vec![S::zero(); k];
    let mut y_private = vec![S::zero(); k];
    for j in 0..k {
        let g0 = gains.g[j][0];
        let gk = gains.g[j][j + 1];
        if selection.is_common(j) {
            y_common[j] = quadratic_transform_multiplier(
                g0 * powers.comm[0],
                gk * powers.comm[j + 1] + noise,
            );
        }
        let interference = if selection.is_common(j) {
            noise
        } else {
            g0 * powers.comm[0] + noise
        };
        y_private[j] = quadratic_transform_multiplier(gk * powers.comm[j + 1], interference);
    }
    SurrogateMultipliers {
        y_common,
        y_private,
    }
}

/// Terminal state of one inner solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

/// Convergence test applied to the bound-trace sequence. An absolute test
/// is scale-dependent (bound magnitudes swing with the target gain), so the
/// relative test is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConvergenceMode {
    #[default]
    Relative,
    Absolute,
}

/// Inner-solver knobs; the tolerance itself lives in the scenario.
#[derive(Debug, Clone, Copy)]
pub struct InnerOptions {
    pub backend: Backend,
    pub mode: ConvergenceMode,
    pub max_outer: usize,
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self {
            backend: Backend::default(),
            mode: ConvergenceMode::default(),
            max_outer: 100,
        }
    }
}

/// One outer-iteration trace record: `(iteration, objective, status)`.
#[derive(Debug, Clone)]
pub struct OuterIteration<S> {
    pub iteration: usize,
    pub objective: S,
    pub status: &'static str,
}

/// Result of [`optimize_powers`]: probe-free powers, shares, the auxiliary
/// matrix, and the achieved `Tr(U⁻¹)`. Infeasible selections carry the `+∞`
/// sentinel so selection searches reject them without special-casing.
#[derive(Debug, Clone)]
pub struct SolveOutcome<S> {
    pub powers: PowerAllocation<S>,
    pub rate_alloc: RateAllocation<S>,
    pub u_matrix: Mat2<S>,
    pub objective: S,
    pub status: SolveStatus,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<OuterIteration<S>>,
}

impl<S: Scalar> SolveOutcome<S> {
    fn failed(status: SolveStatus, iterations: usize, trace: Vec<OuterIteration<S>>, k: usize) -> Self {
        Self {
            powers: PowerAllocation::zeros(k),
            rate_alloc: RateAllocation::zeros(k),
            u_matrix: Mat2::zeros(),
            objective: S::infinity(),
            status,
            iterations,
            converged: false,
            trace,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Bound reconstruction for an allocation: covariance → information → bound.
pub fn crb_of_allocation<S: Scalar>(
    scenario: &Scenario<S>,
    bundle: &SensingChannelBundle<S>,
    precoders: &PrecoderSet<S>,
    powers: &PowerAllocation<S>,
) -> Result<CrbResult<S>, CrbError> {
    let r = signal_covariance(precoders, powers);
    crb_from_covariance(bundle, &r, scenario.coherence_len, scenario.noise_radar_w)
}

/// Starting allocation for the alternation. The default is the uniform
/// budget split; when that start violates a user's rate floor, the surrogate
/// at its multipliers inherits the violation and the first solve would
/// falsely declare the selection infeasible (the transform is only tight at
/// the chosen point). In that case fall back to a rate-first split: the
/// common beam starts dark, every private beam gets the interference-free
/// power its floor requires, and leftover budget is spread evenly. Whenever
/// the floors are attainable at all, this start is truly feasible and hence
/// surrogate-feasible.
fn initial_allocation<S: Scalar>(
    scenario: &Scenario<S>,
    gains: &BeamGains<S>,
    selection: &SelectionVector,
    common_active: bool,
) -> Vec<S> {
    let k = selection.len();
    let uniform = uniform_allocation(scenario.p_max_w, k, common_active);
    let report = crate::rates::achievable_rates(
        gains,
        &uniform,
        selection,
        &RateAllocation::zeros(k),
        scenario,
    );
    if report.feasible {
        return uniform.comm;
    }
    let floor = conv::<S>(2.0).powf(scenario.qos_bpshz) - S::one();
    let margin = conv::<S>(1.02);
    let mut needed = vec![S::zero(); k + 1];
    let mut total = S::zero();
    for j in 0..k {
        let g = gains.g[j][j + 1];
        if !(g > S::zero()) {
            return uniform.comm;
        }
        needed[j + 1] = margin * scenario.noise_user_w * floor / g;
        total = total + needed[j + 1];
    }
    if total > scenario.p_max_w {
        // Even interference-free floors exceed the budget; let the first
        // solve issue the infeasibility verdict from the uniform start.
        return uniform.comm;
    }
    let leftover = (scenario.p_max_w - total) / conv::<S>(k as f64);
    for p in needed.iter_mut().skip(1) {
        *p = *p + leftover;
    }
    needed
}

fn build_workspace<S: Scalar>(
    scenario: &Scenario<S>,
    gains: &BeamGains<S>,
    bundle: &SensingChannelBundle<S>,
    precoders: &PrecoderSet<S>,
    selection: &SelectionVector,
) -> Workspace<S> {
    Workspace::new(
        selection,
        gains.g.clone(),
        fim_coefficients(
            bundle,
            precoders,
            scenario.coherence_len,
            scenario.noise_radar_w,
        ),
        scenario.noise_user_w,
        scenario.p_max_w,
        scenario.qos_bpshz,
    )
}

/// Solve the fixed-multiplier convex subproblem once. The linearized backend
/// expands about `incumbent` (uniform powers when absent).
pub fn solve_convex_subproblem<S: Scalar>(
    scenario: &Scenario<S>,
    gains: &BeamGains<S>,
    bundle: &SensingChannelBundle<S>,
    precoders: &PrecoderSet<S>,
    selection: &SelectionVector,
    multipliers: &SurrogateMultipliers<S>,
    incumbent: Option<&PowerAllocation<S>>,
    backend: Backend,
) -> SolveOutcome<S> {
    let ws = build_workspace(scenario, gains, bundle, precoders, selection);
    let k = selection.len();
    let anchor = incumbent
        .map(|p| p.shift_probe_to_comm().comm)
        .unwrap_or_else(|| uniform_allocation(scenario.p_max_w, k, ws.common_active).comm);
    match solve_subproblem(&ws, multipliers, &anchor, backend) {
        Ok(sol) => SolveOutcome {
            powers: PowerAllocation::from_comm(sol.comm),
            rate_alloc: RateAllocation {
                common_share: sol.shares,
            },
            u_matrix: sol.u,
            objective: sol.objective,
            status: SolveStatus::Optimal,
            iterations: 1,
            converged: true,
            trace: vec![OuterIteration {
                iteration: 1,
                objective: sol.objective,
                status: "optimal",
            }],
        },
        Err(SubError::Infeasible) => SolveOutcome::failed(SolveStatus::Infeasible, 1, Vec::new(), k),
        Err(SubError::Numerical(msg)) => {
            if std::env::var_os("NFISAC_SOLVER_DEBUG").is_some() {
                eprintln!("single subproblem solve: {msg}");
            }
            SolveOutcome::failed(SolveStatus::NumericalFailure, 1, Vec::new(), k)
        }
    }
}

/// Alternate multiplier updates and conic solves until the bound trace
/// settles below the scenario's inner tolerance.
///
/// * An infeasible or failed first subproblem fails the whole call (that
///   selection cannot meet the rate floor under the budget).
/// * Later-iteration solver trouble returns the last feasible outcome with
///   `converged = false`.
/// * Initial powers default to a uniform split over the active beams; a
///   probe-carrying initial allocation is first shifted onto the
///   communication streams (the covariance is unchanged by this).
pub fn optimize_powers<S: Scalar>(
    scenario: &Scenario<S>,
    gains: &BeamGains<S>,
    bundle: &SensingChannelBundle<S>,
    precoders: &PrecoderSet<S>,
    selection: &SelectionVector,
    initial_powers: Option<&PowerAllocation<S>>,
    options: &InnerOptions,
) -> SolveOutcome<S> {
    let k = selection.len();
    let ws = build_workspace(scenario, gains, bundle, precoders, selection);
    let mut comm: Vec<S> = initial_powers
        .map(|p| p.shift_probe_to_comm().comm)
        .unwrap_or_else(|| initial_allocation(scenario, gains, selection, ws.common_active));

    // Objective of the starting point; +∞ when the bound is undefined there.
    let mut obj_prev = crb_of_allocation(
        scenario,
        bundle,
        precoders,
        &PowerAllocation::from_comm(comm.clone()),
    )
    .map(|c| c.trace)
    .unwrap_or_else(|_| S::infinity());
    let mut trace = vec![OuterIteration {
        iteration: 0,
        objective: obj_prev,
        status: "init",
    }];

    let mut best: Option<SolveOutcome<S>> = None;
    let tol = scenario.tol_inner;
    let selection_owned = selection.clone();

    for iter in 1..=options.max_outer {
        let powers_now = PowerAllocation::from_comm(comm.clone());
        let multipliers = update_multipliers(&powers_now, gains, &selection_owned, scenario);
        match solve_subproblem(&ws, &multipliers, &comm, options.backend) {
            Ok(sol) => {
                comm = sol.comm.clone();
                // Iterates that fail to improve on the best point are kept
                // for the alternation but labeled as noise: the accepted
                // ("optimal") subsequence is non-increasing by construction.
                let improves = best
                    .as_ref()
                    .map_or(true, |b: &SolveOutcome<S>| sol.objective <= b.objective);
                trace.push(OuterIteration {
                    iteration: iter,
                    objective: sol.objective,
                    status: if improves { "optimal" } else { "noise_floor" },
                });
                let outcome = SolveOutcome {
                    powers: PowerAllocation::from_comm(sol.comm),
                    rate_alloc: RateAllocation {
                        common_share: sol.shares,
                    },
                    u_matrix: sol.u,
                    objective: sol.objective,
                    status: SolveStatus::Optimal,
                    iterations: iter,
                    converged: false,
                    trace: Vec::new(),
                };
                // Keep the best feasible point seen; under exact monotone
                // descent it coincides with the newest iterate.
                if improves {
                    best = Some(outcome);
                }
                let decrease = obj_prev - sol.objective;
                if obj_prev.is_finite() {
                    let settled = match options.mode {
                        ConvergenceMode::Relative => {
                            let denom = obj_prev.abs().max(S::min_positive_value());
                            (decrease / denom).abs() < tol
                        }
                        ConvergenceMode::Absolute => decrease.abs() < tol,
                    };
                    if settled {
                        let mut done = best.take().expect("set above");
                        done.converged = true;
                        done.iterations = iter;
                        done.trace = trace;
                        return done;
                    }
                    // The first solve may legitimately rise above the
                    // starting bound while establishing the rate floors;
                    // afterwards a rise beyond the solver slack means the
                    // alternation is noise-limited: stop at the best point.
                    let slack = conv::<S>(1e-6) * obj_prev.abs();
                    if iter >= 2 && -decrease > slack {
                        let mut done = best.take().expect("set above");
                        done.iterations = iter;
                        done.trace = trace;
                        return done;
                    }
                }
                obj_prev = sol.objective;
            }
            Err(err) => {
                let (status, label) = match err {
                    SubError::Infeasible => (SolveStatus::Infeasible, "infeasible"),
                    SubError::Numerical(msg) => {
                        if std::env::var_os("NFISAC_SOLVER_DEBUG").is_some() {
                            eprintln!("inner solve, iteration {iter}: {msg}");
                        }
                        (SolveStatus::NumericalFailure, "numerical_failure")
                    }
                };
                trace.push(OuterIteration {
                    iteration: iter,
                    objective: S::infinity(),
                    status: label,
                });
                return match best {
                    // First subproblem failed: the whole call fails.
                    None => SolveOutcome::failed(status, iter, trace, k),
                    // Otherwise keep the last feasible point.
                    Some(mut out) => {
                        out.trace = trace;
                        out
                    }
                };
            }
        }
    }

    let mut out = best.expect("max_outer ≥ 1 and loop returned on failure");
    out.trace = trace;
    out.converged = false;
    out
}

/// Numerical witness of the probe-elimination argument: shifting all probing
/// power onto the communication streams leaves the covariance bit-identical
/// (hence the bound trace unchanged) and weakly increases every SINR.
#[derive(Debug, Clone)]
pub struct ProbeShiftReport<S> {
    pub covariance_frobenius_diff: S,
    pub crb_trace_before: Option<S>,
    pub crb_trace_after: Option<S>,
    pub min_common_sinr_delta: S,
    pub min_private_sinr_delta: S,
    pub covariance_identical: bool,
    pub sinrs_weakly_increase: bool,
}

pub fn verify_probe_elimination<S: Scalar>(
    scenario: &Scenario<S>,
    gains: &BeamGains<S>,
    bundle: &SensingChannelBundle<S>,
    precoders: &PrecoderSet<S>,
    selection: &SelectionVector,
    powers_with_probe: &PowerAllocation<S>,
) -> ProbeShiftReport<S> {
    let shifted = powers_with_probe.shift_probe_to_comm();
    let r_before = signal_covariance(precoders, powers_with_probe);
    let r_after = signal_covariance(precoders, &shifted);
    let diff = r_before.sub(&r_after).frobenius();

    let crb_trace = |p: &PowerAllocation<S>| {
        crb_of_allocation(scenario, bundle, precoders, p)
            .ok()
            .map(|c| c.trace)
    };
    let noise = scenario.noise_user_w;
    let mut min_common = S::infinity();
    let mut min_private = S::infinity();
    for k in 0..gains.k_users() {
        let before = private_sinr(gains, powers_with_probe, selection, k, noise).expect("in range");
        let after = private_sinr(gains, &shifted, selection, k, noise).expect("in range");
        min_private = min_private.min(after - before);
        if selection.is_common(k) {
            let before = common_sinr(gains, powers_with_probe, selection, k, noise).expect("member");
            let after = common_sinr(gains, &shifted, selection, k, noise).expect("member");
            min_common = min_common.min(after - before);
        }
    }
    let sinr_slack = -conv::<S>(1e-15);
    ProbeShiftReport {
        covariance_frobenius_diff: diff,
        crb_trace_before: crb_trace(powers_with_probe),
        crb_trace_after: crb_trace(&shifted),
        covariance_identical: diff == S::zero(),
        sinrs_weakly_increase: min_private >= sinr_slack
            && (min_common >= sinr_slack || min_common == S::infinity()),
        min_common_sinr_delta: min_common,
        min_private_sinr_delta: min_private,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sensing_bundle, user_channel};
    use crate::linalg::CMat;
    use crate::precoding::{beam_gains, common_precoder, zf_private_precoders};
    use crate::rates::achievable_rates;
    use crate::scenario::{sample_users, unit_uniform, Scenario};
    use rand_chacha::ChaCha8Rng;
    use rand_core::SeedableRng;

    /// Desk-scale test rig: channels, precoders, gains, bundle for one
    /// sampled user set.
    struct Rig {
        scenario: Scenario<f64>,
        gains: BeamGains<f64>,
        bundle: crate::channel::SensingChannelBundle<f64>,
        precoders: PrecoderSet<f64>,
    }

    fn rig(k: usize, seed: u64, selection: &SelectionVector) -> Rig {
        rig_with(k, seed, selection, false)
    }

    /// `in_region` places users and target inside the transmit Rayleigh
    /// distance, where the bound is well conditioned.
    fn rig_with(k: usize, seed: u64, selection: &SelectionVector, in_region: bool) -> Rig {
        let mut scenario: Scenario<f64> = Scenario::preset(32, 16, k, seed);
        scenario.qos_bpshz = 2.0;
        if in_region {
            scenario.user_dist_range = (2.0, 4.5);
            scenario.target = crate::scenario::PolarPosition::new(3.5, 45f64.to_radians()).unwrap();
            scenario.target_gain = Scenario::default_target_gain(&scenario.geometry, &scenario.target);
        }
        let users = sample_users(&scenario, seed);
        let scenario = scenario.with_users(users);
        let channels: Vec<_> = scenario
            .users
            .iter()
            .map(|u| user_channel(&scenario.geometry, u).unwrap())
            .collect();
        let h = CMat::from_cols(&channels.iter().map(|c| c.entries.clone()).collect::<Vec<_>>());
        let private = zf_private_precoders(&h).unwrap();
        let common = if selection.k1_size() > 0 {
            common_precoder(&channels, selection).unwrap()
        } else {
            // Placeholder direction; the solver pins its power to zero.
            common_precoder(&channels, &SelectionVector::all_ones(k)).unwrap()
        };
        let precoders = PrecoderSet { common, private };
        let gains = beam_gains(&channels, &precoders);
        let bundle = sensing_bundle(&scenario.geometry, &scenario.target, scenario.target_gain).unwrap();
        Rig {
            scenario,
            gains,
            bundle,
            precoders,
        }
    }

    #[test]
    fn transform_identity_and_dominance() {
        // At y* the transform recovers s/I exactly; everywhere else it
        // underestimates. Scanned over random magnitudes spanning 12 decades.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let s = 10f64.powf(-9.0 + 12.0 * unit_uniform::<f64>(&mut rng));
            let i = 10f64.powf(-9.0 + 12.0 * unit_uniform::<f64>(&mut rng));
            let y_star = quadratic_transform_multiplier(s, i);
            let f_star = 2.0 * y_star * s.sqrt() - y_star * y_star * i;
            let ratio = s / i;
            assert!((f_star - ratio).abs() <= 1e-12 * ratio);
            for _ in 0..100 {
                let y = y_star * 10f64.powf(2.0 * unit_uniform::<f64>(&mut rng) - 1.0);
                let f = 2.0 * y * s.sqrt() - y * y * i;
                assert!(f <= f_star * (1.0 + 1e-12) + 1e-300);
            }
        }
        // Worked instance: s = 4, I = 2 gives y* = 1 and f = 2 = s/I.
        let y = quadratic_transform_multiplier(4.0, 2.0);
        assert_eq!(y, 1.0);
        assert_eq!(2.0 * y * 2.0 - y * y * 2.0, 2.0);
    }

    #[test]
    fn multiplier_updates_match_formulas() {
        let sel = SelectionVector::from_bits(vec![true, false, true]);
        let r = rig(3, 5, &sel);
        let powers = uniform_allocation(1.0, 3, true);
        let y = update_multipliers(&powers, &r.gains, &sel, &r.scenario);
        let noise = r.scenario.noise_user_w;
        for k in 0..3 {
            let g0 = r.gains.g[k][0];
            let gk = r.gains.g[k][k + 1];
            if sel.is_common(k) {
                let expect = (g0 * 0.25).sqrt() / (gk * 0.25 + noise);
                assert!((y.y_common[k] - expect).abs() <= 1e-12 * expect);
                let expect_p = (gk * 0.25).sqrt() / noise;
                assert!((y.y_private[k] - expect_p).abs() <= 1e-12 * expect_p);
            } else {
                assert_eq!(y.y_common[k], 0.0);
                let expect_p = (gk * 0.25).sqrt() / (g0 * 0.25 + noise);
                assert!((y.y_private[k] - expect_p).abs() <= 1e-12 * expect_p);
            }
        }
        // No common power ⇒ zero common multipliers.
        let no_common = PowerAllocation::from_comm(vec![0.0, 0.3, 0.3, 0.3]);
        let y0 = update_multipliers(&no_common, &r.gains, &sel, &r.scenario);
        assert_eq!(y0.y_common[0], 0.0);
        assert_eq!(y0.y_common[2], 0.0);
    }

    #[test]
    fn probe_shift_is_identity_without_probe() {
        let sel = SelectionVector::all_ones(2);
        let r = rig(2, 3, &sel);
        let powers = uniform_allocation(1.0, 2, true);
        let report = verify_probe_elimination(
            &r.scenario,
            &r.gains,
            &r.bundle,
            &r.precoders,
            &sel,
            &powers,
        );
        assert!(report.covariance_identical);
        assert_eq!(report.covariance_frobenius_diff, 0.0);
        assert!(report.sinrs_weakly_increase);
        assert_eq!(report.crb_trace_before, report.crb_trace_after);
    }

    #[test]
    fn probe_shift_on_random_allocations() {
        let sel = SelectionVector::from_bits(vec![true, false, true]);
        let r = rig(3, 11, &sel);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let mut draw = |cap: f64| cap * unit_uniform::<f64>(&mut rng);
            let powers = PowerAllocation {
                comm: (0..4).map(|_| draw(0.12)).collect(),
                probe: (0..4).map(|_| draw(0.12)).collect(),
            };
            let report = verify_probe_elimination(
                &r.scenario,
                &r.gains,
                &r.bundle,
                &r.precoders,
                &sel,
                &powers,
            );
            assert!(report.covariance_identical, "covariance must be bit-identical");
            assert!(report.sinrs_weakly_increase);
            let (before, after) = (
                report.crb_trace_before.unwrap(),
                report.crb_trace_after.unwrap(),
            );
            assert_eq!(before, after);
        }
    }

    #[test]
    fn inner_loop_is_monotone_and_convergent() {
        let sel = SelectionVector::all_ones(3);
        let r = rig(3, 29, &sel);
        let out = optimize_powers(
            &r.scenario,
            &r.gains,
            &r.bundle,
            &r.precoders,
            &sel,
            None,
            &InnerOptions::default(),
        );
        assert_eq!(out.status, SolveStatus::Optimal);
        assert!(out.converged, "default rig should converge");
        assert!(out.iterations <= 50);
        // Monotone subproblem objectives after the first solve.
        let objs: Vec<f64> = out
            .trace
            .iter()
            .filter(|t| t.status == "optimal")
            .map(|t| t.objective)
            .collect();
        for w in objs.windows(2) {
            assert!(w[1] <= w[0] + 1e-6 * w[0].abs());
        }
        assert!(out.powers.total() <= r.scenario.p_max_w + 1e-9);
        // Achieved rates satisfy every reported flag.
        let report = achievable_rates(
            &r.gains,
            &out.powers,
            &sel,
            &out.rate_alloc,
            &r.scenario,
        );
        assert!(report.feasible, "converged point must satisfy the rate flags");
        // The auxiliary objective dominates the reconstructed bound trace.
        let crb = crb_of_allocation(&r.scenario, &r.bundle, &r.precoders, &out.powers).unwrap();
        assert!(out.objective >= crb.trace * (1.0 - 1e-6));
    }

    #[test]
    fn restart_at_solution_stops_immediately() {
        let sel = SelectionVector::all_ones(2);
        // In-region geometry keeps the bound well conditioned so the tight
        // first phase actually reaches its tolerance.
        let mut r = rig_with(2, 31, &sel, true);
        r.scenario.tol_inner = 1e-4;
        let first = optimize_powers(
            &r.scenario,
            &r.gains,
            &r.bundle,
            &r.precoders,
            &sel,
            None,
            &InnerOptions::default(),
        );
        assert!(first.converged);
        r.scenario.tol_inner = 1e-3;
        let second = optimize_powers(
            &r.scenario,
            &r.gains,
            &r.bundle,
            &r.precoders,
            &sel,
            Some(&first.powers),
            &InnerOptions::default(),
        );
        assert_eq!(second.iterations, 1, "fixed point should settle in one pass");
        // Same point up to the restart tolerance (the desk rig's bound is
        // ill-conditioned enough that solver noise sits near 1e-4 relative).
        assert!(second.objective <= first.objective * (1.0 + 1e-3));
    }

    #[test]
    fn hostile_common_interference_is_rescued_by_rate_first_start() {
        // Selection (1,1,0) at this seed points the common beam almost
        // straight at the excluded user: the uniform start violates its
        // floor and the tight surrogate would reject the selection, so the
        // solver falls back to the rate-first start and solves.
        let sel = SelectionVector::from_bits(vec![true, true, false]);
        let r = rig(3, 29, &sel);
        let uniform = uniform_allocation(r.scenario.p_max_w, 3, true);
        let report = crate::rates::achievable_rates(
            &r.gains,
            &uniform,
            &sel,
            &crate::rates::RateAllocation::zeros(3),
            &r.scenario,
        );
        assert!(!report.feasible, "premise: uniform start violates a floor");
        let out = optimize_powers(
            &r.scenario,
            &r.gains,
            &r.bundle,
            &r.precoders,
            &sel,
            None,
            &InnerOptions::default(),
        );
        assert_eq!(out.status, SolveStatus::Optimal);
        assert!(out.objective.is_finite());
        // An explicitly infeasible uniform start still yields the verdict.
        let forced = optimize_powers(
            &r.scenario,
            &r.gains,
            &r.bundle,
            &r.precoders,
            &sel,
            Some(&uniform),
            &InnerOptions::default(),
        );
        assert_eq!(forced.status, SolveStatus::Infeasible);
        assert!(forced.objective.is_infinite());
        assert_eq!(forced.iterations, 1);
    }

    #[test]
    fn unreachable_rate_floor_is_infeasible() {
        let sel = SelectionVector::all_ones(2);
        let mut r = rig(2, 37, &sel);
        r.scenario.qos_bpshz = 50.0;
        let out = optimize_powers(
            &r.scenario,
            &r.gains,
            &r.bundle,
            &r.precoders,
            &sel,
            None,
            &InnerOptions::default(),
        );
        assert_eq!(out.status, SolveStatus::Infeasible);
        assert!(out.objective.is_infinite());
    }

    #[test]
    fn lone_private_beam_saturates_budget_and_matches_grid() {
        // Single user outside the group: the only resources are its private
        // beam (and the pinned common beam); a fine grid over the beam power
        // provides the optimum within 1%.
        let sel = SelectionVector::all_zeros(1);
        let mut r = rig(1, 41, &sel);
        r.scenario.qos_bpshz = 0.1;
        let out = optimize_powers(
            &r.scenario,
            &r.gains,
            &r.bundle,
            &r.precoders,
            &sel,
            None,
            &InnerOptions::default(),
        );
        assert_eq!(out.status, SolveStatus::Optimal);
        assert!(
            (out.powers.comm[1] - r.scenario.p_max_w).abs() <= 1e-6,
            "sensing-optimal single beam saturates the budget, got {}",
            out.powers.comm[1]
        );
        assert_eq!(out.powers.comm[0], 0.0);

        let mut best = f64::INFINITY;
        let qos_floor = 2f64.powf(r.scenario.qos_bpshz) - 1.0;
        for step in 1..=2000 {
            let p = r.scenario.p_max_w * step as f64 / 2000.0;
            let sinr = r.gains.g[0][1] * p / r.scenario.noise_user_w;
            if sinr < qos_floor {
                continue;
            }
            let alloc = PowerAllocation::from_comm(vec![0.0, p]);
            if let Ok(crb) = crb_of_allocation(&r.scenario, &r.bundle, &r.precoders, &alloc) {
                best = best.min(crb.trace);
            }
        }
        assert!(
            (out.objective - best).abs() <= 0.01 * best,
            "conic {} vs grid {}",
            out.objective,
            best
        );
    }

    #[test]
    fn backends_agree_on_default_rig() {
        let sel = SelectionVector::all_ones(4);
        let mut r = rig(4, 47, &sel);
        r.scenario.tol_inner = 1e-6;
        let exact = optimize_powers(
            &r.scenario,
            &r.gains,
            &r.bundle,
            &r.precoders,
            &sel,
            None,
            &InnerOptions::default(),
        );
        let linearized = optimize_powers(
            &r.scenario,
            &r.gains,
            &r.bundle,
            &r.precoders,
            &sel,
            None,
            &InnerOptions {
                backend: Backend::Linearized,
                ..InnerOptions::default()
            },
        );
        assert_eq!(exact.status, SolveStatus::Optimal);
        assert_eq!(linearized.status, SolveStatus::Optimal);
        let gap = (exact.objective - linearized.objective).abs() / exact.objective;
        assert!(gap <= 5e-3, "backend gap {gap}");
    }

    #[test]
    fn sdma_selection_pins_common_beam() {
        let sel = SelectionVector::all_zeros(3);
        let r = rig(3, 53, &sel);
        let out = optimize_powers(
            &r.scenario,
            &r.gains,
            &r.bundle,
            &r.precoders,
            &sel,
            None,
            &InnerOptions::default(),
        );
        assert_eq!(out.status, SolveStatus::Optimal);
        assert_eq!(out.powers.comm[0], 0.0);
        for k in 0..3 {
            assert_eq!(out.rate_alloc.common_share[k], 0.0);
        }
    }

    #[test]
    fn subproblem_objective_dominates_bound_trace() {
        let sel = SelectionVector::all_ones(3);
        let r = rig(3, 59, &sel);
        let powers = uniform_allocation(r.scenario.p_max_w, 3, true);
        let multipliers = update_multipliers(&powers, &r.gains, &sel, &r.scenario);
        let out = solve_convex_subproblem(
            &r.scenario,
            &r.gains,
            &r.bundle,
            &r.precoders,
            &sel,
            &multipliers,
            Some(&powers),
            Backend::ExactConic,
        );
        assert_eq!(out.status, SolveStatus::Optimal);
        let crb = crb_of_allocation(&r.scenario, &r.bundle, &r.precoders, &out.powers).unwrap();
        assert!(out.objective >= crb.trace * (1.0 - 1e-6));
        // The information LMI is tight at the optimum: Tr(U⁻¹) matches the trace.
        assert!(
            (out.objective - crb.trace).abs() <= 1e-4 * crb.trace,
            "trace gap: Tr(U⁻¹) = {}, bound = {}",
            out.objective,
            crb.trace
        );
    }
}
