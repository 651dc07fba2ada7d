//! Search over the binary rate-splitting selection: simulated annealing with
//! cyclic single-bit proposals, an exhaustive oracle for small user counts,
//! and the conventional all-ones / all-zeros baselines.
//!
//! Proposals are scored by the converged inner-solver objective; infeasible
//! selections carry the `+∞` sentinel, are never accepted, and never update
//! the best-so-far. Identical selections always score identically (the
//! evaluator is deterministic), so results are reproducible for a fixed
//! seed on any platform.

use crate::channel::{sensing_bundle, ChannelVector, SensingChannelBundle};
use crate::crb::CrbResult;
use crate::linalg::CMat;
use crate::precoding::{
    beam_gains, common_precoder, BeamGains, PowerAllocation, PrecoderSet, PrecodingError,
};
use crate::rates::SelectionVector;
use crate::scalar::Scalar;
use crate::scenario::{unit_uniform, Scenario};
use crate::solver::{crb_of_allocation, optimize_powers, InnerOptions, SolveOutcome};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use std::cell::RefCell;
use std::collections::HashMap;
use thiserror::Error;

/// Hard cap on annealing steps, as a multiple of the user count.
pub const ANNEAL_STEP_FACTOR: usize = 20;

/// Default user-count limit for exhaustive enumeration.
pub const EXHAUSTIVE_LIMIT: usize = 10;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("no evaluated selection admits a feasible inner solve")]
    AllInfeasible,
    #[error("exhaustive search over {k} users exceeds the limit of {limit}")]
    TooLarge { k: usize, limit: usize },
}

/// Fixed per-trial context: channels, private beams, sensing bundle, and a
/// memo of already-scored selections. The common beam is rebuilt for every
/// candidate selection since its direction follows the weakest group member.
pub struct EvalContext<S> {
    pub scenario: Scenario<S>,
    pub channels: Vec<ChannelVector<S>>,
    pub bundle: SensingChannelBundle<S>,
    pub options: InnerOptions,
    private: CMat<S>,
    memo: RefCell<HashMap<u64, SolveOutcome<S>>>,
    evaluations: RefCell<usize>,
}

impl<S: Scalar> EvalContext<S> {
    /// Build the per-trial context; fails only when the user geometry makes
    /// the zero-forcing system rank-deficient.
    pub fn new(
        scenario: Scenario<S>,
        channels: Vec<ChannelVector<S>>,
        options: InnerOptions,
    ) -> Result<Self, PrecodingError> {
        let h = CMat::from_cols(
            &channels
                .iter()
                .map(|c| c.entries.clone())
                .collect::<Vec<_>>(),
        );
        let private = crate::precoding::zf_private_precoders(&h)?;
        let bundle = sensing_bundle(&scenario.geometry, &scenario.target, scenario.target_gain)
            .expect("validated target position");
        Ok(Self {
            scenario,
            channels,
            bundle,
            options,
            private,
            memo: RefCell::new(HashMap::new()),
            evaluations: RefCell::new(0),
        })
    }

    pub fn k_users(&self) -> usize {
        self.channels.len()
    }

    /// Preconfigured beams for one selection. With an empty group the common
    /// beam direction is a placeholder (weakest user overall); the solver
    /// pins its power to zero.
    pub fn precoders_for(&self, selection: &SelectionVector) -> PrecoderSet<S> {
        let common = if selection.k1_size() > 0 {
            common_precoder(&self.channels, selection).expect("non-empty group")
        } else {
            common_precoder(&self.channels, &SelectionVector::all_ones(self.k_users()))
                .expect("at least one user")
        };
        PrecoderSet {
            common,
            private: self.private.clone(),
        }
    }

    pub fn gains_for(&self, precoders: &PrecoderSet<S>) -> BeamGains<S> {
        beam_gains(&self.channels, precoders)
    }

    /// Converged inner solve for one selection, memoized on the bit mask.
    pub fn evaluate(&self, selection: &SelectionVector) -> SolveOutcome<S> {
        if let Some(hit) = self.memo.borrow().get(&selection.mask()) {
            return hit.clone();
        }
        let precoders = self.precoders_for(selection);
        let gains = self.gains_for(&precoders);
        let outcome = optimize_powers(
            &self.scenario,
            &gains,
            &self.bundle,
            &precoders,
            selection,
            None,
            &self.options,
        );
        *self.evaluations.borrow_mut() += 1;
        self.memo
            .borrow_mut()
            .insert(selection.mask(), outcome.clone());
        outcome
    }

    /// Number of actual inner solves (memo hits excluded).
    pub fn solve_count(&self) -> usize {
        *self.evaluations.borrow()
    }

    /// Bound reconstruction for a selection's final powers.
    pub fn crb_for(
        &self,
        selection: &SelectionVector,
        powers: &PowerAllocation<S>,
    ) -> Result<CrbResult<S>, crate::crb::CrbError> {
        let precoders = self.precoders_for(selection);
        crb_of_allocation(&self.scenario, &self.bundle, &precoders, powers)
    }
}

/// Probability of accepting a degradation from `current` to `proposed` at
/// temperature `temp`: `exp((current − proposed)/temp) ∈ (0, 1]`.
pub fn acceptance_probability<S: Scalar>(current: S, proposed: S, temp: S) -> S {
    ((current - proposed) / temp).exp()
}

/// One annealing step record: `(t, flipped index, proposed value, accepted,
/// temperature)`.
#[derive(Debug, Clone)]
pub struct AnnealStep<S> {
    pub step: usize,
    pub flipped: usize,
    pub proposed_value: S,
    pub accepted: bool,
    pub temperature: S,
}

#[derive(Debug, Clone)]
pub struct AnnealResult<S> {
    pub selection: SelectionVector,
    pub outcome: SolveOutcome<S>,
    pub steps: Vec<AnnealStep<S>>,
    pub converged: bool,
}

impl<S: Scalar> AnnealResult<S> {
    pub fn sa_steps(&self) -> usize {
        self.steps.len()
    }
}

/// Simulated annealing over selections: cyclic single-bit flips, always
/// accept improvements, accept degradations with the temperature-scaled
/// probability, geometric cooling each step. Terminates once the best value
/// has changed by at most the scenario's outer tolerance over the last `K`
/// steps (hard cap: `20·K` steps).
pub fn anneal<S: Scalar>(
    ctx: &EvalContext<S>,
    seed: u64,
) -> Result<AnnealResult<S>, SelectionError> {
    let k = ctx.k_users();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Initial selection: one uniform bit per user, drawn in user order.
    let bits: Vec<bool> = (0..k).map(|_| rng.next_u64() & 1 == 1).collect();
    let mut current = SelectionVector::from_bits(bits);
    let mut current_value = ctx.evaluate(&current).objective;
    let mut best = current.clone();
    let mut best_value = current_value;

    let mut temperature = ctx.scenario.sa_temp;
    let decay = ctx.scenario.sa_decay;
    let window = ctx.scenario.tol_outer;
    let cap = ANNEAL_STEP_FACTOR * k;
    let mut best_history: Vec<S> = vec![best_value];
    let mut steps = Vec::with_capacity(cap);
    let mut converged = false;

    for t in 0..cap {
        let flip = t % k;
        let proposed = current.flipped(flip);
        let proposed_value = ctx.evaluate(&proposed).objective;

        let accepted = if proposed_value < current_value {
            true
        } else if proposed_value.is_finite() {
            let p = acceptance_probability(current_value, proposed_value, temperature);
            debug_assert!(p > S::zero() && p <= S::one());
            unit_uniform::<S>(&mut rng) < p
        } else {
            // Infeasible proposals are never accepted.
            false
        };

        if accepted {
            current = proposed;
            current_value = proposed_value;
            if current_value < best_value {
                best_value = current_value;
                best = current.clone();
            }
        }
        steps.push(AnnealStep {
            step: t,
            flipped: flip,
            proposed_value,
            accepted,
            temperature,
        });
        temperature = temperature * decay;
        best_history.push(best_value);

        // Stop once the best value has been flat over the last K steps.
        if best_history.len() > k && best_value.is_finite() {
            let earlier = best_history[best_history.len() - 1 - k];
            if earlier - best_value <= window {
                converged = true;
                break;
            }
        }
    }

    if !best_value.is_finite() {
        return Err(SelectionError::AllInfeasible);
    }
    let outcome = ctx.evaluate(&best);
    Ok(AnnealResult {
        selection: best,
        outcome,
        steps,
        converged,
    })
}

/// Enumerate every selection (user counts up to `k_limit`) and return the
/// global minimizer of the converged objective. Exact ties pick the smaller
/// group, then the lexicographically smaller bit vector.
pub fn exhaustive<S: Scalar>(
    ctx: &EvalContext<S>,
    k_limit: usize,
) -> Result<(SelectionVector, SolveOutcome<S>), SelectionError> {
    let k = ctx.k_users();
    if k > k_limit {
        return Err(SelectionError::TooLarge { k, limit: k_limit });
    }
    let mut best: Option<(SelectionVector, SolveOutcome<S>)> = None;
    for mask in 0..(1u64 << k) {
        let candidate = SelectionVector::from_mask(mask, k);
        let outcome = ctx.evaluate(&candidate);
        if !outcome.objective.is_finite() {
            continue;
        }
        let better = match &best {
            None => true,
            Some((held, incumbent)) => {
                outcome.objective < incumbent.objective
                    || (outcome.objective == incumbent.objective
                        && (candidate.k1_size(), candidate.bits())
                            < (held.k1_size(), held.bits()))
            }
        };
        if better {
            best = Some((candidate, outcome));
        }
    }
    best.ok_or(SelectionError::AllInfeasible)
}

/// Conventional baselines: `Rs` decodes the common stream everywhere,
/// `Sdma` nowhere (no common beam at all).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineScheme {
    Rs,
    Sdma,
}

pub fn baseline<S: Scalar>(ctx: &EvalContext<S>, scheme: BaselineScheme) -> SolveOutcome<S> {
    let k = ctx.k_users();
    let selection = match scheme {
        BaselineScheme::Rs => SelectionVector::all_ones(k),
        BaselineScheme::Sdma => SelectionVector::all_zeros(k),
    };
    ctx.evaluate(&selection)
}
