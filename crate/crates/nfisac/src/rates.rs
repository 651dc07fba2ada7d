//! Stream SINRs, achievable rates, and feasibility reporting.
//!
//! Rates are in bits/s/Hz (base-2 logs throughout). Infeasibility is a
//! reported status, never a panic or error: selection searches must be able
//! to evaluate and reject infeasible candidates gracefully.

use crate::precoding::{BeamGains, PowerAllocation};
use crate::scalar::{conv, Scalar};
use crate::scenario::Scenario;
use thiserror::Error;

/// Slack applied to feasibility comparisons, absorbing interior-point
/// constraint residuals (~1e-8) with margin.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RateError {
    #[error("user {0} does not decode the common stream")]
    NotInCommonGroup(usize),
    #[error("user index {0} out of range for {1} users")]
    IndexOutOfRange(usize, usize),
}

/// Rate-splitting membership bits; `K₁ = {k : s_k = 1}` decodes the common
/// stream, `K₂` treats it as noise.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SelectionVector {
    bits: Vec<bool>,
}

impl SelectionVector {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn all_ones(k: usize) -> Self {
        Self { bits: vec![true; k] }
    }

    pub fn all_zeros(k: usize) -> Self {
        Self { bits: vec![false; k] }
    }

    /// Selection from the low `k` bits of a mask (user 0 ↔ bit 0).
    pub fn from_mask(mask: u64, k: usize) -> Self {
        Self {
            bits: (0..k).map(|i| mask >> i & 1 == 1).collect(),
        }
    }

    pub fn mask(&self) -> u64 {
        self.bits
            .iter()
            .enumerate()
            .fold(0, |m, (i, &b)| if b { m | 1 << i } else { m })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn is_common(&self, k: usize) -> bool {
        self.bits[k]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn k1_indices(&self) -> Vec<usize> {
        (0..self.bits.len()).filter(|&k| self.bits[k]).collect()
    }

    pub fn k2_indices(&self) -> Vec<usize> {
        (0..self.bits.len()).filter(|&k| !self.bits[k]).collect()
    }

    pub fn k1_size(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn flipped(&self, k: usize) -> Self {
        let mut bits = self.bits.clone();
        bits[k] = !bits[k];
        Self { bits }
    }
}

/// Per-user common-rate shares `R_{k,c}`; zero for users outside `K₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateAllocation<S> {
    pub common_share: Vec<S>,
}

impl<S: Scalar> RateAllocation<S> {
    pub fn zeros(k: usize) -> Self {
        Self {
            common_share: vec![S::zero(); k],
        }
    }

    pub fn total_shared(&self, selection: &SelectionVector) -> S {
        self.common_share
            .iter()
            .enumerate()
            .filter(|(k, _)| selection.is_common(*k))
            .fold(S::zero(), |a, (_, &r)| a + r)
    }
}

fn check_index<S: Scalar>(gains: &BeamGains<S>, k: usize) -> Result<(), RateError> {
    if k >= gains.k_users() {
        Err(RateError::IndexOutOfRange(k, gains.k_users()))
    } else {
        Ok(())
    }
}

/// Common-stream SINR of user `k ∈ K₁`:
/// `g_{k,0}·P_0 / (g_{k,0}·P̃_0 + g_{k,k}·(P_k + P̃_k) + σ_k²)`.
/// With zero probe powers this is the probe-free form exactly.
pub fn common_sinr<S: Scalar>(
    gains: &BeamGains<S>,
    powers: &PowerAllocation<S>,
    selection: &SelectionVector,
    k: usize,
    noise_w: S,
) -> Result<S, RateError> {
    check_index(gains, k)?;
    if !selection.is_common(k) {
        return Err(RateError::NotInCommonGroup(k));
    }
    let g0 = gains.g[k][0];
    let gk = gains.g[k][k + 1];
    let num = g0 * powers.comm[0];
    let den = g0 * powers.probe[0] + gk * (powers.comm[k + 1] + powers.probe[k + 1]) + noise_w;
    Ok(num / den)
}

/// Private-stream SINR of user `k`:
/// `g_{k,k}·P_k / (g_{k,0}·((1−s_k)·P_0 + P̃_0) + g_{k,k}·P̃_k + σ_k²)`.
/// Users in `K₁` see no common-stream term after decoding it; users in `K₂`
/// absorb the common beam as interference.
pub fn private_sinr<S: Scalar>(
    gains: &BeamGains<S>,
    powers: &PowerAllocation<S>,
    selection: &SelectionVector,
    k: usize,
    noise_w: S,
) -> Result<S, RateError> {
    check_index(gains, k)?;
    let g0 = gains.g[k][0];
    let gk = gains.g[k][k + 1];
    let common_interferes = if selection.is_common(k) {
        S::zero()
    } else {
        powers.comm[0]
    };
    let num = gk * powers.comm[k + 1];
    let den = g0 * (common_interferes + powers.probe[0]) + gk * powers.probe[k + 1] + noise_w;
    Ok(num / den)
}

fn log2_1p<S: Scalar>(x: S) -> S {
    (S::one() + x).ln() / conv::<S>(std::f64::consts::LN_2)
}

/// Rates of one user at a given operating point.
#[derive(Debug, Clone, Copy)]
pub struct UserRate<S> {
    /// `R_k = s_k·R_{k,c} + log₂(1 + γ_{k,p})`.
    pub total: S,
    pub common_share: S,
    pub private_rate: S,
}

/// Outcome of evaluating the rate constraints at a candidate point.
#[derive(Debug, Clone)]
pub struct RateReport<S> {
    /// Common-rate cap `R_c = min_{k∈K₁} log₂(1 + γ_{k,c})`, zero when `K₁`
    /// is empty.
    pub common_cap: S,
    pub per_user: Vec<UserRate<S>>,
    /// Per-user `R_k ≥ R_th` flags.
    pub qos_ok: Vec<bool>,
    /// `Σ s_k·R_{k,c} ≤ R_c`.
    pub common_cap_ok: bool,
    /// All shares non-negative and zero outside `K₁`.
    pub shares_ok: bool,
    pub feasible: bool,
}

/// Evaluate rates, the common-rate cap, and all feasibility flags.
pub fn achievable_rates<S: Scalar>(
    gains: &BeamGains<S>,
    powers: &PowerAllocation<S>,
    selection: &SelectionVector,
    rate_alloc: &RateAllocation<S>,
    scenario: &Scenario<S>,
) -> RateReport<S> {
    let k_users = gains.k_users();
    let noise = scenario.noise_user_w;
    let tol = conv::<S>(FEASIBILITY_TOL);

    let common_cap = selection
        .k1_indices()
        .into_iter()
        .map(|k| {
            log2_1p(common_sinr(gains, powers, selection, k, noise).expect("k ∈ K₁"))
        })
        .fold(None::<S>, |acc, r| Some(acc.map_or(r, |m| m.min(r))))
        .unwrap_or(S::zero());

    let per_user: Vec<UserRate<S>> = (0..k_users)
        .map(|k| {
            let private_rate = log2_1p(
                private_sinr(gains, powers, selection, k, noise).expect("index checked"),
            );
            let common_share = if selection.is_common(k) {
                rate_alloc.common_share[k]
            } else {
                S::zero()
            };
            UserRate {
                total: common_share + private_rate,
                common_share,
                private_rate,
            }
        })
        .collect();

    let qos_ok: Vec<bool> = per_user
        .iter()
        .map(|u| u.total >= scenario.qos_bpshz - tol)
        .collect();
    let common_cap_ok = rate_alloc.total_shared(selection) <= common_cap + tol;
    let shares_ok = rate_alloc
        .common_share
        .iter()
        .enumerate()
        .all(|(k, &r)| r >= -tol && (selection.is_common(k) || r == S::zero()));
    let feasible = qos_ok.iter().all(|&q| q) && common_cap_ok && shares_ok;

    RateReport {
        common_cap,
        per_user,
        qos_ok,
        common_cap_ok,
        shares_ok,
        feasible,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;

    /// Synthetic gain table: two users, toy magnitudes near the physical
    /// scale of the default profile.
    fn toy_gains() -> BeamGains<f64> {
        BeamGains {
            g: vec![vec![2e-7, 1e-7, 1e-25], vec![1.5e-7, 1e-25, 0.8e-7]],
        }
    }

    #[test]
    fn common_sinr_hand_value() {
        // g_{k,0}=2e-7, P_0=0.5, g_{k,k}=1e-7, P_k=0.2, σ²=1e-11, zero probe.
        let gains = toy_gains();
        let powers = PowerAllocation::from_comm(vec![0.5, 0.2, 0.0]);
        let sel = SelectionVector::all_ones(2);
        let s = common_sinr(&gains, &powers, &sel, 0, 1e-11).unwrap();
        let expect = 1e-7 / 2.001e-8;
        assert!((s - expect).abs() <= 1e-12 * expect);
        assert!((s - 4.9975).abs() < 1e-3);
    }

    #[test]
    fn common_sinr_zero_without_common_power() {
        let gains = toy_gains();
        let powers = PowerAllocation::from_comm(vec![0.0, 0.2, 0.1]);
        let sel = SelectionVector::all_ones(2);
        assert_eq!(common_sinr(&gains, &powers, &sel, 0, 1e-11).unwrap(), 0.0);
    }

    #[test]
    fn common_probe_power_reduces_common_sinr() {
        let gains = toy_gains();
        let sel = SelectionVector::all_ones(2);
        let clean = PowerAllocation::from_comm(vec![0.5, 0.2, 0.1]);
        let mut probed = clean.clone();
        probed.probe[0] = 0.05;
        let a = common_sinr(&gains, &clean, &sel, 0, 1e-11).unwrap();
        let b = common_sinr(&gains, &probed, &sel, 0, 1e-11).unwrap();
        assert!(b < a);
    }

    #[test]
    fn outsider_cannot_query_common_sinr() {
        let gains = toy_gains();
        let powers = PowerAllocation::from_comm(vec![0.5, 0.2, 0.1]);
        let sel = SelectionVector::from_bits(vec![true, false]);
        assert_eq!(
            common_sinr(&gains, &powers, &sel, 1, 1e-11).unwrap_err(),
            RateError::NotInCommonGroup(1)
        );
        assert!(matches!(
            common_sinr(&gains, &powers, &sel, 7, 1e-11).unwrap_err(),
            RateError::IndexOutOfRange(7, 2)
        ));
    }

    #[test]
    fn private_sinr_hand_value_with_probe() {
        // Non-member with the common beam interfering plus an own-beam probe:
        // num = 1e-7·0.3, den = 2e-7·0.5 + 1e-7·0.1 + 1e-11 = 1.1001e-7.
        let gains = BeamGains::<f64> {
            g: vec![vec![2e-7, 1e-7]],
        };
        let mut powers = PowerAllocation::from_comm(vec![0.5, 0.3]);
        powers.probe[1] = 0.1;
        let sel = SelectionVector::all_zeros(1);
        let s = private_sinr(&gains, &powers, &sel, 0, 1e-11).unwrap();
        let expect = 3e-8 / 1.1001e-7;
        assert!((s - expect).abs() <= 1e-12 * expect);
        assert!((s - 0.27270).abs() < 1e-4);
    }

    #[test]
    fn member_sees_no_common_interference() {
        let gains = toy_gains();
        let powers = PowerAllocation::from_comm(vec![0.5, 0.2, 0.1]);
        let member = SelectionVector::all_ones(2);
        let outsider = SelectionVector::all_zeros(2);
        let sm = private_sinr(&gains, &powers, &member, 0, 1e-11).unwrap();
        let so = private_sinr(&gains, &powers, &outsider, 0, 1e-11).unwrap();
        // With the common stream removed the member is interference-free.
        assert!((sm - 1e-7 * 0.2 / 1e-11).abs() <= 1e-9 * sm);
        assert!(so < sm);
    }

    #[test]
    fn private_sinr_monotone_in_own_power() {
        let gains = toy_gains();
        let sel = SelectionVector::from_bits(vec![false, true]);
        let mut prev = -1.0;
        for i in 0..10 {
            let p = 0.05 * i as f64;
            let powers = PowerAllocation::from_comm(vec![0.3, p, 0.1]);
            let s = private_sinr(&gains, &powers, &sel, 0, 1e-11).unwrap();
            assert!(s >= prev);
            prev = s;
        }
    }

    #[test]
    fn probe_shift_weakly_improves_both_sinrs() {
        // Local form of the probe-elimination argument on 100 random draws.
        use crate::scenario::unit_uniform;
        use rand_core::SeedableRng;
        let gains = toy_gains();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(55);
        for _ in 0..100 {
            let mut draw = || 0.25 * unit_uniform::<f64>(&mut rng);
            let powers = PowerAllocation {
                comm: vec![draw(), draw(), draw()],
                probe: vec![draw(), draw(), draw()],
            };
            let shifted = powers.shift_probe_to_comm();
            for sel in [
                SelectionVector::all_ones(2),
                SelectionVector::from_bits(vec![true, false]),
            ] {
                for k in 0..2 {
                    let before = private_sinr(&gains, &powers, &sel, k, 1e-11).unwrap();
                    let after = private_sinr(&gains, &shifted, &sel, k, 1e-11).unwrap();
                    assert!(after >= before - 1e-15);
                    if sel.is_common(k) {
                        let cb = common_sinr(&gains, &powers, &sel, k, 1e-11).unwrap();
                        let ca = common_sinr(&gains, &shifted, &sel, k, 1e-11).unwrap();
                        assert!(ca >= cb - 1e-15);
                    }
                }
            }
        }
    }

    fn desk() -> Scenario<f64> {
        let mut s = Scenario::desk_default();
        s.qos_bpshz = 1.0;
        s
    }

    #[test]
    fn singleton_group_cap_is_its_own_rate() {
        let gains = toy_gains();
        let powers = PowerAllocation::from_comm(vec![0.5, 0.2, 0.1]);
        let sel = SelectionVector::from_bits(vec![true, false]);
        let report = achievable_rates(
            &gains,
            &powers,
            &sel,
            &RateAllocation::zeros(2),
            &desk(),
        );
        let gamma = common_sinr(&gains, &powers, &sel, 0, desk().noise_user_w).unwrap();
        let expect = (1.0 + gamma).log2();
        assert!((report.common_cap - expect).abs() < 1e-12);
    }

    #[test]
    fn all_zero_selection_is_private_only() {
        let gains = toy_gains();
        let powers = PowerAllocation::from_comm(vec![0.0, 0.3, 0.3]);
        let sel = SelectionVector::all_zeros(2);
        let report = achievable_rates(
            &gains,
            &powers,
            &sel,
            &RateAllocation::zeros(2),
            &desk(),
        );
        assert_eq!(report.common_cap, 0.0);
        for (k, u) in report.per_user.iter().enumerate() {
            let s = private_sinr(&gains, &powers, &sel, k, desk().noise_user_w).unwrap();
            assert!((u.total - (1.0 + s).log2()).abs() < 1e-12);
            assert_eq!(u.common_share, 0.0);
        }
    }

    #[test]
    fn flags_match_direct_recomputation() {
        let gains = toy_gains();
        let powers = PowerAllocation::from_comm(vec![0.4, 0.3, 0.2]);
        let sel = SelectionVector::all_ones(2);
        let alloc = RateAllocation {
            common_share: vec![0.5, 0.25],
        };
        let scen = desk();
        let report = achievable_rates(&gains, &powers, &sel, &alloc, &scen);
        // Independent recomputation of every inequality.
        let noise = scen.noise_user_w;
        let r_c = (0..2)
            .map(|k| (1.0 + common_sinr(&gains, &powers, &sel, k, noise).unwrap()).log2())
            .fold(f64::INFINITY, f64::min);
        assert!((report.common_cap - r_c).abs() < 1e-12);
        assert_eq!(report.common_cap_ok, 0.75 <= r_c + FEASIBILITY_TOL);
        for k in 0..2 {
            let rk = alloc.common_share[k]
                + (1.0 + private_sinr(&gains, &powers, &sel, k, noise).unwrap()).log2();
            assert_eq!(report.qos_ok[k], rk >= scen.qos_bpshz - FEASIBILITY_TOL);
        }
        assert!(report.shares_ok);
    }

    #[test]
    fn share_outside_group_breaks_consistency() {
        let gains = toy_gains();
        let powers = PowerAllocation::from_comm(vec![0.4, 0.3, 0.2]);
        let sel = SelectionVector::from_bits(vec![true, false]);
        let alloc = RateAllocation {
            common_share: vec![0.1, 0.2],
        };
        let report = achievable_rates(&gains, &powers, &sel, &alloc, &desk());
        assert!(!report.shares_ok);
        assert!(!report.feasible);
    }

    #[test]
    fn selection_mask_roundtrip() {
        let sel = SelectionVector::from_mask(0b1011, 4);
        assert_eq!(sel.bits(), &[true, true, false, true]);
        assert_eq!(sel.mask(), 0b1011);
        assert_eq!(sel.k1_size(), 3);
        assert_eq!(sel.k2_indices(), vec![2]);
        assert_eq!(sel.flipped(2).mask(), 0b1111);
    }
}
