//! Preconfigured beams: zero-forcing private precoders, the weakest-user
//! common precoder, beam gains, and the transmit covariance.
//!
//! Private columns follow `P_p = H(HᴴH)⁻¹Q` with `Q` the K×K diagonal that
//! normalizes every column to unit norm. The common beam points at the
//! weakest selected user's channel and is also normalized; the power
//! variables absorb all scale, which keeps solver conditioning independent
//! of the ~1e-9 channel energies.

use crate::channel::ChannelVector;
use crate::linalg::{cond_one, dot_h, scale, CMat};
use crate::rates::SelectionVector;
use crate::scalar::{conv, Cx, Scalar};
use thiserror::Error;

/// Condition-number cutoff on `HᴴH` beyond which user geometry is treated as
/// pathological and the trial should be resampled.
pub const ZF_CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Error)]
pub enum PrecodingError {
    #[error("channel columns are numerically dependent (cond(HᴴH) ≈ {cond:.3e})")]
    RankDeficient { cond: f64 },
    #[error("common precoder requires a non-empty rate-splitting group")]
    EmptyCommonGroup,
}

/// Preconfigured beams: index 0 is the common beam, column `k-1` of
/// `private` serves user `k`.
#[derive(Debug, Clone)]
pub struct PrecoderSet<S> {
    pub common: Vec<Cx<S>>,
    pub private: CMat<S>,
}

impl<S: Scalar> PrecoderSet<S> {
    pub fn n_tx(&self) -> usize {
        self.private.rows()
    }

    pub fn k_users(&self) -> usize {
        self.private.cols()
    }

    /// Beam `i` with the common beam at index 0.
    pub fn beam(&self, i: usize) -> Vec<Cx<S>> {
        if i == 0 {
            self.common.clone()
        } else {
            self.private.col(i - 1)
        }
    }
}

/// `g[k][i] = |h_kᴴ·p_i|²` for users `k = 1..K` and beams `i = 0..K`.
#[derive(Debug, Clone)]
pub struct BeamGains<S> {
    pub g: Vec<Vec<S>>,
}

impl<S: Scalar> BeamGains<S> {
    pub fn k_users(&self) -> usize {
        self.g.len()
    }
}

/// Per-beam communication and probing powers in watts (index 0 = common).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation<S> {
    pub comm: Vec<S>,
    pub probe: Vec<S>,
}

impl<S: Scalar> PowerAllocation<S> {
    pub fn zeros(k_users: usize) -> Self {
        Self {
            comm: vec![S::zero(); k_users + 1],
            probe: vec![S::zero(); k_users + 1],
        }
    }

    pub fn from_comm(comm: Vec<S>) -> Self {
        let probe = vec![S::zero(); comm.len()];
        Self { comm, probe }
    }

    /// Sum of communication and probing power over all beams.
    pub fn total(&self) -> S {
        self.comm
            .iter()
            .chain(self.probe.iter())
            .fold(S::zero(), |a, &b| a + b)
    }

    /// Per-beam combined weight `P_i + P̃_i`.
    pub fn beam_weight(&self, i: usize) -> S {
        self.comm[i] + self.probe[i]
    }

    /// Move every probing watt onto the co-located communication stream.
    /// The combined beam weights are preserved bit-exactly.
    pub fn shift_probe_to_comm(&self) -> Self {
        let comm = (0..self.comm.len()).map(|i| self.beam_weight(i)).collect();
        Self::from_comm(comm)
    }
}

/// Zero-forcing private precoders with unit-norm columns.
///
/// `channels` is the `N_t × K` matrix whose column `k` is user `k`'s channel.
pub fn zf_private_precoders<S: Scalar>(channels: &CMat<S>) -> Result<CMat<S>, PrecodingError> {
    let k = channels.cols();
    let gram = channels.hermitian().mul(channels);
    let gram_inv = gram.inverse().ok_or(PrecodingError::RankDeficient {
        cond: f64::INFINITY,
    })?;
    let cond = cond_one(&gram, &gram_inv).to_f64().unwrap_or(f64::INFINITY);
    if cond > ZF_CONDITION_LIMIT {
        return Err(PrecodingError::RankDeficient { cond });
    }
    let unnormalized = channels.mul(&gram_inv);
    let mut cols = Vec::with_capacity(k);
    for j in 0..k {
        let col = unnormalized.col(j);
        // q_k = [(HᴴH)⁻¹]_kk^(−1/2) gives exactly unit column norm.
        let q = gram_inv[(j, j)].re.sqrt().recip();
        cols.push(scale(&col, Cx::new(q, S::zero())));
    }
    Ok(CMat::from_cols(&cols))
}

/// Common beam for the selected group: the unit-normalized channel of the
/// weakest user in `K₁` (ties broken by the lowest user index).
pub fn common_precoder<S: Scalar>(
    channels: &[ChannelVector<S>],
    selection: &SelectionVector,
) -> Result<Vec<Cx<S>>, PrecodingError> {
    let weakest = selection
        .k1_indices()
        .into_iter()
        .map(|k| (k, channels[k].norm()))
        .fold(None::<(usize, S)>, |best, (k, n)| match best {
            Some((_, bn)) if bn <= n => best,
            _ => Some((k, n)),
        });
    let (k, n) = weakest.ok_or(PrecodingError::EmptyCommonGroup)?;
    Ok(scale(
        &channels[k].entries,
        Cx::new(n.recip(), S::zero()),
    ))
}

/// All beam gains `|h_kᴴ p_i|²`.
pub fn beam_gains<S: Scalar>(
    channels: &[ChannelVector<S>],
    precoders: &PrecoderSet<S>,
) -> BeamGains<S> {
    let k_users = channels.len();
    debug_assert_eq!(precoders.k_users(), k_users);
    let g = channels
        .iter()
        .map(|h| {
            let mut row = Vec::with_capacity(k_users + 1);
            row.push(dot_h(&h.entries, &precoders.common).norm_sqr());
            for j in 0..k_users {
                row.push(dot_h(&h.entries, &precoders.private.col(j)).norm_sqr());
            }
            row
        })
        .collect();
    BeamGains { g }
}

/// Transmit covariance `R = Σ_i (P_i + P̃_i)·p_i·p_iᴴ`. Hermitian PSD with
/// trace equal to the allocated power (unit-norm beams).
pub fn signal_covariance<S: Scalar>(
    precoders: &PrecoderSet<S>,
    powers: &PowerAllocation<S>,
) -> CMat<S> {
    let n = precoders.n_tx();
    let mut r = CMat::zeros(n, n);
    for i in 0..=precoders.k_users() {
        let w = powers.beam_weight(i);
        if w == S::zero() {
            continue;
        }
        let p = precoders.beam(i);
        for a in 0..n {
            let pa = p[a].scale(w);
            for b in 0..n {
                r[(a, b)] = r[(a, b)] + pa * p[b].conj();
            }
        }
    }
    r
}

/// Uniform budget split over the active beams (common beam included only
/// when the rate-splitting group is non-empty), probe powers zero.
pub fn uniform_allocation<S: Scalar>(
    p_max: S,
    k_users: usize,
    common_active: bool,
) -> PowerAllocation<S> {
    let beams = if common_active { k_users + 1 } else { k_users };
    let share = p_max / conv::<S>(beams as f64);
    let comm = (0..=k_users)
        .map(|i| {
            if i == 0 && !common_active {
                S::zero()
            } else {
                share
            }
        })
        .collect();
    PowerAllocation::from_comm(comm)
}
