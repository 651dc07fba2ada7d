//! Near-field channel synthesis.
//!
//! Spherical-wave array responses under the second-order Taylor phase model,
//! user channels with free-space loss, the round-trip sensing channel, and
//! its analytic distance/angle derivatives. All constructors are pure:
//! identical inputs give bit-identical outputs.

use crate::linalg::CMat;
use crate::scalar::{conv, Cx, Scalar};
use crate::scenario::{ArrayGeometry, ArraySide, PolarPosition};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChannelError {
    #[error("position distance must be positive")]
    ZeroDistance,
}

/// Downlink channel of one user: `entries = gain · a(d, θ)`.
#[derive(Debug, Clone)]
pub struct ChannelVector<S> {
    pub entries: Vec<Cx<S>>,
    pub gain: Cx<S>,
    pub position: PolarPosition<S>,
}

impl<S: Scalar> ChannelVector<S> {
    pub fn norm(&self) -> S {
        crate::linalg::norm(&self.entries)
    }
}

/// Round-trip sensing channel `G̃ = a_r·a_tᵀ` with its parameter Jacobians.
/// `response` excludes the gain; the full channel is `gain · response`.
#[derive(Debug, Clone)]
pub struct SensingChannelBundle<S> {
    pub response: CMat<S>,
    pub d_theta: CMat<S>,
    pub d_dist: CMat<S>,
    pub gain: Cx<S>,
    pub target: PolarPosition<S>,
}

/// Taylor phase offset `δ_n = n·d·sinθ − (n·d)²·cos²θ/(2·d_pos)` for the
/// 1-based element index `n`.
fn phase_offset<S: Scalar>(n: usize, spacing: S, pos: &PolarPosition<S>) -> S {
    let nd = conv::<S>(n as f64) * spacing;
    let (sin_t, cos_t) = (pos.angle_rad.sin(), pos.angle_rad.cos());
    nd * sin_t - nd * nd * cos_t * cos_t / (conv::<S>(2.0) * pos.distance_m)
}

/// Near-field array response under the Taylor phase model: entry `n` equals
/// `exp(j·(2π/λ)·δ_n)`, `n = 1..N`. No far-field shortcut is taken.
pub fn array_response<S: Scalar>(
    geometry: &ArrayGeometry<S>,
    side: ArraySide,
    pos: &PolarPosition<S>,
) -> Result<Vec<Cx<S>>, ChannelError> {
    if pos.distance_m <= S::zero() {
        return Err(ChannelError::ZeroDistance);
    }
    let wave = conv::<S>(2.0) * S::PI() / geometry.wavelength_m;
    Ok((1..=geometry.elements(side))
        .map(|n| Cx::from_polar(S::one(), wave * phase_offset(n, geometry.spacing_m, pos)))
        .collect())
}

/// Exact-distance form of the response (no Taylor expansion): entry `n`
/// carries `exp(−j·(2π/λ)·(‖p − s_n‖ − d_pos))`. Kept for quantifying the
/// Taylor model error; the optimization path always uses [`array_response`].
pub fn array_response_exact<S: Scalar>(
    geometry: &ArrayGeometry<S>,
    side: ArraySide,
    pos: &PolarPosition<S>,
) -> Result<Vec<Cx<S>>, ChannelError> {
    if pos.distance_m <= S::zero() {
        return Err(ChannelError::ZeroDistance);
    }
    let wave = conv::<S>(2.0) * S::PI() / geometry.wavelength_m;
    let d = pos.distance_m;
    let sin_t = pos.angle_rad.sin();
    Ok((1..=geometry.elements(side))
        .map(|n| {
            let nd = conv::<S>(n as f64) * geometry.spacing_m;
            let exact = (d * d + nd * nd - conv::<S>(2.0) * nd * d * sin_t).sqrt();
            Cx::from_polar(S::one(), -wave * (exact - d))
        })
        .collect())
}

/// Analytic element-wise derivatives of the Taylor response:
/// `∂a_n/∂x = j·(2π/λ)·(∂δ_n/∂x)·a_n` for `x ∈ {θ, d}`.
pub fn array_response_jacobian<S: Scalar>(
    geometry: &ArrayGeometry<S>,
    side: ArraySide,
    pos: &PolarPosition<S>,
) -> Result<(Vec<Cx<S>>, Vec<Cx<S>>), ChannelError> {
    let a = array_response(geometry, side, pos)?;
    let wave = conv::<S>(2.0) * S::PI() / geometry.wavelength_m;
    let (sin_t, cos_t) = (pos.angle_rad.sin(), pos.angle_rad.cos());
    let d = pos.distance_m;
    let j = Cx::new(S::zero(), S::one());
    let mut d_theta = Vec::with_capacity(a.len());
    let mut d_dist = Vec::with_capacity(a.len());
    for (idx, a_n) in a.iter().enumerate() {
        let nd = conv::<S>((idx + 1) as f64) * geometry.spacing_m;
        let ddelta_dtheta = nd * cos_t + nd * nd * cos_t * sin_t / d;
        let ddelta_ddist = nd * nd * cos_t * cos_t / (conv::<S>(2.0) * d * d);
        d_theta.push(j * a_n.scale(wave * ddelta_dtheta));
        d_dist.push(j * a_n.scale(wave * ddelta_ddist));
    }
    Ok((d_theta, d_dist))
}

/// Downlink channel of one user: free-space amplitude `c/(4πf·d)` and
/// carrier phase `−2π·d/λ` applied to the Taylor response.
pub fn user_channel<S: Scalar>(
    geometry: &ArrayGeometry<S>,
    pos: &PolarPosition<S>,
) -> Result<ChannelVector<S>, ChannelError> {
    if pos.distance_m <= S::zero() {
        return Err(ChannelError::ZeroDistance);
    }
    let amplitude = geometry.wavelength_m / (conv::<S>(4.0) * S::PI() * pos.distance_m);
    let phase = -conv::<S>(2.0) * S::PI() * pos.distance_m / geometry.wavelength_m;
    let gain = Cx::from_polar(amplitude, phase);
    let entries = crate::linalg::scale(&array_response(geometry, ArraySide::Tx, pos)?, gain);
    Ok(ChannelVector {
        entries,
        gain,
        position: *pos,
    })
}

/// Round-trip sensing channel and its analytic Jacobians, assembled by the
/// product rule from transmit/receive response derivatives.
pub fn sensing_bundle<S: Scalar>(
    geometry: &ArrayGeometry<S>,
    target: &PolarPosition<S>,
    gain: Cx<S>,
) -> Result<SensingChannelBundle<S>, ChannelError> {
    let a_t = array_response(geometry, ArraySide::Tx, target)?;
    let a_r = array_response(geometry, ArraySide::Rx, target)?;
    let (at_theta, at_dist) = array_response_jacobian(geometry, ArraySide::Tx, target)?;
    let (ar_theta, ar_dist) = array_response_jacobian(geometry, ArraySide::Rx, target)?;

    let response = CMat::outer_t(&a_r, &a_t);
    let d_theta = CMat::outer_t(&ar_theta, &a_t).add(&CMat::outer_t(&a_r, &at_theta));
    let d_dist = CMat::outer_t(&ar_dist, &a_t).add(&CMat::outer_t(&a_r, &at_dist));
    Ok(SensingChannelBundle {
        response,
        d_theta,
        d_dist,
        gain,
        target: *target,
    })
}
