//! Near-field integrated sensing and communication simulation lab.
//!
//! The crate builds spherical-wave channels and preconfigured beams for a
//! multi-user downlink that doubles as a monostatic radar, then minimizes
//! the trace of the joint distance/angle estimation bound by optimizing
//! power allocation, common-rate allocation, and the rate-splitting user
//! selection. Conventional rate-splitting (everyone decodes the common
//! stream) and space-division (nobody does) run as baselines.
//!
//! All numeric code is generic over the scalar type via [`scalar::Scalar`]
//! (`f32` or `f64`); the `*64` aliases below are the concrete entry points
//! most users want.

pub mod channel;
pub mod crb;
pub mod experiments;
pub mod linalg;
pub mod precoding;
pub mod rates;
pub mod scalar;
pub mod scenario;
pub mod selection;
pub mod solver;

pub use scalar::{Cx, Scalar};

/// Concrete f64 aliases for the main entry types.
pub type Scenario64 = scenario::Scenario<f64>;
pub type ArrayGeometry64 = scenario::ArrayGeometry<f64>;
pub type PolarPosition64 = scenario::PolarPosition<f64>;
pub type ChannelVector64 = channel::ChannelVector<f64>;
pub type SensingChannelBundle64 = channel::SensingChannelBundle<f64>;
pub type PrecoderSet64 = precoding::PrecoderSet<f64>;
pub type PowerAllocation64 = precoding::PowerAllocation<f64>;
pub type BeamGains64 = precoding::BeamGains<f64>;
pub type CrbResult64 = crb::CrbResult<f64>;

/// Concrete f32 aliases (reduced precision; the acceptance tolerances in the
/// test suite assume f64).
pub type Scenario32 = scenario::Scenario<f32>;
pub type ArrayGeometry32 = scenario::ArrayGeometry<f32>;
pub type PolarPosition32 = scenario::PolarPosition<f32>;
