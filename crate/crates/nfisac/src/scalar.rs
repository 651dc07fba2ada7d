//! Scalar abstraction: every numeric routine in this crate is generic over a
//! real floating-point type.
//!
//! `Scalar` is satisfied by `f32` and `f64`. The bound reuses the conic
//! solver's float trait so the same type parameter flows from channel
//! synthesis all the way into the interior-point subproblems.

use num_complex::Complex;

/// Real scalar type used throughout the crate.
///
/// `clarabel::algebra::FloatT` already bundles `num_traits::Float`,
/// `FloatConst`, `NumAssign`, `FromPrimitive` and the usual formatting and
/// thread-safety bounds, so it is the single bound we need.
pub trait Scalar: clarabel::algebra::FloatT {}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Complex number over the crate scalar.
pub type Cx<S> = Complex<S>;

/// Convert an `f64` literal into the working scalar.
#[inline]
pub fn conv<S: Scalar>(x: f64) -> S {
    S::from_f64(x).expect("f64 literal must convert into the scalar type")
}

/// Speed of light in m/s, conventional radio-engineering value.
///
/// The round value keeps a 30 GHz carrier at exactly λ = 1 cm, matching the
/// half-wavelength spacings used in the array presets.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;
