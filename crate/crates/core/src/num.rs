//! Scalar abstraction: every numeric kernel in this crate is generic over a
//! floating-point type implementing [`Real`]. The crate root exposes `f64`
//! aliases for the concrete types the CLI and file formats use.

use serde::{de::DeserializeOwned, Serialize};
use std::fmt;

/// Floating-point scalar (f32 or f64).
pub trait Real:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + num_traits::NumAssignOps
    + std::iter::Sum
    + fmt::Debug
    + fmt::Display
    + Default
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lift an `f64` literal into the scalar type.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("literal not representable")
    }

    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("scalar not representable as f64")
    }

    fn clamped(self, lo: Self, hi: Self) -> Self {
        self.max(lo).min(hi)
    }

    fn clamp01(self) -> Self {
        self.clamped(Self::zero(), Self::one())
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_roundtrip() {
        assert_eq!(<f64 as Real>::of(0.5), 0.5);
        assert_eq!(<f32 as Real>::of(0.5), 0.5f32);
        assert_eq!(Real::as_f64(2.0f32), 2.0);
    }

    #[test]
    fn clamp_bounds() {
        assert_eq!(Real::clamp01(1.5f64), 1.0);
        assert_eq!(Real::clamp01(-0.5f64), 0.0);
        assert_eq!(Real::clamped(5.0f64, 0.0, 2.0), 2.0);
    }
}
