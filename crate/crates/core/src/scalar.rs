//! Scalar abstraction for the lattice code paths.
//!
//! Fields, slabs and spectral buffers are generic over `f32`/`f64`. Oracles,
//! quadrature and statistics always work in `f64`.

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rustfft::FftNum;
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating point type usable as the lattice scalar.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + FftNum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Sum
    + 'static
{
    /// Short name recorded in manifests ("f32" / "f64").
    const NAME: &'static str;

    fn of(v: f64) -> Self;

    fn as_f64(self) -> f64;
}

impl Real for f32 {
    const NAME: &'static str = "f32";

    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const NAME: &'static str = "f64";

    #[inline]
    fn of(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_f64() {
        assert_eq!(<f64 as Real>::of(0.1).as_f64(), 0.1);
        assert!((<f32 as Real>::of(0.1).as_f64() - 0.1).abs() < 1e-7);
        assert_eq!(<f32 as Real>::NAME, "f32");
    }
}
