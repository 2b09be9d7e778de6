//! Scalar abstraction for the numerical kernels.
//!
//! Everything downstream is generic over [`Real`], so the same code runs in
//! `f32` for quick smoke tests and in `f64` for the shipped tolerances. The
//! concrete aliases live at the crate root.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by the geometry and group kernels.
///
/// `RealField` supplies the transcendental functions and lets nalgebra
/// factorizations (LU, SVD, symmetric eigen) work generically; the
/// num-traits bounds supply checked conversion from/to `f64` literals.
/// `Send + Sync` lets loop batches develop in parallel.
pub trait Real: RealField + FromPrimitive + ToPrimitive + Copy + Send + Sync {
    /// Converts an `f64` literal. Panics on values not representable as
    /// finite scalars, which only happens on programmer error.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 literal")
    }

    /// Lossy view as `f64`, used when emitting reports.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
