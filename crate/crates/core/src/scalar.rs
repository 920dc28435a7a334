//! Floating-point abstraction shared by the numeric modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rustfft::FftNum;

/// Real scalar the signal-processing and learning code is generic over.
///
/// Implemented for `f32` and `f64`. Everything that needs finite-difference
/// headroom (gradient checks, oracles) runs in `f64`; bulk training may use
/// `f32`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + FftNum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; constants are written as `T::lit(0.5)`.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }

    #[inline]
    fn of_f32(v: f32) -> Self {
        Self::from_f32(v).expect("f32 representable")
    }

    #[inline]
    fn as_f32(self) -> f32 {
        self.to_f32().expect("finite conversion")
    }

    /// Logistic sigmoid, evaluated without overflow for large |x|.
    #[inline]
    fn sigmoid(self) -> Self {
        if self >= Self::zero() {
            Self::one() / (Self::one() + (-self).exp())
        } else {
            let e = self.exp();
            e / (Self::one() + e)
        }
    }
}

impl Real for f32 {}
impl Real for f64 {}
