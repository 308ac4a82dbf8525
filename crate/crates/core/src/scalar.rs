//! Generic scalar abstraction for the numerical core.
//!
//! Everything in this crate is generic over [`Real`], which bundles the
//! nalgebra field operations with infallible conversions to and from `f64`.
//! File formats always store `f64`; in-memory computation may use any
//! implementor (`f32`, `f64`).

use nalgebra::RealField;
use num_traits::Num;

/// Floating-point scalar usable by the solvers and assemblers.
pub trait Real: RealField + Num + Copy {
    fn cast(value: f64) -> Self;
    fn as_f64(self) -> f64;
    /// Unit roundoff of the type, used for breakdown detection.
    fn epsilon() -> Self;
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            #[inline]
            fn cast(value: f64) -> Self {
                value as $t
            }
            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn epsilon() -> Self {
                <$t>::EPSILON
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);
