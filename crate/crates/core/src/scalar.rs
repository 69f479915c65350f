//! Scalar abstraction: everything numeric is generic over [`Real`].

use nalgebra as na;
use num_traits as nt;

/// Floating-point scalar usable throughout the crate (`f32` or `f64`).
pub trait Real:
    Copy + na::RealField + nt::FloatConst + nt::FromPrimitive + nt::ToPrimitive + Default
{
    /// Convert an `f64` literal into the scalar type.
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("finite literal converts to scalar")
    }

    /// Lossy conversion back to `f64` (exact for `f64` itself).
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
