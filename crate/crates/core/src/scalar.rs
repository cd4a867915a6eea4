use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point element type for tensors, weights and layer kernels.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssignOps + Sum + Default + Debug + Display + Send + Sync + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).unwrap_or_else(Self::nan)
    }

    fn from_f32_lossy(v: f32) -> Self {
        <Self as FromPrimitive>::from_f32(v).unwrap_or_else(Self::nan)
    }

    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    fn to_f32_lossy(self) -> f32 {
        ToPrimitive::to_f32(&self).unwrap_or(f32::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
