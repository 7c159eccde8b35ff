//! Floating-point scalar abstraction shared by every grid type.

use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating point element type of a raster: `f32` or `f64`.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + num_traits::NumCast
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; used for configuration constants.
    fn of(v: f64) -> Self {
        <Self as num_traits::NumCast>::from(v).expect("finite constant fits the scalar type")
    }

    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Little-endian bytes of the value narrowed to `f32`.
    fn to_f32_le(self) -> [u8; 4] {
        num_traits::ToPrimitive::to_f32(&self)
            .unwrap_or(f32::NAN)
            .to_le_bytes()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
