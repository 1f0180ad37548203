//! Floating-point abstraction for the numeric core.
//!
//! The math modules (tensors, networks, schedules, metrics, association
//! tests) are generic over [`Scalar`] so they work identically in `f32` and
//! `f64`. The pipeline itself runs on the `f64` aliases exported from the
//! crate root, which is what the file formats and reproducibility guarantees
//! are defined against.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
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
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Convert an `f64` constant into the working scalar type.
#[inline]
pub fn cast<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("finite f64 converts to scalar")
}

/// Convert a count into the working scalar type.
#[inline]
pub fn cast_usize<T: Scalar>(n: usize) -> T {
    T::from_usize(n).expect("usize converts to scalar")
}
