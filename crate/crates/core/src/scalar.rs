//! Scalar abstraction for the model layer.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type the performance models are evaluated in: f32 or f64.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an f64 literal. Infallible for the implemented float types.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn of_count(v: u32) -> Self {
        Self::lit(f64::from(v))
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `(a^p + b^p)^(1/p)` computed without overflow or underflow for large `p`.
///
/// Inputs must be non-negative and `p >= 1`.
pub fn lp_combine<T: Scalar>(a: T, b: T, p: T) -> T {
    let m = a.max(b);
    if m <= T::zero() {
        return T::zero();
    }
    let ra = (a / m).powf(p);
    let rb = (b / m).powf(p);
    m * (ra + rb).powf(p.recip())
}
