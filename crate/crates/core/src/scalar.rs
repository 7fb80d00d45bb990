use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point type the geometric layer is written against: `f32` or `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Tolerance used when checking that an ingested vector has unit norm.
    fn unit_tolerance() -> Self;

    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    fn from_usize_exact(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn unit_tolerance() -> Self {
        1e-10
    }
}

impl Scalar for f32 {
    fn unit_tolerance() -> Self {
        1e-5
    }
}

/// Clamp a cosine into `[-1, 1]` before taking `acos`.
#[inline]
pub(crate) fn clamp_unit<T: Scalar>(x: T) -> T {
    x.max(-T::one()).min(T::one())
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Neumaier-compensated dot product, used for very long vectors.
pub(crate) fn dot_compensated<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut sum = T::zero();
    let mut comp = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        let term = x * y;
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp = comp + ((sum - t) + term);
        } else {
            comp = comp + ((term - t) + sum);
        }
        sum = t;
    }
    sum + comp
}
