//! Scalar abstraction shared by the signal and statistics code.
//!
//! Everything numeric in this crate is generic over [`Real`], which is
//! implemented for `f32` and `f64`. Filter design and statistical
//! distribution lookups are always carried out in `f64` and converted at
//! the boundary.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use nalgebra::RealField;
use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar usable by every numeric routine in the crate.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + RealField
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`.
    fn of(x: f64) -> Self;

    /// Lossy conversion from `usize`.
    fn of_usize(n: usize) -> Self {
        Self::of(n as f64)
    }

    fn as_f64(self) -> f64;
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            #[inline]
            fn of(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

pub(crate) fn mean<T: Real>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::zero();
    }
    xs.iter().copied().sum::<T>() / T::of_usize(xs.len())
}

#[cfg(test)]
pub(crate) fn rms<T: Real>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::zero();
    }
    let ss: T = xs.iter().map(|&x| x * x).sum();
    Float::sqrt(ss / T::of_usize(xs.len()))
}

/// Pearson correlation; zero when either input has zero variance.
pub fn pearson<T: Real>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    if n < 2 {
        return T::zero();
    }
    let (a, b) = (&a[..n], &b[..n]);
    let ma = mean(a);
    let mb = mean(b);
    let mut sab = T::zero();
    let mut saa = T::zero();
    let mut sbb = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let denom = Float::sqrt(saa * sbb);
    if denom <= T::zero() {
        T::zero()
    } else {
        sab / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_of_affine_copy_is_one() {
        let a: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b: Vec<f64> = a.iter().map(|x| 3.0 * x - 1.0).collect();
        assert!((pearson(&a, &b) - 1.0).abs() < 1e-12);
        let c: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!((pearson(&a, &c) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_constant_is_zero() {
        let a = [1.0f32; 10];
        let b: Vec<f32> = (0..10).map(|i| i as f32).collect();
        assert_eq!(pearson(&a, &b), 0.0);
    }

    #[test]
    fn rms_of_unit_square_wave() {
        let xs = [1.0, -1.0, 1.0, -1.0];
        assert_eq!(rms::<f64>(&xs), 1.0);
    }
}
