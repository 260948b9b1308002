//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! Geometry is written once, generically over [`Scalar`], and instantiated
//! with plain floats for point evaluations or with [`Jet`](crate::jets::Jet)s
//! (possibly nested) whenever derivatives are required.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use num_traits::{One, Zero};

/// Ring-like number type with the handful of real functions a Finsler
/// function is built from.
pub trait Scalar:
    Clone
    + Debug
    + Send
    + Sync
    + 'static
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
{
    /// Constant embedding of a real number.
    fn from_f64(v: f64) -> Self;

    /// Leading real value (the point value, stripped of all derivative parts).
    fn re(&self) -> f64;

    fn sqrt(&self) -> Self;

    /// Real power `self^p` for a real exponent.
    fn powf(&self, p: f64) -> Self;

    /// Multiplication by a real constant.
    fn scale(&self, k: f64) -> Self;

    /// `self += a * b` without materialising the product.
    fn mul_add_assign(&mut self, a: &Self, b: &Self);

    /// Integer power by repeated squaring; exact for polynomial expressions.
    fn powi(&self, n: i32) -> Self {
        if n < 0 {
            return Self::one() / self.powi(-n);
        }
        let mut result = Self::one();
        let mut base = self.clone();
        let mut e = n as u32;
        while e > 0 {
            if e & 1 == 1 {
                result = result * base.clone();
            }
            e >>= 1;
            if e > 0 {
                base = base.clone() * base;
            }
        }
        result
    }
}

macro_rules! impl_float_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn re(&self) -> f64 {
                *self as f64
            }
            #[inline]
            fn sqrt(&self) -> Self {
                <$t>::sqrt(*self)
            }
            #[inline]
            fn powf(&self, p: f64) -> Self {
                <$t>::powf(*self, p as $t)
            }
            #[inline]
            fn scale(&self, k: f64) -> Self {
                *self * (k as $t)
            }
            #[inline]
            fn mul_add_assign(&mut self, a: &Self, b: &Self) {
                *self += *a * *b;
            }
        }
    };
}

impl_float_scalar!(f64);
impl_float_scalar!(f32);

/// Sum of products `Σ a_i b_i` over a scalar type.
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut acc = S::zero();
    for (x, y) in a.iter().zip(b) {
        acc.mul_add_assign(x, y);
    }
    acc
}

/// Lift a slice of reals into constants of `S`.
pub fn lift<S: Scalar>(v: &[f64]) -> Vec<S> {
    v.iter().map(|&x| S::from_f64(x)).collect()
}
