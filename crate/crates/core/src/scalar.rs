//! Scalar abstractions shared by every numerical module.
//!
//! All numerics are written against [`Real`] (implemented for `f32` and `f64`)
//! and, for Hermitian matrices, against [`Elem`], which covers both real and
//! complex entries so that real symmetric sections can take a cheaper path
//! through the eigensolver.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, Num, NumAssign, ToPrimitive};

/// Real floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
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
    + rustfft::FftNum
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Lossy conversion from a count or index.
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Entry type of a Hermitian matrix over the real scalar `T`.
pub trait Elem:
    Copy + Num + NumAssign + std::ops::Neg<Output = Self> + Debug + Send + Sync + 'static
{
    type Real: Real;

    fn conj(self) -> Self;
    fn re(self) -> Self::Real;
    fn im(self) -> Self::Real;
    fn abs_sqr(self) -> Self::Real;
    fn from_re(x: Self::Real) -> Self;
    fn scale(self, s: Self::Real) -> Self;

    fn abs(self) -> Self::Real {
        self.abs_sqr().sqrt()
    }

    fn to_complex(self) -> Complex<Self::Real> {
        Complex::new(self.re(), self.im())
    }
}

impl<T: Real> Elem for T {
    type Real = T;
    #[inline]
    fn conj(self) -> Self {
        self
    }
    #[inline]
    fn re(self) -> T {
        self
    }
    #[inline]
    fn im(self) -> T {
        T::zero()
    }
    #[inline]
    fn abs_sqr(self) -> T {
        self * self
    }
    #[inline]
    fn from_re(x: T) -> Self {
        x
    }
    #[inline]
    fn scale(self, s: T) -> Self {
        self * s
    }
    #[inline]
    fn abs(self) -> T {
        Float::abs(self)
    }
}

impl<T: Real> Elem for Complex<T> {
    type Real = T;
    #[inline]
    fn conj(self) -> Self {
        Complex::conj(&self)
    }
    #[inline]
    fn re(self) -> T {
        self.re
    }
    #[inline]
    fn im(self) -> T {
        self.im
    }
    #[inline]
    fn abs_sqr(self) -> T {
        self.norm_sqr()
    }
    #[inline]
    fn from_re(x: T) -> Self {
        Complex::new(x, T::zero())
    }
    #[inline]
    fn scale(self, s: T) -> Self {
        Complex::new(self.re * s, self.im * s)
    }
}

/// Reduces an angle to the torus representative in `[-pi, pi)`.
pub fn reduce_angle<T: Real>(x: T) -> T {
    let two_pi = T::PI() + T::PI();
    let mut r = (x + T::PI()) % two_pi;
    if r < T::zero() {
        r += two_pi;
    }
    let out = r - T::PI();
    if out >= T::PI() {
        out - two_pi
    } else {
        out
    }
}

/// `e^{i theta}`.
#[inline]
pub fn cis<T: Real>(theta: T) -> Complex<T> {
    Complex::new(theta.cos(), theta.sin())
}

/// Distance on the torus between two angles.
pub fn torus_distance<T: Real>(a: T, b: T) -> T {
    reduce_angle(a - b).abs()
}
