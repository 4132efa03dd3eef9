//! Field abstraction shared by the exact and floating-point code paths.
//!
//! The derivative recursion and the continued-fraction table are written once
//! against [`Scalar`]; symbolic spectra run them over [`BigRational`], tabulated
//! spectra (whose moments come from quadrature) over `f64`.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_rational(r: &BigRational) -> Self;
    fn from_i64(v: i64) -> Self;
    fn to_f64(&self) -> f64;
    /// Integer power, negative exponents allowed.
    fn powi(&self, e: i32) -> Self {
        let mut acc = Self::one();
        for _ in 0..e.unsigned_abs() {
            acc = acc * self.clone();
        }
        if e < 0 {
            Self::one() / acc
        } else {
            acc
        }
    }
}

impl Scalar for BigRational {
    fn from_rational(r: &BigRational) -> Self {
        r.clone()
    }

    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }

    fn to_f64(&self) -> f64 {
        rational_to_f64(self)
    }

    fn powi(&self, e: i32) -> Self {
        num_traits::Pow::pow(self, e)
    }
}

impl Scalar for f64 {
    fn from_rational(r: &BigRational) -> Self {
        rational_to_f64(r)
    }

    fn from_i64(v: i64) -> Self {
        v as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn powi(&self, e: i32) -> Self {
        f64::powi(*self, e)
    }
}

/// Nearest double to an exact rational, valid far outside the f64 range of
/// numerator and denominator individually.
pub fn rational_to_f64(r: &BigRational) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    if let Some(v) = ToPrimitive::to_f64(r) {
        if v.is_finite() && v != 0.0 {
            return v;
        }
    }
    // Scale both parts down to 64 significant bits before dividing.
    let num = r.numer().abs();
    let den = r.denom().abs();
    let nb = num.bits() as i64;
    let db = den.bits() as i64;
    let ns = (nb - 64).max(0);
    let ds = (db - 64).max(0);
    let n = (&num >> ns as usize).to_f64().unwrap_or(f64::INFINITY);
    let d = (&den >> ds as usize).to_f64().unwrap_or(f64::INFINITY);
    let mag = (n / d) * 2f64.powi((ns - ds) as i32);
    if r.is_negative() {
        -mag
    } else {
        mag
    }
}

/// Exact rational from a finite double (binary expansion, no rounding).
pub fn rational_from_f64(v: f64) -> Option<BigRational> {
    BigRational::from_float(v)
}

pub fn rational_from_i64(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// Format a double with a fixed number of significant digits, scientific form.
pub fn format_sig(v: f64, digits: usize) -> String {
    format!("{:.*e}", digits.saturating_sub(1), v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn huge_rational_converts() {
        let big = BigRational::new(BigInt::from(10).pow(400u32) * 3, BigInt::from(10).pow(340u32));
        let v = rational_to_f64(&big);
        assert!((v / 3e60 - 1.0).abs() < 1e-14, "{v}");
        let tiny = -BigRational::new(BigInt::from(1), BigInt::from(10).pow(330u32));
        let t = rational_to_f64(&tiny);
        assert!(t <= 0.0 && t > -1e-300);
    }

    #[test]
    fn powi_negative() {
        let half = BigRational::new(1.into(), 2.into());
        assert_eq!(Scalar::powi(&half, -3), rational_from_i64(8));
        assert_eq!(Scalar::powi(&2.0f64, -2), 0.25);
    }
}
