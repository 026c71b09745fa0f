//! Real and complex sample types.
//!
//! Every algorithm in the crate is written once, generically over [`Scalar`].
//! The real regime is the complex formulas with vanishing imaginary parts.

use core::fmt::Debug;

use nalgebra::{Complex, ComplexField};

/// Which number field a block lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    Real,
    Complex,
}

impl Regime {
    pub fn tag(self) -> u32 {
        match self {
            Regime::Real => 0,
            Regime::Complex => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(Regime::Real),
            1 => Some(Regime::Complex),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::Real => "real",
            Regime::Complex => "complex",
        }
    }
}

/// A sample value: `f64` or `Complex<f64>`.
pub trait Scalar: ComplexField<RealField = f64> + Copy + Default + Debug + Send + Sync {
    const REGIME: Regime;

    /// Builds a value from its parts. The real regime drops `im`.
    fn from_parts(re: f64, im: f64) -> Self;

    fn re(self) -> f64;
    fn im(self) -> f64;

    #[inline]
    fn conj(self) -> Self {
        self.conjugate()
    }

    #[inline]
    fn abs2(self) -> f64 {
        self.modulus_squared()
    }

    #[inline]
    fn from_re(re: f64) -> Self {
        Self::from_parts(re, 0.0)
    }
}

impl Scalar for f64 {
    const REGIME: Regime = Regime::Real;

    #[inline]
    fn from_parts(re: f64, _im: f64) -> Self {
        re
    }

    #[inline]
    fn re(self) -> f64 {
        self
    }

    #[inline]
    fn im(self) -> f64 {
        0.0
    }

    #[inline]
    fn conj(self) -> Self {
        self
    }

    #[inline]
    fn abs2(self) -> f64 {
        self * self
    }
}

impl Scalar for Complex<f64> {
    const REGIME: Regime = Regime::Complex;

    #[inline]
    fn from_parts(re: f64, im: f64) -> Self {
        Complex::new(re, im)
    }

    #[inline]
    fn re(self) -> f64 {
        self.re
    }

    #[inline]
    fn im(self) -> f64 {
        self.im
    }

    #[inline]
    fn conj(self) -> Self {
        Complex::new(self.re, -self.im)
    }

    #[inline]
    fn abs2(self) -> f64 {
        self.re * self.re + self.im * self.im
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_values_stay_real() {
        let x = <f64 as Scalar>::from_parts(2.0, 5.0);
        assert_eq!(x, 2.0);
        assert_eq!((x * x).im(), 0.0);
        assert_eq!(Scalar::conj(x), x);
    }

    #[test]
    fn regime_tags_roundtrip() {
        for r in [Regime::Real, Regime::Complex] {
            assert_eq!(Regime::from_tag(r.tag()), Some(r));
        }
        assert_eq!(Regime::from_tag(7), None);
    }

    #[test]
    fn complex_abs2_and_conj() {
        let z = Complex::new(3.0, -4.0);
        assert_eq!(z.abs2(), 25.0);
        assert_eq!(Scalar::conj(z), Complex::new(3.0, 4.0));
    }
}
