//! Kurtosis and fourth-order moment contrasts and their gradients.
//!
//! Gradients use the operator `d/dw_r + j d/dw_i`, so the directional
//! derivative of a contrast along `u` is `Re{grad^H u}` in both regimes.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signal::{check_vector, mean_real, output_unchecked, SignalBlock};

/// Output powers below this are treated as a degenerate extractor.
pub const POWER_FLOOR: f64 = 1e-300;

/// Kurtosis together with the raw output moments it was computed from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastValue<S: Scalar> {
    pub kurtosis: f64,
    /// `E{|y|^2}`
    pub power: f64,
    /// `E{y^2}`
    pub pseudo_power: S,
    /// `E{|y|^4}`
    pub abs4: f64,
}

impl<S: Scalar> ContrastValue<S> {
    /// Normalized fourth-order cumulant of an output sequence.
    pub fn from_output(y: &[S]) -> Result<Self> {
        let power = mean_real(y, |v| v.abs2());
        if !(power >= POWER_FLOOR) {
            return Err(Error::DegenerateContrast { power });
        }
        let abs4 = mean_real(y, |v| v.abs2() * v.abs2());
        let pseudo_power = crate::signal::sample_mean_by(y, |&v| v * v);
        Ok(Self {
            kurtosis: kurtosis_from_moments(abs4, power, pseudo_power.abs2()),
            power,
            pseudo_power,
            abs4,
        })
    }

    /// Fourth-order moment criterion `E{|y|^4}`.
    pub fn moment4(&self) -> f64 {
        self.abs4
    }
}

#[inline]
pub(crate) fn kurtosis_from_moments(abs4: f64, power: f64, pseudo_abs2: f64) -> f64 {
    (abs4 - 2.0 * power * power - pseudo_abs2) / (power * power)
}

/// Kurtosis contrast of the extractor output `w^H x`.
pub fn kurtosis<S: Scalar>(w: &DVector<S>, x: &SignalBlock<S>) -> Result<ContrastValue<S>> {
    check_vector(w, x)?;
    ContrastValue::from_output(&output_unchecked(w, x.matrix()))
}

/// `E{|w^H x|^4}`.
pub fn moment4<S: Scalar>(w: &DVector<S>, x: &SignalBlock<S>) -> Result<f64> {
    check_vector(w, x)?;
    let y = output_unchecked(w, x.matrix());
    Ok(mean_real(&y, |v| v.abs2() * v.abs2()))
}

/// Gradient of the kurtosis contrast with respect to `w`.
pub fn kurtosis_gradient<S: Scalar>(w: &DVector<S>, x: &SignalBlock<S>) -> Result<DVector<S>> {
    check_vector(w, x)?;
    let y = output_unchecked(w, x.matrix());
    let stats = ContrastValue::from_output(&y)?;
    Ok(kurtosis_gradient_from_output(&y, &stats, x.matrix()).0)
}

/// The gradient together with the norm of its leading term
/// `4 E{x y^* |y|^2} / E^2{|y|^2}`, the scale its rounding error lives on.
pub(crate) fn kurtosis_gradient_from_output<S: Scalar>(
    y: &[S],
    stats: &ContrastValue<S>,
    x: &DMatrix<S>,
) -> (DVector<S>, f64) {
    let m2 = stats.power;
    let p = stats.pseudo_power;
    let v_cubic = weighted_mean(x, y.iter().map(|&v| v.conj().scale(v.abs2())));
    let v_lin = weighted_mean(x, y.iter().copied());
    let v_conj = weighted_mean(x, y.iter().map(|&v| v.conj()));
    let radial = (stats.abs4 - p.abs2()) / m2;
    let scale = 4.0 / (m2 * m2);
    let leading = crate::signal::norm(&v_cubic) * scale;
    (
        (v_cubic - v_lin * p.conj() - v_conj.scale(radial)).scale(scale),
        leading,
    )
}

/// Gradient of `E{|y|^4}`: `4 E{x y^* |y|^2}`.
pub fn moment4_gradient<S: Scalar>(w: &DVector<S>, x: &SignalBlock<S>) -> Result<DVector<S>> {
    check_vector(w, x)?;
    let y = output_unchecked(w, x.matrix());
    Ok(weighted_mean(x.matrix(), y.iter().map(|&v| v.conj().scale(v.abs2()))).scale(4.0))
}

/// `E{x_t f_t}` for a per-sample weight sequence.
pub(crate) fn weighted_mean<S: Scalar>(x: &DMatrix<S>, weights: impl Iterator<Item = S>) -> DVector<S> {
    let f: Vec<S> = weights.collect();
    let f = DVector::from_vec(f);
    (x * f).scale(1.0 / x.ncols() as f64)
}
