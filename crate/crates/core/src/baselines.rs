//! Kurtosis-based FastICA family: real cubic FastICA, circular complex
//! FastICA, nc-FastICA and the KM fixed-point iteration (KM-F).
//!
//! All of them assume whitened observations. Each step returns the raw
//! update; [`run`] follows it with deflationary orthogonalization,
//! normalization and the stopping rule.

use nalgebra::{DMatrix, DVector};

use crate::contrast::{weighted_mean, ContrastValue};
use crate::deflation::project_out;
use crate::error::{Error, Result};
use crate::metrics::{self, Algorithm};
use crate::robustica::{ExtractionConfig, ExtractionReport, StopReason};
use crate::scalar::{Regime, Scalar};
use crate::signal::{check_vector, inner, mean_real, norm, output_unchecked, SignalBlock};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    FastIcaReal,
    FastIcaComplex,
    NcFastIca,
    KmFixedPoint,
}

impl BaselineKind {
    /// Plain FastICA for the given regime.
    pub fn fastica(regime: Regime) -> Self {
        match regime {
            Regime::Real => BaselineKind::FastIcaReal,
            Regime::Complex => BaselineKind::FastIcaComplex,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::FastIcaReal => "fastica_real",
            BaselineKind::FastIcaComplex => "fastica_complex_circular",
            BaselineKind::NcFastIca => "nc_fastica",
            BaselineKind::KmFixedPoint => "km_fixed_point",
        }
    }

    pub fn check_regime(self, regime: Regime) -> Result<()> {
        match (self, regime) {
            (BaselineKind::FastIcaReal, Regime::Complex) => {
                Err(Error::Config("real FastICA only accepts real-valued blocks"))
            }
            (BaselineKind::FastIcaComplex, Regime::Real) => {
                Err(Error::Config("circular complex FastICA expects complex-valued blocks"))
            }
            _ => Ok(()),
        }
    }
}

/// `w - E{x (w^T x)^3} / 3`.
pub fn fastica_real_step<S: Scalar>(w: &DVector<S>, x: &SignalBlock<S>) -> Result<DVector<S>> {
    BaselineKind::FastIcaReal.check_regime(S::REGIME)?;
    check_vector(w, x)?;
    let y = output_unchecked(w, x.matrix());
    let cubic = weighted_mean(x.matrix(), y.iter().map(|&v| v * v * v));
    Ok(w - cubic.scale(1.0 / 3.0))
}

/// `w - E{x y^* |y|^2} / 2`.
pub fn fastica_complex_step<S: Scalar>(w: &DVector<S>, x: &SignalBlock<S>) -> Result<DVector<S>> {
    check_vector(w, x)?;
    let y = output_unchecked(w, x.matrix());
    Ok(w - conj_cubic(x.matrix(), &y).scale(0.5))
}

/// `w - E{|y|^2 y^* x} / 2 + C_x E{y^*2} w^* / 2` with `C_x = E{x x^T}`.
pub fn nc_fastica_step<S: Scalar>(w: &DVector<S>, x: &SignalBlock<S>, pseudo_cov: &DMatrix<S>) -> Result<DVector<S>> {
    check_vector(w, x)?;
    let y = output_unchecked(w, x.matrix());
    let conj_pseudo = crate::signal::sample_mean_by(&y, |&v| (v * v).conj());
    let w_conj = w.map(Scalar::conj);
    Ok(w - conj_cubic(x.matrix(), &y).scale(0.5) + (pseudo_cov * w_conj) * conj_pseudo.scale(0.5))
}

/// `E{|y|^2 y^* x} - 2 E{|y|^2} E{y^* x} - E{y^*2} E{y x}`.
pub fn km_fixed_point_step<S: Scalar>(w: &DVector<S>, x: &SignalBlock<S>) -> Result<DVector<S>> {
    check_vector(w, x)?;
    let y = output_unchecked(w, x.matrix());
    let power = mean_real(&y, |v| v.abs2());
    let conj_pseudo = crate::signal::sample_mean_by(&y, |&v| (v * v).conj());
    let conj_lin = weighted_mean(x.matrix(), y.iter().map(|v| v.conj()));
    let lin = weighted_mean(x.matrix(), y.iter().copied());
    Ok(conj_cubic(x.matrix(), &y) - conj_lin.scale(2.0 * power) - lin * conj_pseudo)
}

fn conj_cubic<S: Scalar>(x: &DMatrix<S>, y: &[S]) -> DVector<S> {
    weighted_mean(x, y.iter().map(|&v| v.conj().scale(v.abs2())))
}

/// One raw update of `kind`.
pub fn step<S: Scalar>(
    kind: BaselineKind,
    w: &DVector<S>,
    x: &SignalBlock<S>,
    pseudo_cov: Option<&DMatrix<S>>,
) -> Result<DVector<S>> {
    match kind {
        BaselineKind::FastIcaReal => fastica_real_step(w, x),
        BaselineKind::FastIcaComplex => fastica_complex_step(w, x),
        BaselineKind::NcFastIca => match pseudo_cov {
            Some(c) => nc_fastica_step(w, x, c),
            None => nc_fastica_step(w, x, &x.pseudo_covariance()),
        },
        BaselineKind::KmFixedPoint => km_fixed_point_step(w, x),
    }
}

/// Iterates `kind` from `w0` with orthogonalization against `constraint`,
/// normalization and the stopping rule of `cfg`.
///
/// `cfg.sign_target` and `cfg.normalize_gradient` do not apply here.
pub fn run<S: Scalar>(
    kind: BaselineKind,
    x: &SignalBlock<S>,
    w0: &DVector<S>,
    cfg: &ExtractionConfig,
    constraint: Option<&DMatrix<S>>,
    pseudo_cov: Option<&DMatrix<S>>,
) -> Result<ExtractionReport<S>> {
    kind.check_regime(S::REGIME)?;
    check_vector(w0, x)?;
    cfg.validate(x.samples())?;
    let tolerance = cfg.tolerance(x.samples());
    let per_iteration = metrics::flops_per_iteration(Algorithm::Baseline(kind), S::REGIME, x.channels(), x.samples());
    let cached;
    let pseudo_cov = match (kind, pseudo_cov) {
        (BaselineKind::NcFastIca, None) => {
            cached = x.pseudo_covariance();
            Some(&cached)
        }
        (_, c) => c,
    };

    let mut w = match constraint {
        Some(basis) => project_out(w0, basis)?,
        None => w0.clone(),
    };
    let n0 = norm(&w);
    if !(n0 > 0.0) {
        return Err(Error::DegenerateDirection { residual: n0 });
    }
    w = w.scale(1.0 / n0);
    let start = ContrastValue::from_output(&output_unchecked(&w, x.matrix()))?;

    let mut report = ExtractionReport {
        final_w: w.clone(),
        iterations: 0,
        passes: 0,
        contrast_trajectory: alloc::vec![start.kurtosis],
        mu_trajectory: alloc::vec::Vec::new(),
        stop_reason: StopReason::MaxIterations,
        flops: 0,
        sign_mismatch: false,
    };

    while report.passes < cfg.max_iterations {
        report.passes += 1;
        let mut next = step(kind, &w, x, pseudo_cov)?;
        if let Some(basis) = constraint {
            next = match project_out(&next, basis) {
                Ok(v) => v,
                Err(_) => {
                    report.stop_reason = StopReason::Degenerate;
                    break;
                }
            };
        }
        let n = norm(&next);
        if !(n > 0.0 && n.is_finite()) {
            report.stop_reason = StopReason::Degenerate;
            break;
        }
        let next = next.scale(1.0 / n);
        let change = (1.0 - inner(&w, &next).modulus()).abs();
        w = next;
        let k = ContrastValue::from_output(&output_unchecked(&w, x.matrix()))
            .map(|c| c.kurtosis)
            .unwrap_or(f64::NAN);
        report.contrast_trajectory.push(k);
        report.mu_trajectory.push(0.0);
        if tolerance.is_some_and(|eps| change < eps) {
            report.stop_reason = StopReason::Converged;
            break;
        }
        report.iterations += 1;
    }
    report.final_w = w;
    report.flops = per_iteration * report.iterations as u64;
    Ok(report)
}
