//! Single-source extraction by exact line search of the kurtosis contrast.
//!
//! Each iteration
//!
//! 1. takes the kurtosis gradient `g` at `w` (normalized to unit norm by default),
//! 2. builds the degree-4 step polynomial whose real roots are the
//!    stationary points of `mu -> K(w + mu g)`,
//! 3. roots it in closed form,
//! 4. keeps the candidate with the largest `|K|` (or `eps * K` when a
//!    kurtosis sign is targeted), with `mu = 0` always in the running,
//! 5. updates `w <- (w + mu g) / ||w + mu g||`.
//!
//! Along the search line the contrast is the rational function
//! `K(mu) = P(mu) / Q(mu)^2 - 2` with `P` quartic and `Q` quadratic in `mu`,
//! so the chosen step is the global maximizer over the candidates without
//! touching the data again.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::contrast::{kurtosis_gradient_from_output, ContrastValue};
use crate::deflation::project_out;
use crate::error::{Error, Result};
use crate::metrics::{self, Algorithm};
use crate::quartic::{self, Quartic, RootSet};
use crate::scalar::Scalar;
use crate::signal::{self, check_vector, inner, norm, output_unchecked, SignalBlock};

/// Candidates must beat the incumbent by this relative margin to win a tie.
pub const TIE_TOLERANCE: f64 = 1e-11;

/// Sample means entering the step polynomial, for the per-sample products
/// `a = y^2`, `b = g^2`, `c = y g`, `d = Re(y g^*)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KurtosisStats<S: Scalar> {
    /// `E{|a|^2}`
    pub abs_a_sq: f64,
    /// `E{a}`
    pub a: S,
    /// `E{|a| d}`
    pub abs_a_d: f64,
    /// `E{c}`
    pub c: S,
    /// `E{d^2}`
    pub d_sq: f64,
    /// `E{|a| |b|}`
    pub abs_a_abs_b: f64,
    /// `E{b}`
    pub b: S,
    /// `E{|b| d}`
    pub abs_b_d: f64,
    /// `E{|b|^2}`
    pub abs_b_sq: f64,
    /// `E{|a|}`
    pub abs_a: f64,
    /// `E{d}`
    pub d: f64,
    /// `E{|b|}`
    pub abs_b: f64,
}

impl<S: Scalar> KurtosisStats<S> {
    /// One pass over the extractor output `y` and the direction output `g`.
    pub fn from_outputs(y: &[S], g: &[S]) -> Self {
        debug_assert_eq!(y.len(), g.len());
        let mut s = Self {
            abs_a_sq: 0.0,
            a: S::zero(),
            abs_a_d: 0.0,
            c: S::zero(),
            d_sq: 0.0,
            abs_a_abs_b: 0.0,
            b: S::zero(),
            abs_b_d: 0.0,
            abs_b_sq: 0.0,
            abs_a: 0.0,
            d: 0.0,
            abs_b: 0.0,
        };
        for (&yt, &gt) in y.iter().zip(g) {
            let a = yt * yt;
            let b = gt * gt;
            let c = yt * gt;
            let d = (yt * gt.conj()).re();
            let abs_a = yt.abs2();
            let abs_b = gt.abs2();
            s.abs_a_sq += abs_a * abs_a;
            s.a += a;
            s.abs_a_d += abs_a * d;
            s.c += c;
            s.d_sq += d * d;
            s.abs_a_abs_b += abs_a * abs_b;
            s.b += b;
            s.abs_b_d += abs_b * d;
            s.abs_b_sq += abs_b * abs_b;
            s.abs_a += abs_a;
            s.d += d;
            s.abs_b += abs_b;
        }
        let inv = 1.0 / y.len() as f64;
        s.abs_a_sq *= inv;
        s.a = s.a.scale(inv);
        s.abs_a_d *= inv;
        s.c = s.c.scale(inv);
        s.d_sq *= inv;
        s.abs_a_abs_b *= inv;
        s.b = s.b.scale(inv);
        s.abs_b_d *= inv;
        s.abs_b_sq *= inv;
        s.abs_a *= inv;
        s.d *= inv;
        s.abs_b *= inv;
        s
    }
}

/// The step polynomial `p` together with the numerator `P` and denominator
/// `Q` of the contrast along the search line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPolynomial {
    /// `p(mu) = P'(mu) Q(mu) - 2 P(mu) Q'(mu)`
    pub p: Quartic,
    /// `h_0..h_4`
    pub numerator: [f64; 5],
    /// `i_0..i_2`
    pub denominator: [f64; 3],
    decorrelated: Option<Decorrelated>,
}

/// `P` and `Q` of the same line written with the direction output
/// decorrelated from `y`: `y + mu g = (1 + beta mu) y + mu g'` with
/// `E{Re(y g'^*)} = 0`. Where `y + mu g` nearly vanishes the monomial form
/// cancels catastrophically; this one does not.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Decorrelated {
    beta: f64,
    numerator: [f64; 5],
    denominator: [f64; 3],
    step: [f64; 5],
}

/// `sum_k c_k mu^k (1 + beta mu)^(4 - k)`
fn homogeneous(c: &[f64; 5], beta: f64, mu: f64) -> f64 {
    let s = 1.0 + beta * mu;
    let mut mu_k = [1.0; 5];
    let mut s_k = [1.0; 5];
    for k in 1..5 {
        mu_k[k] = mu_k[k - 1] * mu;
        s_k[k] = s_k[k - 1] * s;
    }
    (0..5).map(|k| c[k] * mu_k[k] * s_k[4 - k]).sum()
}

/// Roots of `sum_k c_k x^k`, solved in `x = r z` with `r` the power of two
/// nearest `sqrt(q0 / q2)`. In `z` the direction output has about the power
/// of `y`, so the coefficients are not graded by the power ratio and the
/// degree demotion test sees the true leading coefficient.
fn scaled_roots(c: &[f64; 5], q0: f64, q2: f64) -> Result<Vec<nalgebra::Complex<f64>>> {
    let e = libm::round(0.5 * libm::log2(q0 / q2));
    let r = if e.is_finite() {
        libm::exp2(e.clamp(-200.0, 200.0))
    } else {
        1.0
    };
    let mut scaled = *c;
    let mut rk = 1.0;
    for v in scaled.iter_mut() {
        *v *= rk;
        rk *= r;
    }
    Ok(quartic::solve(&Quartic::new(scaled))?
        .roots
        .into_iter()
        .map(|z| z * r)
        .collect())
}

fn numerator_coefficients<S: Scalar>(s: &KurtosisStats<S>) -> [f64; 5] {
    let re_prod = |u: S, v: S| (u * v.conj()).re();
    [
        s.abs_a_sq - s.a.abs2(),
        4.0 * s.abs_a_d - 4.0 * re_prod(s.a, s.c),
        4.0 * s.d_sq + 2.0 * s.abs_a_abs_b - 4.0 * s.c.abs2() - 2.0 * re_prod(s.a, s.b),
        4.0 * s.abs_b_d - 4.0 * re_prod(s.b, s.c),
        s.abs_b_sq - s.b.abs2(),
    ]
}

impl StepPolynomial {
    pub fn from_stats<S: Scalar>(s: &KurtosisStats<S>) -> Self {
        Self::from_parts(numerator_coefficients(s), [s.abs_a, 2.0 * s.d, s.abs_b])
    }

    /// Coefficients straight from the outputs, with the decorrelated form
    /// kept for evaluation.
    pub fn from_outputs<S: Scalar>(y: &[S], g: &[S]) -> Self {
        let stats = KurtosisStats::from_outputs(y, g);
        let mut sp = Self::from_stats(&stats);
        if stats.abs_a > 0.0 {
            let beta = stats.d / stats.abs_a;
            let g2: Vec<S> = y.iter().zip(g).map(|(&a, &b)| b - a.scale(beta)).collect();
            let s2 = KurtosisStats::from_outputs(y, &g2);
            // the middle denominator coefficient vanishes by construction
            let inner = Self::from_parts(numerator_coefficients(&s2), [s2.abs_a, 0.0, s2.abs_b]);
            sp.decorrelated = Some(Decorrelated {
                beta,
                numerator: inner.numerator,
                denominator: inner.denominator,
                step: inner.p.coeffs,
            });
        }
        sp
    }

    /// Assembles `p` from `P` and `Q` through the bilinear coefficient table.
    pub fn from_parts(h: [f64; 5], i: [f64; 3]) -> Self {
        let a = [
            -2.0 * h[0] * i[1] + h[1] * i[0],
            -4.0 * h[0] * i[2] - h[1] * i[1] + 2.0 * h[2] * i[0],
            -3.0 * h[1] * i[2] + 3.0 * h[3] * i[0],
            -2.0 * h[2] * i[2] + h[3] * i[1] + 4.0 * h[4] * i[0],
            -h[3] * i[2] + 2.0 * h[4] * i[1],
        ];
        Self {
            p: Quartic::new(a),
            numerator: h,
            denominator: i,
            decorrelated: None,
        }
    }

    /// `P(mu)`.
    pub fn numerator_at(&self, mu: f64) -> f64 {
        match &self.decorrelated {
            // sum_k h'_k mu^k (1 + beta mu)^(4 - k)
            Some(d) => homogeneous(&d.numerator, d.beta, mu),
            None => self.numerator.iter().rev().fold(0.0, |acc, &c| acc * mu + c),
        }
    }

    /// Step candidates: the roots of `p`, together with the roots found in
    /// the decorrelated coordinate and mapped back through
    /// `mu = nu / (1 - beta nu)`. Each form resolves the roots the other
    /// loses to cancellation (near `y + mu g = 0`, resp. near `mu = -1/beta`).
    ///
    /// Returns [`Error::ZeroPolynomial`] when `p` vanishes identically.
    pub fn roots(&self) -> Result<RootSet> {
        let i = &self.denominator;
        let direct = scaled_roots(&self.p.coeffs, i[0], i[2]);
        let Some(d) = &self.decorrelated else {
            return direct.map(RootSet::from_roots);
        };
        let mapped = match scaled_roots(&d.step, d.denominator[0], d.denominator[2]) {
            Ok(inner) => {
                let one = nalgebra::Complex::new(1.0, 0.0);
                inner.iter().map(|&nu| nu / (one - nu * d.beta)).collect()
            }
            Err(Error::ZeroPolynomial) => Vec::new(),
            Err(e) => return Err(e),
        };
        match direct {
            Ok(rs) => Ok(RootSet::from_roots(rs.into_iter().chain(mapped).collect())),
            Err(Error::ZeroPolynomial) if !mapped.is_empty() => Ok(RootSet::from_roots(mapped)),
            Err(e) => Err(e),
        }
    }

    /// `p(mu)`, the same value as `self.p.eval(mu)` up to rounding.
    pub fn step_at(&self, mu: f64) -> f64 {
        match &self.decorrelated {
            Some(d) => homogeneous(&d.step, d.beta, mu),
            None => self.p.eval(mu),
        }
    }

    /// `Q(mu)`.
    pub fn denominator_at(&self, mu: f64) -> f64 {
        match &self.decorrelated {
            Some(d) => {
                let s = 1.0 + d.beta * mu;
                d.denominator[0] * s * s + d.denominator[2] * mu * mu
            }
            None => {
                let i = &self.denominator;
                (i[2] * mu + i[1]) * mu + i[0]
            }
        }
    }

    /// `K(w + mu g)`, or `None` where the output power vanishes.
    pub fn contrast_at(&self, mu: f64) -> Option<f64> {
        let q = self.denominator_at(mu);
        // the decorrelated Q is a sum of two squares and keeps its relative
        // accuracy however small it gets; the monomial one does not
        let floor = match self.decorrelated {
            Some(_) => crate::contrast::POWER_FLOOR,
            None => crate::contrast::POWER_FLOOR.max(1e-14 * self.denominator[0]),
        };
        if !(q > floor) {
            return None;
        }
        let k = self.numerator_at(mu) / (q * q) - 2.0;
        k.is_finite().then_some(k)
    }

    /// `dK/dmu = p(mu) / Q(mu)^3`.
    pub fn slope_at(&self, mu: f64) -> f64 {
        let q = self.denominator_at(mu);
        self.step_at(mu) / (q * q * q)
    }
}

/// Step polynomial for the extractor output `y` and direction output `g_out = g^H x`.
///
/// Fewer than five samples make the statistics rank deficient; the result
/// is still defined.
pub fn os_coefficients<S: Scalar>(y: &[S], g_out: &[S]) -> StepPolynomial {
    StepPolynomial::from_outputs(y, g_out)
}

/// Which kurtosis sign an extraction is after.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SignTarget {
    /// Maximize `|K|`.
    #[default]
    Any,
    /// Maximize `K`.
    Positive,
    /// Minimize `K`.
    Negative,
}

impl SignTarget {
    pub fn score(self, k: f64) -> f64 {
        match self {
            SignTarget::Any => k.abs(),
            SignTarget::Positive => k,
            SignTarget::Negative => -k,
        }
    }

    /// Whether `k` has the requested sign.
    pub fn matches(self, k: f64) -> bool {
        match self {
            SignTarget::Any => true,
            SignTarget::Positive => k > 0.0,
            SignTarget::Negative => k < 0.0,
        }
    }
}

/// Best step among the real root candidates and `mu = 0`.
///
/// Returns `None` when every candidate lands on a vanishing output power.
pub fn select_root(sp: &StepPolynomial, candidates: &RootSet, target: SignTarget) -> Option<f64> {
    let scored: Vec<(f64, f64)> = core::iter::once(0.0)
        .chain(candidates.real_candidates.iter().copied())
        .filter_map(|mu| sp.contrast_at(mu).map(|k| (mu, k)))
        .collect();
    best_candidate(&scored, target)
}

/// Argmax of the target score over `(mu, K(mu))` pairs, ties going to the
/// smaller `|mu|`.
pub fn best_candidate(scored: &[(f64, f64)], target: SignTarget) -> Option<f64> {
    let mut order: Vec<&(f64, f64)> = scored.iter().collect();
    order.sort_by(|a, b| a.0.abs().total_cmp(&b.0.abs()));
    let mut best: Option<(f64, f64)> = None;
    for &&(mu, k) in &order {
        let score = target.score(k);
        match best {
            Some((_, incumbent)) if score <= incumbent + TIE_TOLERANCE * incumbent.abs().max(1.0) => {}
            _ => best = Some((mu, score)),
        }
    }
    best.map(|(mu, _)| mu)
}

/// A gradient (after projection, if any) smaller than this fraction of its
/// leading term is rounding noise and counts as zero.
pub const GRADIENT_FLOOR: f64 = 1e-10;

/// How an extraction decides to stop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    /// Stop once `|1 - |w^H w+|| < eta / T`, or at `max_iterations`.
    Tolerance { eta: f64 },
    /// Run exactly `max_iterations` updates.
    FixedIterations,
}

/// Starting point for each extraction in a deflation sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitPolicy {
    /// `e_k` for the k-th extraction.
    #[default]
    Canonical,
    /// Seeded random unit vector.
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionConfig {
    pub max_iterations: usize,
    pub termination: Termination,
    pub sign_target: SignTarget,
    pub normalize_gradient: bool,
    pub init: InitPolicy,
}

/// Default `eta` of the stopping rule.
pub const DEFAULT_ETA: f64 = 0.5e-6;

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            termination: Termination::Tolerance { eta: DEFAULT_ETA },
            sign_target: SignTarget::Any,
            normalize_gradient: true,
            init: InitPolicy::Canonical,
        }
    }
}

impl ExtractionConfig {
    /// Runs exactly `iterations` updates per source.
    pub fn fixed(iterations: usize) -> Self {
        Self {
            max_iterations: iterations,
            termination: Termination::FixedIterations,
            ..Self::default()
        }
    }

    pub fn validate(&self, samples: usize) -> Result<()> {
        if self.max_iterations == 0 && self.termination != Termination::FixedIterations {
            return Err(Error::Config("max_iterations must be positive"));
        }
        if let Termination::Tolerance { eta } = self.termination {
            if !(eta > 0.0 && eta < 1.0) {
                return Err(Error::Config("eta must lie in (0, 1)"));
            }
            if eta / samples as f64 >= 1.0 {
                return Err(Error::Config("eta / T must be below 1"));
            }
        }
        Ok(())
    }

    /// `eps` of the stopping rule for a block of `samples` samples.
    pub fn tolerance(&self, samples: usize) -> Option<f64> {
        match self.termination {
            Termination::Tolerance { eta } => Some(eta / samples as f64),
            Termination::FixedIterations => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIterations,
    Degenerate,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::Converged => "converged",
            StopReason::MaxIterations => "max_iterations",
            StopReason::Degenerate => "degenerate",
        }
    }
}

/// Trace of one extraction.
///
/// `iterations` counts updates. When the stopping rule fires, the pass that
/// only confirmed the previous solution is not counted; `passes` counts
/// every pass through the loop.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionReport<S: Scalar> {
    pub final_w: DVector<S>,
    pub iterations: usize,
    pub passes: usize,
    /// Kurtosis at the starting point followed by one value per pass.
    pub contrast_trajectory: Vec<f64>,
    /// Chosen step per pass (`0` for fixed-point baselines).
    pub mu_trajectory: Vec<f64>,
    pub stop_reason: StopReason,
    pub flops: u64,
    /// Targeted extraction ended on a kurtosis of the wrong sign.
    pub sign_mismatch: bool,
}

impl<S: Scalar> ExtractionReport<S> {
    pub fn final_kurtosis(&self) -> Option<f64> {
        self.contrast_trajectory.last().copied()
    }

    /// Largest decrease of the target score between consecutive entries of
    /// the contrast trajectory (zero or negative for a monotone ascent).
    pub fn worst_descent(&self, target: SignTarget) -> f64 {
        self.contrast_trajectory
            .windows(2)
            .map(|w| target.score(w[0]) - target.score(w[1]))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Extracts one source from `x` starting at `w0`.
pub fn extract_one<S: Scalar>(
    x: &SignalBlock<S>,
    w0: &DVector<S>,
    cfg: &ExtractionConfig,
) -> Result<ExtractionReport<S>> {
    extract_constrained(x, w0, cfg, None)
}

/// [`extract_one`] restricted to the orthogonal complement of the
/// orthonormal columns of `constraint`.
///
/// The search direction is projected onto the complement before the line
/// search, so every candidate on the line satisfies the constraint and the
/// contrast still ascends monotonically. The orthogonalization step after
/// the update then only removes rounding drift.
pub fn extract_constrained<S: Scalar>(
    x: &SignalBlock<S>,
    w0: &DVector<S>,
    cfg: &ExtractionConfig,
    constraint: Option<&DMatrix<S>>,
) -> Result<ExtractionReport<S>> {
    check_vector(w0, x)?;
    cfg.validate(x.samples())?;
    let data = x.matrix();
    let tolerance = cfg.tolerance(x.samples());
    let per_iteration = metrics::flops_per_iteration(Algorithm::RobustIca, S::REGIME, x.channels(), x.samples());

    let mut w = match constraint {
        Some(basis) => project_out(w0, basis)?,
        None => w0.clone(),
    };
    if !(norm(&w) > 0.0) {
        return Err(Error::DegenerateDirection { residual: norm(&w) });
    }
    w = signal::normalized(&w);
    let mut y = output_unchecked(&w, data);
    let mut stats = ContrastValue::from_output(&y)?;

    let mut report = ExtractionReport {
        final_w: w.clone(),
        iterations: 0,
        passes: 0,
        contrast_trajectory: alloc::vec![stats.kurtosis],
        mu_trajectory: Vec::new(),
        stop_reason: StopReason::MaxIterations,
        flops: 0,
        sign_mismatch: false,
    };

    while report.passes < cfg.max_iterations {
        report.passes += 1;
        let (mut grad, leading) = kurtosis_gradient_from_output(&y, &stats, data);
        if let Some(basis) = constraint {
            grad -= basis * (basis.adjoint() * &grad);
        }
        let gnorm = norm(&grad);
        if !gnorm.is_finite() {
            report.stop_reason = StopReason::Degenerate;
            break;
        }
        // e.g. a one-dimensional complement, or a rank-one residual block
        // after regression deflation
        let step = if gnorm == 0.0 || gnorm <= GRADIENT_FLOOR * leading {
            // stationary point: the update is the identity
            None
        } else {
            let g = if cfg.normalize_gradient {
                grad.scale(1.0 / gnorm)
            } else {
                grad
            };
            let g_out = output_unchecked(&g, data);
            let sp = os_coefficients(&y, &g_out);
            let roots = match sp.roots() {
                Ok(r) => r,
                Err(Error::ZeroPolynomial) => RootSet::default(),
                Err(e) => return Err(e),
            };
            match select_root(&sp, &roots, cfg.sign_target) {
                Some(mu) => Some((mu, g)),
                None => {
                    report.stop_reason = StopReason::Degenerate;
                    break;
                }
            }
        };

        let (mu, w_next) = match step {
            None => (0.0, w.clone()),
            Some((mu, g)) => {
                let mut next = &w + g.scale(mu);
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
                (mu, next.scale(1.0 / n))
            }
        };
        let y_next = output_unchecked(&w_next, data);
        let stats_next = match ContrastValue::from_output(&y_next) {
            Ok(s) => s,
            Err(_) => {
                report.stop_reason = StopReason::Degenerate;
                break;
            }
        };
        let change = (1.0 - inner(&w, &w_next).modulus()).abs();
        w = w_next;
        y = y_next;
        stats = stats_next;
        report.contrast_trajectory.push(stats.kurtosis);
        report.mu_trajectory.push(mu);

        if tolerance.is_some_and(|eps| change < eps) {
            report.stop_reason = StopReason::Converged;
            break;
        }
        report.iterations += 1;
    }

    report.final_w = w;
    report.flops = per_iteration * report.iterations as u64;
    report.sign_mismatch = !cfg.sign_target.matches(stats.kurtosis);
    Ok(report)
}
