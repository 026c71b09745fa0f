//! Multi-source extraction: prewhitening, deflationary orthogonalization
//! and regression deflation.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::baselines::{self, BaselineKind};
use crate::contrast::POWER_FLOOR;
use crate::error::{Error, Result};
use crate::metrics::{self, Algorithm, FlopLedger};
use crate::rng;
use crate::robustica::{self, ExtractionConfig, ExtractionReport, InitPolicy, SignTarget};
use crate::scalar::Scalar;
use crate::signal::{basis_vector, mean_real, norm, normalized, output_unchecked, SignalBlock};

/// Residual norms below this (relative to the input norm) mean the vector
/// lies in the span of the previous extracting vectors.
pub const SPAN_TOLERANCE: f64 = 1e-12;

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Random restarts tried when a starting vector falls inside the span of
/// previous solutions.
pub const MAX_RESTARTS: usize = 3;

/// Linear map to coordinates with identity sample covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Prewhitener<S: Scalar> {
    /// `K x L`
    pub transform: DMatrix<S>,
    /// `L x K`, `reverse * transform` is the projector onto the retained subspace.
    pub reverse: DMatrix<S>,
}

impl<S: Scalar> Prewhitener<S> {
    pub fn dimension(&self) -> usize {
        self.transform.nrows()
    }

    pub fn apply(&self, x: &SignalBlock<S>) -> Result<SignalBlock<S>> {
        if x.channels() != self.transform.ncols() {
            return Err(Error::Shape {
                what: "block to whiten",
                expected_rows: self.transform.ncols(),
                expected_cols: x.samples(),
                rows: x.channels(),
                cols: x.samples(),
            });
        }
        SignalBlock::new(&self.transform * x.matrix())
    }
}

/// Whitens `x` to `k` dimensions through the economy SVD of the data matrix.
pub fn prewhiten<S: Scalar>(x: &SignalBlock<S>, k: usize) -> Result<(Prewhitener<S>, SignalBlock<S>)> {
    let l = x.channels();
    if k == 0 || k > l {
        return Err(Error::Config("whitening dimension must lie in 1..=channels"));
    }
    let t = x.samples() as f64;
    let svd = x.matrix().clone().svd(true, false);
    let u = svd
        .u
        .as_ref()
        .ok_or(Error::Config("SVD did not return left singular vectors"))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let top = order.first().map_or(0.0, |&i| svd.singular_values[i]);
    let rank = order
        .iter()
        .filter(|&&i| svd.singular_values[i] > RANK_TOLERANCE * top)
        .count();
    if top == 0.0 || rank < k {
        return Err(Error::RankDeficient { requested: k, rank });
    }
    let root_t = libm::sqrt(t);
    let mut transform = DMatrix::from_element(k, l, S::zero());
    let mut reverse = DMatrix::from_element(l, k, S::zero());
    for (row, &i) in order.iter().take(k).enumerate() {
        // covariance eigenvalue is sigma^2 / T
        let sd = svd.singular_values[i] / root_t;
        for c in 0..l {
            let ui = u[(c, i)];
            transform[(row, c)] = ui.conj().scale(1.0 / sd);
            reverse[(c, row)] = ui.scale(sd);
        }
    }
    let pw = Prewhitener { transform, reverse };
    let z = pw.apply(x)?;
    Ok((pw, z))
}

/// `w - W W^H w`, without normalization.
///
/// Fails when the residual is negligible, i.e. `w` already lies in the span
/// of the columns of `basis`.
pub fn orthogonalize<S: Scalar>(w: &DVector<S>, basis: &DMatrix<S>) -> Result<DVector<S>> {
    project_out(w, basis)
}

pub(crate) fn project_out<S: Scalar>(w: &DVector<S>, basis: &DMatrix<S>) -> Result<DVector<S>> {
    if basis.ncols() == 0 {
        return Ok(w.clone());
    }
    let out = w - basis * (basis.adjoint() * w);
    let residual = norm(&out);
    if !(residual > SPAN_TOLERANCE * norm(w)) {
        return Err(Error::DegenerateDirection { residual });
    }
    Ok(out)
}

/// Removes the least-squares contribution of `s_hat` from every channel.
///
/// Returns the per-channel regression coefficients `E{x s^*} / E{|s|^2}`
/// and the deflated block.
pub fn regress_deflate<S: Scalar>(x: &SignalBlock<S>, s_hat: &[S]) -> Result<(DVector<S>, SignalBlock<S>)> {
    if s_hat.len() != x.samples() {
        return Err(Error::Shape {
            what: "source estimate",
            expected_rows: 1,
            expected_cols: x.samples(),
            rows: 1,
            cols: s_hat.len(),
        });
    }
    let h = regression_column(x.matrix(), s_hat)?;
    let s_row = DMatrix::from_row_slice(1, s_hat.len(), s_hat);
    let residual = x.matrix() - &h * s_row;
    Ok((h, SignalBlock::new(residual)?))
}

fn regression_column<S: Scalar>(x: &DMatrix<S>, s_hat: &[S]) -> Result<DVector<S>> {
    let power = mean_real(s_hat, |v| v.abs2());
    if !(power > POWER_FLOOR) {
        return Err(Error::ZeroPowerEstimate);
    }
    let cross = crate::contrast::weighted_mean(x, s_hat.iter().map(|v| v.conj()));
    Ok(cross.scale(1.0 / power))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeflationMode {
    /// Keep each new extracting vector orthogonal to the previous ones.
    #[default]
    Orthogonalization,
    /// Subtract each estimated source from the observations.
    Regression,
}

/// What is known about the second-order structure of the observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Whitening {
    /// Raw observations.
    #[default]
    None,
    /// Whiten first, to `dimension` components (all channels when `None`).
    Prewhiten { dimension: Option<usize> },
    /// The caller vouches that the observations are already white, e.g. a
    /// unitary mixture of unit-power sources.
    AssumeWhite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationConfig {
    pub algorithm: Algorithm,
    pub deflation: DeflationMode,
    pub whitening: Whitening,
    pub extraction: ExtractionConfig,
    /// Number of sources to extract; defaults to the working dimension.
    pub sources: Option<usize>,
    /// Kurtosis sign targeted by the k-th extraction; missing entries use
    /// `extraction.sign_target`.
    pub sign_schedule: Vec<SignTarget>,
}

impl Default for SeparationConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::RobustIca,
            deflation: DeflationMode::Orthogonalization,
            whitening: Whitening::None,
            extraction: ExtractionConfig::default(),
            sources: None,
            sign_schedule: Vec::new(),
        }
    }
}

impl SeparationConfig {
    fn check_pairing(&self) -> Result<()> {
        if let Algorithm::Baseline(_) = self.algorithm {
            if self.whitening == Whitening::None {
                return Err(Error::Config(
                    "FastICA-family baselines need prewhitened (or explicitly assumed white) observations",
                ));
            }
            if self.deflation != DeflationMode::Orthogonalization {
                return Err(Error::Config("FastICA-family baselines deflate by orthogonalization"));
            }
        }
        Ok(())
    }
}

/// Result of a full deflationary separation.
#[derive(Debug, Clone, PartialEq)]
pub struct Separation<S: Scalar> {
    pub reports: Vec<ExtractionReport<S>>,
    /// Source estimates, one row per extraction.
    pub sources: SignalBlock<S>,
    /// Regression of the observations onto each estimate (mixing columns).
    pub mixing_estimates: Vec<DVector<S>>,
    /// Extracting vectors in observation coordinates (`s_k = w_k^H x`).
    pub extracting_vectors: Vec<DVector<S>>,
    pub prewhitener: Option<Prewhitener<S>>,
    pub ledger: FlopLedger,
}

/// Extracts sources one after another.
pub fn extract_all<S: Scalar>(x: &SignalBlock<S>, cfg: &SeparationConfig) -> Result<Separation<S>> {
    cfg.check_pairing()?;
    if let Algorithm::Baseline(kind) = cfg.algorithm {
        kind.check_regime(S::REGIME)?;
    }
    let (prewhitener, z) = match cfg.whitening {
        Whitening::Prewhiten { dimension } => {
            let (pw, z) = prewhiten(x, dimension.unwrap_or(x.channels()))?;
            (Some(pw), z)
        }
        Whitening::None | Whitening::AssumeWhite => (None, x.clone()),
    };
    let dim = z.channels();
    let count = cfg.sources.unwrap_or(dim);
    if count == 0 || count > dim {
        return Err(Error::Config("number of sources must lie in 1..=working dimension"));
    }
    let pseudo_cov = match cfg.algorithm {
        Algorithm::Baseline(BaselineKind::NcFastIca) => Some(z.pseudo_covariance()),
        _ => None,
    };

    let mut reports = Vec::with_capacity(count);
    let mut working_w: Vec<DVector<S>> = Vec::with_capacity(count);
    let mut estimates: Vec<Vec<S>> = Vec::with_capacity(count);
    let mut residual = z.clone();

    for k in 0..count {
        let mut ecfg = cfg.extraction.clone();
        if let Some(&target) = cfg.sign_schedule.get(k) {
            ecfg.sign_target = target;
        }
        let basis = match cfg.deflation {
            DeflationMode::Orthogonalization => Some(columns(&working_w, dim)),
            DeflationMode::Regression => None,
        };
        let block = match cfg.deflation {
            DeflationMode::Orthogonalization => &z,
            DeflationMode::Regression => &residual,
        };
        let report = run_with_restarts(block, k, &ecfg, cfg.algorithm, basis.as_ref(), pseudo_cov.as_ref())?;
        let s_hat = output_unchecked(&report.final_w, block.matrix());
        if cfg.deflation == DeflationMode::Regression {
            residual = regress_deflate(&residual, &s_hat)?.1;
        }
        working_w.push(report.final_w.clone());
        estimates.push(s_hat);
        reports.push(report);
    }

    let sources = SignalBlock::from_rows(&estimates)?;
    let mixing_estimates = estimates
        .iter()
        .map(|s| regression_column(x.matrix(), s))
        .collect::<Result<Vec<_>>>()?;
    // s = w^H z = w^H T x  =>  observation-space vector T^H w
    let extracting_vectors = working_w
        .iter()
        .map(|w| match &prewhitener {
            Some(pw) => pw.transform.adjoint() * w,
            None => w.clone(),
        })
        .collect();

    let iterations: Vec<usize> = reports.iter().map(|r| r.iterations).collect();
    let ledger = metrics::ledger(
        cfg.algorithm,
        S::REGIME,
        dim,
        x.samples(),
        &iterations,
        prewhitener.as_ref().map(Prewhitener::dimension),
    );

    Ok(Separation {
        reports,
        sources,
        mixing_estimates,
        extracting_vectors,
        prewhitener,
        ledger,
    })
}

fn columns<S: Scalar>(vectors: &[DVector<S>], dim: usize) -> DMatrix<S> {
    if vectors.is_empty() {
        DMatrix::from_element(dim, 0, S::zero())
    } else {
        DMatrix::from_columns(vectors)
    }
}

fn run_with_restarts<S: Scalar>(
    block: &SignalBlock<S>,
    k: usize,
    cfg: &ExtractionConfig,
    algorithm: Algorithm,
    basis: Option<&DMatrix<S>>,
    pseudo_cov: Option<&DMatrix<S>>,
) -> Result<ExtractionReport<S>> {
    let dim = block.channels();
    let mut restart_rng = rng::stream(restart_seed(cfg.init), k as u64);
    let mut w0 = match cfg.init {
        InitPolicy::Canonical => basis_vector(dim, k % dim),
        InitPolicy::Random { seed } => random_unit(&mut rng::stream(seed, 1 << 32 | k as u64), dim),
    };
    let mut attempt = 0;
    loop {
        let result = match algorithm {
            Algorithm::RobustIca => robustica::extract_constrained(block, &w0, cfg, basis),
            Algorithm::Baseline(kind) => baselines::run(kind, block, &w0, cfg, basis, pseudo_cov),
        };
        match result {
            Err(Error::DegenerateDirection { .. } | Error::DegenerateContrast { .. }) if attempt < MAX_RESTARTS => {
                attempt += 1;
                let mut v = random_unit(&mut restart_rng, dim);
                if let Some(b) = basis {
                    if let Ok(p) = project_out(&v, b) {
                        v = normalized(&p);
                    }
                }
                w0 = v;
            }
            other => return other,
        }
    }
}

fn restart_seed(init: InitPolicy) -> u64 {
    match init {
        InitPolicy::Canonical => 0x5eed_0fde_f1a7,
        InitPolicy::Random { seed } => seed ^ 0x9e37_79b9_7f4a_7c15,
    }
}

/// Gaussian draw normalized to the unit sphere.
pub fn random_unit<S: Scalar>(rng: &mut rng::Rng, dim: usize) -> DVector<S> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng::gaussian::<S>(rng, 1.0));
        if norm(&v) > 1e-8 {
            return normalized(&v);
        }
    }
}
