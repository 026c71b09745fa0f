//! Multichannel signal blocks, the instantaneous mixing model and the
//! sample-mean estimator shared by every algorithm.
//!
//! Blocks are stored channels x samples: column `t` is the observation
//! vector at time `t`, row `k` is the realization of channel `k`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

/// An `L x T` block of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalBlock<S: Scalar> {
    data: DMatrix<S>,
}

impl<S: Scalar> SignalBlock<S> {
    pub fn new(data: DMatrix<S>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::EmptyBlock {
                channels: data.nrows(),
                samples: data.ncols(),
            });
        }
        Ok(Self { data })
    }

    /// Builds a block from one vector per channel.
    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let channels = rows.len();
        let samples = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != samples) {
            return Err(Error::Shape {
                what: "channel length",
                expected_rows: 1,
                expected_cols: samples,
                rows: 1,
                cols: bad.len(),
            });
        }
        Self::new(DMatrix::from_fn(channels, samples, |k, t| rows[k][t]))
    }

    pub fn channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<S> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<S> {
        self.data
    }

    pub fn row(&self, k: usize) -> Vec<S> {
        self.data.row(k).iter().copied().collect()
    }

    /// Removes the sample mean of every channel.
    ///
    /// Nothing in the library centers implicitly; synthetic sources are
    /// zero-mean by construction. Use this on external recordings.
    pub fn centered(&self) -> Self {
        let mut data = self.data.clone();
        let inv_t = 1.0 / self.samples() as f64;
        for mut row in data.row_iter_mut() {
            let mean = row.iter().fold(S::zero(), |acc, &v| acc + v).scale(inv_t);
            row.iter_mut().for_each(|v| *v -= mean);
        }
        Self { data }
    }

    /// Sample covariance `E{x x^H}`.
    pub fn covariance(&self) -> DMatrix<S> {
        (&self.data * self.data.adjoint()).scale(1.0 / self.samples() as f64)
    }

    /// Sample pseudo-covariance `E{x x^T}`.
    pub fn pseudo_covariance(&self) -> DMatrix<S> {
        (&self.data * self.data.transpose()).scale(1.0 / self.samples() as f64)
    }
}

/// `x = H s + n` with isotropic white noise of power `noise_power` per sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingModel<S: Scalar> {
    pub mixing: DMatrix<S>,
    pub noise_power: f64,
}

impl<S: Scalar> MixingModel<S> {
    pub fn new(mixing: DMatrix<S>, noise_power: f64) -> Result<Self> {
        if mixing.ncols() > mixing.nrows() {
            return Err(Error::Config(
                "mixing matrix must have at least as many sensors as sources",
            ));
        }
        if !(noise_power >= 0.0) {
            return Err(Error::Config("noise power must be nonnegative"));
        }
        Ok(Self { mixing, noise_power })
    }

    pub fn sensors(&self) -> usize {
        self.mixing.nrows()
    }

    pub fn sources(&self) -> usize {
        self.mixing.ncols()
    }
}

/// Mixes `sources` through `model`, drawing noise deterministically from `rng_seed`.
pub fn mix<S: Scalar>(model: &MixingModel<S>, sources: &SignalBlock<S>, rng_seed: u64) -> Result<SignalBlock<S>> {
    if sources.channels() != model.sources() {
        return Err(Error::Shape {
            what: "source block",
            expected_rows: model.sources(),
            expected_cols: sources.samples(),
            rows: sources.channels(),
            cols: sources.samples(),
        });
    }
    let mut x = &model.mixing * sources.matrix();
    if model.noise_power > 0.0 {
        let mut rng = rng::stream(rng_seed, 0);
        // column-major fill: sample by sample
        for v in x.iter_mut() {
            *v += rng::gaussian::<S>(&mut rng, model.noise_power);
        }
    }
    SignalBlock::new(x)
}

/// Arithmetic mean of a nonempty sequence.
pub fn sample_mean<S: Scalar>(values: &[S]) -> S {
    debug_assert!(!values.is_empty());
    values
        .iter()
        .fold(S::zero(), |acc, &v| acc + v)
        .scale(1.0 / values.len() as f64)
}

/// Arithmetic mean of `f` over a nonempty sequence.
pub fn sample_mean_by<T, S: Scalar>(values: &[T], f: impl Fn(&T) -> S) -> S {
    debug_assert!(!values.is_empty());
    values
        .iter()
        .fold(S::zero(), |acc, v| acc + f(v))
        .scale(1.0 / values.len() as f64)
}

/// Mean of a real-valued functional.
pub(crate) fn mean_real<T>(values: &[T], f: impl Fn(&T) -> f64) -> f64 {
    values.iter().map(f).sum::<f64>() / values.len() as f64
}

/// Extractor output `y_t = w^H x_t`.
pub fn extractor_output<S: Scalar>(w: &DVector<S>, x: &SignalBlock<S>) -> Result<Vec<S>> {
    check_vector(w, x)?;
    Ok(output_unchecked(w, x.matrix()))
}

pub(crate) fn output_unchecked<S: Scalar>(w: &DVector<S>, x: &DMatrix<S>) -> Vec<S> {
    let wc = w.map(Scalar::conj);
    x.tr_mul(&wc).iter().copied().collect()
}

pub(crate) fn check_vector<S: Scalar>(w: &DVector<S>, x: &SignalBlock<S>) -> Result<()> {
    if w.len() != x.channels() {
        return Err(Error::Shape {
            what: "extraction vector",
            expected_rows: x.channels(),
            expected_cols: 1,
            rows: w.len(),
            cols: 1,
        });
    }
    Ok(())
}

/// Euclidean norm.
pub fn norm<S: Scalar>(v: &DVector<S>) -> f64 {
    libm::sqrt(v.iter().map(|c| c.abs2()).sum())
}

/// `v / ||v||`.
pub fn normalized<S: Scalar>(v: &DVector<S>) -> DVector<S> {
    let n = norm(v);
    v.map(|c| c.scale(1.0 / n))
}

/// `v^H u`.
pub fn inner<S: Scalar>(v: &DVector<S>, u: &DVector<S>) -> S {
    v.iter()
        .zip(u.iter())
        .fold(S::zero(), |acc, (&a, &b)| acc + a.conj() * b)
}

/// Canonical basis vector `e_k` of length `len`.
pub fn basis_vector<S: Scalar>(len: usize, k: usize) -> DVector<S> {
    let mut e = DVector::from_element(len, S::zero());
    e[k] = S::one();
    e
}
