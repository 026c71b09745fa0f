//! Seeded synthetic scenarios: unit-power independent sources and random
//! mixing matrices.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::scalar::{Regime, Scalar};
use crate::signal::{mix, MixingModel, SignalBlock};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SourceKind {
    /// Uniform on `[-sqrt(3), sqrt(3)]`; in the complex regime real and
    /// imaginary parts are independent uniforms of power 1/2 each.
    Uniform,
    /// `+-1` symbols. Embedded in the complex regime this is the
    /// non-circular reference source.
    Bpsk,
    /// Circular 4-QAM, `(+-1 +- j)/sqrt(2)`. Complex regime only.
    Qam4,
}

impl SourceKind {
    pub fn name(self) -> &'static str {
        match self {
            SourceKind::Uniform => "uniform",
            SourceKind::Bpsk => "bpsk",
            SourceKind::Qam4 => "qam4",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "uniform" => Some(SourceKind::Uniform),
            "bpsk" => Some(SourceKind::Bpsk),
            "qam4" => Some(SourceKind::Qam4),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MixingKind {
    Identity,
    /// Planar rotation of the first two coordinates; the angle is drawn
    /// uniformly on `[0, 2 pi)` when not given.
    Givens {
        angle: Option<f64>,
    },
    /// Real orthogonal columns, also in the complex regime.
    Orthogonal,
    /// Unitary columns; same as `Orthogonal` for real scalars.
    Unitary,
    /// I.i.d. Gaussian entries of unit variance.
    General,
}

impl MixingKind {
    pub fn name(self) -> &'static str {
        match self {
            MixingKind::Identity => "identity",
            MixingKind::Givens { .. } => "givens",
            MixingKind::Orthogonal => "orthogonal",
            MixingKind::Unitary => "unitary",
            MixingKind::General => "general",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "identity" => Some(MixingKind::Identity),
            "givens" => Some(MixingKind::Givens { angle: None }),
            "orthogonal" => Some(MixingKind::Orthogonal),
            "unitary" => Some(MixingKind::Unitary),
            "general" => Some(MixingKind::General),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub regime: Regime,
    pub source: SourceKind,
    pub mixing: MixingKind,
    pub sources: usize,
    pub sensors: usize,
    pub samples: usize,
    /// Noiseless when `None`.
    pub snr_db: Option<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("scenario needs at least one trial"));
        }
        if self.sources == 0 || self.samples == 0 {
            return Err(Error::Config("scenario needs at least one source and one sample"));
        }
        if self.sources > self.sensors {
            return Err(Error::Config("more sources than sensors"));
        }
        if self.source == SourceKind::Qam4 && self.regime == Regime::Real {
            return Err(Error::Config("4-QAM sources need the complex regime"));
        }
        if matches!(self.mixing, MixingKind::Givens { .. }) && (self.sources != 2 || self.sensors != 2) {
            return Err(Error::Config(
                "Givens mixing is defined for two sources and two sensors",
            ));
        }
        if matches!(self.mixing, MixingKind::Identity) && self.sources != self.sensors {
            return Err(Error::Config("identity mixing needs as many sensors as sources"));
        }
        if self.snr_db.is_some_and(|v| !v.is_finite()) {
            return Err(Error::Config("SNR must be finite"));
        }
        Ok(())
    }

    /// Per-sensor noise power `1 / SNR`.
    pub fn noise_power(&self) -> f64 {
        self.snr_db.map_or(0.0, |db| libm::pow(10.0, -db / 10.0))
    }

    fn trial_seed(&self, trial: usize) -> u64 {
        // splitmix64 finalizer keeps neighbouring trials apart
        let mut z = self.seed ^ (trial as u64).wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
}

/// One realization of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial<S: Scalar> {
    pub sources: SignalBlock<S>,
    pub model: MixingModel<S>,
    pub observations: SignalBlock<S>,
    /// Givens angle, when the scenario uses one.
    pub angle: Option<f64>,
    pub seed: u64,
}

/// Sources and mixing model of trial `trial`.
pub fn generate<S: Scalar>(sc: &Scenario, trial: usize) -> Result<(SignalBlock<S>, MixingModel<S>)> {
    let t = realize::<S>(sc, trial)?;
    Ok((t.sources, t.model))
}

/// Full realization including the noisy observations.
pub fn realize<S: Scalar>(sc: &Scenario, trial: usize) -> Result<Trial<S>> {
    sc.validate()?;
    if S::REGIME != sc.regime {
        return Err(Error::Config("scalar type does not match the scenario regime"));
    }
    if trial >= sc.trials {
        return Err(Error::Config("trial index beyond the scenario trial count"));
    }
    let seed = sc.trial_seed(trial);
    let mut src_rng = rng::stream(seed, 1);
    let mut mix_rng = rng::stream(seed, 2);
    let rows: Vec<Vec<S>> = (0..sc.sources)
        .map(|_| (0..sc.samples).map(|_| draw_symbol(sc.source, &mut src_rng)).collect())
        .collect();
    let sources = SignalBlock::from_rows(&rows)?;
    let (h, angle) = mixing_matrix::<S>(sc, &mut mix_rng)?;
    let model = MixingModel::new(h, sc.noise_power())?;
    let observations = mix(&model, &sources, seed)?;
    Ok(Trial {
        sources,
        model,
        observations,
        angle,
        seed,
    })
}

fn draw_symbol<S: Scalar>(kind: SourceKind, rng: &mut Rng) -> S {
    let sign = |rng: &mut Rng| if rng.random::<bool>() { 1.0 } else { -1.0 };
    match (kind, S::REGIME) {
        (SourceKind::Uniform, Regime::Real) => S::from_re(rng.random_range(-1.0..1.0) * libm::sqrt(3.0)),
        (SourceKind::Uniform, Regime::Complex) => {
            let r = libm::sqrt(1.5);
            S::from_parts(rng.random_range(-r..r), rng.random_range(-r..r))
        }
        (SourceKind::Bpsk, _) => S::from_re(sign(rng)),
        (SourceKind::Qam4, _) => {
            let h = core::f64::consts::FRAC_1_SQRT_2;
            S::from_parts(h * sign(rng), h * sign(rng))
        }
    }
}

/// Planar rotation `[[cos, -sin], [sin, cos]]`.
pub fn givens<S: Scalar>(angle: f64) -> DMatrix<S> {
    let (s, c) = (libm::sin(angle), libm::cos(angle));
    DMatrix::from_row_slice(2, 2, &[S::from_re(c), S::from_re(-s), S::from_re(s), S::from_re(c)])
}

fn mixing_matrix<S: Scalar>(sc: &Scenario, rng: &mut Rng) -> Result<(DMatrix<S>, Option<f64>)> {
    let (l, k) = (sc.sensors, sc.sources);
    Ok(match sc.mixing {
        MixingKind::Identity => (DMatrix::identity(l, k), None),
        MixingKind::Givens { angle } => {
            let theta = angle.unwrap_or_else(|| rng.random_range(0.0..core::f64::consts::TAU));
            (givens(theta), Some(theta))
        }
        MixingKind::Orthogonal => {
            let g = DMatrix::from_fn(l, k, |_, _| S::from_re(rng::gaussian::<f64>(rng, 1.0)));
            (orthonormal_columns(g), None)
        }
        MixingKind::Unitary => {
            let g = DMatrix::from_fn(l, k, |_, _| rng::gaussian::<S>(rng, 1.0));
            (orthonormal_columns(g), None)
        }
        MixingKind::General => (DMatrix::from_fn(l, k, |_, _| rng::gaussian::<S>(rng, 1.0)), None),
    })
}

/// Q factor of a Gaussian matrix with the phases of `diag(R)` moved into Q,
/// which makes the draw Haar distributed.
pub fn orthonormal_columns<S: Scalar>(g: DMatrix<S>) -> DMatrix<S> {
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..q.ncols() {
        let d = r[(j, j)];
        let m = libm::sqrt(d.abs2());
        if m > 0.0 {
            let phase = d.scale(1.0 / m);
            for i in 0..q.nrows() {
                q[(i, j)] *= phase;
            }
        }
    }
    q
}
