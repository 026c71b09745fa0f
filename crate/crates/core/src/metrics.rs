//! Separation quality (SMSE with greedy pairing), flop accounting and
//! circularity.

use alloc::vec::Vec;

use crate::baselines::BaselineKind;
use crate::error::{Error, Result};
use crate::scalar::{Regime, Scalar};
use crate::signal::{mean_real, SignalBlock};

/// SMSE values are clamped to this many dB from below.
pub const SMSE_FLOOR_DB: f64 = -300.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    RobustIca,
    Baseline(BaselineKind),
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::RobustIca => "robustica",
            Algorithm::Baseline(kind) => kind.name(),
        }
    }
}

/// Flop cost of one iteration of `algorithm` on `l` channels and `t` samples.
pub fn flops_per_iteration(algorithm: Algorithm, regime: Regime, l: usize, t: usize) -> u64 {
    let (l, t) = (l as u64, t as u64);
    let per_sample = match (algorithm, regime) {
        (Algorithm::RobustIca, Regime::Real) => 5 * l + 12,
        (Algorithm::RobustIca, Regime::Complex) => 18 * l + 22,
        (Algorithm::Baseline(BaselineKind::KmFixedPoint), _) => 14 * l + 5,
        (Algorithm::Baseline(_), Regime::Real) => 2 * l + 2,
        (Algorithm::Baseline(_), Regime::Complex) => 8 * l + 4,
    };
    per_sample * t
}

/// One-off cost charged before the first iteration (the pseudo-covariance
/// of nc-FastICA).
pub fn setup_flops(algorithm: Algorithm, l: usize, t: usize) -> u64 {
    let (l, t) = (l as u64, t as u64);
    match algorithm {
        Algorithm::Baseline(BaselineKind::NcFastIca) => l * (2 * l + 1) * t,
        _ => 0,
    }
}

/// Cost of whitening `t` samples down to `k` components.
pub fn prewhitening_flops(regime: Regime, k: usize, t: usize) -> u64 {
    let (k, t) = (k as u64, t as u64);
    match regime {
        Regime::Real => 2 * k * k * t,
        Regime::Complex => 8 * k * k * t,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FlopLedger {
    pub per_iteration: u64,
    /// Iteration cost for each extracted source.
    pub per_source: Vec<u64>,
    /// Prewhitening plus one-off setup costs.
    pub surcharge: u64,
    pub total: u64,
}

impl FlopLedger {
    /// Mean iteration cost per source, surcharge excluded.
    pub fn mean_per_source(&self) -> f64 {
        if self.per_source.is_empty() {
            return 0.0;
        }
        self.per_source.iter().sum::<u64>() as f64 / self.per_source.len() as f64
    }
}

/// Ledger for a separation whose `s`-th extraction ran `iterations[s]`
/// iterations in dimension `l`.
pub fn ledger(
    algorithm: Algorithm,
    regime: Regime,
    l: usize,
    t: usize,
    iterations: &[usize],
    prewhitened_to: Option<usize>,
) -> FlopLedger {
    let per_iteration = flops_per_iteration(algorithm, regime, l, t);
    let per_source: Vec<u64> = iterations.iter().map(|&n| per_iteration * n as u64).collect();
    let surcharge = setup_flops(algorithm, l, t) + prewhitened_to.map_or(0, |k| prewhitening_flops(regime, k, t));
    let total = per_source.iter().sum::<u64>() + surcharge;
    FlopLedger {
        per_iteration,
        per_source,
        surcharge,
        total,
    }
}

/// Ledger for `k` sources each taking `iterations` iterations.
pub fn flops_for(
    algorithm: Algorithm,
    regime: Regime,
    l: usize,
    t: usize,
    iterations: usize,
    prewhitened: bool,
    k: usize,
) -> FlopLedger {
    let counts = alloc::vec![iterations; k];
    ledger(algorithm, regime, l, t, &counts, prewhitened.then_some(k))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmsePair {
    pub source: usize,
    pub estimate: usize,
    pub smse_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmseResult {
    /// Matched pairs in the order the greedy search picked them.
    pub per_pair: Vec<SmsePair>,
    pub average_db: f64,
    /// `pairing[k]` is the estimate matched to source `k`, if any.
    pub pairing: Vec<Option<usize>>,
}

/// Linear SMSE of every (source, estimate) pair after optimal scaling.
///
/// Entry `[k][l]` is `E{|s_k - a s_l_hat|^2}` with
/// `a = E{s_k s_l_hat^*} / E{|s_l_hat|^2}`; a zero-power estimate scores
/// `+inf` against every source.
pub fn pairwise_smse<S: Scalar>(sources: &SignalBlock<S>, estimates: &SignalBlock<S>) -> Result<Vec<Vec<f64>>> {
    if sources.samples() != estimates.samples() {
        return Err(Error::Shape {
            what: "estimate block",
            expected_rows: estimates.channels(),
            expected_cols: sources.samples(),
            rows: estimates.channels(),
            cols: estimates.samples(),
        });
    }
    let s_rows: Vec<Vec<S>> = (0..sources.channels()).map(|k| sources.row(k)).collect();
    let e_rows: Vec<Vec<S>> = (0..estimates.channels()).map(|l| estimates.row(l)).collect();
    let e_power: Vec<f64> = e_rows.iter().map(|e| mean_real(e, |v| v.abs2())).collect();
    let t = sources.samples() as f64;
    Ok(s_rows
        .iter()
        .map(|s| {
            e_rows
                .iter()
                .zip(&e_power)
                .map(|(e, &pe)| {
                    if !(pe > 0.0) {
                        return f64::INFINITY;
                    }
                    let cross = s.iter().zip(e).fold(S::zero(), |acc, (&a, &b)| acc + a * b.conj());
                    let alpha = cross.scale(1.0 / (t * pe));
                    s.iter().zip(e).map(|(&a, &b)| (a - alpha * b).abs2()).sum::<f64>() / t
                })
                .collect()
        })
        .collect())
}

/// Average SMSE after greedily pairing sources with estimates.
///
/// The measure is relative to unit-power sources.
pub fn smse<S: Scalar>(sources: &SignalBlock<S>, estimates: &SignalBlock<S>) -> Result<SmseResult> {
    let table = pairwise_smse(sources, estimates)?;
    let (pairs, pairing) = greedy_pairing(&table);
    let mean = pairs.iter().map(|&(_, _, v)| v).sum::<f64>() / pairs.len() as f64;
    Ok(SmseResult {
        per_pair: pairs
            .into_iter()
            .map(|(source, estimate, v)| SmsePair {
                source,
                estimate,
                smse_db: to_db(v),
            })
            .collect(),
        average_db: to_db(mean),
        pairing,
    })
}

/// `(row, column, value)` of one matched pair.
pub type Pair = (usize, usize, f64);

/// Repeatedly takes the smallest remaining entry and removes its row and column.
pub fn greedy_pairing(table: &[Vec<f64>]) -> (Vec<Pair>, Vec<Option<usize>>) {
    let rows = table.len();
    let cols = table.first().map_or(0, Vec::len);
    let mut row_free = alloc::vec![true; rows];
    let mut col_free = alloc::vec![true; cols];
    let mut pairing = alloc::vec![None; rows];
    let mut pairs = Vec::with_capacity(rows.min(cols));
    for _ in 0..rows.min(cols) {
        let mut best: Option<Pair> = None;
        for (k, row) in table.iter().enumerate().filter(|(k, _)| row_free[*k]) {
            for (l, &v) in row.iter().enumerate().filter(|(l, _)| col_free[*l]) {
                // NaN never wins; +inf still gets paired once nothing else remains
                if best.is_none_or(|(_, _, b)| v < b) {
                    best = Some((k, l, v));
                }
            }
        }
        let Some((k, l, v)) = best else { break };
        row_free[k] = false;
        col_free[l] = false;
        pairing[k] = Some(l);
        pairs.push((k, l, v));
    }
    (pairs, pairing)
}

/// `10 log10(v)` clamped to [`SMSE_FLOOR_DB`].
pub fn to_db(v: f64) -> f64 {
    if v.is_nan() {
        return f64::NAN;
    }
    (10.0 * libm::log10(v)).max(SMSE_FLOOR_DB)
}

/// `|E{s^2}| / E{|s|^2}`.
pub fn circularity_ratio<S: Scalar>(s: &[S]) -> Result<f64> {
    let power = mean_real(s, |v| v.abs2());
    if !(power > 0.0) {
        return Err(Error::DegenerateContrast { power });
    }
    let pseudo = crate::signal::sample_mean_by(s, |&v| v * v);
    Ok(libm::sqrt(pseudo.abs2()) / power)
}
