use thiserror::Error;

/// Errors raised by the separation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what}: expected {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    Shape {
        what: &'static str,
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },

    #[error("signal block must have at least one channel and one sample (got {channels}x{samples})")]
    EmptyBlock { channels: usize, samples: usize },

    #[error("output power {power:e} is below the degenerate threshold")]
    DegenerateContrast { power: f64 },

    #[error("vector lies inside the span of previously extracted vectors (residual norm {residual:e})")]
    DegenerateDirection { residual: f64 },

    #[error("polynomial has all-zero coefficients")]
    ZeroPolynomial,

    #[error("requested whitening dimension {requested} exceeds numerical rank {rank}")]
    RankDeficient { requested: usize, rank: usize },

    #[error("estimated source has zero power")]
    ZeroPowerEstimate,

    #[error("invalid configuration: {0}")]
    Config(&'static str),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
