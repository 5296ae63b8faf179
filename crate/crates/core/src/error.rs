use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid timing: {0}")]
    InvalidTiming(String),

    #[error("CDD order {order} does not fit a block of {span} grid units (needs a multiple of 2^{order})")]
    OrderSpanMismatch { order: u32, span: u64 },

    #[error("partition mismatch: {0}")]
    PartitionMismatch(String),

    #[error("pulses at grid {first} and {second} are closer than tau ({gap} < {min_gap} grid units)")]
    TauViolation {
        first: i64,
        second: i64,
        gap: u64,
        min_gap: u64,
    },

    #[error("invalid pulse sequence: {0}")]
    InvalidSequence(String),

    #[error("time {t} lies outside the window [0, {end})")]
    TimeOutOfRange { t: f64, end: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported cumulant order {0}")]
    UnsupportedOrder(usize),

    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergence(String),

    #[error("aliasing guard violated: spectral mass above Nyquist is {fraction:.3e} of total (limit {limit:.1e})")]
    Aliasing { fraction: f64, limit: f64 },

    #[error("empty {0}")]
    Empty(String),

    #[error("system is underdetermined: {rows} rows for {cols} unknowns")]
    Underdetermined { rows: usize, cols: usize },

    #[error("rank-deficient system (rank {rank} of {cols}); unidentifiable unknowns: {}", .unidentifiable.join(", "))]
    RankDeficient {
        rank: usize,
        cols: usize,
        unidentifiable: Vec<String>,
    },

    #[error("coherence magnitude {magnitude:.3e} is below the Monte Carlo noise floor {floor:.3e}")]
    NoiseFloor { magnitude: f64, floor: f64 },

    #[error("infeasible search: {0}")]
    Infeasible(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
