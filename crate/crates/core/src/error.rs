use thiserror::Error;

use crate::engine::{MAX_MARGINAL_BITS, MAX_SPINS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("alpha must be at least 1, got {0}")]
    InvalidAlpha(f64),
    #[error("system size N must be at least 1")]
    InvalidSize,
    #[error("interval ({lo}, {hi}) is empty")]
    EmptyInterval { lo: f64, hi: f64 },
    #[error("beta must be positive, got {0}")]
    InvalidBeta(f64),
    #[error("{0}")]
    InvalidParameter(String),
    #[error("index {index} is out of range for N = {n}")]
    IndexOutOfRange { index: u64, n: u32 },
    #[error("N = {0} exceeds the enumeration budget of {MAX_SPINS} spins")]
    SizeOutOfBudget(u32),
    #[error("marginal block size K = {k} must satisfy K <= N = {n} and K <= {MAX_MARGINAL_BITS}")]
    InvalidMarginalBlock { k: u32, n: u32 },
    #[error("energy field has N = {field} but the spec has N = {spec}")]
    FieldSizeMismatch { field: u32, spec: u32 },
    #[error("log-sum-exp of an empty stream")]
    EmptyStream,
    #[error("the beta list is empty")]
    EmptyBetas,
    #[error("beta {0} was not part of the replica spec")]
    UnknownBeta(f64),
    #[error("interval ({lo}, {hi}) was not part of the replica spec")]
    UnknownInterval { lo: f64, hi: f64 },
    #[error("exceedance level {0} was not part of the replica spec")]
    UnknownLevel(f64),
    #[error("sample is empty")]
    EmptySample,
    #[error("need at least 2 values, got {0}")]
    TooFewValues(usize),
    #[error("expected probabilities sum to {0}, not 1")]
    ProbabilitiesNotNormalized(f64),
    #[error("observed and expected have different lengths ({observed} vs {expected})")]
    LengthMismatch { observed: usize, expected: usize },
    #[error("bin {bin} has expected count {expected} < 5 after pooling")]
    SparseBin { bin: usize, expected: f64 },
    #[error("chi-square test needs at least 2 bins after pooling")]
    TooFewBins,
    #[error("sequence is not a member of S: {0}")]
    NotInSequenceSpace(String),
}

pub type Result<T> = std::result::Result<T, Error>;
