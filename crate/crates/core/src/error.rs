use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A training set (or any dataset that must hold samples) had no samples.
    EmptyTrainingSet,
    /// Condition identifier not present in the dataset.
    UnknownCondition(usize),
    /// Leave-one-out split would leave the training side empty.
    EmptySplit,
    /// Record holds a non-finite or (for measured data) negative value.
    InvalidRecord { record_id: u32, cycle: usize, value: f64 },
    /// Operating point outside its domain (speed or pressure not positive, or non-finite).
    InvalidOperatingPoint,
    ZeroVariance,
    LagTooLarge { lag: usize, len: usize },
    InvalidLevel(f64),
    EmptySamples,
    TooFewSamples { needed: usize, got: usize },
    LengthMismatch { left: usize, right: usize },
    TooFewGroups(usize),
    InvalidHistogram(&'static str),
    InvalidMixture(&'static str),
    InvalidBandwidth(f64),
    NonFiniteInput,
    EmptyBatch,
    UnsortedGrid,
    EmptySchedule,
    /// Accept-reject hit the consecutive rejection cap; the envelope does not dominate the density.
    EnvelopeInconsistent { rejections: u64 },
    InvalidConfig(&'static str),
    InvalidModel(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptyTrainingSet => f.write_str("empty training set"),
            Error::UnknownCondition(id) => write!(f, "unknown condition identifier {id}"),
            Error::EmptySplit => f.write_str("leave-one-out split leaves an empty training set"),
            Error::InvalidRecord { record_id, cycle, value } => {
                write!(f, "invalid knock intensity {value} in record {record_id} at cycle {cycle}")
            }
            Error::InvalidOperatingPoint => {
                f.write_str("operating point requires finite values with speed > 0 and pressure > 0")
            }
            Error::ZeroVariance => f.write_str("zero variance"),
            Error::LagTooLarge { lag, len } => {
                write!(f, "lag {lag} requires a series longer than {len}")
            }
            Error::InvalidLevel(level) => write!(f, "probability level {level} outside (0, 1)"),
            Error::EmptySamples => f.write_str("empty sample set"),
            Error::TooFewSamples { needed, got } => {
                write!(f, "need at least {needed} samples, got {got}")
            }
            Error::LengthMismatch { left, right } => {
                write!(f, "length mismatch: {left} vs {right}")
            }
            Error::TooFewGroups(n) => write!(f, "need at least 2 groups, got {n}"),
            Error::InvalidHistogram(why) => write!(f, "invalid histogram request: {why}"),
            Error::InvalidMixture(why) => write!(f, "invalid mixture parameters: {why}"),
            Error::InvalidBandwidth(d) => write!(f, "bandwidth must be positive, got {d}"),
            Error::NonFiniteInput => f.write_str("non-finite input"),
            Error::EmptyBatch => f.write_str("empty batch"),
            Error::UnsortedGrid => f.write_str("evaluation grid is not sorted ascending"),
            Error::EmptySchedule => f.write_str("empty operating schedule"),
            Error::EnvelopeInconsistent { rejections } => {
                write!(f, "envelope inconsistent: {rejections} consecutive rejections")
            }
            Error::InvalidConfig(why) => write!(f, "invalid configuration: {why}"),
            Error::InvalidModel(why) => write!(f, "invalid model: {why}"),
        }
    }
}

impl core::error::Error for Error {}
