use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("function has no value at support point `{0}`")]
    MissingValue(String),

    #[error("kernel is missing a law for support point `{0}`")]
    MissingKernel(String),

    #[error("kernel has no sampling law at point `{0}`")]
    NoSamplingLaw(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("variance of Nf is zero; sensitivity indices cannot be normalized")]
    ZeroVariance,

    #[error("f vanishes almost everywhere; the sensitivity measure is undefined")]
    ZeroSecondMoment,

    #[error("sensitivity vector is {0} defective and has no probabilistic interpretation")]
    Defective(&'static str),

    #[error("efficacy is undefined: {0}")]
    UndefinedEfficacy(String),

    #[error("efficacy {0} lies outside [0, 1]")]
    EfficacyOutOfRange(f64),

    #[error("row {row} (`{name}`): {reason}")]
    InvalidRecord { row: usize, name: String, reason: String },

    #[error("csv: {0}")]
    Csv(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
