use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// All weights zero, or a NaN / negative entry.
    DegenerateWeights,
    LengthMismatch { expected: usize, found: usize },
    /// A full row or column of the Gibbs kernel vanished at working precision.
    RegularizationTooStrong,
    /// Sparse support leaves a row or column without any admissible entry.
    InfeasibleSupport,
    ProblemTooLarge { n: usize, max: usize },
    EmptyPointSet,
    TooManyNeighbours { requested: usize, available: usize },
    /// Every incremental weight was zero at `step`.
    ParticleCollapse { step: usize },
    IncompatibleModels(&'static str),
    DegenerateChain,
    InvalidArgument(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DegenerateWeights => f.write_str("degenerate weights"),
            Error::LengthMismatch { expected, found } => {
                write!(f, "length mismatch: expected {expected}, found {found}")
            }
            Error::RegularizationTooStrong => f.write_str("regularization too strong"),
            Error::InfeasibleSupport => f.write_str("infeasible support"),
            Error::ProblemTooLarge { n, max } => {
                write!(f, "problem too large: n = {n} exceeds {max}")
            }
            Error::EmptyPointSet => f.write_str("empty point set"),
            Error::TooManyNeighbours { requested, available } => write!(
                f,
                "requested {requested} neighbours but only {available} points available"
            ),
            Error::ParticleCollapse { step } => write!(f, "particle collapse at step {step}"),
            Error::IncompatibleModels(why) => write!(f, "incompatible models: {why}"),
            Error::DegenerateChain => f.write_str("degenerate chain"),
            Error::InvalidArgument(why) => write!(f, "invalid argument: {why}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
