use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors shared across the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported neighbourhood range {0} (supported: 0, 2, 4, 6)")]
    InvalidRange(u32),

    #[error("unsupported MLP shape: depth {depth}, width {width}")]
    InvalidArchitecture { depth: u32, width: u32 },

    #[error("genome has {got} parameters, architecture requires {expected}")]
    GenomeLength { got: usize, expected: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{0} requires an actor-critic genome")]
    NotActorCritic(&'static str),

    #[error("observation has {got} entries, expected {expected}")]
    ObservationDim { got: usize, expected: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("covariance matrix lost positive definiteness (min eigenvalue {0:.3e})")]
    CovarianceNotPositiveDefinite(f64),

    #[error("fitness batch has {got} entries, expected population size {expected}")]
    FitnessCount { got: usize, expected: usize },

    #[error("incomplete episode trace: {got} of {expected} steps")]
    IncompleteTrace { got: usize, expected: usize },

    #[error("cross-evaluation needs a reward different from the training reward ({0})")]
    SameReward(String),

    #[error("parameter impact is undefined for parameter count {0} (needs p >= 2)")]
    DegenerateParamCount(usize),

    #[error("degenerate fitness distribution: {0}")]
    DegenerateDistribution(String),

    #[error("sinusoid fit expects {expected} samples, got {got}")]
    FitSampleCount { got: usize, expected: usize },

    #[error("PCA rejected: {0}")]
    PcaInput(String),

    #[error("unknown controller spec '{0}' (expected c0/c2/c4/c6 or m<d>_<w>)")]
    UnknownController(String),

    #[error("unknown reward '{0}' (expected speed, gym or kernels)")]
    UnknownReward(String),

    #[error("unknown trainer '{0}' (expected cmaes or ppo)")]
    UnknownTrainer(String),

    #[error(
        "PPO cannot train CPG controllers: the oscillator state is recurrent and has no \
         timestep-level gradient path; use the cmaes trainer for cN controllers"
    )]
    PpoRequiresMlp,

    #[error("record format version {got} does not match supported version {expected}")]
    FormatVersion { got: u32, expected: u32 },

    #[error("{path}: {source}")]
    WithPath {
        path: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
