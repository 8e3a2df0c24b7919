//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid architecture: dims {dims:?} with {activations} activations")]
    BadArchitecture { dims: Vec<usize>, activations: usize },
    #[error("not a simplex vector: {reason}")]
    NotASimplex { reason: String },
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("gradient contains nonfinite entries; step rejected")]
    NonFiniteGradient,
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("unknown builtin environment '{name}'; valid names: {valid:?}")]
    UnknownBuiltin { name: String, valid: Vec<&'static str> },
    #[error("environment '{name}' is inconsistent: {reason}")]
    InvalidSpec { name: String, reason: String },
    #[error("sampled state {state:?} lies in no action's support; support spec inconsistent")]
    StateOutsideSupport { state: Vec<f64> },
    #[error("sample count must be at least 1")]
    EmptySample,
    #[error("grid resolution must be at least 8, got {0}")]
    GridTooCoarse(usize),
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training batch must be an action-free view (labels present)")]
    LabeledInput,
    #[error("loss diverged to a nonfinite value at step {step}")]
    Diverged { step: usize, trace: Vec<crate::objective::TracePoint> },
    #[error(transparent)]
    Num(#[from] NumError),
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("transition graphs are not pairwise disjoint: actions {a1} and {a2} collide at state {state:?} (distance {distance:.3e})")]
    GraphsNotDisjoint { a1: usize, a2: usize, state: Vec<f64>, distance: f64 },
    #[error("all Urysohn numerators vanished at query {query:?}; distance field degenerate")]
    DegenerateField { query: Vec<f64> },
    #[error("latent count {k_hat} is smaller than the action count {k}")]
    LatentSpaceTooSmall { k_hat: usize, k: usize },
    #[error(
        "certification failed: mean reconstruction {} (tolerance {}), mean entropy {} (tolerance {}) over {} samples",
        .0.reconstruction_mean, .0.reconstruction_tolerance, .0.entropy_mean, .0.entropy_tolerance, .0.n
    )]
    CertificationFailed(Box<crate::oracle::CertificationReport>),
}

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("entanglement table is empty")]
    EmptyTable,
    #[error("every action is undersampled (fewer than {min_rows} rows)")]
    AllActionsUndersampled { min_rows: usize },
    #[error("labeled set is empty")]
    EmptyLabeledSet,
}

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header in {path}: {reason}")]
    MalformedHeader { path: String, reason: String },
    #[error("payload size mismatch in {path}: expected {expected} bytes, got {got}")]
    PayloadMismatch { path: String, expected: usize, got: usize },
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("stage requires a nonempty dataset")]
    EmptyDataset,
    #[error("unknown counterexample '{name}'; valid names: {valid:?}")]
    UnknownCounterexample { name: String, valid: Vec<&'static str> },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error(transparent)]
    Num(#[from] NumError),
}
