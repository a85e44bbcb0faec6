//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("invalid link: {0}")]
    InvalidLink(String),
    #[error("invalid chain: {0}")]
    InvalidChain(String),
    #[error("joint {joint} at {value} rad violates limits [{min}, {max}]")]
    JointLimit {
        joint: usize,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("joint vector length {got} does not match DoF {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("chain file parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("cannot step a finished episode")]
    EpisodeDone,
    #[error("episode budget: {0}")]
    Budget(String),
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("dataset generation: {0}")]
    Generation(String),
    #[error("dataset file {path}: {reason}")]
    Malformed { path: String, reason: String },
    #[error("dataset invariant violated: {0}")]
    Invariant(String),
    #[error("io error: {0}")]
    Io(String),
}

#[derive(Debug, Error)]
pub enum NetError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
    #[error("non-finite value during training: {0}")]
    NonFinite(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("interactive step exceeded the attempt cap ({0} attempts)")]
    AttemptCap(usize),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("empty sample")]
    EmptySample,
    #[error("sample too small: need at least {need}, got {got}")]
    SampleTooSmall { need: usize, got: usize },
    #[error("degenerate regression window: {0}")]
    DegenerateWindow(String),
    #[error("no L value reaches the {0}% failure-rate threshold")]
    ThresholdUnreached(f64),
    #[error("analysis input: {0}")]
    Input(String),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}
