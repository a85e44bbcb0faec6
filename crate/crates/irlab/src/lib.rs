//! Experiment laboratory for interactive reinforcement learning with a
//! mistake-correcting teacher on reaching tasks for serial robot arms.
//!
//! The crate covers the full pipeline: forward kinematics and workspace
//! estimation, the sparse-reward reaching environment with its episode
//! budget arithmetic, dataset generation, a from-scratch actor-critic
//! learner (CACLA) with Gaussian exploration, the ask-likelihood teacher
//! loop, task-complexity probes, random hyperparameter search, learning
//! curve statistics, and a deterministic experiment harness.

pub mod analysis;
pub mod cacla;
pub mod complexity;
pub mod datasets;
pub mod environment;
pub mod error;
pub mod harness;
pub mod hyperopt;
pub mod interaction;
pub mod kinematics;
pub mod neuralnet;
