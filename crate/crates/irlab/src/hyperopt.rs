//! Random hyperparameter search without teacher feedback: sample from the
//! admissible space, train briefly, rank by validation positioning error.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cacla::Hyperparams;
use crate::datasets::Dataset;
use crate::environment::ReachTask;
use crate::error::TrainError;
use crate::harness::{evaluate_agent, train_epoch};
use crate::interaction::AskLikelihood;
use crate::neuralnet::Activation;

/// Sampling ranges of the random search. Learning rates and the variance
/// rate are drawn log-uniformly, the rest uniformly; each network gets
/// 1-3 hidden layers on a fixed width grid and one activation shared by
/// all its hidden layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub lr: (f64, f64),
    pub exploration: (f64, f64),
    pub discount: (f64, f64),
    pub zeta: (f64, f64),
    pub initial_variance: (f64, f64),
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            lr: (1e-4, 1e-2),
            exploration: (0.2, 0.9),
            discount: (0.75, 1.0),
            zeta: (1e-4, 10f64.powf(-1.3)),
            initial_variance: (1.0, 3.0),
        }
    }
}

const ACTIVATIONS: [Activation; 3] = [Activation::Relu, Activation::Selu, Activation::Softplus];

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp().clamp(lo, hi)
}

/// First hidden layer widths: 10, 20, ..., 100; deeper layers: 5, 10, ..., 100.
fn sample_widths(rng: &mut impl Rng) -> Vec<usize> {
    let depth = rng.gen_range(1..=3usize);
    // All draws happen regardless of depth so the stream length is fixed.
    let first = rng.gen_range(1..=10usize) * 10;
    let second = rng.gen_range(1..=20usize) * 5;
    let third = rng.gen_range(1..=20usize) * 5;
    let mut widths = vec![first, second, third];
    widths.truncate(depth);
    widths
}

fn sample_net(rng: &mut impl Rng) -> Vec<(usize, Activation)> {
    let widths = sample_widths(rng);
    let activation = ACTIVATIONS[rng.gen_range(0..ACTIVATIONS.len())];
    widths.into_iter().map(|w| (w, activation)).collect()
}

/// Draw one hyperparameter sample. The draw count is constant, so the
/// consumed stream length does not depend on the outcome.
pub fn sample_space(space: &SearchSpace, rng: &mut impl Rng) -> Hyperparams {
    Hyperparams {
        actor_lr: log_uniform(rng, space.lr.0, space.lr.1),
        critic_lr: log_uniform(rng, space.lr.0, space.lr.1),
        exploration_rate: rng.gen_range(space.exploration.0..=space.exploration.1),
        discount: rng.gen_range(space.discount.0..=space.discount.1),
        zeta: log_uniform(rng, space.zeta.0, space.zeta.1),
        initial_variance: rng.gen_range(space.initial_variance.0..=space.initial_variance.1),
        actor_hidden: sample_net(rng),
        critic_hidden: sample_net(rng),
        variance_scaled: true,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub hyper: Hyperparams,
    /// Mean validation positioning error (goal-zone radii); +inf on failure.
    pub validation_error: f64,
    pub status: String,
}

fn run_trial(
    task: &ReachTask,
    train_set: &Dataset,
    validation_set: &Dataset,
    hyper: &Hyperparams,
    epochs: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64, TrainError> {
    let mut agent = crate::cacla::Agent::new(task, hyper.clone(), rng)?;
    let mut cumulative = 0u64;
    for _ in 0..epochs {
        train_epoch(task, train_set, &mut agent, AskLikelihood::ZERO, rng, &mut cumulative)
            .map_err(|e| TrainError::InvalidHyper(e.to_string()))?;
        if !agent.params_finite() {
            return Err(TrainError::Net(crate::error::NetError::NonFinite(
                "agent parameters".into(),
            )));
        }
    }
    let (distances, _) = evaluate_agent(task, &agent, validation_set)
        .map_err(|e| TrainError::InvalidHyper(e.to_string()))?;
    let n = distances.len() as f64;
    let error = distances.iter().sum::<f64>() / task.gzr / n;
    if !error.is_finite() {
        return Err(TrainError::Net(crate::error::NetError::NonFinite(
            "validation error".into(),
        )));
    }
    Ok(error)
}

/// Run `budget` random trials at L = 0 and return (best trial index, all
/// trials). Trials run in parallel on private PRNG substreams; diverged
/// trials score +inf; ties break toward the lowest index.
pub fn search(
    task: &ReachTask,
    train_set: &Dataset,
    validation_set: &Dataset,
    space: &SearchSpace,
    budget: usize,
    epochs: usize,
    master_seed: u64,
) -> Result<(usize, Vec<Trial>), TrainError> {
    if budget == 0 || epochs == 0 {
        return Err(TrainError::InvalidHyper(
            "budget and epochs must be >= 1".into(),
        ));
    }
    let trials: Vec<Trial> = (0..budget)
        .into_par_iter()
        .map(|index| {
            let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
            rng.set_stream(index as u64);
            let hyper = sample_space(space, &mut rng);
            match run_trial(task, train_set, validation_set, &hyper, epochs, &mut rng) {
                Ok(error) => Trial {
                    index,
                    hyper,
                    validation_error: error,
                    status: "ok".into(),
                },
                Err(e) => Trial {
                    index,
                    hyper,
                    validation_error: f64::INFINITY,
                    status: format!("diverged: {e}"),
                },
            }
        })
        .collect();
    let best = trials
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            a.validation_error
                .partial_cmp(&b.validation_error)
                .expect("errors are never NaN")
        })
        .map(|(i, _)| i)
        .expect("budget >= 1");
    if trials[best].validation_error.is_infinite() {
        return Err(TrainError::InvalidHyper(
            "all trials diverged; task or search space is misconfigured".into(),
        ));
    }
    Ok((best, trials))
}

fn widths_of(layers: &[(usize, Activation)]) -> String {
    layers
        .iter()
        .map(|(w, _)| w.to_string())
        .collect::<Vec<_>>()
        .join("/")
}

fn activation_of(layers: &[(usize, Activation)]) -> &'static str {
    match layers.first().map(|(_, a)| *a) {
        Some(Activation::Relu) => "relu",
        Some(Activation::Selu) => "selu",
        Some(Activation::Softplus) => "softplus",
        None => "none",
    }
}

/// Trial log as CSV, one row per trial in index order.
pub fn trial_log_csv(trials: &[Trial]) -> String {
    let mut out = String::from(
        "trial,actor_lr,critic_lr,exploration_rate,discount,zeta,initial_variance,\
         actor_widths,actor_activation,critic_widths,critic_activation,\
         validation_positioning_error,status\n",
    );
    for t in trials {
        let h = &t.hyper;
        writeln!(
            out,
            "{},{:.6e},{:.6e},{:.6},{:.6},{:.6e},{:.6},{},{},{},{},{:.6},{}",
            t.index,
            h.actor_lr,
            h.critic_lr,
            h.exploration_rate,
            h.discount,
            h.zeta,
            h.initial_variance,
            widths_of(&h.actor_hidden),
            activation_of(&h.actor_hidden),
            widths_of(&h.critic_hidden),
            activation_of(&h.critic_hidden),
            t.validation_error,
            t.status
        )
        .unwrap();
    }
    out
}

pub fn save_trial_log(trials: &[Trial], path: impl AsRef<Path>) -> std::io::Result<()> {
    std::fs::write(path, trial_log_csv(trials))
}
