//! Continuous actor-critic learner with Gaussian exploration and
//! variance-scaled actor updates.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::environment::{ActionVec, ReachTask};
use crate::error::{NetError, TrainError};
use crate::neuralnet::{adam_step, Activation, AdamState, NetConfig, Network, Scaler};

/// Tunable hyperparameters and their admissible ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Std of the Gaussian exploration noise in scaled action space.
    pub exploration_rate: f64,
    pub discount: f64,
    /// EMA rate of the TD-error variance estimate.
    pub zeta: f64,
    /// Initial value of the TD-error variance estimate.
    pub initial_variance: f64,
    pub actor_hidden: Vec<(usize, Activation)>,
    pub critic_hidden: Vec<(usize, Activation)>,
    /// When false the actor gets exactly one update per positive TD error
    /// instead of the variance-scaled count.
    #[serde(default = "default_true")]
    pub variance_scaled: bool,
}

fn default_true() -> bool {
    true
}

/// Hard cap on variance-scaled actor updates per transition.
pub const ACTOR_UPDATE_CAP: usize = 10;

impl Hyperparams {
    /// Mid-range defaults, useful for smoke runs.
    pub fn midrange(dof: usize) -> Self {
        let hidden = vec![(30, Activation::Relu)];
        let _ = dof;
        Self {
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            exploration_rate: 0.55,
            discount: 0.9,
            zeta: 5e-3,
            initial_variance: 2.0,
            actor_hidden: hidden.clone(),
            critic_hidden: hidden,
            variance_scaled: true,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let check = |name: &str, v: f64, lo: f64, hi: f64| {
            if v >= lo && v <= hi {
                Ok(())
            } else {
                Err(TrainError::InvalidHyper(format!(
                    "{name} = {v} outside [{lo}, {hi}]"
                )))
            }
        };
        check("actor_lr", self.actor_lr, 1e-4, 1e-2)?;
        check("critic_lr", self.critic_lr, 1e-4, 1e-2)?;
        check("exploration_rate", self.exploration_rate, 0.2, 0.9)?;
        check("discount", self.discount, 0.75, 1.0)?;
        check("zeta", self.zeta, 1e-4, 10f64.powf(-1.3))?;
        check("initial_variance", self.initial_variance, 1.0, 3.0)?;
        for (name, layers) in [("actor", &self.actor_hidden), ("critic", &self.critic_hidden)] {
            if layers.is_empty() || layers.len() > 3 {
                return Err(TrainError::InvalidHyper(format!(
                    "{name} must have 1-3 hidden layers"
                )));
            }
        }
        Ok(())
    }
}

/// One unit of experience. The action is stored in scaled space, as the
/// actor sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action_scaled: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// Actor, critic, their optimizers, scalers and the TD-variance state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Agent {
    pub actor: Network,
    pub critic: Network,
    pub actor_adam: AdamState,
    pub critic_adam: AdamState,
    pub td_variance: f64,
    pub hyper: Hyperparams,
    pub state_scaler: Scaler,
    pub action_scaler: Scaler,
    pub action_max: f64,
}

impl Agent {
    /// Fresh agent for a task; scalers derive from joint limits, a reach
    /// bound on target coordinates, and the action bound.
    pub fn new(task: &ReachTask, hyper: Hyperparams, rng: &mut impl Rng) -> Result<Self, TrainError> {
        hyper.validate()?;
        let dof = task.dof();
        let mut state_ranges = task.chain.actuated_limits();
        let reach: f64 = task
            .chain
            .links
            .iter()
            .map(|l| l.a.abs() + l.d.abs())
            .sum::<f64>()
            .max(1e-6);
        for _ in 0..task.chain.task_space_dim {
            state_ranges.push((-reach, reach));
        }
        let state_scaler = Scaler::new(state_ranges)?;
        let action_scaler = Scaler::new(vec![(-task.action_max, task.action_max); dof])?;
        let input_dim = dof + task.chain.task_space_dim;
        let actor = Network::init(
            NetConfig {
                input_dim,
                hidden_layers: hyper.actor_hidden.clone(),
                output_dim: dof,
            },
            rng,
        )?;
        let critic = Network::init(
            NetConfig {
                input_dim,
                hidden_layers: hyper.critic_hidden.clone(),
                output_dim: 1,
            },
            rng,
        )?;
        let actor_adam = AdamState::new(&actor, hyper.actor_lr);
        let critic_adam = AdamState::new(&critic, hyper.critic_lr);
        Ok(Self {
            actor,
            critic,
            actor_adam,
            critic_adam,
            td_variance: hyper.initial_variance,
            hyper,
            state_scaler,
            action_scaler,
            action_max: task.action_max,
        })
    }

    /// Greedy policy action: actor output unscaled and clipped to the bound.
    pub fn greedy_action(&self, state: &[f64]) -> Result<ActionVec, TrainError> {
        let out = self.actor.forward(&self.state_scaler.scale(state))?;
        Ok(ActionVec::new(self.action_scaler.unscale(&out)).clipped(self.action_max))
    }

    /// Exploratory and greedy actions. Noise is Gaussian with per-dimension
    /// std `exploration_rate` in scaled action space; the result is unscaled
    /// and clipped to the action bound.
    pub fn select_action(
        &self,
        state: &[f64],
        rng: &mut impl Rng,
    ) -> Result<(ActionVec, ActionVec), TrainError> {
        let out = self.actor.forward(&self.state_scaler.scale(state))?;
        let greedy = ActionVec::new(self.action_scaler.unscale(&out)).clipped(self.action_max);
        let noise = Normal::new(0.0, self.hyper.exploration_rate)
            .expect("exploration_rate is positive and finite");
        let noisy: Vec<f64> = out.iter().map(|o| o + noise.sample(rng)).collect();
        let exploratory =
            ActionVec::new(self.action_scaler.unscale(&noisy)).clipped(self.action_max);
        Ok((exploratory, greedy))
    }

    /// Critic value of a raw (unscaled) state.
    pub fn value(&self, state: &[f64]) -> Result<f64, TrainError> {
        let v = self.critic.forward(&self.state_scaler.scale(state))?[0];
        if !v.is_finite() {
            return Err(TrainError::Net(NetError::NonFinite(
                "critic output".into(),
            )));
        }
        Ok(v)
    }

    /// One-step TD error: r + gamma * V(s') - V(s), with no bootstrap on
    /// terminal transitions.
    pub fn td_error(&self, t: &Transition) -> Result<f64, TrainError> {
        let v = self.value(&t.state)?;
        let bootstrap = if t.terminal {
            0.0
        } else {
            self.hyper.discount * self.value(&t.next_state)?
        };
        Ok(t.reward + bootstrap - v)
    }

    /// CACLA update: critic moves toward the TD target; the TD-variance
    /// estimate tracks delta^2; on positive delta the actor moves toward the
    /// executed action, repeated ceil(delta / sqrt(var)) times (capped).
    pub fn update(&mut self, t: &Transition) -> Result<f64, TrainError> {
        let delta = self.td_error(t)?;
        if !delta.is_finite() {
            return Err(TrainError::Net(NetError::NonFinite("TD error".into())));
        }
        let scaled_state = self.state_scaler.scale(&t.state);
        // Critic: squared-error gradient toward the TD target.
        let v = self.critic.forward(&scaled_state)?[0];
        let target = v + delta;
        let grads = self.critic.backward(&scaled_state, &[v - target])?;
        adam_step(&mut self.critic, &mut self.critic_adam, &grads)?;
        // TD-variance EMA, updated on every transition.
        self.td_variance =
            (1.0 - self.hyper.zeta) * self.td_variance + self.hyper.zeta * delta * delta;
        if delta > 0.0 {
            let n = if self.hyper.variance_scaled {
                ((delta / self.td_variance.sqrt()).ceil() as usize).clamp(1, ACTOR_UPDATE_CAP)
            } else {
                1
            };
            for _ in 0..n {
                let out = self.actor.forward(&scaled_state)?;
                let upstream: Vec<f64> = out
                    .iter()
                    .zip(&t.action_scaled)
                    .map(|(o, a)| o - a)
                    .collect();
                let grads = self.actor.backward(&scaled_state, &upstream)?;
                adam_step(&mut self.actor, &mut self.actor_adam, &grads)?;
            }
        }
        Ok(delta)
    }

    /// Scale a raw action into the actor's output space.
    pub fn scale_action(&self, action: &ActionVec) -> Vec<f64> {
        self.action_scaler.scale(&action.deltas)
    }

    pub fn params_finite(&self) -> bool {
        self.actor.params_finite() && self.critic.params_finite() && self.td_variance.is_finite()
    }
}

/// Agent checkpoint IO: everything needed to resume or evaluate.
pub fn save_agent(agent: &Agent, path: impl AsRef<std::path::Path>) -> Result<(), NetError> {
    let text =
        serde_json::to_string(agent).map_err(|e| NetError::Checkpoint(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| NetError::Checkpoint(e.to_string()))
}

pub fn load_agent(path: impl AsRef<std::path::Path>) -> Result<Agent, NetError> {
    let text = std::fs::read_to_string(path).map_err(|e| NetError::Checkpoint(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| NetError::Checkpoint(e.to_string()))
}
