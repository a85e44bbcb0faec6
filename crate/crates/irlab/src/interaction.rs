//! Mistake-correcting teacher, stochastic ask-likelihood, the
//! undo-and-resample loop, and piecewise-constant L schedules.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cacla::{Agent, Transition};
use crate::environment::{distance_to_goal, step, EnvState, ReachTask};
use crate::error::TrainError;

/// Per-attempt probability of requesting teacher feedback, capped at 0.99 so
/// the undo loop always terminates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct AskLikelihood(f64);

impl AskLikelihood {
    pub const MAX: f64 = 0.99;

    pub fn new(value: f64) -> Result<Self, TrainError> {
        if !(0.0..=Self::MAX).contains(&value) {
            return Err(TrainError::InvalidHyper(format!(
                "ask likelihood {value} outside [0, {}]",
                Self::MAX
            )));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub const ZERO: AskLikelihood = AskLikelihood(0.0);
}

impl TryFrom<f64> for AskLikelihood {
    type Error = String;
    fn try_from(v: f64) -> Result<Self, String> {
        AskLikelihood::new(v).map_err(|e| e.to_string())
    }
}

impl From<AskLikelihood> for f64 {
    fn from(l: AskLikelihood) -> f64 {
        l.0
    }
}

/// Piecewise-constant ask-likelihood over epochs; segments are half-open,
/// a boundary epoch takes the new value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LSchedule {
    pub segments: Vec<(usize, AskLikelihood)>,
}

impl LSchedule {
    pub fn constant(l: AskLikelihood) -> Self {
        Self {
            segments: vec![(0, l)],
        }
    }

    pub fn new(segments: Vec<(usize, AskLikelihood)>) -> Result<Self, TrainError> {
        if segments.first().map(|(e, _)| *e) != Some(0) {
            return Err(TrainError::InvalidHyper(
                "schedule must start at epoch 0".into(),
            ));
        }
        if !segments.windows(2).all(|w| w[0].0 < w[1].0) {
            return Err(TrainError::InvalidHyper(
                "schedule epochs must be strictly increasing".into(),
            ));
        }
        Ok(Self { segments })
    }

    /// Human-readable identifier, e.g. `0@0.00->14@0.50->18@0.99`.
    pub fn id(&self) -> String {
        self.segments
            .iter()
            .map(|(e, l)| format!("{e}@{:.2}", l.value()))
            .collect::<Vec<_>>()
            .join("->")
    }
}

/// L in force at `epoch`: the last segment with start_epoch <= epoch.
pub fn l_at(schedule: &LSchedule, epoch: usize) -> AskLikelihood {
    schedule
        .segments
        .iter()
        .take_while(|(start, _)| *start <= epoch)
        .last()
        .map(|(_, l)| *l)
        .unwrap_or(AskLikelihood::ZERO)
}

/// Teacher verdict on one action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Mistake,
    Ok,
}

/// An action is a mistake iff it strictly increases the distance to the
/// goal; ties are accepted.
pub fn judge(prev_distance: f64, new_distance: f64) -> Verdict {
    if new_distance > prev_distance {
        Verdict::Mistake
    } else {
        Verdict::Ok
    }
}

/// Bookkeeping for one committed environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub transition: Transition,
    pub reward: f64,
    /// Sampled actions, committed or undone (>= 1).
    pub attempts: usize,
    pub feedback_requested: usize,
    pub mistakes_corrected: usize,
}

/// Attempt cap; exceeding it signals a pathological task/teacher setup.
pub const ATTEMPT_CAP: usize = 10_000;

/// One interactive environment step: sample an exploratory action, ask the
/// teacher with probability L, undo and resample on a reported mistake,
/// commit otherwise. The committed application consumes one episode step;
/// every attempt increments `cumulative_interactions`.
pub fn interactive_step(
    task: &ReachTask,
    state: &EnvState,
    agent: &Agent,
    l: AskLikelihood,
    rng: &mut impl Rng,
    cumulative_interactions: &mut u64,
) -> Result<(EnvState, StepOutcome), TrainError> {
    let prev_distance = distance_to_goal(task, state)?;
    let obs = state.observation();
    let mut attempts = 0usize;
    let mut feedback_requested = 0usize;
    let mut mistakes_corrected = 0usize;
    loop {
        attempts += 1;
        if attempts > ATTEMPT_CAP {
            return Err(TrainError::AttemptCap(ATTEMPT_CAP));
        }
        *cumulative_interactions += 1;
        let (exploratory, _greedy) = agent.select_action(&obs, rng)?;
        let (next, reward, _done) = step(task, state, &exploratory)?;
        // The ask decision is re-rolled on every attempt.
        if l.value() > 0.0 && rng.gen::<f64>() < l.value() {
            feedback_requested += 1;
            let new_distance = distance_to_goal(task, &next)?;
            if judge(prev_distance, new_distance) == Verdict::Mistake {
                // Undo: `state` is untouched, simply resample.
                mistakes_corrected += 1;
                continue;
            }
        }
        // Executed delta after clipping and joint clamping.
        let executed: Vec<f64> = next
            .joints
            .angles
            .iter()
            .zip(&state.joints.angles)
            .map(|(a, b)| a - b)
            .collect();
        let transition = Transition {
            state: obs,
            action_scaled: agent.scale_action(&crate::environment::ActionVec::new(executed)),
            reward,
            next_state: next.observation(),
            terminal: next.done,
        };
        let outcome = StepOutcome {
            transition,
            reward,
            attempts,
            feedback_requested,
            mistakes_corrected,
        };
        return Ok((next, outcome));
    }
}
