//! The reaching task: state/action definitions, sparse reward, episode
//! termination, and the episode-budget arithmetic.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::EnvError;
use crate::kinematics::{
    estimate_workspace_volume, forward_kinematics, load_chain, CartesianPoint, JointConfig,
    KinematicChain,
};

/// Default per-step joint displacement bound (rad).
pub const DEFAULT_ACTION_MAX: f64 = PI / 10.0;

/// Samples used when the episode budget needs a workspace estimate.
const BUDGET_WORKSPACE_SAMPLES: usize = 200_000;
const BUDGET_WORKSPACE_SEED: u64 = 0;

/// A reaching task over a kinematic chain with a sparse goal-zone reward.
#[derive(Debug, Clone)]
pub struct ReachTask {
    pub name: String,
    pub chain: KinematicChain,
    /// Goal zone radius (m); reaching within it yields reward 1.
    pub gzr: f64,
    /// Per-step joint displacement bound (rad).
    pub action_max: f64,
    /// Episode length cap.
    pub steps_max: usize,
}

impl ReachTask {
    pub fn new(
        name: impl Into<String>,
        chain: KinematicChain,
        gzr: f64,
        action_max: f64,
        steps_max: usize,
    ) -> Result<Self, EnvError> {
        if !(gzr > 0.0) {
            return Err(EnvError::InvalidTask("gzr must be positive".into()));
        }
        if !(action_max > 0.0) {
            return Err(EnvError::InvalidTask("action_max must be positive".into()));
        }
        if steps_max == 0 {
            return Err(EnvError::InvalidTask("steps_max must be >= 1".into()));
        }
        Ok(Self {
            name: name.into(),
            chain,
            gzr,
            action_max,
            steps_max,
        })
    }

    pub fn dof(&self) -> usize {
        self.chain.dof()
    }
}

/// Environment state: proprioception plus the Cartesian target.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub joints: JointConfig,
    pub target: CartesianPoint,
    pub step_count: usize,
    pub done: bool,
}

impl EnvState {
    pub fn new(joints: JointConfig, target: CartesianPoint) -> Self {
        Self {
            joints,
            target,
            step_count: 0,
            done: false,
        }
    }

    /// Flat state vector: joint angles followed by target coordinates.
    pub fn observation(&self) -> Vec<f64> {
        let mut obs = self.joints.angles.clone();
        obs.extend_from_slice(&self.target.coordinates);
        obs
    }
}

/// A joint-displacement action; components are clipped to the task's bound
/// when applied.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionVec {
    pub deltas: Vec<f64>,
}

impl ActionVec {
    pub fn new(deltas: Vec<f64>) -> Self {
        Self { deltas }
    }

    pub fn clipped(&self, action_max: f64) -> ActionVec {
        ActionVec::new(
            self.deltas
                .iter()
                .map(|d| d.clamp(-action_max, action_max))
                .collect(),
        )
    }
}

/// Episode-budget constants derived from the task geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeBudget {
    pub steps_min: usize,
    pub steps_max: usize,
    pub g_min: usize,
    pub n_train: usize,
}

/// Apply the clipped action, clamp joints to their limits, and score the
/// resulting position against the goal zone.
pub fn step(
    task: &ReachTask,
    state: &EnvState,
    action: &ActionVec,
) -> Result<(EnvState, f64, bool), EnvError> {
    if state.done {
        return Err(EnvError::EpisodeDone);
    }
    let joints = apply_action(task, &state.joints, action);
    let position = forward_kinematics(&task.chain, &joints)?;
    let dist = position.distance(&state.target);
    let reached = dist <= task.gzr;
    let step_count = state.step_count + 1;
    let done = reached || step_count >= task.steps_max;
    let next = EnvState {
        joints,
        target: state.target.clone(),
        step_count,
        done,
    };
    Ok((next, if reached { 1.0 } else { 0.0 }, done))
}

/// Clip the action and clamp the resulting joints to their limits.
pub fn apply_action(task: &ReachTask, joints: &JointConfig, action: &ActionVec) -> JointConfig {
    let clipped = action.clipped(task.action_max);
    let angles = joints
        .angles
        .iter()
        .zip(clipped.deltas.iter())
        .zip(task.chain.actuated_limits())
        .map(|((q, d), (lo, hi))| (q + d).clamp(lo, hi))
        .collect();
    JointConfig::new(angles)
}

/// Euclidean distance between the end-effector and the target.
pub fn distance_to_goal(task: &ReachTask, state: &EnvState) -> Result<f64, EnvError> {
    let p = forward_kinematics(&task.chain, &state.joints)?;
    Ok(p.distance(&state.target))
}

fn round_half_up(x: f64) -> u64 {
    (x + 0.5).floor() as u64
}

/// Ceiling to the next multiple of 10 (values already on a multiple stay).
fn ceil_to_ten(x: u64) -> u64 {
    x.div_ceil(10) * 10
}

/// Round half-up to two significant digits.
fn round_two_significant(n: u64) -> u64 {
    if n < 100 {
        return n;
    }
    let digits = (n as f64).log10().floor() as u32 + 1;
    let scale = 10u64.pow(digits - 2);
    round_half_up(n as f64 / scale as f64) * scale
}

/// Episode-budget formulas:
/// steps_min = round(widest joint range / action_max);
/// steps_max = 3 * steps_min ceiled to the next multiple of 10;
/// g_min = override, or a packing-density estimate of how many goal zones
/// tile the workspace; n_train = 10 * g_min rounded to two significant digits.
pub fn compute_episode_budget(
    chain: &KinematicChain,
    action_max: f64,
    gzr: f64,
    g_min_override: Option<usize>,
) -> Result<EpisodeBudget, EnvError> {
    let range_max = chain.max_joint_range();
    if !(range_max > 0.0) {
        return Err(EnvError::Budget("zero-width joint ranges".into()));
    }
    if !(action_max > 0.0) || !(gzr > 0.0) {
        return Err(EnvError::Budget("action_max and gzr must be positive".into()));
    }
    let steps_min = round_half_up(range_max / action_max).max(1);
    let steps_max = ceil_to_ten(3 * steps_min);
    let g_min = match g_min_override {
        Some(g) => g as u64,
        None => {
            let volume = estimate_workspace_volume(
                chain,
                gzr,
                BUDGET_WORKSPACE_SAMPLES,
                BUDGET_WORKSPACE_SEED,
            )?;
            // Optimal packing densities: pi/sqrt(12) for discs, pi/sqrt(18)
            // for balls.
            let (eta, zone) = match chain.task_space_dim {
                2 => (PI / 12f64.sqrt(), PI * gzr * gzr),
                _ => (PI / 18f64.sqrt(), 4.0 / 3.0 * PI * gzr.powi(3)),
            };
            round_half_up(eta * volume / zone).max(1)
        }
    };
    let n_train = round_two_significant(10 * g_min);
    Ok(EpisodeBudget {
        steps_min: steps_min as usize,
        steps_max: steps_max as usize,
        g_min: g_min as usize,
        n_train: n_train as usize,
    })
}

/// On-disk task definition: a chain file reference plus the task constants
/// and optional budget overrides.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskFile {
    pub name: String,
    pub chain_file: String,
    pub gzr: f64,
    #[serde(default = "default_action_max")]
    pub action_max: f64,
    #[serde(default)]
    pub g_min_override: Option<usize>,
    #[serde(default)]
    pub steps_max_override: Option<usize>,
}

fn default_action_max() -> f64 {
    DEFAULT_ACTION_MAX
}

/// Load a task file and resolve it into a `ReachTask` plus its budget.
/// The chain file path is resolved relative to the task file's directory.
pub fn load_task(path: impl AsRef<Path>) -> Result<(ReachTask, EpisodeBudget), EnvError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| EnvError::InvalidTask(format!("{}: {e}", path.display())))?;
    let file: TaskFile =
        toml::from_str(&text).map_err(|e| EnvError::InvalidTask(format!("{}: {e}", path.display())))?;
    let chain_path = path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&file.chain_file);
    let chain = load_chain(chain_path)?;
    resolve_task(&file, chain)
}

pub fn resolve_task(
    file: &TaskFile,
    chain: KinematicChain,
) -> Result<(ReachTask, EpisodeBudget), EnvError> {
    let mut budget = compute_episode_budget(&chain, file.action_max, file.gzr, file.g_min_override)?;
    if let Some(sm) = file.steps_max_override {
        budget.steps_max = sm;
    }
    let task = ReachTask::new(
        file.name.clone(),
        chain,
        file.gzr,
        file.action_max,
        budget.steps_max,
    )?;
    Ok((task, budget))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::planar_chain;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn planar_task() -> ReachTask {
        let chain = planar_chain("planar2", &[1.0, 1.0], PI);
        ReachTask::new("planar2-reach", chain, 0.1, DEFAULT_ACTION_MAX, 20).unwrap()
    }

    #[test]
    fn reaching_goal_rewards_and_terminates() {
        let task = planar_task();
        // Straight arm one small rotation away from the target.
        let state = EnvState::new(
            JointConfig::new(vec![0.0, 0.0]),
            CartesianPoint::new(vec![2.0 * (0.1f64).cos(), 2.0 * (0.1f64).sin()]),
        );
        let (next, reward, done) = step(&task, &state, &ActionVec::new(vec![0.1, 0.0])).unwrap();
        assert_eq!(reward, 1.0);
        assert!(done && next.done);
    }

    #[test]
    fn oversized_delta_is_clipped_to_action_max() {
        let task = planar_task();
        let state = EnvState::new(
            JointConfig::new(vec![0.0, 0.0]),
            CartesianPoint::new(vec![-2.0, 0.0]),
        );
        let (next, _, _) = step(&task, &state, &ActionVec::new(vec![0.5, 0.0])).unwrap();
        assert!((next.joints.angles[0] - PI / 10.0).abs() < 1e-15);
    }

    #[test]
    fn zero_action_keeps_distance() {
        let task = planar_task();
        let state = EnvState::new(
            JointConfig::new(vec![0.3, -0.2]),
            CartesianPoint::new(vec![-2.0, 0.0]),
        );
        let before = distance_to_goal(&task, &state).unwrap();
        let (next, reward, _) = step(&task, &state, &ActionVec::new(vec![0.0, 0.0])).unwrap();
        let after = distance_to_goal(&task, &next).unwrap();
        assert_eq!(reward, 0.0);
        assert!((before - after).abs() < 1e-15);
    }

    #[test]
    fn stepping_done_state_is_an_error() {
        let task = planar_task();
        let mut state = EnvState::new(
            JointConfig::new(vec![0.0, 0.0]),
            CartesianPoint::new(vec![-2.0, 0.0]),
        );
        state.done = true;
        assert!(matches!(
            step(&task, &state, &ActionVec::new(vec![0.0, 0.0])),
            Err(EnvError::EpisodeDone)
        ));
    }

    #[test]
    fn episode_ends_at_steps_max() {
        let task = planar_task();
        let mut state = EnvState::new(
            JointConfig::new(vec![0.0, 0.0]),
            CartesianPoint::new(vec![-2.0, 0.0]),
        );
        let mut total_reward = 0.0;
        while !state.done {
            let (next, r, _) = step(&task, &state, &ActionVec::new(vec![0.0, 0.0])).unwrap();
            total_reward += r;
            state = next;
        }
        assert_eq!(state.step_count, task.steps_max);
        assert_eq!(total_reward, 0.0);
    }

    #[test]
    fn distance_examples() {
        let task = planar_task();
        let straight = EnvState::new(
            JointConfig::new(vec![0.0, 0.0]),
            CartesianPoint::new(vec![0.0, 2.0]),
        );
        assert!((distance_to_goal(&task, &straight).unwrap() - 8f64.sqrt()).abs() < 1e-12);
        let at_target = EnvState::new(
            JointConfig::new(vec![0.0, 0.0]),
            CartesianPoint::new(vec![2.0, 0.0]),
        );
        assert!(distance_to_goal(&task, &at_target).unwrap() < 1e-12);
    }

    #[test]
    fn joints_stay_within_limits_under_fuzzing() {
        let chain = planar_chain("planar2", &[1.0, 1.0], PI / 3.0);
        let task = ReachTask::new("t", chain, 0.1, DEFAULT_ACTION_MAX, 10_000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut state = EnvState::new(
            JointConfig::new(vec![0.0, 0.0]),
            CartesianPoint::new(vec![9.0, 9.0]),
        );
        for _ in 0..10_000 {
            let action = ActionVec::new(vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
            let (next, _, _) = step(&task, &state, &action).unwrap();
            for (&q, (lo, hi)) in next.joints.angles.iter().zip(task.chain.actuated_limits()) {
                assert!(q >= lo && q <= hi);
            }
            state = next;
        }
    }

    #[test]
    fn steps_max_rounding_matches_reference_rows() {
        // steps_min -> steps_max: 6 -> 20, 13 -> 40, 19 -> 60.
        assert_eq!(ceil_to_ten(3 * 6), 20);
        assert_eq!(ceil_to_ten(3 * 13), 40);
        assert_eq!(ceil_to_ten(3 * 19), 60);
    }

    #[test]
    fn n_train_rounding_matches_reference_rows() {
        // g_min -> n_train: 22 -> 220, 224 -> 2200, 38 -> 380, 261 -> 2600.
        assert_eq!(round_two_significant(10 * 22), 220);
        assert_eq!(round_two_significant(10 * 224), 2200);
        assert_eq!(round_two_significant(10 * 38), 380);
        assert_eq!(round_two_significant(10 * 261), 2600);
    }

    #[test]
    fn steps_min_from_kuka_like_range() {
        // 340 degrees of motion with a pi/10 step bound -> 19 steps.
        let deg = PI / 180.0;
        let chain = planar_chain("wide", &[1.0, 1.0], 170.0 * deg);
        let budget = compute_episode_budget(&chain, DEFAULT_ACTION_MAX, 0.1, Some(22)).unwrap();
        assert_eq!(budget.steps_min, 19);
        assert_eq!(budget.steps_max, 60);
        assert_eq!(budget.n_train, 220);
    }

    #[test]
    fn budget_invariants_hold() {
        let chain = planar_chain("planar2", &[1.0, 1.0], PI / 4.0);
        let budget = compute_episode_budget(&chain, DEFAULT_ACTION_MAX, 0.08, None).unwrap();
        assert!(budget.steps_max % 10 == 0);
        assert!(budget.steps_max >= 3 * budget.steps_min);
        assert!(budget.n_train >= budget.g_min * 10 * 95 / 100);
    }
}
