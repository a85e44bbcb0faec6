//! Experiment orchestration: deterministic training sweeps over L and
//! seeds, feedback-free evaluation, run records, and resumable output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{failure_rate, positioning_error, CurvePoint, EvalResult, LearningCurve};
use crate::cacla::{save_agent, Agent, Hyperparams};
use crate::datasets::Dataset;
use crate::environment::{step, EnvState, ReachTask};
use crate::error::HarnessError;
use crate::interaction::{interactive_step, l_at, AskLikelihood, LSchedule};

/// Sweep configuration; the on-disk form is TOML.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task_file: String,
    #[serde(default = "default_l_grid")]
    pub l_grid: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    pub epochs: usize,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    pub master_seed: u64,
    /// Optional adaptive schedule, run in addition to the constant-L grid:
    /// list of (epoch, L) pairs.
    #[serde(default)]
    pub schedule: Option<Vec<(usize, f64)>>,
    /// Dataset size override; defaults to the computed episode budget.
    #[serde(default)]
    pub n_train: Option<usize>,
    #[serde(default)]
    pub dataset_seed: Option<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    /// Optional path to hyperparameters JSON (e.g. a hyperopt best trial);
    /// mid-range defaults are used when absent.
    #[serde(default)]
    pub hyper_file: Option<String>,
}

fn default_output_dir() -> String {
    "out".into()
}

/// The 11-point grid: 0.0, 0.1, ..., 0.9 with 0.99 replacing 1.0.
pub fn default_l_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
    grid.push(0.99);
    grid
}

fn default_seeds() -> usize {
    20
}

fn default_eval_every() -> usize {
    1
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds == 0 {
            return Err(HarnessError::Config("seeds must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(HarnessError::Config("epochs must be >= 1".into()));
        }
        if self.eval_every == 0 {
            return Err(HarnessError::Config("eval_every must be >= 1".into()));
        }
        for &l in &self.l_grid {
            AskLikelihood::new(l).map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| HarnessError::Io(format!("{}: {e}", path.as_ref().display())))?;
        let config: Self =
            toml::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Schedules to sweep: one constant schedule per grid value, plus the
    /// optional adaptive one.
    pub fn schedules(&self) -> Result<Vec<LSchedule>, HarnessError> {
        let mut out = Vec::new();
        for &l in &self.l_grid {
            let l = AskLikelihood::new(l).map_err(|e| HarnessError::Config(e.to_string()))?;
            out.push(LSchedule::constant(l));
        }
        if let Some(segments) = &self.schedule {
            let segments = segments
                .iter()
                .map(|&(e, l)| Ok((e, AskLikelihood::new(l)?)))
                .collect::<Result<Vec<_>, crate::error::TrainError>>()
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            out.push(LSchedule::new(segments).map_err(|e| HarnessError::Config(e.to_string()))?);
        }
        Ok(out)
    }
}

/// Short label for a schedule: the constant L value, or the segment chain.
pub fn schedule_label(schedule: &LSchedule) -> String {
    if schedule.segments.len() == 1 {
        format!("{}", schedule.segments[0].1.value())
    } else {
        schedule.id()
    }
}

/// One evaluation row of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub task: String,
    pub l_id: String,
    pub seed: u64,
    pub epoch: usize,
    pub cumulative_steps: u64,
    pub failure_rate: f64,
    pub positioning_error: f64,
}

/// Train one epoch: iterate the training set once in dataset order with
/// interactive stepping at `l`, updating the agent on every committed
/// transition. Returns the number of environment interactions consumed.
pub fn train_epoch(
    task: &ReachTask,
    train_set: &Dataset,
    agent: &mut Agent,
    l: AskLikelihood,
    rng: &mut ChaCha8Rng,
    cumulative_interactions: &mut u64,
) -> Result<(), HarnessError> {
    for spec in &train_set.specs {
        let mut state = EnvState::new(spec.start.clone(), spec.target.clone());
        while !state.done {
            let (next, outcome) =
                interactive_step(task, &state, agent, l, rng, cumulative_interactions)?;
            agent.update(&outcome.transition)?;
            state = next;
        }
    }
    Ok(())
}

/// Feedback-free evaluation: greedy actions, no exploration noise, no
/// updates, no undo. Returns per-episode final distances and rewards.
pub fn evaluate_agent(
    task: &ReachTask,
    agent: &Agent,
    test_set: &Dataset,
) -> Result<(Vec<f64>, Vec<f64>), HarnessError> {
    let mut distances = Vec::with_capacity(test_set.specs.len());
    let mut rewards = Vec::with_capacity(test_set.specs.len());
    for spec in &test_set.specs {
        let mut state = EnvState::new(spec.start.clone(), spec.target.clone());
        let mut episode_reward = 0.0;
        while !state.done {
            let action = agent.greedy_action(&state.observation())?;
            let (next, reward, _) = step(task, &state, &action)?;
            episode_reward += reward;
            state = next;
        }
        let final_distance = crate::environment::distance_to_goal(task, &state)?;
        distances.push(final_distance);
        rewards.push(episode_reward);
    }
    Ok((distances, rewards))
}

/// Evaluate a checkpointed agent into an `EvalResult`.
pub fn evaluate(
    task: &ReachTask,
    agent: &Agent,
    test_set: &Dataset,
    l_id: &str,
    seed: u64,
    epoch: usize,
    cumulative_steps: u64,
) -> Result<EvalResult, HarnessError> {
    if agent.actor.config.output_dim != task.dof() {
        return Err(HarnessError::Config(format!(
            "agent is for {} DoF, task has {}",
            agent.actor.config.output_dim,
            task.dof()
        )));
    }
    let (final_distances, rewards) = evaluate_agent(task, agent, test_set)?;
    Ok(EvalResult {
        task: task.name.clone(),
        l_id: l_id.to_string(),
        seed,
        epoch,
        cumulative_steps,
        final_distances,
        rewards,
    })
}

/// Metric values are stored at the CSV precision so resumed runs (parsed
/// from disk) compare equal to freshly computed ones.
fn round6(x: f64) -> f64 {
    format!("{x:.6}").parse().expect("formatted f64 reparses")
}

/// PRNG substream id for run (schedule_index, seed_index): reproducible
/// regardless of scheduling order.
fn run_stream(schedule_index: usize, seed_index: usize) -> u64 {
    ((schedule_index as u64) << 32) | seed_index as u64
}

/// Outcome of one (schedule, seed) run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub l_id: String,
    pub seed: u64,
    pub records: Vec<RunRecord>,
    /// Set when the run diverged to non-finite parameters.
    pub failed: Option<String>,
}

/// Train one (schedule, seed) run and evaluate every `eval_every` epochs.
pub fn run_single(
    task: &ReachTask,
    train_set: &Dataset,
    test_set: &Dataset,
    hyper: &Hyperparams,
    schedule: &LSchedule,
    schedule_index: usize,
    seed_index: usize,
    master_seed: u64,
    epochs: usize,
    eval_every: usize,
    checkpoint_path: Option<&Path>,
) -> Result<RunOutput, HarnessError> {
    let l_id = schedule_label(schedule);
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(run_stream(schedule_index, seed_index));
    let mut agent = Agent::new(task, hyper.clone(), &mut rng)?;
    let mut cumulative = 0u64;
    let mut records = Vec::new();
    for epoch in 1..=epochs {
        let l = l_at(schedule, epoch - 1);
        let result = train_epoch(task, train_set, &mut agent, l, &mut rng, &mut cumulative);
        if result.is_err() || !agent.params_finite() {
            let reason = match result {
                Err(e) => e.to_string(),
                Ok(()) => "non-finite parameters".to_string(),
            };
            return Ok(RunOutput {
                l_id,
                seed: seed_index as u64,
                records,
                failed: Some(reason),
            });
        }
        if let Some(path) = checkpoint_path {
            save_agent(&agent, path)?;
        }
        if epoch % eval_every == 0 || epoch == epochs {
            let eval = evaluate(
                task,
                &agent,
                test_set,
                &l_id,
                seed_index as u64,
                epoch,
                cumulative,
            )?;
            records.push(RunRecord {
                task: task.name.clone(),
                l_id: l_id.clone(),
                seed: seed_index as u64,
                epoch,
                cumulative_steps: cumulative,
                failure_rate: round6(failure_rate(&eval)),
                positioning_error: round6(positioning_error(&eval, task.gzr)),
            });
        }
    }
    Ok(RunOutput {
        l_id,
        seed: seed_index as u64,
        records,
        failed: None,
    })
}

fn records_csv(records: &[RunRecord]) -> String {
    let mut out =
        String::from("task,l,seed,epoch,cumulative_steps,failure_rate,positioning_error\n");
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{:.6},{:.6}",
            r.task, r.l_id, r.seed, r.epoch, r.cumulative_steps, r.failure_rate, r.positioning_error
        )
        .unwrap();
    }
    out
}

pub fn parse_records_csv(text: &str) -> Result<Vec<RunRecord>, HarnessError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| HarnessError::Io("empty records file".into()))?;
    if header != "task,l,seed,epoch,cumulative_steps,failure_rate,positioning_error" {
        return Err(HarnessError::Io(format!("unexpected header: {header}")));
    }
    let mut records = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 7 {
            return Err(HarnessError::Io(format!("bad record row: {line}")));
        }
        records.push(RunRecord {
            task: parts[0].to_string(),
            l_id: parts[1].to_string(),
            seed: parts[2].parse().map_err(|e| HarnessError::Io(format!("{e}")))?,
            epoch: parts[3].parse().map_err(|e| HarnessError::Io(format!("{e}")))?,
            cumulative_steps: parts[4].parse().map_err(|e| HarnessError::Io(format!("{e}")))?,
            failure_rate: parts[5].parse().map_err(|e| HarnessError::Io(format!("{e}")))?,
            positioning_error: parts[6].parse().map_err(|e| HarnessError::Io(format!("{e}")))?,
        });
    }
    Ok(records)
}

fn run_dir(output_dir: &Path, l_id: &str, seed: u64) -> PathBuf {
    output_dir
        .join("runs")
        .join(format!("L_{l_id}"))
        .join(format!("seed_{seed}"))
}

/// Execute the full sweep. Runs are independent and execute in parallel;
/// each writes its own records file under `output_dir/runs/` before the
/// deterministic merge into `records.csv`. Completed runs found on disk are
/// not re-executed, so an interrupted sweep resumes where it stopped.
pub fn run_training(
    task: &ReachTask,
    train_set: &Dataset,
    test_set: &Dataset,
    hyper: &Hyperparams,
    config: &ExperimentConfig,
    output_dir: &Path,
) -> Result<Vec<RunRecord>, HarnessError> {
    config.validate()?;
    let schedules = config.schedules()?;
    let expected_records = (1..=config.epochs)
        .filter(|e| e % config.eval_every == 0 || *e == config.epochs)
        .count();
    let jobs: Vec<(usize, usize)> = (0..schedules.len())
        .flat_map(|si| (0..config.seeds).map(move |seed| (si, seed)))
        .collect();
    let outputs: Vec<Result<RunOutput, HarnessError>> = jobs
        .par_iter()
        .map(|&(si, seed)| {
            let schedule = &schedules[si];
            let l_id = schedule_label(schedule);
            let dir = run_dir(output_dir, &l_id, seed as u64);
            let records_path = dir.join("records.csv");
            if let Ok(text) = std::fs::read_to_string(&records_path) {
                if let Ok(records) = parse_records_csv(&text) {
                    if records.len() == expected_records {
                        return Ok(RunOutput {
                            l_id,
                            seed: seed as u64,
                            records,
                            failed: None,
                        });
                    }
                }
            }
            std::fs::create_dir_all(&dir)
                .map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?;
            let start = std::time::Instant::now();
            let output = run_single(
                task,
                train_set,
                test_set,
                hyper,
                schedule,
                si,
                seed,
                config.master_seed,
                config.epochs,
                config.eval_every,
                Some(&dir.join("agent.json")),
            )?;
            if let Some(reason) = &output.failed {
                std::fs::write(dir.join("FAILED"), reason)
                    .map_err(|e| HarnessError::Io(e.to_string()))?;
            } else {
                // Atomic per-run publish: write then rename.
                let tmp = dir.join("records.csv.tmp");
                std::fs::write(&tmp, records_csv(&output.records))
                    .map_err(|e| HarnessError::Io(e.to_string()))?;
                std::fs::rename(&tmp, &records_path)
                    .map_err(|e| HarnessError::Io(e.to_string()))?;
            }
            // Wall time stays out of the record schema so record files are
            // byte-stable across reruns.
            let _ = std::fs::write(
                dir.join("meta.txt"),
                format!("wall_time_s={:.3}\n", start.elapsed().as_secs_f64()),
            );
            Ok(output)
        })
        .collect();
    let mut all = Vec::new();
    for output in outputs {
        let output = output?;
        all.extend(output.records);
    }
    // Deterministic merge order.
    all.sort_by(|a, b| {
        (&a.l_id, a.seed, a.epoch).partial_cmp(&(&b.l_id, b.seed, b.epoch)).unwrap()
    });
    std::fs::create_dir_all(output_dir)
        .map_err(|e| HarnessError::Io(format!("{}: {e}", output_dir.display())))?;
    std::fs::write(output_dir.join("records.csv"), records_csv(&all))
        .map_err(|e| HarnessError::Io(e.to_string()))?;
    Ok(all)
}

/// Group merged records into per-(L, seed) learning curves.
pub fn records_to_curves(records: &[RunRecord]) -> Vec<LearningCurve> {
    let mut map: std::collections::BTreeMap<(String, u64), Vec<&RunRecord>> =
        std::collections::BTreeMap::new();
    for r in records {
        map.entry((r.l_id.clone(), r.seed)).or_default().push(r);
    }
    map.into_iter()
        .map(|((l_id, seed), mut rs)| {
            rs.sort_by_key(|r| r.epoch);
            LearningCurve {
                l_id,
                seed,
                points: rs
                    .iter()
                    .map(|r| CurvePoint {
                        cumulative_steps: r.cumulative_steps,
                        failure_rate: r.failure_rate,
                        positioning_error: r.positioning_error,
                    })
                    .collect(),
            }
        })
        .collect()
}
