//! Generation and storage of train/validation/test sets of
//! (start configuration, target point) pairs.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::environment::ReachTask;
use crate::error::DatasetError;
use crate::kinematics::{forward_kinematics, sample_joint_config, CartesianPoint, JointConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Train,
    Validation,
    Test,
}

impl DatasetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Train => "train",
            DatasetKind::Validation => "validation",
            DatasetKind::Test => "test",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(DatasetKind::Train),
            "validation" => Some(DatasetKind::Validation),
            "test" => Some(DatasetKind::Test),
            _ => None,
        }
    }

    /// PRNG substream index; the three sets draw from disjoint streams.
    fn stream(self) -> u64 {
        match self {
            DatasetKind::Train => 0,
            DatasetKind::Validation => 1,
            DatasetKind::Test => 2,
        }
    }
}

/// One episode: where the arm starts and where the target is.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSpec {
    pub start: JointConfig,
    pub target: CartesianPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub task_name: String,
    pub seed: u64,
    pub specs: Vec<EpisodeSpec>,
}

/// Consecutive-rejection budget before generation gives up.
const MAX_CONSECUTIVE_REJECTIONS: usize = 100_000;

fn generate_set(
    task: &ReachTask,
    kind: DatasetKind,
    n: usize,
    seed: u64,
) -> Result<Dataset, DatasetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(kind.stream());
    let mut specs = Vec::with_capacity(n);
    let mut consecutive_rejections = 0usize;
    while specs.len() < n {
        let start = sample_joint_config(&task.chain, &mut rng);
        let target_joints = sample_joint_config(&task.chain, &mut rng);
        let start_pos = forward_kinematics(&task.chain, &start)?;
        let target = forward_kinematics(&task.chain, &target_joints)?;
        // Rejection rule: targets already inside the goal zone of the start
        // position are discarded and the pair is redrawn.
        if start_pos.distance(&target) <= task.gzr {
            consecutive_rejections += 1;
            if consecutive_rejections >= MAX_CONSECUTIVE_REJECTIONS {
                return Err(DatasetError::Generation(format!(
                    "rejection rate exceeded over {MAX_CONSECUTIVE_REJECTIONS} draws; \
                     gzr {} likely larger than the workspace",
                    task.gzr
                )));
            }
            continue;
        }
        consecutive_rejections = 0;
        specs.push(EpisodeSpec { start, target });
    }
    Ok(Dataset {
        kind,
        task_name: task.name.clone(),
        seed,
        specs,
    })
}

/// Generate the three sets: |train| = |test| = n_train,
/// |validation| = n_train / 5 (floor). Deterministic given the seed; the
/// sets use disjoint PRNG substreams.
pub fn generate_datasets(
    task: &ReachTask,
    n_train: usize,
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset), DatasetError> {
    if n_train < 5 {
        return Err(DatasetError::Generation(format!(
            "n_train must be >= 5, got {n_train}"
        )));
    }
    let train = generate_set(task, DatasetKind::Train, n_train, seed)?;
    let validation = generate_set(task, DatasetKind::Validation, n_train / 5, seed)?;
    let test = generate_set(task, DatasetKind::Test, n_train, seed)?;
    Ok((train, validation, test))
}

fn validate_dataset(dataset: &Dataset, task: &ReachTask) -> Result<(), DatasetError> {
    if dataset.specs.is_empty() {
        return Err(DatasetError::Invariant("empty spec list".into()));
    }
    for (i, spec) in dataset.specs.iter().enumerate() {
        let pos = forward_kinematics(&task.chain, &spec.start)?;
        if pos.distance(&spec.target) <= task.gzr {
            return Err(DatasetError::Invariant(format!(
                "pair {i} violates the rejection rule (distance <= gzr {})",
                task.gzr
            )));
        }
    }
    Ok(())
}

/// CSV rendering with 17 significant digits, lossless for f64.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Save as CSV: a metadata line, a column-header line, then one row per
/// pair with columns j1..jDoF, x, y[, z].
pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let dof = dataset.specs.first().map_or(0, |s| s.start.angles.len());
    let dim = dataset
        .specs
        .first()
        .map_or(0, |s| s.target.coordinates.len());
    let mut out = String::new();
    writeln!(
        out,
        "# task={},kind={},seed={}",
        dataset.task_name,
        dataset.kind.as_str(),
        dataset.seed
    )
    .unwrap();
    let mut header: Vec<String> = (1..=dof).map(|i| format!("j{i}")).collect();
    header.extend(["x", "y", "z"][..dim].iter().map(|s| s.to_string()));
    writeln!(out, "{}", header.join(",")).unwrap();
    for spec in &dataset.specs {
        let row: Vec<String> = spec
            .start
            .angles
            .iter()
            .chain(&spec.target.coordinates)
            .map(|&v| fmt_f64(v))
            .collect();
        writeln!(out, "{}", row.join(",")).unwrap();
    }
    std::fs::write(path.as_ref(), out)
        .map_err(|e| DatasetError::Io(format!("{}: {e}", path.as_ref().display())))
}

/// Load a dataset CSV and re-check all invariants against the task.
pub fn load_dataset(path: impl AsRef<Path>, task: &ReachTask) -> Result<Dataset, DatasetError> {
    let path_str = path.as_ref().display().to_string();
    let malformed = |reason: &str| DatasetError::Malformed {
        path: path_str.clone(),
        reason: reason.to_string(),
    };
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| DatasetError::Io(format!("{path_str}: {e}")))?;
    let mut lines = text.lines();
    let meta = lines.next().ok_or_else(|| malformed("missing metadata line"))?;
    let meta = meta
        .strip_prefix("# ")
        .ok_or_else(|| malformed("metadata line must start with '# '"))?;
    let mut task_name = None;
    let mut kind = None;
    let mut seed = None;
    for kv in meta.split(',') {
        match kv.split_once('=') {
            Some(("task", v)) => task_name = Some(v.to_string()),
            Some(("kind", v)) => kind = DatasetKind::parse(v),
            Some(("seed", v)) => seed = v.parse::<u64>().ok(),
            _ => return Err(malformed(&format!("bad metadata entry '{kv}'"))),
        }
    }
    let (task_name, kind, seed) = match (task_name, kind, seed) {
        (Some(t), Some(k), Some(s)) => (t, k, s),
        _ => return Err(malformed("metadata must carry task, kind and seed")),
    };
    let header = lines.next().ok_or_else(|| malformed("missing header"))?;
    let columns = header.split(',').count();
    let dof = task.dof();
    let dim = task.chain.task_space_dim;
    if columns != dof + dim {
        return Err(malformed(&format!(
            "expected {} columns for the task, found {columns}",
            dof + dim
        )));
    }
    let mut specs = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let values: Result<Vec<f64>, _> = line.split(',').map(str::parse::<f64>).collect();
        let values =
            values.map_err(|e| malformed(&format!("row {}: {e}", lineno + 3)))?;
        if values.len() != dof + dim {
            return Err(malformed(&format!("row {}: wrong arity", lineno + 3)));
        }
        specs.push(EpisodeSpec {
            start: JointConfig::new(values[..dof].to_vec()),
            target: CartesianPoint::new(values[dof..].to_vec()),
        });
    }
    let dataset = Dataset {
        kind,
        task_name,
        seed,
        specs,
    };
    validate_dataset(&dataset, task)?;
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::DEFAULT_ACTION_MAX;
    use crate::kinematics::planar_chain;
    use std::f64::consts::PI;

    fn planar_task() -> ReachTask {
        let chain = planar_chain("planar2", &[1.0, 1.0], PI);
        ReachTask::new("planar2-reach", chain, 0.1, DEFAULT_ACTION_MAX, 20).unwrap()
    }

    #[test]
    fn sizes_and_rejection_rule() {
        let task = planar_task();
        let (train, validation, test) = generate_datasets(&task, 220, 42).unwrap();
        assert_eq!(train.specs.len(), 220);
        assert_eq!(validation.specs.len(), 44);
        assert_eq!(test.specs.len(), 220);
        for ds in [&train, &validation, &test] {
            for spec in &ds.specs {
                let pos = forward_kinematics(&task.chain, &spec.start).unwrap();
                assert!(pos.distance(&spec.target) > task.gzr);
            }
        }
    }

    #[test]
    fn sets_differ_across_substreams() {
        let task = planar_task();
        let (train, _, test) = generate_datasets(&task, 50, 1).unwrap();
        assert_ne!(train.specs, test.specs);
    }

    #[test]
    fn generation_is_deterministic_and_files_are_byte_identical() {
        let task = planar_task();
        let dir = tempfile::tempdir().unwrap();
        let (a, _, _) = generate_datasets(&task, 60, 7).unwrap();
        let (b, _, _) = generate_datasets(&task, 60, 7).unwrap();
        assert_eq!(a, b);
        let pa = dir.path().join("a.csv");
        let pb = dir.path().join("b.csv");
        save_dataset(&a, &pa).unwrap();
        save_dataset(&b, &pb).unwrap();
        assert_eq!(
            std::fs::read(&pa).unwrap(),
            std::fs::read(&pb).unwrap()
        );
    }

    #[test]
    fn save_load_round_trip() {
        let task = planar_task();
        let dir = tempfile::tempdir().unwrap();
        let (train, _, _) = generate_datasets(&task, 30, 3).unwrap();
        let path = dir.path().join("train.csv");
        save_dataset(&train, &path).unwrap();
        let loaded = load_dataset(&path, &task).unwrap();
        assert_eq!(loaded, train);
    }

    #[test]
    fn load_rejects_rule_violation() {
        let task = planar_task();
        let dir = tempfile::tempdir().unwrap();
        let (mut train, _, _) = generate_datasets(&task, 10, 3).unwrap();
        // Put a target exactly on the start's end-effector.
        let pos = forward_kinematics(&task.chain, &train.specs[0].start).unwrap();
        train.specs[0].target = pos;
        let path = dir.path().join("bad.csv");
        save_dataset(&train, &path).unwrap();
        assert!(matches!(
            load_dataset(&path, &task),
            Err(DatasetError::Invariant(_))
        ));
    }

    #[test]
    fn load_rejects_empty_and_malformed() {
        let task = planar_task();
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.csv");
        std::fs::write(&empty, "# task=planar2-reach,kind=train,seed=1\nj1,j2,x,y\n").unwrap();
        assert!(matches!(
            load_dataset(&empty, &task),
            Err(DatasetError::Invariant(_))
        ));
        let garbled = dir.path().join("garbled.csv");
        std::fs::write(&garbled, "not a dataset\n").unwrap();
        assert!(matches!(
            load_dataset(&garbled, &task),
            Err(DatasetError::Malformed { .. })
        ));
    }

    #[test]
    fn oversized_gzr_is_a_configuration_error() {
        let chain = planar_chain("planar2", &[1.0, 1.0], PI);
        let task = ReachTask::new("t", chain, 50.0, DEFAULT_ACTION_MAX, 20).unwrap();
        assert!(matches!(
            generate_datasets(&task, 10, 1),
            Err(DatasetError::Generation(_))
        ));
    }

    #[test]
    fn start_angles_pass_ks_uniformity() {
        let task = planar_task();
        let (train, _, _) = generate_datasets(&task, 10_000, 1234).unwrap();
        let n = train.specs.len();
        // KS critical value at alpha = 0.01.
        let critical = 1.628 / (n as f64).sqrt();
        for joint in 0..task.dof() {
            let (lo, hi) = task.chain.actuated_limits()[joint];
            let mut values: Vec<f64> = train
                .specs
                .iter()
                .map(|s| (s.start.angles[joint] - lo) / (hi - lo))
                .collect();
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let d = values
                .iter()
                .enumerate()
                .map(|(i, &u)| {
                    let upper = ((i + 1) as f64 / n as f64 - u).abs();
                    let lower = (u - i as f64 / n as f64).abs();
                    upper.max(lower)
                })
                .fold(0.0, f64::max);
            assert!(d < critical, "joint {joint}: D = {d} >= {critical}");
        }
    }
}
