use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use irlab::analysis::ThresholdReport;
use irlab::cacla::{load_agent, Hyperparams};
use irlab::complexity::{build_profile, recommend_initial_l, save_profile, Band};
use irlab::datasets::{generate_datasets, load_dataset, save_dataset, Dataset};
use irlab::environment::{load_task, EpisodeBudget, ReachTask};
use irlab::harness::{
    default_l_grid, evaluate, parse_records_csv, records_to_curves, run_training, ExperimentConfig,
};
use irlab::hyperopt::{save_trial_log, search, SearchSpace};

#[derive(Parser)]
#[command(
    name = "irlab",
    version,
    about = "Interactive reinforcement learning experiments on reaching tasks"
)]
struct Cli {
    /// Override the master seed of the invoked command or config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train/validation/test episode sets for a task.
    GenData {
        /// Task definition file (TOML).
        #[arg(long)]
        task: PathBuf,
        /// Output directory for the three CSV files.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Training-set size; defaults to the task's episode budget.
        #[arg(long)]
        n_train: Option<usize>,
    },
    /// Random hyperparameter search at L = 0.
    Hyperopt {
        #[arg(long)]
        task: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Number of random trials.
        #[arg(long, default_value_t = 100)]
        budget: usize,
        /// Training epochs per trial.
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long)]
        n_train: Option<usize>,
        /// Load datasets from this directory instead of regenerating them.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run the training sweep described by an experiment config file.
    Train {
        /// Experiment config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate an agent checkpoint on a task's test set.
    Eval {
        #[arg(long)]
        task: PathBuf,
        /// Agent checkpoint (JSON).
        #[arg(long)]
        agent: PathBuf,
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Time-thresholded comparison of a sweep's learning curves.
    Analyze {
        /// Merged records.csv produced by `train`.
        #[arg(long)]
        records: PathBuf,
        /// Failure-rate threshold (%).
        #[arg(long, default_value_t = 20.0)]
        threshold: f64,
        /// Baseline L group.
        #[arg(long, default_value = "0")]
        baseline: String,
        /// Apply Holm-Bonferroni correction to the p-values.
        #[arg(long)]
        holm: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Probe relative task complexity across the L grid.
    Complexity {
        #[arg(long)]
        task: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Fresh agents per probed L.
        #[arg(long, default_value_t = 20)]
        n_agents: usize,
        /// Hyperparameters JSON (defaults to mid-range values).
        #[arg(long)]
        hyper: Option<PathBuf>,
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Print the episode-budget constants of a task.
    Budget {
        #[arg(long)]
        task: PathBuf,
    },
}

const DEFAULT_SEED: u64 = 0;

fn load_task_file(path: &Path) -> Result<(ReachTask, EpisodeBudget)> {
    load_task(path).with_context(|| format!("loading task {}", path.display()))
}

fn load_hyper(path: Option<&Path>, dof: usize) -> Result<Hyperparams> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading hyperparameters {}", p.display()))?;
            let hyper: Hyperparams = serde_json::from_str(&text)
                .with_context(|| format!("parsing hyperparameters {}", p.display()))?;
            hyper.validate()?;
            Ok(hyper)
        }
        None => Ok(Hyperparams::midrange(dof)),
    }
}

/// Load the three sets from `data` if given, otherwise regenerate them
/// deterministically from the task and seed.
fn datasets_for(
    task: &ReachTask,
    n_train: usize,
    seed: u64,
    data: Option<&Path>,
) -> Result<(Dataset, Dataset, Dataset)> {
    match data {
        Some(dir) => {
            let load = |name: &str| {
                load_dataset(dir.join(name), task)
                    .with_context(|| format!("loading {}/{name}", dir.display()))
            };
            Ok((load("train.csv")?, load("validation.csv")?, load("test.csv")?))
        }
        None => Ok(generate_datasets(task, n_train, seed)?),
    }
}

fn report_csv(report: &ThresholdReport) -> String {
    use std::fmt::Write as _;
    let mut out = String::from(
        "threshold,reference_steps,baseline,l,mean,sem,p_value,effect_size,\
         significant_05,significant_001,detrimental\n",
    );
    for row in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{:.6},{:.6},{:.6e},{:.6},{},{},{}",
            report.threshold,
            report.reference_steps,
            report.baseline_l,
            row.l_id,
            row.mean,
            row.sem,
            row.p_value,
            row.effect_size,
            row.significant_05,
            row.significant_001,
            row.detrimental
        )
        .unwrap();
    }
    out
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { task, out, n_train } => {
            let (task, budget) = load_task_file(&task)?;
            let n = n_train.unwrap_or(budget.n_train);
            let seed = cli.seed.unwrap_or(DEFAULT_SEED);
            let (train, validation, test) = generate_datasets(&task, n, seed)?;
            std::fs::create_dir_all(&out)?;
            save_dataset(&train, out.join("train.csv"))?;
            save_dataset(&validation, out.join("validation.csv"))?;
            save_dataset(&test, out.join("test.csv"))?;
            println!(
                "wrote {} train / {} validation / {} test episodes to {}",
                train.specs.len(),
                validation.specs.len(),
                test.specs.len(),
                out.display()
            );
        }
        Command::Hyperopt {
            task,
            out,
            budget,
            epochs,
            n_train,
            data,
        } => {
            let (task, task_budget) = load_task_file(&task)?;
            let n = n_train.unwrap_or(task_budget.n_train);
            let seed = cli.seed.unwrap_or(DEFAULT_SEED);
            let (train, validation, _) = datasets_for(&task, n, seed, data.as_deref())?;
            let space = SearchSpace::default();
            let (best, trials) =
                search(&task, &train, &validation, &space, budget, epochs, seed)?;
            std::fs::create_dir_all(&out)?;
            save_trial_log(&trials, out.join("trials.csv"))?;
            std::fs::write(
                out.join("best.json"),
                serde_json::to_string_pretty(&trials[best].hyper)?,
            )?;
            println!(
                "best trial {} with validation positioning error {:.4}; log in {}",
                trials[best].index,
                trials[best].validation_error,
                out.display()
            );
        }
        Command::Train { config, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seed) = cli.seed {
                cfg.master_seed = seed;
            }
            let base = config.parent().unwrap_or_else(|| Path::new("."));
            let (task, budget) = load_task_file(&base.join(&cfg.task_file))?;
            let n = cfg.n_train.unwrap_or(budget.n_train);
            let data_seed = cfg.dataset_seed.unwrap_or(cfg.master_seed);
            let (train, _, test) = generate_datasets(&task, n, data_seed)?;
            let hyper = load_hyper(
                cfg.hyper_file.as_ref().map(|f| base.join(f)).as_deref(),
                task.dof(),
            )?;
            let out_dir = out.unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
            let records = run_training(&task, &train, &test, &hyper, &cfg, &out_dir)?;
            println!(
                "{} records written to {}",
                records.len(),
                out_dir.join("records.csv").display()
            );
        }
        Command::Eval {
            task,
            agent,
            n_train,
            data,
        } => {
            let (task, budget) = load_task_file(&task)?;
            let agent = load_agent(&agent)?;
            let n = n_train.unwrap_or(budget.n_train);
            let seed = cli.seed.unwrap_or(DEFAULT_SEED);
            let (_, _, test) = datasets_for(&task, n, seed, data.as_deref())?;
            let result = evaluate(&task, &agent, &test, "eval", 0, 0, 0)?;
            println!(
                "failure rate {:.2}%  positioning error {:.4} (gzr units) over {} episodes",
                irlab::analysis::failure_rate(&result),
                irlab::analysis::positioning_error(&result, task.gzr),
                result.final_distances.len()
            );
        }
        Command::Analyze {
            records,
            threshold,
            baseline,
            holm,
            out,
        } => {
            let text = std::fs::read_to_string(&records)
                .with_context(|| format!("reading {}", records.display()))?;
            let parsed = parse_records_csv(&text)?;
            let curves = records_to_curves(&parsed);
            let report = irlab::analysis::threshold_report(&curves, threshold, &baseline, holm)?;
            std::fs::create_dir_all(&out)?;
            let path = out.join("threshold_report.csv");
            std::fs::write(&path, report_csv(&report))?;
            println!(
                "reference steps {} (threshold {}%); report in {}",
                report.reference_steps,
                threshold,
                path.display()
            );
            for row in &report.rows {
                println!(
                    "L={:<22} mean {:6.2}%  effect {:+7.2}  p={:.4}{}",
                    row.l_id,
                    row.mean,
                    row.effect_size,
                    row.p_value,
                    if row.detrimental {
                        "  DETRIMENTAL"
                    } else if row.significant_001 {
                        "  **"
                    } else if row.significant_05 {
                        "  *"
                    } else {
                        ""
                    }
                );
            }
        }
        Command::Complexity {
            task,
            out,
            n_agents,
            hyper,
            n_train,
            data,
        } => {
            if n_agents == 0 {
                bail!("--n-agents must be >= 1");
            }
            let (task, budget) = load_task_file(&task)?;
            let n = n_train.unwrap_or(budget.n_train);
            let seed = cli.seed.unwrap_or(DEFAULT_SEED);
            let (train, _, _) = datasets_for(&task, n, seed, data.as_deref())?;
            let hyper = load_hyper(hyper.as_deref(), task.dof())?;
            let profile =
                build_profile(&task, &train, &hyper, &default_l_grid(), n_agents, seed)?;
            std::fs::create_dir_all(&out)?;
            let path = out.join("complexity.csv");
            save_profile(&profile, &path)?;
            for e in &profile.entries {
                println!(
                    "L={:<4} relative complexity {:.3} (failure {:.1}% +/- {:.1})",
                    e.l, e.relative_complexity, e.mean_failure_rate, e.sem
                );
            }
            let band = Band::default();
            println!(
                "recommended initial L: {} (band [{}, {}]); profile in {}",
                recommend_initial_l(&profile, band)?.value(),
                band.lo,
                band.hi,
                path.display()
            );
        }
        Command::Budget { task } => {
            let (task, budget) = load_task_file(&task)?;
            println!(
                "task {}: steps_min={} steps_max={} g_min={} n_train={}",
                task.name, budget.steps_min, budget.steps_max, budget.g_min, budget.n_train
            );
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
