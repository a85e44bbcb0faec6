//! Task-complexity probing: failure rates of fresh, untrained agents under
//! increasing teacher involvement, and an initial-L recommendation.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cacla::{Agent, Hyperparams};
use crate::datasets::Dataset;
use crate::environment::{EnvState, ReachTask};
use crate::error::AnalysisError;
use crate::interaction::{interactive_step, AskLikelihood};

/// Normalized-failure band considered informative for picking an initial L.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Default for Band {
    fn default() -> Self {
        Self { lo: 0.78, hi: 0.95 }
    }
}

impl Band {
    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

/// One probed ask-likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeEntry {
    pub l: f64,
    /// Mean failure rate (%) over fresh agents.
    pub mean_failure_rate: f64,
    pub sem: f64,
    /// Mean failure rate divided by the L = 0 mean; 1.0 at L = 0 by
    /// construction.
    pub relative_complexity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityProfile {
    pub task: String,
    pub n_agents: usize,
    pub seed: u64,
    pub entries: Vec<ProbeEntry>,
}

/// Per-agent failure rates of fresh, never-updated agents stepping the
/// episode set interactively at `l`. Agents are independent: agent `i`
/// draws from substream `stream_base + i`.
pub fn probe(
    task: &ReachTask,
    episodes: &Dataset,
    hyper: &Hyperparams,
    l: AskLikelihood,
    n_agents: usize,
    master_seed: u64,
    stream_base: u64,
) -> Result<Vec<f64>, AnalysisError> {
    if n_agents == 0 || episodes.specs.is_empty() {
        return Err(AnalysisError::EmptySample);
    }
    (0..n_agents)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
            rng.set_stream(stream_base + i as u64);
            let agent = Agent::new(task, hyper.clone(), &mut rng)
                .map_err(|e| AnalysisError::Input(e.to_string()))?;
            let mut cumulative = 0u64;
            let mut reached = 0usize;
            for spec in &episodes.specs {
                let mut state = EnvState::new(spec.start.clone(), spec.target.clone());
                let mut episode_reward = 0.0;
                while !state.done {
                    let (next, outcome) =
                        interactive_step(task, &state, &agent, l, &mut rng, &mut cumulative)
                            .map_err(|e| AnalysisError::Input(e.to_string()))?;
                    episode_reward += outcome.reward;
                    state = next;
                }
                if episode_reward > 0.0 {
                    reached += 1;
                }
            }
            Ok(100.0 * (1.0 - reached as f64 / episodes.specs.len() as f64))
        })
        .collect()
}

/// Probe each L in `ls` and normalize by the pooled L = 0 mean. `ls` must
/// contain 0.0.
pub fn build_profile(
    task: &ReachTask,
    episodes: &Dataset,
    hyper: &Hyperparams,
    ls: &[f64],
    n_agents: usize,
    master_seed: u64,
) -> Result<ComplexityProfile, AnalysisError> {
    if !ls.contains(&0.0) {
        return Err(AnalysisError::Input(
            "probe grid must contain L = 0 for normalization".into(),
        ));
    }
    let mut raw = Vec::with_capacity(ls.len());
    for (li, &l_val) in ls.iter().enumerate() {
        let l = AskLikelihood::new(l_val).map_err(|e| AnalysisError::Input(e.to_string()))?;
        let rates = probe(
            task,
            episodes,
            hyper,
            l,
            n_agents,
            master_seed,
            (li as u64) << 32,
        )?;
        let mean = rates.iter().sum::<f64>() / rates.len() as f64;
        let sem = if rates.len() >= 2 {
            crate::analysis::sem(&rates)?
        } else {
            0.0
        };
        raw.push((l_val, mean, sem));
    }
    let base = raw
        .iter()
        .find(|(l, _, _)| *l == 0.0)
        .map(|(_, m, _)| *m)
        .expect("grid contains 0.0");
    if !(base > 0.0) {
        return Err(AnalysisError::Input(
            "fresh agents never fail at L = 0; the task is degenerate".into(),
        ));
    }
    let entries = raw
        .into_iter()
        .map(|(l, mean, sem)| ProbeEntry {
            l,
            mean_failure_rate: mean,
            sem,
            relative_complexity: if l == 0.0 { 1.0 } else { mean / base },
        })
        .collect();
    Ok(ComplexityProfile {
        task: task.name.clone(),
        n_agents,
        seed: master_seed,
        entries,
    })
}

/// Initial-L recommendation: the smallest probed L whose relative
/// complexity lies in the band (endpoints inclusive); if none does, the L
/// whose complexity is nearest to the band midpoint.
pub fn recommend_initial_l(
    profile: &ComplexityProfile,
    band: Band,
) -> Result<AskLikelihood, AnalysisError> {
    if profile.entries.is_empty() {
        return Err(AnalysisError::Input("empty complexity profile".into()));
    }
    let smallest_in_band = profile
        .entries
        .iter()
        .filter(|e| band.contains(e.relative_complexity))
        .min_by(|a, b| a.l.partial_cmp(&b.l).unwrap());
    let best = smallest_in_band.unwrap_or_else(|| {
        profile
            .entries
            .iter()
            .min_by(|a, b| {
                let da = (a.relative_complexity - band.mid()).abs();
                let db = (b.relative_complexity - band.mid()).abs();
                da.partial_cmp(&db)
                    .unwrap()
                    .then(a.l.partial_cmp(&b.l).unwrap())
            })
            .expect("entries are nonempty")
    });
    AskLikelihood::new(best.l).map_err(|e| AnalysisError::Input(e.to_string()))
}

pub fn profile_csv(profile: &ComplexityProfile) -> String {
    let mut out = String::from("task,l,relative_complexity,mean_failure_rate,sem,n_agents,seed\n");
    for e in &profile.entries {
        writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{},{}",
            profile.task,
            e.l,
            e.relative_complexity,
            e.mean_failure_rate,
            e.sem,
            profile.n_agents,
            profile.seed
        )
        .unwrap();
    }
    out
}

pub fn save_profile(profile: &ComplexityProfile, path: impl AsRef<Path>) -> std::io::Result<()> {
    std::fs::write(path, profile_csv(profile))
}
