//! Metrics and statistics: positioning error, failure rate, improvement
//! speed, rank-sum tests, time-thresholded comparisons and SEM.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;

/// Raw per-episode outcomes of one evaluation pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub task: String,
    /// Constant-L value or schedule identifier.
    pub l_id: String,
    pub seed: u64,
    pub epoch: usize,
    pub cumulative_steps: u64,
    /// Final end-effector distance of each test episode (m).
    pub final_distances: Vec<f64>,
    /// Cumulative episode reward, 0 or 1 each.
    pub rewards: Vec<f64>,
}

/// Mean final distance divided by the goal-zone radius.
pub fn positioning_error(result: &EvalResult, gzr: f64) -> f64 {
    let n = result.final_distances.len() as f64;
    result.final_distances.iter().sum::<f64>() / gzr / n
}

/// Percentage of test episodes that did not reach the goal.
pub fn failure_rate(result: &EvalResult) -> f64 {
    let n = result.rewards.len() as f64;
    100.0 * (1.0 - result.rewards.iter().sum::<f64>() / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub cumulative_steps: u64,
    pub failure_rate: f64,
    pub positioning_error: f64,
}

/// Per-(L, seed) evaluation trajectory; cumulative steps strictly increase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub l_id: String,
    pub seed: u64,
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if !self
            .points
            .windows(2)
            .all(|w| w[0].cumulative_steps < w[1].cumulative_steps)
        {
            return Err(AnalysisError::Input(format!(
                "cumulative steps not strictly increasing for L={} seed={}",
                self.l_id, self.seed
            )));
        }
        Ok(())
    }
}

/// Least-squares slope of failure rate vs cumulative steps over the points
/// whose step count lies in `[window.0, window.1]`.
pub fn improvement_speed(curve: &LearningCurve, window: (u64, u64)) -> Result<f64, AnalysisError> {
    let pts: Vec<(f64, f64)> = curve
        .points
        .iter()
        .filter(|p| p.cumulative_steps >= window.0 && p.cumulative_steps <= window.1)
        .map(|p| (p.cumulative_steps as f64, p.failure_rate))
        .collect();
    if pts.len() < 2 {
        return Err(AnalysisError::DegenerateWindow(format!(
            "{} points in [{}, {}]",
            pts.len(),
            window.0,
            window.1
        )));
    }
    let n = pts.len() as f64;
    let mean_x = pts.iter().map(|(x, _)| x).sum::<f64>() / n;
    let mean_y = pts.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return Err(AnalysisError::DegenerateWindow("zero x variance".into()));
    }
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mean_x) * (y - mean_y)).sum();
    Ok(sxy / sxx)
}

/// Standard error of the mean: sample std (n-1 denominator) / sqrt(n).
pub fn sem(sample: &[f64]) -> Result<f64, AnalysisError> {
    if sample.len() < 2 {
        return Err(AnalysisError::SampleTooSmall {
            need: 2,
            got: sample.len(),
        });
    }
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let var = sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((var / n).sqrt())
}

/// Pool size at or below which the rank-sum null is enumerated exactly.
pub const EXACT_ENUMERATION_LIMIT: usize = 16;

/// Midranks of the pooled sample, doubled so ties stay integral.
/// Returns (doubled midranks in pool order, tie-group sizes).
fn doubled_midranks(pooled: &[f64]) -> (Vec<u64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].partial_cmp(&pooled[j]).expect("finite values"));
    let mut ranks = vec![0u64; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i + 1;
        while j < pooled.len() && pooled[order[j]] == pooled[order[i]] {
            j += 1;
        }
        // Midrank of positions i+1..=j, doubled: (i+1) + j.
        let doubled = (i as u64 + 1) + j as u64;
        for &idx in &order[i..j] {
            ranks[idx] = doubled;
        }
        ties.push(j - i);
        i = j;
    }
    (ranks, ties)
}

/// Distribution of the doubled rank-sum over all subsets of size n, by
/// dynamic programming over the pooled doubled midranks.
fn exact_tail_probability(doubled_ranks: &[u64], n: usize, observed_doubled: u64) -> f64 {
    let total: u64 = doubled_ranks.iter().sum();
    let max_sum = total as usize;
    // counts[k][s] = number of k-subsets with doubled rank-sum s.
    let mut counts = vec![vec![0f64; max_sum + 1]; n + 1];
    counts[0][0] = 1.0;
    for &r in doubled_ranks {
        for k in (0..n).rev() {
            for s in 0..=(max_sum - r as usize) {
                if counts[k][s] > 0.0 {
                    counts[k + 1][s + r as usize] += counts[k][s];
                }
            }
        }
    }
    let m = doubled_ranks.len() - n;
    // Mean of the doubled rank-sum under the null: n * (sum) / N.
    let mu = n as f64 * total as f64 / doubled_ranks.len() as f64;
    let observed_dev = (observed_doubled as f64 - mu).abs();
    let mut favorable = 0.0;
    let mut all = 0.0;
    for (s, &c) in counts[n].iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        all += c;
        if (s as f64 - mu).abs() >= observed_dev - 1e-9 {
            favorable += c;
        }
    }
    let _ = m;
    favorable / all
}

/// Standard normal survival function via the Abramowitz-Stegun 7.1.26
/// polynomial (|error| < 1.5e-7).
fn normal_sf(z: f64) -> f64 {
    if z < 0.0 {
        return 1.0 - normal_sf(-z);
    }
    let t = 1.0 / (1.0 + 0.3275911 * z / std::f64::consts::SQRT_2);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erfc = poly * (-z * z / 2.0).exp();
    erfc / 2.0
}

/// Two-sided Wilcoxon rank-sum (Mann-Whitney) test with midrank ties.
/// Exact null enumeration for pooled sizes up to 16, normal approximation
/// with tie and continuity corrections beyond.
pub fn ranksum_twosided(a: &[f64], b: &[f64]) -> Result<f64, AnalysisError> {
    if a.is_empty() || b.is_empty() {
        return Err(AnalysisError::EmptySample);
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    if pooled.iter().any(|v| !v.is_finite()) {
        return Err(AnalysisError::Input("non-finite sample value".into()));
    }
    let (doubled, ties) = doubled_midranks(&pooled);
    let n = a.len();
    let total_n = pooled.len();
    // Fully tied pool: the statistic is degenerate, p = 1.
    if ties.len() == 1 {
        return Ok(1.0);
    }
    let observed: u64 = doubled[..n].iter().sum();
    if total_n <= EXACT_ENUMERATION_LIMIT {
        return Ok(exact_tail_probability(&doubled, n, observed));
    }
    let m = total_n - n;
    let w = observed as f64 / 2.0;
    let mu = n as f64 * (total_n as f64 + 1.0) / 2.0;
    let tie_term: f64 = ties
        .iter()
        .map(|&t| (t as f64).powi(3) - t as f64)
        .sum::<f64>()
        / (total_n as f64 * (total_n as f64 - 1.0));
    let var = n as f64 * m as f64 / 12.0 * (total_n as f64 + 1.0 - tie_term);
    if var <= 0.0 {
        return Ok(1.0);
    }
    let z = ((w - mu).abs() - 0.5).max(0.0) / var.sqrt();
    Ok((2.0 * normal_sf(z)).min(1.0))
}

/// One per-L row of a threshold report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub l_id: String,
    /// Per-seed best failure rates up to the reference step count.
    pub best_failure_rates: Vec<f64>,
    pub mean: f64,
    pub sem: f64,
    pub p_value: f64,
    /// mean(L) - mean(baseline); negative = improvement.
    pub effect_size: f64,
    pub significant_05: bool,
    pub significant_001: bool,
    /// Positive and significant effect: feedback hurt here.
    pub detrimental: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub threshold: f64,
    pub baseline_l: String,
    /// First step count at which the fastest L group's seed-mean failure
    /// rate reaches the threshold.
    pub reference_steps: u64,
    pub rows: Vec<ThresholdRow>,
}

/// Best (minimum) failure rate of one curve over evaluation points with
/// cumulative steps up to the reference; falls back to the first point if
/// the curve starts beyond it.
fn best_up_to(curve: &LearningCurve, reference_steps: u64) -> f64 {
    let candidates: Vec<f64> = curve
        .points
        .iter()
        .filter(|p| p.cumulative_steps <= reference_steps)
        .map(|p| p.failure_rate)
        .collect();
    if candidates.is_empty() {
        curve.points.first().map_or(100.0, |p| p.failure_rate)
    } else {
        candidates.into_iter().fold(f64::INFINITY, f64::min)
    }
}

/// Time-thresholded comparison across L groups.
///
/// The reference step count is the earliest point at which any group's
/// seed-mean failure rate reaches the threshold; each group then contributes
/// its per-seed best failure rate up to that step count, compared against
/// the baseline group with the rank-sum test. With `holm` set, p-values get
/// a Holm-Bonferroni correction across the non-baseline rows.
pub fn threshold_report(
    curves: &[LearningCurve],
    threshold: f64,
    baseline_l: &str,
    holm: bool,
) -> Result<ThresholdReport, AnalysisError> {
    for c in curves {
        c.validate()?;
    }
    let mut groups: BTreeMap<&str, Vec<&LearningCurve>> = BTreeMap::new();
    for c in curves {
        groups.entry(c.l_id.as_str()).or_default().push(c);
    }
    if groups.len() < 2 {
        return Err(AnalysisError::Input(
            "threshold report needs curves for at least 2 L values".into(),
        ));
    }
    if !groups.contains_key(baseline_l) {
        return Err(AnalysisError::Input(format!(
            "no curves for baseline L = {baseline_l}"
        )));
    }
    // Seed-mean failure rate per evaluation index, per group; the step axis
    // of the mean curve is the seed-mean cumulative step count.
    let mut reference_steps: Option<u64> = None;
    for group in groups.values() {
        let n_points = group.iter().map(|c| c.points.len()).min().unwrap_or(0);
        for i in 0..n_points {
            let mean_fr =
                group.iter().map(|c| c.points[i].failure_rate).sum::<f64>() / group.len() as f64;
            if mean_fr <= threshold {
                let mean_steps = (group
                    .iter()
                    .map(|c| c.points[i].cumulative_steps as f64)
                    .sum::<f64>()
                    / group.len() as f64)
                    .round() as u64;
                reference_steps = Some(match reference_steps {
                    Some(r) => r.min(mean_steps),
                    None => mean_steps,
                });
                break;
            }
        }
    }
    let reference_steps =
        reference_steps.ok_or(AnalysisError::ThresholdUnreached(threshold))?;
    let baseline_sample: Vec<f64> = groups[baseline_l]
        .iter()
        .map(|c| best_up_to(c, reference_steps))
        .collect();
    let baseline_mean = baseline_sample.iter().sum::<f64>() / baseline_sample.len() as f64;
    let mut rows = Vec::new();
    for (l_id, group) in &groups {
        let sample: Vec<f64> = group.iter().map(|c| best_up_to(c, reference_steps)).collect();
        let mean = sample.iter().sum::<f64>() / sample.len() as f64;
        let row_sem = if sample.len() >= 2 { sem(&sample)? } else { 0.0 };
        let p_value = if *l_id == baseline_l {
            1.0
        } else {
            ranksum_twosided(&sample, &baseline_sample)?
        };
        rows.push(ThresholdRow {
            l_id: l_id.to_string(),
            best_failure_rates: sample,
            mean,
            sem: row_sem,
            p_value,
            effect_size: mean - baseline_mean,
            significant_05: false,
            significant_001: false,
            detrimental: false,
        });
    }
    if holm {
        holm_correct(&mut rows, baseline_l);
    }
    for row in &mut rows {
        row.significant_05 = row.l_id != baseline_l && row.p_value < 0.05;
        row.significant_001 = row.l_id != baseline_l && row.p_value < 0.001;
        row.detrimental = row.significant_05 && row.effect_size > 0.0;
    }
    Ok(ThresholdReport {
        threshold,
        baseline_l: baseline_l.to_string(),
        reference_steps,
        rows,
    })
}

fn holm_correct(rows: &mut [ThresholdRow], baseline_l: &str) {
    let mut idx: Vec<usize> = (0..rows.len())
        .filter(|&i| rows[i].l_id != baseline_l)
        .collect();
    idx.sort_by(|&i, &j| rows[i].p_value.partial_cmp(&rows[j].p_value).unwrap());
    let m = idx.len();
    let mut running_max = 0.0f64;
    for (rank, &i) in idx.iter().enumerate() {
        let adjusted = (rows[i].p_value * (m - rank) as f64).min(1.0);
        running_max = running_max.max(adjusted);
        rows[i].p_value = running_max;
    }
}

/// Trapezoidal area under the failure-rate curve up to `max_steps`,
/// with linear interpolation at the cutoff.
pub fn area_under_curve(curve: &LearningCurve, max_steps: u64) -> Result<f64, AnalysisError> {
    curve.validate()?;
    let pts = &curve.points;
    if pts.len() < 2 {
        return Err(AnalysisError::DegenerateWindow("fewer than 2 points".into()));
    }
    let mut area = 0.0;
    for w in pts.windows(2) {
        let (x0, y0) = (w[0].cumulative_steps as f64, w[0].failure_rate);
        let (x1, y1) = (w[1].cumulative_steps as f64, w[1].failure_rate);
        let cutoff = max_steps as f64;
        if x0 >= cutoff {
            break;
        }
        if x1 <= cutoff {
            area += (x1 - x0) * (y0 + y1) / 2.0;
        } else {
            let t = (cutoff - x0) / (x1 - x0);
            let y_cut = y0 + t * (y1 - y0);
            area += (cutoff - x0) * (y0 + y_cut) / 2.0;
            break;
        }
    }
    Ok(area)
}

#[cfg(test)]
mod tests {
    use super::*;
    use itertools::Itertools;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn eval_result(distances: Vec<f64>, rewards: Vec<f64>) -> EvalResult {
        EvalResult {
            task: "t".into(),
            l_id: "0.0".into(),
            seed: 0,
            epoch: 0,
            cumulative_steps: 0,
            final_distances: distances,
            rewards,
        }
    }

    #[test]
    fn positioning_error_examples() {
        assert_eq!(
            positioning_error(&eval_result(vec![0.0, 0.0], vec![1.0, 1.0]), 0.1),
            0.0
        );
        assert_eq!(
            positioning_error(&eval_result(vec![0.1], vec![0.0]), 0.1),
            1.0
        );
        assert!(
            (positioning_error(&eval_result(vec![0.1, 0.3], vec![0.0, 0.0]), 0.1) - 2.0).abs()
                < 1e-12
        );
    }

    #[test]
    fn failure_rate_examples() {
        assert_eq!(failure_rate(&eval_result(vec![0.0; 4], vec![1.0; 4])), 0.0);
        assert_eq!(failure_rate(&eval_result(vec![1.0; 4], vec![0.0; 4])), 100.0);
        assert_eq!(
            failure_rate(&eval_result(vec![0.0; 4], vec![1.0, 1.0, 1.0, 0.0])),
            25.0
        );
    }

    #[test]
    fn metrics_are_permutation_invariant() {
        let a = eval_result(vec![0.1, 0.2, 0.5], vec![1.0, 0.0, 1.0]);
        let b = eval_result(vec![0.5, 0.1, 0.2], vec![1.0, 1.0, 0.0]);
        assert_eq!(failure_rate(&a), failure_rate(&b));
        assert!((positioning_error(&a, 0.1) - positioning_error(&b, 0.1)).abs() < 1e-12);
    }

    fn curve(l: &str, seed: u64, pts: &[(u64, f64)]) -> LearningCurve {
        LearningCurve {
            l_id: l.into(),
            seed,
            points: pts
                .iter()
                .map(|&(s, f)| CurvePoint {
                    cumulative_steps: s,
                    failure_rate: f,
                    positioning_error: 0.0,
                })
                .collect(),
        }
    }

    #[test]
    fn improvement_speed_examples() {
        let flat = curve("0.0", 0, &[(10, 50.0), (20, 50.0), (30, 50.0)]);
        assert_eq!(improvement_speed(&flat, (0, 100)).unwrap(), 0.0);
        let line = curve("0.0", 0, &[(10, 90.0), (20, 80.0), (30, 70.0)]);
        assert!((improvement_speed(&line, (0, 100)).unwrap() + 1.0).abs() < 1e-12);
        assert!(improvement_speed(&line, (0, 5)).is_err());
    }

    #[test]
    fn improvement_speed_recovers_noisy_slope() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let true_slope = -0.02;
        let pts: Vec<(u64, f64)> = (1..=200)
            .map(|i| {
                let x = i * 10;
                (x, 90.0 + true_slope * x as f64 + rng.gen_range(-2.0..2.0))
            })
            .collect();
        let c = curve("0.0", 0, &pts);
        let slope = improvement_speed(&c, (0, 10_000)).unwrap();
        assert!((slope - true_slope).abs() < 0.002, "slope {slope}");
    }

    #[test]
    fn sem_examples() {
        assert_eq!(sem(&[3.0, 3.0, 3.0]).unwrap(), 0.0);
        assert_eq!(sem(&[0.0, 2.0]).unwrap(), 1.0);
        let base = sem(&[1.0, 2.0, 5.0, 7.0]).unwrap();
        let scaled = sem(&[3.0, 6.0, 15.0, 21.0]).unwrap();
        assert!((scaled - 3.0 * base).abs() < 1e-12);
        assert!(sem(&[1.0]).is_err());
    }

    // Independent oracle: brute-force over all C(n+m, n) labelings using
    // explicit combinations of pool indices.
    fn ranksum_bruteforce(a: &[f64], b: &[f64]) -> f64 {
        let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
        let n = a.len();
        // Midranks, computed the plain way.
        let rank_of = |v: f64| -> f64 {
            let less = pooled.iter().filter(|&&x| x < v).count() as f64;
            let equal = pooled.iter().filter(|&&x| x == v).count() as f64;
            less + (equal + 1.0) / 2.0
        };
        let ranks: Vec<f64> = pooled.iter().map(|&v| rank_of(v)).collect();
        let observed: f64 = ranks[..n].iter().sum();
        let mu: f64 = ranks.iter().sum::<f64>() * n as f64 / pooled.len() as f64;
        let observed_dev = (observed - mu).abs();
        let mut favorable = 0usize;
        let mut total = 0usize;
        for combo in (0..pooled.len()).combinations(n) {
            let w: f64 = combo.iter().map(|&i| ranks[i]).sum();
            total += 1;
            if (w - mu).abs() >= observed_dev - 5e-10 {
                favorable += 1;
            }
        }
        favorable as f64 / total as f64
    }

    #[test]
    fn exact_path_matches_bruteforce() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..200 {
            let n = rng.gen_range(1..=6);
            let m = rng.gen_range(1..=6);
            // Small integer values to exercise ties.
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0..6) as f64).collect();
            let b: Vec<f64> = (0..m).map(|_| rng.gen_range(0..6) as f64).collect();
            let p_impl = ranksum_twosided(&a, &b).unwrap();
            let p_oracle = ranksum_bruteforce(&a, &b);
            assert!(
                (p_impl - p_oracle).abs() < 1e-12,
                "a={a:?} b={b:?}: {p_impl} vs {p_oracle}"
            );
        }
    }

    #[test]
    fn identical_samples_give_p_one() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ranksum_twosided(&a, &a).unwrap(), 1.0);
        let tied = [5.0; 10];
        assert_eq!(ranksum_twosided(&tied, &tied).unwrap(), 1.0);
    }

    #[test]
    fn separated_samples_are_significant() {
        let a: Vec<f64> = (1..=10).map(f64::from).collect();
        let b: Vec<f64> = (11..=20).map(f64::from).collect();
        let p = ranksum_twosided(&a, &b).unwrap();
        assert!(p < 0.001, "p = {p}");
    }

    #[test]
    fn ranksum_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let a: Vec<f64> = (0..rng.gen_range(2..12)).map(|_| rng.gen_range(0.0..5.0)).collect();
            let b: Vec<f64> = (0..rng.gen_range(2..12)).map(|_| rng.gen_range(0.0..5.0)).collect();
            let p_ab = ranksum_twosided(&a, &b).unwrap();
            let p_ba = ranksum_twosided(&b, &a).unwrap();
            assert!((p_ab - p_ba).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_and_normal_paths_agree_near_crossover() {
        // Calibrated fixtures straddling the enumeration limit. Fixtures are
        // restricted to exact p <= 0.4: near p = 0.5 the exact distribution's
        // discreteness alone produces ~0.01 jumps, so a tighter bound there
        // would test the fixture, not the implementation.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut checked = 0;
        while checked < 40 {
            let a: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..10.0)).collect();
            let b: Vec<f64> = (0..8).map(|_| rng.gen_range(4.0..14.0)).collect();
            // n+m = 16 -> exact path.
            let exact = ranksum_twosided(&a, &b).unwrap();
            if exact > 0.4 {
                continue;
            }
            checked += 1;
            // Force the approximation by duplicating a point far out of the
            // way is not possible without changing the data, so call the
            // internals: compute the normal approximation on the same data.
            let pooled: Vec<f64> = a.iter().chain(&b).copied().collect();
            let (doubled, ties) = doubled_midranks(&pooled);
            let w: f64 = doubled[..a.len()].iter().sum::<u64>() as f64 / 2.0;
            let n = a.len() as f64;
            let m = b.len() as f64;
            let total = pooled.len() as f64;
            let mu = n * (total + 1.0) / 2.0;
            let tie_term: f64 = ties
                .iter()
                .map(|&t| (t as f64).powi(3) - t as f64)
                .sum::<f64>()
                / (total * (total - 1.0));
            let var = n * m / 12.0 * (total + 1.0 - tie_term);
            let z = ((w - mu).abs() - 0.5).max(0.0) / var.sqrt();
            let approx = (2.0 * normal_sf(z)).min(1.0);
            assert!(
                (exact - approx).abs() < 0.01,
                "exact {exact} vs approx {approx}"
            );
        }
    }

    #[test]
    fn threshold_report_reference_and_effects() {
        // L=0.99 reaches 10% at step 500; L=0.0 only at step 2000.
        let curves = vec![
            curve("0.0", 0, &[(100, 80.0), (2000, 9.0), (3000, 8.0)]),
            curve("0.0", 1, &[(100, 82.0), (2000, 9.5), (3000, 8.5)]),
            curve("0.99", 0, &[(120, 40.0), (500, 9.0), (900, 5.0)]),
            curve("0.99", 1, &[(110, 42.0), (500, 9.5), (900, 5.5)]),
        ];
        let report = threshold_report(&curves, 10.0, "0.0", false).unwrap();
        assert_eq!(report.reference_steps, 500);
        let baseline = report.rows.iter().find(|r| r.l_id == "0.0").unwrap();
        assert_eq!(baseline.effect_size, 0.0);
        assert_eq!(baseline.p_value, 1.0);
        let high = report.rows.iter().find(|r| r.l_id == "0.99").unwrap();
        // Baseline best up to step 500 is its early 80-ish value.
        assert!(high.effect_size < 0.0);
    }

    #[test]
    fn threshold_unreached_is_an_error() {
        let curves = vec![
            curve("0.0", 0, &[(100, 80.0)]),
            curve("0.5", 0, &[(100, 70.0)]),
        ];
        assert!(matches!(
            threshold_report(&curves, 5.0, "0.0", false),
            Err(AnalysisError::ThresholdUnreached(_))
        ));
    }

    #[test]
    fn baseline_against_itself_is_null() {
        let curves = vec![
            curve("0.0", 0, &[(100, 50.0), (200, 20.0)]),
            curve("0.0", 1, &[(100, 52.0), (200, 21.0)]),
            curve("0.5", 0, &[(100, 50.0), (200, 20.0)]),
            curve("0.5", 1, &[(100, 52.0), (200, 21.0)]),
        ];
        let report = threshold_report(&curves, 25.0, "0.0", false).unwrap();
        for row in &report.rows {
            assert_eq!(row.effect_size, 0.0);
            assert!(!row.detrimental);
        }
    }

    #[test]
    fn holm_only_inflates_p_values() {
        let curves = vec![
            curve("0.0", 0, &[(100, 50.0), (200, 30.0)]),
            curve("0.0", 1, &[(100, 51.0), (200, 31.0)]),
            curve("0.0", 2, &[(100, 52.0), (200, 32.0)]),
            curve("0.5", 0, &[(100, 40.0), (200, 20.0)]),
            curve("0.5", 1, &[(100, 41.0), (200, 21.0)]),
            curve("0.5", 2, &[(100, 42.0), (200, 22.0)]),
            curve("0.99", 0, &[(100, 45.0), (200, 25.0)]),
            curve("0.99", 1, &[(100, 46.0), (200, 26.0)]),
            curve("0.99", 2, &[(100, 47.0), (200, 27.0)]),
        ];
        let plain = threshold_report(&curves, 35.0, "0.0", false).unwrap();
        let corrected = threshold_report(&curves, 35.0, "0.0", true).unwrap();
        for (p, c) in plain.rows.iter().zip(&corrected.rows) {
            assert!(c.p_value >= p.p_value - 1e-12);
        }
    }

    #[test]
    fn auc_of_known_trapezoid() {
        let c = curve("0.0", 0, &[(0, 100.0), (10, 0.0), (20, 0.0)]);
        assert!((area_under_curve(&c, 20).unwrap() - 500.0).abs() < 1e-9);
        // Cutoff mid-segment interpolates.
        assert!((area_under_curve(&c, 5).unwrap() - (5.0 * (100.0 + 50.0) / 2.0)).abs() < 1e-9);
    }
}
