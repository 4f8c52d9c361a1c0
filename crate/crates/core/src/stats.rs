//! Aggregate statistics for run tables: expert-normalized scores, the
//! interquartile mean, optimality gap, and stratified bootstrap confidence
//! intervals (seeds resampled with replacement within each task).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// raw / expert; the reference score must be positive.
pub fn normalize(raw: f64, expert: f64) -> Result<f64> {
    if !(expert > 0.0) {
        return Err(Error::Contract(format!(
            "expert reference must be > 0, got {expert}"
        )));
    }
    Ok(raw / expert)
}

pub fn mean(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Contract(String::from("mean of nothing")));
    }
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

pub fn median(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Contract(String::from("median of nothing")));
    }
    let mut v = xs.to_vec();
    v.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Interquartile mean: drop the floor(n/4) lowest and highest scores, mean
/// the rest. Needs at least 4 scores.
pub fn iqm(xs: &[f64]) -> Result<f64> {
    let n = xs.len();
    if n < 4 {
        return Err(Error::Contract(format!("iqm needs >= 4 scores, got {n}")));
    }
    let mut v = xs.to_vec();
    v.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    let drop = n / 4;
    let kept = &v[drop..n - drop];
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

/// Mean shortfall of normalized scores below 1.
pub fn optimality_gap(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Contract(String::from("optimality gap of nothing")));
    }
    Ok(xs.iter().map(|&s| (1.0 - s).max(0.0)).sum::<f64>() / xs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    Iqm,
    OptimalityGap,
    Median,
    Mean,
}

impl Statistic {
    pub fn name(&self) -> &'static str {
        match self {
            Statistic::Iqm => "iqm",
            Statistic::OptimalityGap => "optimality_gap",
            Statistic::Median => "median",
            Statistic::Mean => "mean",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "iqm" => Statistic::Iqm,
            "optimality_gap" => Statistic::OptimalityGap,
            "median" => Statistic::Median,
            "mean" => Statistic::Mean,
            other => return Err(Error::Config(format!("unknown statistic '{other}'"))),
        })
    }

    pub fn apply(&self, xs: &[f64]) -> Result<f64> {
        match self {
            Statistic::Iqm => iqm(xs),
            Statistic::OptimalityGap => optimality_gap(xs),
            Statistic::Median => median(xs),
            Statistic::Mean => mean(xs),
        }
    }
}

/// Normalized scores keyed by (task, seed), plus per-task expert references.
/// Tasks iterate in name order, seeds in insertion order, so everything
/// downstream is deterministic.
#[derive(Debug, Clone, Default)]
pub struct ScoreTable {
    // task -> (expert, [(seed, raw)])
    tasks: BTreeMap<String, (Option<f64>, Vec<(u64, f64)>)>,
}

impl ScoreTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_expert(&mut self, task: &str, expert: f64) -> Result<()> {
        if !(expert > 0.0) {
            return Err(Error::Contract(format!(
                "expert for {task} must be > 0, got {expert}"
            )));
        }
        self.tasks.entry(String::from(task)).or_default().0 = Some(expert);
        Ok(())
    }

    pub fn push(&mut self, task: &str, seed: u64, raw: f64) -> Result<()> {
        let entry = self.tasks.entry(String::from(task)).or_default();
        if entry.1.iter().any(|&(s, _)| s == seed) {
            return Err(Error::Contract(format!(
                "duplicate run for task {task} seed {seed}"
            )));
        }
        entry.1.push((seed, raw));
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.values().all(|(_, runs)| runs.is_empty())
    }

    /// Normalized scores grouped per task, task order fixed by name.
    pub fn normalized_by_task(&self) -> Result<Vec<(String, Vec<f64>)>> {
        let mut out = Vec::new();
        for (task, (expert, runs)) in &self.tasks {
            if runs.is_empty() {
                continue;
            }
            let e = expert.ok_or_else(|| {
                Error::Contract(format!("no expert reference recorded for task {task}"))
            })?;
            let mut scores = Vec::with_capacity(runs.len());
            for &(_, raw) in runs {
                scores.push(normalize(raw, e)?);
            }
            out.push((task.clone(), scores));
        }
        Ok(out)
    }

    pub fn pooled_normalized(&self) -> Result<Vec<f64>> {
        Ok(self
            .normalized_by_task()?
            .into_iter()
            .flat_map(|(_, s)| s)
            .collect())
    }
}

/// Point value of a statistic over the pooled normalized scores.
pub fn point_statistic(table: &ScoreTable, stat: Statistic) -> Result<f64> {
    stat.apply(&table.pooled_normalized()?)
}

/// Percentile bootstrap interval, resampling seeds with replacement within
/// each task. Every task must have at least 2 runs.
pub fn stratified_bootstrap_ci(
    table: &ScoreTable,
    stat: Statistic,
    resamples: usize,
    level: f64,
    rng: &mut StreamRng,
) -> Result<(f64, f64)> {
    bootstrap_with(table, stat, resamples, level, &mut |n| rng.index(n))
}

fn bootstrap_with(
    table: &ScoreTable,
    stat: Statistic,
    resamples: usize,
    level: f64,
    draw: &mut dyn FnMut(usize) -> usize,
) -> Result<(f64, f64)> {
    if resamples == 0 {
        return Err(Error::Contract(String::from("resamples must be positive")));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(Error::Contract(format!("level {level} outside (0, 1)")));
    }
    let groups = table.normalized_by_task()?;
    if groups.is_empty() {
        return Err(Error::Contract(String::from("empty score table")));
    }
    for (task, scores) in &groups {
        if scores.len() < 2 {
            return Err(Error::Contract(format!(
                "task {task} has {} run(s); stratified resampling needs >= 2",
                scores.len()
            )));
        }
    }
    let pooled_len: usize = groups.iter().map(|(_, s)| s.len()).sum();
    let mut stats = Vec::with_capacity(resamples);
    let mut pooled = Vec::with_capacity(pooled_len);
    for _ in 0..resamples {
        pooled.clear();
        for (_, scores) in &groups {
            for _ in 0..scores.len() {
                pooled.push(scores[draw(scores.len())]);
            }
        }
        stats.push(stat.apply(&pooled)?);
    }
    stats.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite statistics"));
    let alpha = 1.0 - level;
    Ok((
        percentile_sorted(&stats, alpha / 2.0),
        percentile_sorted(&stats, 1.0 - alpha / 2.0),
    ))
}

/// Linear-interpolation quantile of an ascending slice.
fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}
