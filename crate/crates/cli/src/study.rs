//! Gridworld coverage study: matched-budget comparison of the contrastive
//! skill learner against discrete-skill discovery at several skill counts.
//! One CSV row per (agent, K, seed) with lifetime state coverage.
//!
//! The discrete engine runs a deliberately exploration-free protocol
//! (greedy control, no epsilon dithering, short random warmup): whatever
//! coverage it earns comes from its skill objective, which is the contrast
//! the study exists to show.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use cic_core::baselines::{discrete_skill_gridworld_run, DiscreteSkillGridConfig};
use cic_core::envs::EnvConfig;
use cic_core::rng::SeedTree;
use cic_core::trainer::{self, Agent, NullSink, RunConfig};

use crate::{config, load_config_file, parse_flags, usage, CliError};

/// Lowest-priority layer under any config file: a gridworld run sized so a
/// full study fits in desk-scale minutes.
const STUDY_DEFAULTS: &str = "\
[env]
kind = gridworld
episode_length = 100

[agent]
skill_dim = 8
hidden_dim = 32
embed_dim = 8

[train]
num_pretrain_steps = 50000
seed_frames = 25
batch_size = 64
replay_capacity = 50000
";

/// Discrete-engine knobs that are part of the protocol, not the config.
fn diayn_config(k: usize, steps: u64, seed_frames: u64, episode_length: u32) -> DiscreteSkillGridConfig {
    DiscreteSkillGridConfig {
        num_skills: k,
        frames: steps,
        seed_frames,
        episode_length,
        epsilon: 0.0,
        classifier_hidden: 16,
        ..DiscreteSkillGridConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Row {
    agent: &'static str,
    k: usize,
    seed: u64,
    steps: u64,
    coverage: usize,
}

#[derive(Debug, Clone)]
enum Spec {
    Cic { seed: u64 },
    Diayn { k: usize, seed: u64 },
}

fn run_spec(spec: &Spec, base: &RunConfig) -> Result<Row, CliError> {
    let steps = base.train.pretrain_steps;
    match *spec {
        Spec::Cic { seed } => {
            let mut run = base.clone();
            run.train.seed = seed;
            // a budget below the warmup just shortens the warmup
            run.train.seed_frames = run.train.seed_frames.min(steps);
            if (run.train.seed_frames as usize) < run.train.nstep {
                run.train.nstep = (run.train.seed_frames as usize).max(1);
            }
            let tree = SeedTree::new(seed);
            let mut agent = Agent::new(&run, run.env.obs_dim(), run.env.action_dim(), &tree)?;
            let out = trainer::pretrain(&mut agent, &run, &mut NullSink, false)?;
            let coverage = out
                .coverage_cells
                .expect("gridworld tracks lifetime coverage");
            Ok(Row {
                agent: "cic",
                k: base.agent.skill_dim,
                seed,
                steps,
                coverage,
            })
        }
        Spec::Diayn { k, seed } => {
            let coverage = if steps == 0 {
                1 // a zero-budget run never leaves the start cell
            } else {
                let cfg = diayn_config(
                    k,
                    steps,
                    base.train.seed_frames.min(steps),
                    base.env.episode_length(),
                );
                discrete_skill_gridworld_run(&cfg, &SeedTree::new(seed))?.visited_cells
            };
            Ok(Row {
                agent: "diayn",
                k,
                seed,
                steps,
                coverage,
            })
        }
    }
}

/// Runs every (agent, K, seed) cell and renders the coverage table. Worker
/// count only changes wall time: rows are ordered by (agent, K, seed)
/// whatever the schedule.
pub fn study_csv(base: &RunConfig, seeds: u64, ks: &[usize], jobs: usize) -> Result<String, CliError> {
    if seeds == 0 {
        return Err(usage(String::from("--seeds must be >= 1")));
    }
    if ks.is_empty() || ks.iter().any(|&k| k < 2) {
        return Err(usage(String::from(
            "--ks needs at least one skill count, each >= 2",
        )));
    }
    let mut specs = Vec::new();
    for off in 0..seeds {
        let seed = base.train.seed + off;
        specs.push(Spec::Cic { seed });
        for &k in ks {
            specs.push(Spec::Diayn { k, seed });
        }
    }

    let results: Mutex<Vec<Option<Result<Row, CliError>>>> =
        Mutex::new((0..specs.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = jobs.max(1).min(specs.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= specs.len() {
                    break;
                }
                let row = run_spec(&specs[i], base);
                results.lock().expect("worker poisoned the results")[i] = Some(row);
            });
        }
    });

    let mut rows = Vec::with_capacity(specs.len());
    for slot in results.into_inner().expect("worker poisoned the results") {
        rows.push(slot.expect("every spec ran")?);
    }
    rows.sort_by(|a, b| {
        (a.agent, a.k, a.seed).cmp(&(b.agent, b.k, b.seed))
    });

    let mut csv = String::from("agent,K,seed,steps,coverage\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.agent, r.k, r.seed, r.steps, r.coverage
        ));
    }
    Ok(csv)
}

fn parse_ks(raw: &str) -> Result<Vec<usize>, CliError> {
    raw.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| usage(format!("--ks: '{t}' is not a skill count")))
        })
        .collect()
}

pub fn cmd_study(rest: &[String]) -> Result<(), CliError> {
    let flags = parse_flags(
        rest,
        &[
            ("config", true),
            ("seeds", true),
            ("ks", true),
            ("steps", true),
            ("seed-frames", true),
            ("out", true),
            ("jobs", true),
        ],
    )?;
    let (text, origin) = load_config_file(&flags)?;
    // flag sugar resolves through the ordinary key registry, before any
    // explicit --section.key override
    let mut overrides = Vec::new();
    if let Some(steps) = flags.get("steps") {
        overrides.push((
            String::from("train"),
            String::from("num_pretrain_steps"),
            String::from(steps),
        ));
    }
    if let Some(sf) = flags.get("seed-frames") {
        overrides.push((
            String::from("train"),
            String::from("seed_frames"),
            String::from(sf),
        ));
    }
    overrides.extend(flags.overrides.iter().cloned());
    let resolved = config::resolve_layered(Some(STUDY_DEFAULTS), text.as_deref(), &origin, &overrides)?;
    if !matches!(resolved.run.env, EnvConfig::Gridworld(_)) {
        return Err(usage(String::from(
            "the coverage study runs on the gridworld; drop the [env] kind override",
        )));
    }

    let seeds = flags.parsed::<u64>("seeds", "a positive integer")?.unwrap_or(5);
    let ks = match flags.get("ks") {
        Some(raw) => parse_ks(raw)?,
        None => vec![4, 16, 100],
    };
    let jobs = flags.parsed::<usize>("jobs", "a positive integer")?.unwrap_or(1);
    let csv = study_csv(&resolved.run, seeds, &ks, jobs)?;

    let out = PathBuf::from(flags.get("out").unwrap_or("study.csv"));
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(&out, &csv)?;
    println!(
        "{}",
        serde_json::json!({
            "out": out.to_string_lossy(),
            "rows": csv.lines().count() - 1,
            "steps": resolved.run.train.pretrain_steps,
        })
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use cic_core::envs::GridworldConfig;

    fn tiny_base(steps: u64) -> RunConfig {
        let mut run = RunConfig::desk(EnvConfig::Gridworld(GridworldConfig::default()));
        run.agent.skill_dim = 4;
        run.agent.hidden_dim = 16;
        run.agent.embed_dim = 4;
        run.agent.knn_k = 3;
        run.train.batch_size = 16;
        run.train.seed_frames = 50;
        run.train.pretrain_steps = steps;
        run.train.replay_capacity = 4_000;
        run.train.seed = 7;
        run
    }

    #[test]
    fn zero_budget_rows_all_sit_on_the_start_cell() {
        let csv = study_csv(&tiny_base(0), 2, &[4, 16], 1).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "agent,K,seed,steps,coverage");
        for line in lines {
            assert!(line.ends_with(",0,1"), "expected zero-step start-cell row: {line}");
        }
        // 2 seeds x (1 cic + 2 diayn)
        assert_eq!(csv.lines().count(), 1 + 6);
    }

    #[test]
    fn rows_are_sorted_and_worker_count_is_invisible() {
        let base = tiny_base(400);
        let serial = study_csv(&base, 2, &[4, 8], 1).unwrap();
        let parallel = study_csv(&base, 2, &[4, 8], 3).unwrap();
        assert_eq!(serial, parallel);
        let rows: Vec<&str> = serial.lines().skip(1).collect();
        let keys: Vec<(String, usize, u64)> = rows
            .iter()
            .map(|r| {
                let f: Vec<&str> = r.split(',').collect();
                (f[0].to_string(), f[1].parse().unwrap(), f[2].parse().unwrap())
            })
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        // every row carries the configured budget and a plausible coverage
        for r in &rows {
            let f: Vec<&str> = r.split(',').collect();
            assert_eq!(f.len(), 5);
            assert_eq!(f[3], "400");
            let cov: usize = f[4].parse().unwrap();
            assert!((1..=100).contains(&cov), "coverage {cov}");
        }
    }

    #[test]
    fn degenerate_protocols_are_rejected() {
        let base = tiny_base(100);
        assert!(study_csv(&base, 0, &[4], 1).is_err());
        assert!(study_csv(&base, 1, &[], 1).is_err());
        assert!(study_csv(&base, 1, &[1], 1).is_err());
    }
}
