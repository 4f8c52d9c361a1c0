//! Throwaway measurement probe: calibrates the pointmass dispersion and
//! sweep criteria. Not part of the deliverable.

use std::time::Instant;

use cic_core::cic::RewardVariant;
use cic_core::envs::{EnvConfig, PointmassConfig};
use cic_core::rng::SeedTree;
use cic_core::trainer::{self, Agent, NullSink, RunConfig};

#[derive(Clone)]
struct Knobs {
    lr: f64,
    hidden: usize,
    period: u64,
    knn: usize,
    ep_len: u32,
    embed: usize,
}

impl Default for Knobs {
    fn default() -> Self {
        Knobs { lr: 3e-4, hidden: 64, period: 50, knn: 12, ep_len: 200, embed: 8 }
    }
}

fn base_run(seed: u64, skill_dim: usize, repr: bool, k: &Knobs) -> RunConfig {
    let mut env = PointmassConfig::default();
    env.episode_length = k.ep_len;
    let mut run = RunConfig::desk(EnvConfig::Pointmass(env));
    run.agent.skill_dim = skill_dim;
    run.agent.hidden_dim = k.hidden;
    run.agent.embed_dim = k.embed;
    run.agent.knn_k = k.knn;
    run.agent.lr = k.lr;
    run.agent.repr_learning = repr;
    run.agent.variant = RewardVariant::Entropy;
    run.train.batch_size = 64;
    run.train.pretrain_steps = 20_000;
    run.train.seed_frames = 500;
    run.train.skill_period = k.period;
    run.train.replay_capacity = 20_000;
    run.train.seed = seed;
    run
}

fn pretrained(run: &RunConfig) -> Agent {
    let tree = SeedTree::new(run.train.seed);
    let mut agent = Agent::new(run, 4, 2, &tree).unwrap();
    trainer::pretrain(&mut agent, run, &mut NullSink, false).unwrap();
    agent
}

fn dispersion_med(skill_dim: usize, repr: bool, k: &Knobs, label: &str) {
    let t0 = Instant::now();
    let mut ds: Vec<f64> = (1u64..=5)
        .map(|seed| {
            let run = base_run(seed, skill_dim, repr, k);
            let agent = pretrained(&run);
            trainer::skill_dispersion(&agent, &run.env, 16, &SeedTree::new(seed)).unwrap()
        })
        .collect();
    ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let secs = t0.elapsed().as_secs_f64();
    let meds: Vec<String> = ds.iter().map(|d| format!("{d:.3}")).collect();
    println!("{label}: [{}] med {:.4} ({secs:.0}s)", meds.join(" "), ds[2]);
}

fn main() {
    let grid = [
        (Knobs::default(), "ent base        "),
        (Knobs { lr: 1e-3, ..Knobs::default() }, "ent lr1e-3      "),
        (Knobs { period: 25, ..Knobs::default() }, "ent p25         "),
        (Knobs { knn: 3, ..Knobs::default() }, "ent knn3        "),
        (Knobs { period: 100, ..Knobs::default() }, "ent p100        "),
    ];
    for (k, label) in grid {
        dispersion_med(8, true, &k, &format!("{label} ON "));
        dispersion_med(8, false, &k, &format!("{label} OFF"));
    }
}
