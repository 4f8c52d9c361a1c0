//! Run orchestration: reward-free pretraining on intrinsic rewards, skill
//! selection by grid sweep, extrinsic finetuning with the chosen skill
//! frozen, and deterministic evaluation rollouts.
//!
//! Step accounting is exact: the finetune budget is consumed by the random
//! warmup, the sweep windows, and the update phase, and by nothing else.
//! Pretraining never reads the extrinsic reward channel; the poison switch
//! exists so that claim can be audited byte-for-byte.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::baselines::{argmax, one_hot, SkillClassifier};
use crate::cic::{self, CicConfig, CicNets, IntrinsicConfig, RewardVariant};
use crate::ddpg::{DdpgAgent, DdpgConfig};
use crate::entropy::{EntropyForm, RewardNormalizer};
use crate::envs::{EnvConfig, Environment};
use crate::error::{Error, Result};
use crate::math;
use crate::nn::Mlp;
use crate::replay::{Batch, ReplayBuffer, ReplayRecord};
use crate::rng::{SeedTree, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentKind {
    /// Contrastive skills + particle entropy (the main agent).
    Cic,
    /// Entropy-only explorer: zero-width skill, no representation updates.
    Apt,
    /// Discrete skills scored by a state classifier.
    Diayn,
}

impl AgentKind {
    pub fn name(&self) -> &'static str {
        match self {
            AgentKind::Cic => "cic",
            AgentKind::Apt => "apt",
            AgentKind::Diayn => "diayn",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "cic" => AgentKind::Cic,
            "apt" => AgentKind::Apt,
            "diayn" => AgentKind::Diayn,
            other => return Err(Error::Config(format!("unknown agent kind '{other}'"))),
        })
    }
}

/// `[agent]` section: architecture and reward shaping.
#[derive(Debug, Clone)]
pub struct AgentParams {
    pub kind: AgentKind,
    /// Skill width for cic, number of discrete skills for diayn; apt ignores
    /// it (effective width 0).
    pub skill_dim: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub temperature: f64,
    pub prediction_head: bool,
    pub ensemble: usize,
    pub variant: RewardVariant,
    pub knn_k: usize,
    pub entropy_form: EntropyForm,
    pub lr: f64,
    pub noise_sigma: f64,
    pub noise_clip: f64,
    pub polyak: f64,
    pub normalizer_decay: f64,
    /// Disables contrastive updates while keeping everything else identical;
    /// the representation-learning ablation switch.
    pub repr_learning: bool,
}

impl Default for AgentParams {
    fn default() -> Self {
        AgentParams {
            kind: AgentKind::Cic,
            skill_dim: 16,
            hidden_dim: 128,
            embed_dim: 16,
            temperature: 0.5,
            prediction_head: true,
            ensemble: 1,
            variant: RewardVariant::Entropy,
            knn_k: 12,
            entropy_form: EntropyForm::Log1pMean,
            lr: 1e-4,
            noise_sigma: 0.2,
            noise_clip: 0.3,
            polyak: 0.01,
            normalizer_decay: 0.99,
            repr_learning: true,
        }
    }
}

/// `[train]` section: budgets and cadences.
#[derive(Debug, Clone)]
pub struct TrainParams {
    pub seed: u64,
    pub pretrain_steps: u64,
    pub finetune_steps: u64,
    /// Random-action warmup, in both pretrain and finetune.
    pub seed_frames: u64,
    /// Pretraining resamples the skill this often (diayn: every episode).
    pub skill_period: u64,
    pub sweep_step: f64,
    /// Environment steps each sweep candidate is scored over.
    pub sweep_period: u64,
    pub eval_episodes: u32,
    pub update_every: u64,
    pub batch_size: usize,
    pub nstep: usize,
    pub gamma: f64,
    pub replay_capacity: usize,
    /// Emit a checkpoint through the log sink every this many steps
    /// (0 = only the caller's final write).
    pub checkpoint_every: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            seed: 1,
            pretrain_steps: 50_000,
            finetune_steps: 10_000,
            seed_frames: 1_000,
            skill_period: 50,
            sweep_step: 0.1,
            sweep_period: 100,
            eval_episodes: 10,
            update_every: 2,
            batch_size: 256,
            nstep: 3,
            gamma: 0.99,
            replay_capacity: 100_000,
            checkpoint_every: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub agent: AgentParams,
    pub train: TrainParams,
}

impl RunConfig {
    pub fn desk(env: EnvConfig) -> Self {
        RunConfig {
            env,
            agent: AgentParams::default(),
            train: TrainParams::default(),
        }
    }

    /// Effective skill width fed to the policy and stored in replay.
    pub fn skill_width(&self) -> usize {
        match self.agent.kind {
            AgentKind::Apt => 0,
            _ => self.agent.skill_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.agent;
        let t = &self.train;
        match a.kind {
            AgentKind::Cic => {
                if a.skill_dim == 0 {
                    return Err(Error::Config(String::from(
                        "cic needs skill_dim >= 1",
                    )));
                }
            }
            AgentKind::Diayn => {
                if a.skill_dim < 2 {
                    return Err(Error::Config(String::from(
                        "diayn needs at least 2 discrete skills (skill_dim)",
                    )));
                }
            }
            AgentKind::Apt => {
                if a.variant != RewardVariant::Entropy {
                    return Err(Error::Config(String::from(
                        "the entropy-only agent admits no other reward variant",
                    )));
                }
            }
        }
        if a.variant == RewardVariant::Uncertainty && a.ensemble < 2 {
            return Err(Error::Config(String::from(
                "uncertainty reward needs ensemble >= 2",
            )));
        }
        if t.seed_frames > t.finetune_steps {
            return Err(Error::Config(format!(
                "seed_frames {} exceeds the finetune budget {}",
                t.seed_frames, t.finetune_steps
            )));
        }
        if !(t.sweep_step > 0.0 && t.sweep_step <= 1.0) {
            return Err(Error::Config(format!(
                "sweep_step {} outside (0, 1]",
                t.sweep_step
            )));
        }
        if t.sweep_period == 0 || t.update_every == 0 || t.skill_period == 0 {
            return Err(Error::Config(String::from(
                "periods must be positive",
            )));
        }
        if t.batch_size < 2 {
            return Err(Error::Config(String::from("batch_size must be >= 2")));
        }
        if t.batch_size <= a.knn_k {
            return Err(Error::Config(format!(
                "batch_size {} must exceed knn_k {}",
                t.batch_size, a.knn_k
            )));
        }
        if t.nstep == 0 {
            return Err(Error::Config(String::from("nstep must be >= 1")));
        }
        if t.seed_frames > 0 && (t.seed_frames as usize) < t.nstep {
            return Err(Error::Config(format!(
                "seed_frames {} shorter than one {}-step window",
                t.seed_frames, t.nstep
            )));
        }
        if !(t.gamma >= 0.0 && t.gamma < 1.0) {
            return Err(Error::Config(format!("gamma {} outside [0, 1)", t.gamma)));
        }
        if t.eval_episodes == 0 {
            return Err(Error::Config(String::from("eval_episodes must be >= 1")));
        }
        Ok(())
    }
}

/// Grid-sweep candidates over the unit interval: v = 0, step, 2·step, … ≤ 1.
pub fn sweep_candidates(step: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut i = 0u32;
    loop {
        let v = f64::from(i) * step;
        if v > 1.0 + 1e-9 {
            break;
        }
        out.push(v.min(1.0));
        i += 1;
    }
    out
}

/// One float-array parameter block of a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

fn mlp_arrays(prefix: &str, net: &Mlp, out: &mut Vec<NamedArray>) {
    for (i, l) in net.layers().iter().enumerate() {
        out.push(NamedArray {
            name: format!("{prefix}/l{i}/w"),
            dims: vec![l.out_dim, l.in_dim],
            data: l.w.clone(),
        });
        out.push(NamedArray {
            name: format!("{prefix}/l{i}/b"),
            dims: vec![l.out_dim],
            data: l.b.clone(),
        });
    }
}

fn mlp_load(prefix: &str, net: &mut Mlp, take: &mut impl FnMut(&str, &[usize]) -> Result<Vec<f64>>) -> Result<()> {
    for i in 0..net.layers().len() {
        let (od, id) = {
            let l = &net.layers()[i];
            (l.out_dim, l.in_dim)
        };
        let w = take(&format!("{prefix}/l{i}/w"), &[od, id])?;
        let b = take(&format!("{prefix}/l{i}/b"), &[od])?;
        let l = &mut net.layers_mut()[i];
        l.w = w;
        l.b = b;
    }
    Ok(())
}

/// Everything that trains: policy, critics, representation nets, and the
/// intrinsic reward normalizer.
#[derive(Debug, Clone)]
pub struct Agent {
    pub kind: AgentKind,
    pub ddpg: DdpgAgent,
    /// Present for cic and apt (the transition encoder hosts the entropy
    /// space); absent for diayn.
    pub cic: Option<CicNets>,
    /// Present for diayn.
    pub classifier: Option<SkillClassifier>,
    pub normalizer: RewardNormalizer,
    intrinsic: IntrinsicConfig,
    lr: f64,
    skill_width: usize,
}

impl Agent {
    pub fn new(run: &RunConfig, obs_dim: usize, action_dim: usize, seeds: &SeedTree) -> Result<Self> {
        run.validate()?;
        let a = &run.agent;
        let width = run.skill_width();
        let ddpg = DdpgAgent::new(
            DdpgConfig {
                obs_dim,
                action_dim,
                skill_dim: width,
                hidden_dim: a.hidden_dim,
                lr: a.lr,
                noise_sigma: a.noise_sigma,
                noise_clip: a.noise_clip,
                polyak: a.polyak,
            },
            seeds,
        )?;
        let cic = match a.kind {
            AgentKind::Cic | AgentKind::Apt => Some(CicNets::new(
                &CicConfig {
                    obs_dim,
                    skill_dim: width,
                    hidden_dim: a.hidden_dim,
                    embed_dim: a.embed_dim,
                    temperature: a.temperature,
                    prediction_head: a.prediction_head,
                    ensemble: a.ensemble,
                },
                seeds,
            )?),
            AgentKind::Diayn => None,
        };
        let classifier = match a.kind {
            AgentKind::Diayn => Some(SkillClassifier::new(
                obs_dim,
                a.hidden_dim,
                a.skill_dim,
                seeds,
            )?),
            _ => None,
        };
        Ok(Agent {
            kind: a.kind,
            ddpg,
            cic,
            classifier,
            normalizer: RewardNormalizer::new(a.normalizer_decay),
            intrinsic: IntrinsicConfig {
                variant: a.variant,
                knn_k: a.knn_k,
                form: a.entropy_form,
            },
            lr: a.lr,
            skill_width: width,
        })
    }

    pub fn skill_width(&self) -> usize {
        self.skill_width
    }

    /// Raw (pre-normalization) intrinsic rewards for a sampled batch.
    pub fn intrinsic_raw(&self, batch: &Batch) -> Result<Vec<f64>> {
        match self.kind {
            AgentKind::Cic | AgentKind::Apt => {
                let nets = self.cic.as_ref().expect("cic nets");
                let tau = CicNets::make_pairs(&batch.s, &batch.s_n)?;
                cic::intrinsic_reward(nets, &self.intrinsic, &tau, &batch.z)
            }
            AgentKind::Diayn => {
                let clf = self.classifier.as_ref().expect("classifier");
                let mut out = Vec::with_capacity(batch.rows());
                for i in 0..batch.rows() {
                    let label = argmax(batch.z.row(i));
                    out.push(clf.reward(batch.s_n.row(i), label)?);
                }
                Ok(out)
            }
        }
    }

    /// One pretraining update: representation first, then intrinsic-reward
    /// critic/actor steps and a target sync. Returns per-loss diagnostics.
    pub fn pretrain_update(
        &mut self,
        batch: &Batch,
        repr_learning: bool,
        at_step: u64,
    ) -> Result<UpdateRecord> {
        let repr_loss = match self.kind {
            AgentKind::Cic if repr_learning => {
                let nets = self.cic.as_mut().expect("cic nets");
                let tau = CicNets::make_pairs(&batch.s, &batch.s_n)?;
                Some(cic::cic_update(nets, &tau, &batch.z, self.lr, at_step)?)
            }
            AgentKind::Diayn => {
                let clf = self.classifier.as_mut().expect("classifier");
                let labels: Vec<usize> =
                    (0..batch.rows()).map(|i| argmax(batch.z.row(i))).collect();
                Some(clf.update(&batch.s_n, &labels, self.lr, at_step)?)
            }
            _ => None,
        };
        let mut rewards = self.intrinsic_raw(batch)?;
        if !math::all_finite(&rewards) {
            return Err(Error::Training {
                step: at_step,
                what: String::from("intrinsic rewards went non-finite"),
            });
        }
        let intrinsic_mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
        self.normalizer.apply(&mut rewards);
        let critic_loss = self.ddpg.critic_update(batch, &rewards, at_step)?;
        let actor_loss = self.ddpg.actor_update(batch, at_step)?;
        self.ddpg.sync_target()?;
        Ok(UpdateRecord {
            step: at_step,
            intrinsic_mean,
            repr_loss,
            critic_loss,
            actor_loss,
        })
    }

    /// One finetuning update on stored extrinsic n-step returns, with the
    /// frozen skill substituted into every sampled row.
    pub fn finetune_update(&mut self, batch: &mut Batch, skill: &[f64], at_step: u64) -> Result<UpdateRecord> {
        for i in 0..batch.rows() {
            batch.z.row_mut(i).copy_from_slice(skill);
        }
        let rewards = batch.reward_n.clone();
        let critic_loss = self.ddpg.critic_update(batch, &rewards, at_step)?;
        let actor_loss = self.ddpg.actor_update(batch, at_step)?;
        self.ddpg.sync_target()?;
        Ok(UpdateRecord {
            step: at_step,
            intrinsic_mean: 0.0,
            repr_loss: None,
            critic_loss,
            actor_loss,
        })
    }

    /// Checkpoint payload: every parameter array in a fixed order.
    pub fn to_arrays(&self) -> Vec<NamedArray> {
        let mut out = Vec::new();
        mlp_arrays("actor", &self.ddpg.actor.net, &mut out);
        mlp_arrays("critic", &self.ddpg.critic.net, &mut out);
        mlp_arrays("critic_target", &self.ddpg.critic_target, &mut out);
        if let Some(cic) = &self.cic {
            mlp_arrays("cic/transition", &cic.transition.net, &mut out);
            for (b, branch) in cic.skills.iter().enumerate() {
                mlp_arrays(&format!("cic/skill{b}/enc"), &branch.encoder.net, &mut out);
                if let Some(h) = &branch.head {
                    mlp_arrays(&format!("cic/skill{b}/head"), &h.net, &mut out);
                }
            }
        }
        if let Some(clf) = &self.classifier {
            mlp_arrays("classifier", &clf.net.net, &mut out);
        }
        let (mean_abs, primed) = self.normalizer.state();
        out.push(NamedArray {
            name: String::from("normalizer"),
            dims: vec![2],
            data: vec![mean_abs, if primed { 1.0 } else { 0.0 }],
        });
        out
    }

    /// Rebuild an agent from checkpoint arrays. The config must describe the
    /// same architecture the checkpoint was written from; any missing,
    /// extra, or misshapen array is corruption.
    pub fn from_arrays(
        run: &RunConfig,
        obs_dim: usize,
        action_dim: usize,
        arrays: &[NamedArray],
    ) -> Result<Self> {
        let mut agent = Agent::new(run, obs_dim, action_dim, &SeedTree::new(0))?;
        let mut by_name = alloc::collections::BTreeMap::new();
        for a in arrays {
            if by_name.insert(a.name.clone(), a).is_some() {
                return Err(Error::Corrupt(format!("duplicate array '{}'", a.name)));
            }
        }
        let mut used = alloc::collections::BTreeSet::new();
        {
            let mut take = |name: &str, dims: &[usize]| -> Result<Vec<f64>> {
                let a = by_name
                    .get(name)
                    .ok_or_else(|| Error::Corrupt(format!("missing array '{name}'")))?;
                if a.dims != dims {
                    return Err(Error::Corrupt(format!(
                        "array '{name}' has dims {:?}, expected {:?}",
                        a.dims, dims
                    )));
                }
                if a.data.len() != dims.iter().product::<usize>() {
                    return Err(Error::Corrupt(format!(
                        "array '{name}' holds {} values for dims {:?}",
                        a.data.len(),
                        a.dims
                    )));
                }
                used.insert(String::from(name));
                Ok(a.data.clone())
            };
            mlp_load("actor", &mut agent.ddpg.actor.net, &mut take)?;
            mlp_load("critic", &mut agent.ddpg.critic.net, &mut take)?;
            mlp_load("critic_target", &mut agent.ddpg.critic_target, &mut take)?;
            if let Some(cic) = agent.cic.as_mut() {
                mlp_load("cic/transition", &mut cic.transition.net, &mut take)?;
                for (b, branch) in cic.skills.iter_mut().enumerate() {
                    mlp_load(&format!("cic/skill{b}/enc"), &mut branch.encoder.net, &mut take)?;
                    if let Some(h) = branch.head.as_mut() {
                        mlp_load(&format!("cic/skill{b}/head"), &mut h.net, &mut take)?;
                    }
                }
            }
            if let Some(clf) = agent.classifier.as_mut() {
                mlp_load("classifier", &mut clf.net.net, &mut take)?;
            }
            let norm = take("normalizer", &[2])?;
            agent.normalizer =
                RewardNormalizer::restore(run.agent.normalizer_decay, norm[0], norm[1] != 0.0);
        }
        for name in by_name.keys() {
            if !used.contains(name) {
                return Err(Error::Corrupt(format!("unexpected array '{name}'")));
            }
        }
        Ok(agent)
    }
}

/// One logged optimizer step.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRecord {
    pub step: u64,
    pub intrinsic_mean: f64,
    /// Contrastive loss for cic, classifier cross-entropy for diayn.
    pub repr_loss: Option<f64>,
    pub critic_loss: f64,
    pub actor_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub step: u64,
    pub episode: u64,
    pub ret: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkillRecord {
    pub step: u64,
    pub skill: Vec<f64>,
}

/// Receives training events; implementations write JSONL, collect vectors,
/// or drop everything.
pub trait LogSink {
    fn update(&mut self, _r: &UpdateRecord) -> Result<()> {
        Ok(())
    }
    fn episode(&mut self, _r: &EpisodeRecord) -> Result<()> {
        Ok(())
    }
    fn skill(&mut self, _r: &SkillRecord) -> Result<()> {
        Ok(())
    }
    /// Periodic checkpoint payloads when train.checkpoint_every > 0.
    fn checkpoint(&mut self, _step: u64, _arrays: &[NamedArray]) -> Result<()> {
        Ok(())
    }
}

pub struct NullSink;

impl LogSink for NullSink {}

/// Collects every event in memory; the test-facing sink.
#[derive(Default)]
pub struct VecSink {
    pub updates: Vec<UpdateRecord>,
    pub episodes: Vec<EpisodeRecord>,
    pub skills: Vec<SkillRecord>,
}

impl LogSink for VecSink {
    fn update(&mut self, r: &UpdateRecord) -> Result<()> {
        self.updates.push(r.clone());
        Ok(())
    }
    fn episode(&mut self, r: &EpisodeRecord) -> Result<()> {
        self.episodes.push(r.clone());
        Ok(())
    }
    fn skill(&mut self, r: &SkillRecord) -> Result<()> {
        self.skills.push(r.clone());
        Ok(())
    }
}

/// Environment stepper that tracks episodes and resets in one place.
struct Rollout<'a> {
    env: &'a mut dyn Environment,
    rng: StreamRng,
    obs: Vec<f64>,
    episode: u64,
    ep_return: f64,
}

struct Transition {
    s: Vec<f64>,
    s_next: Vec<f64>,
    reward: f64,
    terminal: bool,
    done: bool,
    episode: u64,
    /// Return of the episode the step closed (set when done).
    finished_return: f64,
}

impl<'a> Rollout<'a> {
    fn new(env: &'a mut dyn Environment, mut rng: StreamRng) -> Self {
        let obs = env.reset(&mut rng);
        Rollout {
            env,
            rng,
            obs,
            episode: 0,
            ep_return: 0.0,
        }
    }

    /// Steps the environment and handles the episode bookkeeping. `logged`
    /// overrides the reward recorded in place of the environment's; the
    /// returned transition carries whichever applied.
    fn step(&mut self, action: &[f64], logged: Option<f64>) -> Transition {
        let prev = self.obs.clone();
        let sr = self.env.step(action);
        let reward = logged.unwrap_or(sr.reward);
        self.ep_return += reward;
        let episode = self.episode;
        let finished_return = self.ep_return;
        let next = sr.obs.clone();
        if sr.done {
            self.obs = self.env.reset(&mut self.rng);
            self.episode += 1;
            self.ep_return = 0.0;
        } else {
            self.obs = sr.obs;
        }
        Transition {
            s: prev,
            s_next: next,
            reward,
            terminal: sr.terminal,
            done: sr.done,
            episode,
            finished_return,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub steps: u64,
    pub episodes: u64,
    pub updates: u64,
    /// Lifetime distinct-state count for environments that track it.
    pub coverage_cells: Option<usize>,
}

/// Deterministic fill-in used by the reward-free audit in place of the true
/// extrinsic reward.
fn poison_value(step: u64) -> f64 {
    1.0e9 + step as f64
}

/// Reward-free pretraining. With `poison_extrinsic` the stored extrinsic
/// channel is replaced by garbage; a correct pretrain is bit-identical
/// either way.
pub fn pretrain(
    agent: &mut Agent,
    run: &RunConfig,
    sink: &mut dyn LogSink,
    poison_extrinsic: bool,
) -> Result<PretrainOutcome> {
    run.validate()?;
    let seeds = SeedTree::new(run.train.seed);
    let mut env = run.env.build()?;
    let t = &run.train;
    let width = agent.skill_width();
    let mut buffer = ReplayBuffer::new(
        t.replay_capacity,
        env.obs_dim(),
        env.action_dim(),
        width,
    )?;
    let mut roll = Rollout::new(env.as_mut(), seeds.stream("pretrain/env"));
    let mut skill_rng = seeds.stream("pretrain/skill");
    let mut noise_rng = seeds.stream("pretrain/noise");
    let mut replay_rng = seeds.stream("pretrain/replay");

    let mut skill: Vec<f64> = vec![0.0; width];
    let mut updates = 0u64;
    for step in 0..t.pretrain_steps {
        let resample = match agent.kind {
            AgentKind::Diayn => step == 0,
            _ => step % t.skill_period == 0,
        };
        if resample {
            skill = sample_pretrain_skill(agent.kind, width, &mut skill_rng);
            roll.env.on_skill(&skill);
            sink.skill(&SkillRecord {
                step,
                skill: skill.clone(),
            })?;
        }
        let action = agent.ddpg.act(&roll.obs, &skill, Some(&mut noise_rng))?;
        let logged = if poison_extrinsic {
            Some(poison_value(step))
        } else {
            None
        };
        let tr = roll.step(&action, logged);
        buffer.push(ReplayRecord {
            s: tr.s,
            a: action,
            r_ext: tr.reward,
            s_next: tr.s_next,
            z: skill.clone(),
            episode: tr.episode,
            terminal: tr.terminal,
        })?;
        if tr.done {
            sink.episode(&EpisodeRecord {
                step: step + 1,
                episode: tr.episode,
                ret: tr.finished_return,
            })?;
            if agent.kind == AgentKind::Diayn {
                skill = sample_pretrain_skill(agent.kind, width, &mut skill_rng);
                roll.env.on_skill(&skill);
                sink.skill(&SkillRecord {
                    step: step + 1,
                    skill: skill.clone(),
                })?;
            }
        }
        let done_steps = step + 1;
        if done_steps >= t.seed_frames && (done_steps - t.seed_frames) % t.update_every == 0 {
            match buffer.sample(&mut replay_rng, t.batch_size, t.nstep, t.gamma) {
                Ok(batch) => {
                    let rec = agent.pretrain_update(&batch, run.agent.repr_learning, step)?;
                    sink.update(&rec)?;
                    updates += 1;
                }
                Err(Error::NotReady) => {}
                Err(e) => return Err(e),
            }
        }
        if t.checkpoint_every > 0 && done_steps % t.checkpoint_every == 0 {
            sink.checkpoint(done_steps, &agent.to_arrays())?;
        }
    }
    Ok(PretrainOutcome {
        steps: t.pretrain_steps,
        episodes: roll.episode,
        updates,
        coverage_cells: roll.env.coverage_cells(),
    })
}

fn sample_pretrain_skill(kind: AgentKind, width: usize, rng: &mut StreamRng) -> Vec<f64> {
    match kind {
        AgentKind::Cic => cic::sample_skill(rng, width),
        AgentKind::Apt => Vec::new(),
        AgentKind::Diayn => one_hot(rng.index(width), width),
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    /// Grid value for cube skills; candidate index for discrete skills.
    pub best_v: f64,
    pub skill: Vec<f64>,
    /// (candidate value, accumulated extrinsic return) per scored window.
    pub evaluated: Vec<(f64, f64)>,
    pub steps_used: u64,
}

/// Score each candidate skill by rolling the deterministic policy for
/// `sweep_period` steps and accumulating extrinsic reward; pick the argmax
/// (ties toward the earlier candidate). Truncates when the step budget runs
/// out; with no scored window the zero skill wins by default.
fn sweep_over(
    agent: &Agent,
    roll: &mut Rollout,
    mut buffer: Option<&mut ReplayBuffer>,
    candidates: &[(f64, Vec<f64>)],
    sweep_period: u64,
    max_steps: u64,
    fallback: Vec<f64>,
) -> Result<SweepOutcome> {
    let affordable = (max_steps / sweep_period) as usize;
    let windows = candidates.len().min(affordable);
    let mut evaluated = Vec::with_capacity(windows);
    let mut steps_used = 0u64;
    for (v, skill) in candidates.iter().take(windows) {
        roll.env.on_skill(skill);
        let mut ret = 0.0;
        for _ in 0..sweep_period {
            let action = agent.ddpg.act(&roll.obs, skill, None)?;
            let tr = roll.step(&action, None);
            ret += tr.reward;
            steps_used += 1;
            if let Some(buf) = buffer.as_deref_mut() {
                buf.push(ReplayRecord {
                    s: tr.s,
                    a: action,
                    r_ext: tr.reward,
                    s_next: tr.s_next,
                    z: skill.clone(),
                    episode: tr.episode,
                    terminal: tr.terminal,
                })?;
            }
        }
        evaluated.push((*v, ret));
    }
    let (best_v, skill) = match evaluated
        .iter()
        .enumerate()
        .max_by(|(ia, (_, ra)), (ib, (_, rb))| {
            // strict "later is better only if strictly greater" keeps ties
            // on the earlier candidate
            match ra.partial_cmp(rb).expect("finite returns") {
                core::cmp::Ordering::Equal => ib.cmp(ia),
                o => o,
            }
        }) {
        Some((i, (v, _))) => (*v, candidates[i].1.clone()),
        None => (0.0, fallback),
    };
    Ok(SweepOutcome {
        best_v,
        skill,
        evaluated,
        steps_used,
    })
}

/// Standalone grid sweep over constant cube skills z = v·1 on a fresh
/// environment rollout; no experience is kept.
pub fn skill_grid_sweep(
    agent: &Agent,
    env: &mut dyn Environment,
    sweep_step: f64,
    sweep_period: u64,
    seeds: &SeedTree,
) -> Result<SweepOutcome> {
    let width = agent.skill_width();
    let candidates: Vec<(f64, Vec<f64>)> = sweep_candidates(sweep_step)
        .into_iter()
        .map(|v| (v, cic::constant_skill(v, width)))
        .collect();
    let mut roll = Rollout::new(env, seeds.stream("sweep/env"));
    sweep_over(
        agent,
        &mut roll,
        None,
        &candidates,
        sweep_period,
        u64::MAX,
        vec![0.0; width],
    )
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub swept_v: f64,
    pub skill: Vec<f64>,
    pub sweep_evaluated: Vec<(f64, f64)>,
    /// Environment steps consumed; equals the configured budget exactly.
    pub env_steps: u64,
    pub updates: u64,
    /// Mean deterministic return with the selected skill, after finetuning.
    pub score: f64,
    pub eval_returns: Vec<f64>,
}

/// Adaptation on the extrinsic task: random warmup fills the buffer, the
/// sweep fixes the skill, the remaining budget runs standard actor-critic
/// updates on stored n-step returns with the skill frozen.
pub fn finetune(
    agent: &mut Agent,
    run: &RunConfig,
    sink: &mut dyn LogSink,
) -> Result<FinetuneOutcome> {
    run.validate()?;
    let seeds = SeedTree::new(run.train.seed);
    let mut env = run.env.build()?;
    let t = &run.train;
    let width = agent.skill_width();
    let mut buffer = ReplayBuffer::new(
        t.replay_capacity,
        env.obs_dim(),
        env.action_dim(),
        width,
    )?;
    let mut roll = Rollout::new(env.as_mut(), seeds.stream("finetune/env"));
    let mut action_rng = seeds.stream("finetune/noise");
    let mut replay_rng = seeds.stream("finetune/replay");
    let budget = t.finetune_steps;

    // random warmup
    let warmup = t.seed_frames.min(budget);
    let zero_skill = vec![0.0; width];
    for step in 0..warmup {
        let action = action_rng.uniform_vec(run.env.action_dim(), -1.0, 1.0);
        let tr = roll.step(&action, None);
        buffer.push(ReplayRecord {
            s: tr.s,
            a: action,
            r_ext: tr.reward,
            s_next: tr.s_next,
            z: zero_skill.clone(),
            episode: tr.episode,
            terminal: tr.terminal,
        })?;
        if tr.done {
            sink.episode(&EpisodeRecord {
                step: step + 1,
                episode: tr.episode,
                ret: tr.finished_return,
            })?;
        }
    }

    // skill selection
    let candidates: Vec<(f64, Vec<f64>)> = match agent.kind {
        AgentKind::Apt => Vec::new(),
        AgentKind::Diayn => (0..width)
            .map(|k| (k as f64, one_hot(k, width)))
            .collect(),
        AgentKind::Cic => sweep_candidates(t.sweep_step)
            .into_iter()
            .map(|v| (v, cic::constant_skill(v, width)))
            .collect(),
    };
    let sweep = sweep_over(
        agent,
        &mut roll,
        Some(&mut buffer),
        &candidates,
        t.sweep_period,
        budget - warmup,
        zero_skill.clone(),
    )?;
    let skill = sweep.skill.clone();
    sink.skill(&SkillRecord {
        step: warmup + sweep.steps_used,
        skill: skill.clone(),
    })?;

    // extrinsic updates with the skill frozen
    roll.env.on_skill(&skill);
    let phase2 = budget - warmup - sweep.steps_used;
    let mut updates = 0u64;
    for i in 0..phase2 {
        let global = warmup + sweep.steps_used + i;
        let action = agent.ddpg.act(&roll.obs, &skill, Some(&mut action_rng))?;
        let tr = roll.step(&action, None);
        buffer.push(ReplayRecord {
            s: tr.s,
            a: action,
            r_ext: tr.reward,
            s_next: tr.s_next,
            z: skill.clone(),
            episode: tr.episode,
            terminal: tr.terminal,
        })?;
        if tr.done {
            sink.episode(&EpisodeRecord {
                step: global + 1,
                episode: tr.episode,
                ret: tr.finished_return,
            })?;
        }
        if (i + 1) % t.update_every == 0 {
            match buffer.sample(&mut replay_rng, t.batch_size, t.nstep, t.gamma) {
                Ok(mut batch) => {
                    let rec = agent.finetune_update(&mut batch, &skill, global)?;
                    sink.update(&rec)?;
                    updates += 1;
                }
                Err(Error::NotReady) => {}
                Err(e) => return Err(e),
            }
        }
    }
    let env_steps = warmup + sweep.steps_used + phase2;
    debug_assert_eq!(env_steps, budget);

    let eval = evaluate(agent, &run.env, t.eval_episodes, &skill, &seeds)?;
    Ok(FinetuneOutcome {
        swept_v: sweep.best_v,
        skill,
        sweep_evaluated: sweep.evaluated,
        env_steps,
        updates,
        score: eval.mean_return,
        eval_returns: eval.returns,
    })
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub mean_return: f64,
    pub returns: Vec<f64>,
}

/// Deterministic rollouts with a fixed skill. Streams are derived fresh per
/// call, so repeated evaluations of the same agent agree exactly.
pub fn evaluate(
    agent: &Agent,
    env_cfg: &EnvConfig,
    episodes: u32,
    skill: &[f64],
    seeds: &SeedTree,
) -> Result<EvalOutcome> {
    let mut returns = Vec::with_capacity(episodes as usize);
    for ep in 0..episodes {
        let mut env = env_cfg.build()?;
        let mut rng = seeds.indexed("eval/env", ep as u64);
        let mut obs = env.reset(&mut rng);
        env.on_skill(skill);
        let mut ret = 0.0;
        loop {
            let action = agent.ddpg.act(&obs, skill, None)?;
            let sr = env.step(&action);
            ret += sr.reward;
            if sr.done {
                break;
            }
            obs = sr.obs;
        }
        returns.push(ret);
    }
    let mean_return = returns.iter().sum::<f64>() / returns.len().max(1) as f64;
    Ok(EvalOutcome {
        mean_return,
        returns,
    })
}

/// Spread of behaviors across random skills: every probe rolls one
/// deterministic episode from the same start, and the result is the RMS
/// distance of episode-final positions (leading two observation components)
/// from their centroid.
pub fn skill_dispersion(
    agent: &Agent,
    env_cfg: &EnvConfig,
    probes: u32,
    seeds: &SeedTree,
) -> Result<f64> {
    if probes == 0 {
        return Err(Error::Contract(String::from("no probe skills")));
    }
    let width = agent.skill_width();
    let mut finals = Vec::with_capacity(probes as usize);
    for p in 0..probes {
        let skill = cic::sample_skill(&mut seeds.indexed("probe/skills", p as u64), width);
        let mut env = env_cfg.build()?;
        // identical stream label per probe: every rollout starts in the
        // same state, so spread comes from the skill alone
        let mut rng = seeds.stream("probe/env");
        let mut obs = env.reset(&mut rng);
        env.on_skill(&skill);
        loop {
            let action = agent.ddpg.act(&obs, &skill, None)?;
            let sr = env.step(&action);
            if sr.done {
                obs = sr.obs;
                break;
            }
            obs = sr.obs;
        }
        let d = obs.len().min(2);
        finals.push(obs[..d].to_vec());
    }
    let dim = finals[0].len();
    let mut centroid = vec![0.0; dim];
    for f in &finals {
        for (c, v) in centroid.iter_mut().zip(f) {
            *c += v;
        }
    }
    for c in &mut centroid {
        *c /= finals.len() as f64;
    }
    let mut ms = 0.0;
    for f in &finals {
        ms += math::dist2(f, &centroid);
    }
    Ok(math::sqrt(ms / finals.len() as f64))
}
