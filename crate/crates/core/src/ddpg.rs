//! Deterministic-policy actor/critic over skill-conditioned observations.
//! The actor maps (obs, z) to a tanh-squashed action; the single critic
//! scores (obs, action, z). Targets use the online actor against a Polyak
//! copy of the critic: y = R + discount * Q'(s_n, pi(s_n, z), z), where R
//! and the per-row discount (zero past a terminal) come from the caller.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::nn::{self, Mlp, MlpGrads, OutputActivation, Trainable};
use crate::replay::Batch;
use crate::rng::{SeedTree, StreamRng};
use crate::tensor::TensorBuf;

#[derive(Debug, Clone)]
pub struct DdpgConfig {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub skill_dim: usize,
    pub hidden_dim: usize,
    pub lr: f64,
    /// Exploration noise: clip(sigma * N(0,1), +-noise_clip) added per axis.
    pub noise_sigma: f64,
    pub noise_clip: f64,
    /// Polyak rate for the critic target.
    pub polyak: f64,
}

impl DdpgConfig {
    pub fn desk(obs_dim: usize, action_dim: usize, skill_dim: usize) -> Self {
        DdpgConfig {
            obs_dim,
            action_dim,
            skill_dim,
            hidden_dim: 64,
            lr: 1e-4,
            noise_sigma: 0.2,
            noise_clip: 0.3,
            polyak: 0.01,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.obs_dim == 0 || self.action_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config(String::from(
                "actor/critic widths must be positive",
            )));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.noise_sigma < 0.0 || self.noise_clip < 0.0 {
            return Err(Error::Config(String::from("noise parameters must be >= 0")));
        }
        if !(self.polyak > 0.0 && self.polyak <= 1.0) {
            return Err(Error::Config(format!(
                "polyak rate must be in (0, 1], got {}",
                self.polyak
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DdpgAgent {
    pub actor: Trainable,
    pub critic: Trainable,
    pub critic_target: Mlp,
    cfg: DdpgConfig,
}

impl DdpgAgent {
    pub fn new(cfg: DdpgConfig, seeds: &SeedTree) -> Result<Self> {
        cfg.validate()?;
        let adims = [
            cfg.obs_dim + cfg.skill_dim,
            cfg.hidden_dim,
            cfg.hidden_dim,
            cfg.action_dim,
        ];
        let cdims = [
            cfg.obs_dim + cfg.action_dim + cfg.skill_dim,
            cfg.hidden_dim,
            cfg.hidden_dim,
            1,
        ];
        let actor = Trainable::new(Mlp::new(
            &adims,
            OutputActivation::Tanh,
            &mut seeds.stream("init/actor"),
        )?);
        let critic = Trainable::new(Mlp::new(
            &cdims,
            OutputActivation::Identity,
            &mut seeds.stream("init/critic"),
        )?);
        let critic_target = critic.net.clone();
        Ok(DdpgAgent {
            actor,
            critic,
            critic_target,
            cfg,
        })
    }

    pub fn config(&self) -> &DdpgConfig {
        &self.cfg
    }

    /// Policy action for one observation. `explore` adds clipped Gaussian
    /// noise; either way the result lands in [-1, 1] per axis.
    pub fn act(&self, obs: &[f64], z: &[f64], explore: Option<&mut StreamRng>) -> Result<Vec<f64>> {
        if obs.len() != self.cfg.obs_dim || z.len() != self.cfg.skill_dim {
            return Err(Error::Contract(format!(
                "act() got obs {} / skill {}, expected {} / {}",
                obs.len(),
                z.len(),
                self.cfg.obs_dim,
                self.cfg.skill_dim
            )));
        }
        let mut input = Vec::with_capacity(obs.len() + z.len());
        input.extend_from_slice(obs);
        input.extend_from_slice(z);
        let mut a = self.actor.net.forward_single(&input)?;
        if let Some(rng) = explore {
            let (sigma, clip) = (self.cfg.noise_sigma, self.cfg.noise_clip);
            for v in &mut a {
                let noise = (sigma * rng.normal()).clamp(-clip, clip);
                *v = (*v + noise).clamp(-1.0, 1.0);
            }
        }
        Ok(a)
    }

    /// TD targets y = rewards + discount * Q'(s_n, pi(s_n, z), z) and the
    /// squared-error loss/gradient of the online critic. The reward vector
    /// comes from the caller: intrinsic during pretraining, the stored
    /// n-step return during finetuning.
    pub fn critic_loss_and_grads(
        &self,
        batch: &Batch,
        rewards: &[f64],
    ) -> Result<(f64, MlpGrads)> {
        let b = batch.rows();
        if rewards.len() != b {
            return Err(Error::Contract(format!(
                "{} rewards for a batch of {b}",
                rewards.len()
            )));
        }
        let next_actions = self.actor.net.forward(&TensorBuf::hcat(&[&batch.s_n, &batch.z])?)?;
        let next_q = self
            .critic_target
            .forward(&TensorBuf::hcat(&[&batch.s_n, &next_actions, &batch.z])?)?;
        let mut y = Vec::with_capacity(b);
        for i in 0..b {
            y.push(rewards[i] + batch.bootstrap[i] * next_q.row(i)[0]);
        }
        if !math::all_finite(&y) {
            return Err(Error::Contract(String::from("critic targets are non-finite")));
        }
        let cache = self
            .critic
            .net
            .forward_cached(TensorBuf::hcat(&[&batch.s, &batch.a, &batch.z])?)?;
        let pred = cache.output();
        let mut loss = 0.0;
        let mut dout = TensorBuf::zeros(alloc::vec![b, 1]);
        let inv_b = 1.0 / b as f64;
        for i in 0..b {
            let e = pred.row(i)[0] - y[i];
            loss += e * e * inv_b;
            dout.row_mut(i)[0] = 2.0 * e * inv_b;
        }
        let (grads, _) = self.critic.net.backward(&cache, &dout)?;
        Ok((loss, grads))
    }

    pub fn critic_update(&mut self, batch: &Batch, rewards: &[f64], at_step: u64) -> Result<f64> {
        let (loss, grads) = self.critic_loss_and_grads(batch, rewards)?;
        self.critic.step(&grads, self.cfg.lr, at_step)?;
        Ok(loss)
    }

    /// Deterministic policy gradient: minimize -mean Q(s, pi(s, z), z).
    /// The critic only routes gradient to the action columns; its own
    /// parameters are left alone here.
    pub fn actor_loss_and_grads(&self, batch: &Batch) -> Result<(f64, MlpGrads)> {
        let b = batch.rows();
        let acache = self
            .actor
            .net
            .forward_cached(TensorBuf::hcat(&[&batch.s, &batch.z])?)?;
        let qcache = self
            .critic
            .net
            .forward_cached(TensorBuf::hcat(&[&batch.s, acache.output(), &batch.z])?)?;
        let q = qcache.output();
        let inv_b = 1.0 / b as f64;
        let mut loss = 0.0;
        let mut dq = TensorBuf::zeros(alloc::vec![b, 1]);
        for i in 0..b {
            loss -= q.row(i)[0] * inv_b;
            dq.row_mut(i)[0] = -inv_b;
        }
        let (_, dinput) = self.critic.net.backward(&qcache, &dq)?;
        let (od, ad) = (self.cfg.obs_dim, self.cfg.action_dim);
        let mut da = TensorBuf::zeros(alloc::vec![b, ad]);
        for i in 0..b {
            da.row_mut(i).copy_from_slice(&dinput.row(i)[od..od + ad]);
        }
        let (grads, _) = self.actor.net.backward(&acache, &da)?;
        Ok((loss, grads))
    }

    pub fn actor_update(&mut self, batch: &Batch, at_step: u64) -> Result<f64> {
        let (loss, grads) = self.actor_loss_and_grads(batch)?;
        self.actor.step(&grads, self.cfg.lr, at_step)?;
        Ok(loss)
    }

    pub fn sync_target(&mut self) -> Result<()> {
        nn::polyak_update(&mut self.critic_target, &self.critic.net, self.cfg.polyak)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{max_rel_err, numeric_gradient};
    use crate::replay::ReplayBuffer;

    fn agent(obs: usize, act: usize, skill: usize) -> DdpgAgent {
        let mut cfg = DdpgConfig::desk(obs, act, skill);
        cfg.hidden_dim = 8;
        DdpgAgent::new(cfg, &SeedTree::new(31)).unwrap()
    }

    fn toy_batch(agent: &DdpgAgent, b: usize) -> Batch {
        let cfg = agent.config();
        let mut rng = SeedTree::new(9).stream("batch");
        let rows = |d: usize, rng: &mut StreamRng| -> TensorBuf {
            TensorBuf::from_rows(
                &(0..b).map(|_| rng.uniform_vec(d, -1.0, 1.0)).collect::<Vec<_>>(),
            )
            .unwrap()
        };
        Batch {
            s: rows(cfg.obs_dim, &mut rng),
            a: rows(cfg.action_dim, &mut rng),
            s_n: rows(cfg.obs_dim, &mut rng),
            reward_n: rng.uniform_vec(b, -1.0, 1.0),
            z: rows(cfg.skill_dim, &mut rng),
            bootstrap: alloc::vec![0.97; b],
            horizon: 1,
        }
    }

    #[test]
    fn actions_live_in_the_unit_box() {
        let ag = agent(3, 2, 4);
        let mut rng = SeedTree::new(1).stream("noise");
        let obs = [0.3, -0.9, 2.0];
        let z = [0.1, 0.9, 0.5, 0.2];
        let clean = ag.act(&obs, &z, None).unwrap();
        assert!(clean.iter().all(|v| v.abs() <= 1.0));
        // deterministic without noise
        assert_eq!(clean, ag.act(&obs, &z, None).unwrap());
        for _ in 0..500 {
            let noisy = ag.act(&obs, &z, Some(&mut rng)).unwrap();
            for (n, c) in noisy.iter().zip(&clean) {
                assert!(n.abs() <= 1.0);
                // noise never moves any axis further than the clip radius
                assert!((n - c).abs() <= ag.config().noise_clip + 1e-12);
            }
        }
    }

    #[test]
    fn exploration_noise_matches_clipped_gaussian() {
        // std of clip(0.2 N, +-0.3) = 0.1764613517090323 by Gaussian integrals
        let ag = agent(1, 1, 0);
        let mut rng = SeedTree::new(5).stream("noise");
        let clean = ag.act(&[0.0], &[], None).unwrap()[0];
        assert!(clean.abs() < 0.5, "center the test away from the box edge");
        let n = 200_000;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let d = ag.act(&[0.0], &[], Some(&mut rng)).unwrap()[0] - clean;
            sum += d;
            sum2 += d * d;
        }
        let mean = sum / n as f64;
        let std = math::sqrt(sum2 / n as f64 - mean * mean);
        assert!(mean.abs() < 2e-3, "noise mean {mean}");
        assert!((std - 0.17646135170903232).abs() < 2e-3, "noise std {std}");
    }

    #[test]
    fn act_rejects_wrong_widths() {
        let ag = agent(3, 2, 4);
        assert!(matches!(
            ag.act(&[0.0; 2], &[0.0; 4], None),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            ag.act(&[0.0; 3], &[0.0; 3], None),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn critic_gradients_match_finite_differences() {
        let ag = agent(2, 2, 3);
        let batch = toy_batch(&ag, 5);
        let rewards: Vec<f64> = (0..5).map(|i| 0.1 * i as f64).collect();
        let (_, grads) = ag.critic_loss_and_grads(&batch, &rewards).unwrap();
        let flat = ag.critic.net.flatten();
        let numeric = numeric_gradient(
            |p| {
                let mut probe = ag.clone();
                probe.critic.net.load_flat(p).unwrap();
                probe.critic_loss_and_grads(&batch, &rewards).unwrap().0
            },
            &flat,
            1e-6,
        );
        let mut analytic = Vec::new();
        for l in &grads.layers {
            analytic.extend_from_slice(&l.dw);
            analytic.extend_from_slice(&l.db);
        }
        assert!(max_rel_err(&analytic, &numeric) < 1e-5);
    }

    #[test]
    fn actor_gradients_match_finite_differences() {
        let ag = agent(2, 2, 3);
        let batch = toy_batch(&ag, 5);
        let (_, grads) = ag.actor_loss_and_grads(&batch).unwrap();
        let flat = ag.actor.net.flatten();
        let numeric = numeric_gradient(
            |p| {
                let mut probe = ag.clone();
                probe.actor.net.load_flat(p).unwrap();
                probe.actor_loss_and_grads(&batch).unwrap().0
            },
            &flat,
            1e-6,
        );
        let mut analytic = Vec::new();
        for l in &grads.layers {
            analytic.extend_from_slice(&l.dw);
            analytic.extend_from_slice(&l.db);
        }
        assert!(max_rel_err(&analytic, &numeric) < 1e-5);
    }

    #[test]
    fn actor_update_leaves_critic_untouched() {
        let mut ag = agent(2, 1, 0);
        let batch = toy_batch(&ag, 4);
        let before = ag.critic.net.flatten();
        ag.actor_update(&batch, 0).unwrap();
        assert_eq!(before, ag.critic.net.flatten());
    }

    #[test]
    fn target_sync_contracts_toward_online() {
        let mut ag = agent(2, 1, 1);
        let batch = toy_batch(&ag, 4);
        ag.critic_update(&batch, &[0.5; 4], 0).unwrap();
        let gap = |ag: &DdpgAgent| {
            let a = ag.critic.net.flatten();
            let b = ag.critic_target.flatten();
            a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        };
        let g0 = gap(&ag);
        assert!(g0 > 0.0);
        ag.sync_target().unwrap();
        let g1 = gap(&ag);
        assert!((g1 - g0 * (1.0 - ag.config().polyak)).abs() < 1e-12 * g0.max(1.0));
    }

    #[test]
    fn solves_a_one_state_bandit() {
        // reward -a^2, single state, terminal every step: the optimum is a = 0
        let mut cfg = DdpgConfig::desk(1, 1, 0);
        cfg.hidden_dim = 32;
        cfg.lr = 1e-3;
        let mut ag = DdpgAgent::new(cfg, &SeedTree::new(7)).unwrap();
        let mut buf = ReplayBuffer::new(4096, 1, 1, 0).unwrap();
        let mut rng = SeedTree::new(7).stream("bandit");
        for _ in 0..2048 {
            let a = rng.uniform_in(-1.0, 1.0);
            buf.push(crate::replay::ReplayRecord {
                s: alloc::vec![0.0],
                a: alloc::vec![a],
                r_ext: -a * a,
                s_next: alloc::vec![0.0],
                z: Vec::new(),
                episode: 0,
                terminal: true,
            })
            .unwrap();
        }
        let mut sample_rng = SeedTree::new(7).stream("samples");
        for step in 0..8000 {
            let batch = buf.sample(&mut sample_rng, 128, 1, 0.99).unwrap();
            let rewards = batch.reward_n.clone();
            ag.critic_update(&batch, &rewards, step).unwrap();
            ag.actor_update(&batch, step).unwrap();
            ag.sync_target().unwrap();
        }
        let a = ag.act(&[0.0], &[], None).unwrap()[0];
        assert!(a.abs() < 0.05, "policy settled at {a}");
    }
}
