//! Contrastive skill learning. A transition encoder embeds state pairs
//! tau = (s, s_n); a skill encoder (plus optional prediction head) embeds the
//! skill vector. Both are trained with a noise-contrastive loss over the
//! minibatch: row-normalized embeddings, cosine logits scaled by a
//! temperature, diagonal labels, cross-entropy taken along the skill axis.
//!
//! The intrinsic reward is decoupled from that loss: by default it is the
//! particle entropy of the transition embeddings, with optional additive
//! terms derived from the discriminator.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::entropy::{self, EntropyForm};
use crate::error::{Error, Result};
use crate::math;
use crate::nn::{Mlp, MlpGrads, OutputActivation, Trainable};
use crate::rng::SeedTree;
use crate::rng::StreamRng;
use crate::tensor::TensorBuf;

/// Skills are uniform over the unit hypercube.
pub fn sample_skill(rng: &mut StreamRng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.uniform()).collect()
}

/// Constant skill z = v * 1, the shape swept during adaptation.
pub fn constant_skill(v: f64, dim: usize) -> Vec<f64> {
    vec![v; dim]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardVariant {
    /// Particle entropy of transition embeddings (the default).
    Entropy,
    /// Entropy plus the contrastive discriminator score.
    Discriminator,
    /// Entropy plus the query/key cosine similarity.
    Similarity,
    /// Entropy plus the ensemble's disagreement about the similarity.
    Uncertainty,
}

impl RewardVariant {
    pub fn name(&self) -> &'static str {
        match self {
            RewardVariant::Entropy => "entropy",
            RewardVariant::Discriminator => "discriminator",
            RewardVariant::Similarity => "similarity",
            RewardVariant::Uncertainty => "uncertainty",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "entropy" => RewardVariant::Entropy,
            "discriminator" => RewardVariant::Discriminator,
            "similarity" => RewardVariant::Similarity,
            "uncertainty" => RewardVariant::Uncertainty,
            other => return Err(Error::Config(format!("unknown reward variant '{other}'"))),
        })
    }
}

#[derive(Debug, Clone)]
pub struct CicConfig {
    pub obs_dim: usize,
    /// Zero disables the skill side entirely (pure entropy exploration).
    pub skill_dim: usize,
    pub hidden_dim: usize,
    /// Width of the shared embedding space; conventionally equals skill_dim.
    pub embed_dim: usize,
    pub temperature: f64,
    pub prediction_head: bool,
    /// Total number of skill branches; branches past the first exist only to
    /// measure disagreement for the uncertainty reward.
    pub ensemble: usize,
}

impl CicConfig {
    pub fn desk(obs_dim: usize, skill_dim: usize) -> Self {
        CicConfig {
            obs_dim,
            skill_dim,
            hidden_dim: 64,
            embed_dim: skill_dim.max(1),
            temperature: 0.5,
            prediction_head: true,
            ensemble: 1,
        }
    }
}

/// One skill branch: encoder, then an optional prediction head.
#[derive(Debug, Clone)]
pub struct SkillBranch {
    pub encoder: Trainable,
    pub head: Option<Trainable>,
}

impl SkillBranch {
    fn embed(&self, z: &TensorBuf) -> Result<TensorBuf> {
        let enc = self.encoder.net.forward(z)?;
        match &self.head {
            Some(h) => h.net.forward(&enc),
            None => Ok(enc),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CicNets {
    pub transition: Trainable,
    /// Empty when skill_dim == 0; index 0 is the branch used for training
    /// and rewards, the rest are ensemble probes.
    pub skills: Vec<SkillBranch>,
    pub temperature: f64,
    obs_dim: usize,
    skill_dim: usize,
}

impl CicNets {
    pub fn new(cfg: &CicConfig, seeds: &SeedTree) -> Result<Self> {
        if cfg.temperature <= 0.0 {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                cfg.temperature
            )));
        }
        if cfg.obs_dim == 0 || cfg.embed_dim == 0 || cfg.hidden_dim == 0 {
            return Err(Error::Config(String::from(
                "encoder widths must be positive",
            )));
        }
        if cfg.ensemble == 0 {
            return Err(Error::Config(String::from("ensemble size must be >= 1")));
        }
        let tdims = [2 * cfg.obs_dim, cfg.hidden_dim, cfg.hidden_dim, cfg.embed_dim];
        let transition = Trainable::new(Mlp::new(
            &tdims,
            OutputActivation::Identity,
            &mut seeds.stream("init/cic/transition"),
        )?);
        let mut skills = Vec::new();
        if cfg.skill_dim > 0 {
            let sdims = [cfg.skill_dim, cfg.hidden_dim, cfg.hidden_dim, cfg.embed_dim];
            let hdims = [cfg.embed_dim, cfg.hidden_dim, cfg.embed_dim];
            for b in 0..cfg.ensemble {
                let encoder = Trainable::new(Mlp::new(
                    &sdims,
                    OutputActivation::Identity,
                    &mut seeds.indexed("init/cic/skill", b as u64),
                )?);
                let head = if cfg.prediction_head {
                    Some(Trainable::new(Mlp::new(
                        &hdims,
                        OutputActivation::Identity,
                        &mut seeds.indexed("init/cic/head", b as u64),
                    )?))
                } else {
                    None
                };
                skills.push(SkillBranch { encoder, head });
            }
        }
        Ok(CicNets {
            transition,
            skills,
            temperature: cfg.temperature,
            obs_dim: cfg.obs_dim,
            skill_dim: cfg.skill_dim,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn skill_dim(&self) -> usize {
        self.skill_dim
    }

    /// Stack (s, s_n) rows into tau rows.
    pub fn make_pairs(s: &TensorBuf, s_n: &TensorBuf) -> Result<TensorBuf> {
        if s.rows() != s_n.rows() || s.cols() != s_n.cols() {
            return Err(Error::Contract(format!(
                "pair halves disagree: {:?} vs {:?}",
                s.shape(),
                s_n.shape()
            )));
        }
        let (b, d) = (s.rows(), s.cols());
        let mut out = TensorBuf::zeros(vec![b, 2 * d]);
        for i in 0..b {
            out.row_mut(i)[..d].copy_from_slice(s.row(i));
            out.row_mut(i)[d..].copy_from_slice(s_n.row(i));
        }
        Ok(out)
    }

    /// Raw transition embeddings g(tau); the space the entropy reward lives in.
    pub fn embed_pairs(&self, tau: &TensorBuf) -> Result<TensorBuf> {
        self.transition.net.forward(tau)
    }

    /// Raw query embeddings of skill rows through branch `b`.
    pub fn query_embeddings(&self, b: usize, z: &TensorBuf) -> Result<TensorBuf> {
        let branch = self.skills.get(b).ok_or_else(|| {
            Error::Contract(format!("skill branch {b} of {}", self.skills.len()))
        })?;
        branch.embed(z)
    }

    /// Cosine-similarity logits between every skill row (queries) and every
    /// transition row (keys), scaled by 1/temperature. Row i is anchored at
    /// skill i.
    pub fn similarity_matrix(&self, tau: &TensorBuf, z: &TensorBuf) -> Result<TensorBuf> {
        let q = row_normalized(&self.query_embeddings(0, z)?);
        let k = row_normalized(&self.embed_pairs(tau)?);
        Ok(logits_from_normalized(&q, &k, self.temperature))
    }
}

/// Row-wise x / (|x| + 1e-8).
const NORM_EPS: f64 = 1e-8;

fn row_normalized(x: &TensorBuf) -> TensorBuf {
    let mut out = x.clone();
    for i in 0..x.rows() {
        let n = math::l2_norm(x.row(i));
        let s = n + NORM_EPS;
        for v in out.row_mut(i) {
            *v /= s;
        }
    }
    out
}

fn logits_from_normalized(q: &TensorBuf, k: &TensorBuf, temperature: f64) -> TensorBuf {
    let b = q.rows();
    let mut logits = TensorBuf::zeros(vec![b, k.rows()]);
    for i in 0..b {
        let qi = q.row(i);
        let row = logits.row_mut(i);
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = math::dot(qi, k.row(j)) / temperature;
        }
    }
    logits
}

/// Cross-entropy against diagonal labels, averaged over rows, plus the
/// gradient in the logits. Each row is one skill anchored against every
/// transition in the batch.
pub fn nce_from_logits(logits: &TensorBuf) -> (f64, TensorBuf) {
    let b = logits.rows();
    assert_eq!(b, logits.cols(), "contrastive logits must be square");
    let mut loss = 0.0;
    let mut dlogits = TensorBuf::zeros(vec![b, b]);
    let inv_b = 1.0 / b as f64;
    for i in 0..b {
        let row = logits.row(i);
        let mut m = f64::NEG_INFINITY;
        for &v in row {
            m = m.max(v);
        }
        let mut sum = 0.0;
        for &v in row {
            sum += math::exp(v - m);
        }
        let lse = m + math::ln(sum);
        loss += (lse - row[i]) * inv_b;
        let drow = dlogits.row_mut(i);
        for j in 0..b {
            let soft = math::exp(row[j] - lse);
            drow[j] = (soft - if i == j { 1.0 } else { 0.0 }) * inv_b;
        }
    }
    (loss, dlogits)
}

/// Gradients of the contrastive loss for one skill branch.
pub struct CicGrads {
    pub loss: f64,
    pub transition: MlpGrads,
    pub encoder: MlpGrads,
    pub head: Option<MlpGrads>,
}

/// Forward + backward of the contrastive loss through branch `b`.
pub fn cic_loss_and_grads(
    nets: &CicNets,
    b: usize,
    tau: &TensorBuf,
    z: &TensorBuf,
) -> Result<CicGrads> {
    if nets.skills.is_empty() {
        return Err(Error::Config(String::from(
            "contrastive loss requires a skill branch (skill_dim > 0)",
        )));
    }
    if tau.rows() != z.rows() {
        return Err(Error::Contract(format!(
            "tau batch {} vs skill batch {}",
            tau.rows(),
            z.rows()
        )));
    }
    if tau.rows() < 2 {
        return Err(Error::Contract(String::from(
            "contrastive loss needs at least 2 rows for negatives",
        )));
    }
    let branch = &nets.skills[b];
    let t = nets.temperature;

    let k_cache = nets.transition.net.forward_cached(tau.clone())?;
    let enc_cache = branch.encoder.net.forward_cached(z.clone())?;
    let head_cache = match &branch.head {
        Some(h) => Some(h.net.forward_cached(enc_cache.output().clone())?),
        None => None,
    };
    let q_raw = match &head_cache {
        Some(c) => c.output(),
        None => enc_cache.output(),
    };
    let k_raw = k_cache.output();

    let q = row_normalized(q_raw);
    let k = row_normalized(k_raw);
    let logits = logits_from_normalized(&q, &k, t);
    let (loss, dlogits) = nce_from_logits(&logits);

    let batch = tau.rows();
    let d = q.cols();
    // dq_hat_i = sum_j dlogits[i][j] k_hat_j / T;  dk_hat_j = sum_i dlogits[i][j] q_hat_i / T
    let mut dq_hat = TensorBuf::zeros(vec![batch, d]);
    let mut dk_hat = TensorBuf::zeros(vec![batch, d]);
    for i in 0..batch {
        let drow = dlogits.row(i);
        for j in 0..batch {
            let c = drow[j] / t;
            if c == 0.0 {
                continue;
            }
            let kj = k.row(j);
            let qi = q.row(i);
            for x in 0..d {
                dq_hat.row_mut(i)[x] += c * kj[x];
                dk_hat.row_mut(j)[x] += c * qi[x];
            }
        }
    }
    let dq_raw = normalize_backward(q_raw, &dq_hat);
    let dk_raw = normalize_backward(k_raw, &dk_hat);

    let (transition_grads, _) = nets.transition.net.backward(&k_cache, &dk_raw)?;
    let (head_grads, dq_enc) = match (&branch.head, &head_cache) {
        (Some(h), Some(c)) => {
            let (g, dx) = h.net.backward(c, &dq_raw)?;
            (Some(g), dx)
        }
        _ => (None, dq_raw),
    };
    let (encoder_grads, _) = branch.encoder.net.backward(&enc_cache, &dq_enc)?;

    Ok(CicGrads {
        loss,
        transition: transition_grads,
        encoder: encoder_grads,
        head: head_grads,
    })
}

/// Backward through y = x / (|x| + eps), row-wise.
fn normalize_backward(x: &TensorBuf, dy: &TensorBuf) -> TensorBuf {
    let mut dx = TensorBuf::zeros(vec![x.rows(), x.cols()]);
    for i in 0..x.rows() {
        let xr = x.row(i);
        let dyr = dy.row(i);
        let n = math::l2_norm(xr);
        let s = n + NORM_EPS;
        let out = dx.row_mut(i);
        if n < 1e-300 {
            for (o, &g) in out.iter_mut().zip(dyr) {
                *o = g / s;
            }
            continue;
        }
        let xdy = math::dot(xr, dyr);
        let c = xdy / (s * s * n);
        for j in 0..xr.len() {
            out[j] = dyr[j] / s - c * xr[j];
        }
    }
    dx
}

/// One optimizer step of the contrastive loss. Updates the transition
/// encoder and primary skill branch together, then refreshes each extra
/// ensemble branch on its own loss with the transition encoder held fixed.
/// Returns the primary loss.
pub fn cic_update(
    nets: &mut CicNets,
    tau: &TensorBuf,
    z: &TensorBuf,
    lr: f64,
    at_step: u64,
) -> Result<f64> {
    let g = cic_loss_and_grads(nets, 0, tau, z)?;
    nets.transition.step(&g.transition, lr, at_step)?;
    nets.skills[0].encoder.step(&g.encoder, lr, at_step)?;
    if let (Some(head), Some(hg)) = (nets.skills[0].head.as_mut(), g.head.as_ref()) {
        head.step(hg, lr, at_step)?;
    }
    for b in 1..nets.skills.len() {
        let gb = cic_loss_and_grads(nets, b, tau, z)?;
        nets.skills[b].encoder.step(&gb.encoder, lr, at_step)?;
        if let (Some(head), Some(hg)) = (nets.skills[b].head.as_mut(), gb.head.as_ref()) {
            head.step(hg, lr, at_step)?;
        }
    }
    Ok(g.loss)
}

/// log q(tau | z) estimated against in-batch negatives: the positive logit
/// minus log-mean-exp of its row (positive included). Shifting by the
/// positive logit keeps the algebraic bound score <= ln(N) exact in floats.
pub fn score_from_logit_row(row: &[f64], pos: usize) -> f64 {
    let n = row.len();
    debug_assert!(pos < n);
    let fpos = row[pos];
    let mut sum = 0.0;
    for &v in row {
        sum += math::exp(v - fpos);
    }
    math::ln(n as f64) - math::ln(sum)
}

/// Batched discriminator scores with each row's diagonal as its positive.
pub fn discriminator_scores(
    nets: &CicNets,
    tau: &TensorBuf,
    z: &TensorBuf,
) -> Result<Vec<f64>> {
    let logits = nets.similarity_matrix(tau, z)?;
    Ok((0..logits.rows())
        .map(|i| score_from_logit_row(logits.row(i), i))
        .collect())
}

/// Score one (tau, z) pair against a set of transitions that includes the
/// positive at `pos_idx`.
pub fn discriminator_score(
    nets: &CicNets,
    z: &[f64],
    taus: &TensorBuf,
    pos_idx: usize,
) -> Result<f64> {
    if pos_idx >= taus.rows() {
        return Err(Error::Contract(format!(
            "positive index {pos_idx} outside {} transitions",
            taus.rows()
        )));
    }
    let zbuf = TensorBuf::from_rows(&[z.to_vec()])?;
    let q = row_normalized(&nets.query_embeddings(0, &zbuf)?);
    let k = row_normalized(&nets.embed_pairs(taus)?);
    let logits = logits_from_normalized(&q, &k, nets.temperature);
    Ok(score_from_logit_row(logits.row(0), pos_idx))
}

/// Cosine with a floor on the denominator; identical vectors score 1 up to
/// float rounding.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let denom = (math::l2_norm(a) * math::l2_norm(b)).max(1e-8);
    math::dot(a, b) / denom
}

#[derive(Debug, Clone)]
pub struct IntrinsicConfig {
    pub variant: RewardVariant,
    pub knn_k: usize,
    pub form: EntropyForm,
}

impl Default for IntrinsicConfig {
    fn default() -> Self {
        IntrinsicConfig {
            variant: RewardVariant::Entropy,
            knn_k: 12,
            form: EntropyForm::Log1pMean,
        }
    }
}

/// Raw per-row intrinsic rewards for a batch of (tau, z) pairs. Reward
/// normalization is applied by the caller, after any additive terms.
pub fn intrinsic_reward(
    nets: &CicNets,
    cfg: &IntrinsicConfig,
    tau: &TensorBuf,
    z: &TensorBuf,
) -> Result<Vec<f64>> {
    let emb = nets.embed_pairs(tau)?;
    emb.check_finite("transition embeddings")?;
    let k = cfg.knn_k.min(emb.rows().saturating_sub(1)).max(1);
    let mut reward = entropy::particle_entropy_reward(&emb, k, cfg.form)?;
    match cfg.variant {
        RewardVariant::Entropy => {}
        RewardVariant::Discriminator => {
            let scores = discriminator_scores(nets, tau, z)?;
            for (r, s) in reward.iter_mut().zip(&scores) {
                *r += *s;
            }
        }
        RewardVariant::Similarity => {
            let q = nets.query_embeddings(0, z)?;
            for i in 0..emb.rows() {
                reward[i] += cosine(emb.row(i), q.row(i));
            }
        }
        RewardVariant::Uncertainty => {
            if nets.skills.len() < 2 {
                return Err(Error::Config(String::from(
                    "uncertainty reward needs an ensemble of at least 2 skill branches",
                )));
            }
            let sims: Vec<TensorBuf> = nets
                .skills
                .iter()
                .enumerate()
                .map(|(b, _)| nets.query_embeddings(b, z))
                .collect::<Result<_>>()?;
            let m = sims.len() as f64;
            for i in 0..emb.rows() {
                let vals: Vec<f64> = sims.iter().map(|q| cosine(emb.row(i), q.row(i))).collect();
                let mean = vals.iter().sum::<f64>() / m;
                let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
                reward[i] += math::sqrt(var);
            }
        }
    }
    Ok(reward)
}
