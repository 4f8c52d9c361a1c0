//! Plain fully-connected networks on f64 buffers: ReLU hidden layers, a
//! selectable output activation, hand-written backward pass, Adam, and Polyak
//! averaging. Everything downstream (actor, critic, encoders, classifier
//! heads) is built from these pieces.
//!
//! Weights are row-major `(out_dim, in_dim)`; forward computes
//! `y = act(x W^T + b)` over a batch of rows.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::rng::StreamRng;
use crate::tensor::TensorBuf;

/// Identifier of the weight-init scheme, echoed into checkpoint metadata so
/// a checkpoint records how its arrays were born.
pub const INIT_SCHEME: &str = "uniform_fan_in_v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Identity,
    Tanh,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// Row-major (out_dim, in_dim).
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Linear>,
    out_act: OutputActivation,
}

/// Per-layer parameter gradients, same shapes as the layer they mirror.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<LayerGrads>,
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        MlpGrads {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrads {
                    dw: vec![0.0; l.w.len()],
                    db: vec![0.0; l.b.len()],
                })
                .collect(),
        }
    }

    /// Elementwise accumulate; shapes must match.
    pub fn add(&mut self, other: &MlpGrads) {
        assert_eq!(self.layers.len(), other.layers.len());
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            assert_eq!(a.dw.len(), b.dw.len());
            for (x, y) in a.dw.iter_mut().zip(&b.dw) {
                *x += *y;
            }
            for (x, y) in a.db.iter_mut().zip(&b.db) {
                *x += *y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| math::all_finite(&l.dw) && math::all_finite(&l.db))
    }
}

/// Activations kept from a forward pass, enough to run backward.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: TensorBuf,
    /// Post-activation output of every layer, in order.
    outs: Vec<TensorBuf>,
}

impl ForwardCache {
    pub fn output(&self) -> &TensorBuf {
        self.outs.last().expect("cache from at least one layer")
    }
}

impl Mlp {
    /// `dims` lists layer widths input-first, so `[4, 32, 2]` is one bent
    /// hidden layer. Weights start uniform in +-1/sqrt(fan_in), biases zero.
    pub fn new(dims: &[usize], out_act: OutputActivation, rng: &mut StreamRng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config(format!(
                "mlp needs at least input and output widths, got {dims:?}"
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Config(format!("zero-width layer in {dims:?}")));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for win in dims.windows(2) {
            let (in_dim, out_dim) = (win[0], win[1]);
            let limit = 1.0 / math::sqrt(in_dim as f64);
            let w = rng.uniform_vec(in_dim * out_dim, -limit, limit);
            layers.push(Linear {
                w,
                b: vec![0.0; out_dim],
                in_dim,
                out_dim,
            });
        }
        Ok(Mlp { layers, out_act })
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    /// Direct parameter access for checkpoint restore. Callers must keep
    /// each layer's dimensions intact.
    pub fn layers_mut(&mut self) -> &mut [Linear] {
        &mut self.layers
    }

    pub fn out_act(&self) -> OutputActivation {
        self.out_act
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.layers.iter().map(|l| l.in_dim).collect();
        d.push(self.out_dim());
        d
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// All parameters as one vector, layer order, weights before biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Contract(format!(
                "flat parameter vector has {} values, net holds {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&flat[at..at + nw]);
            at += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
        Ok(())
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.in_dim() {
            return Err(Error::Contract(format!(
                "layer 0 expects width {}, got input width {cols}",
                self.in_dim()
            )));
        }
        Ok(())
    }

    /// Batched forward keeping per-layer activations for backward.
    pub fn forward_cached(&self, input: TensorBuf) -> Result<ForwardCache> {
        self.check_input(input.cols())?;
        let batch = input.rows();
        let mut outs: Vec<TensorBuf> = Vec::with_capacity(self.layers.len());
        for (li, l) in self.layers.iter().enumerate() {
            let last = li + 1 == self.layers.len();
            let cur = if li == 0 { &input } else { &outs[li - 1] };
            let mut next = TensorBuf::zeros(vec![batch, l.out_dim]);
            for bi in 0..batch {
                let x = cur.row(bi);
                let y = next.row_mut(bi);
                for o in 0..l.out_dim {
                    let wrow = &l.w[o * l.in_dim..(o + 1) * l.in_dim];
                    let mut acc = l.b[o];
                    for i in 0..l.in_dim {
                        acc += wrow[i] * x[i];
                    }
                    y[o] = if last {
                        match self.out_act {
                            OutputActivation::Identity => acc,
                            OutputActivation::Tanh => math::tanh(acc),
                        }
                    } else {
                        // hidden layers are always ReLU
                        if acc > 0.0 {
                            acc
                        } else {
                            0.0
                        }
                    };
                }
            }
            outs.push(next);
        }
        Ok(ForwardCache { input, outs })
    }

    /// Batched forward without keeping activations.
    pub fn forward(&self, input: &TensorBuf) -> Result<TensorBuf> {
        let cache = self.forward_cached(input.clone())?;
        Ok(cache.outs.into_iter().last().expect("at least one layer"))
    }

    /// Single-row forward. The rollout hot path; avoids batch scaffolding.
    pub fn forward_single(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x.len())?;
        let mut cur = x.to_vec();
        for (li, l) in self.layers.iter().enumerate() {
            let last = li + 1 == self.layers.len();
            let mut next = vec![0.0; l.out_dim];
            for o in 0..l.out_dim {
                let wrow = &l.w[o * l.in_dim..(o + 1) * l.in_dim];
                let mut acc = l.b[o];
                for i in 0..l.in_dim {
                    acc += wrow[i] * cur[i];
                }
                next[o] = if last {
                    match self.out_act {
                        OutputActivation::Identity => acc,
                        OutputActivation::Tanh => math::tanh(acc),
                    }
                } else if acc > 0.0 {
                    acc
                } else {
                    0.0
                };
            }
            cur = next;
        }
        Ok(cur)
    }

    /// Backpropagate `dout` (gradient of the loss in the network output)
    /// through the cached pass. Returns parameter gradients and the gradient
    /// in the network input. The caller owns any 1/batch factors.
    pub fn backward(&self, cache: &ForwardCache, dout: &TensorBuf) -> Result<(MlpGrads, TensorBuf)> {
        let batch = cache.input.rows();
        if dout.rows() != batch || dout.cols() != self.out_dim() {
            return Err(Error::Contract(format!(
                "output gradient shape {:?} does not match batch {batch} x out {}",
                dout.shape(),
                self.out_dim()
            )));
        }
        let mut grads = MlpGrads::zeros_like(self);
        let mut dcur = dout.clone();
        for (li, l) in self.layers.iter().enumerate().rev() {
            let last = li + 1 == self.layers.len();
            let post = &cache.outs[li];
            let below = if li == 0 { &cache.input } else { &cache.outs[li - 1] };
            let g = &mut grads.layers[li];
            let mut dnext = TensorBuf::zeros(vec![batch, l.in_dim]);
            for bi in 0..batch {
                let prow = post.row(bi);
                let xrow = below.row(bi);
                let drow = dcur.row(bi);
                let dxrow = dnext.row_mut(bi);
                for o in 0..l.out_dim {
                    // activation derivative from the post-activation value
                    let da = if last {
                        match self.out_act {
                            OutputActivation::Identity => drow[o],
                            OutputActivation::Tanh => drow[o] * (1.0 - prow[o] * prow[o]),
                        }
                    } else if prow[o] > 0.0 {
                        drow[o]
                    } else {
                        0.0
                    };
                    if da == 0.0 {
                        continue;
                    }
                    g.db[o] += da;
                    let wrow = &l.w[o * l.in_dim..(o + 1) * l.in_dim];
                    let gw = &mut g.dw[o * l.in_dim..(o + 1) * l.in_dim];
                    for i in 0..l.in_dim {
                        gw[i] += da * xrow[i];
                        dxrow[i] += da * wrow[i];
                    }
                }
            }
            dcur = dnext;
        }
        Ok((grads, dcur))
    }
}

/// Adam with the usual bias correction. One state per network.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<LayerGrads>,
    v: Vec<LayerGrads>,
    t: u64,
    // running beta^t, grown one factor per step: the same multiplication
    // order as recomputing the power from scratch, so bit-identical, but
    // O(1) instead of O(t) per update
    pow_b1: f64,
    pow_b2: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl AdamState {
    pub fn new(net: &Mlp) -> Self {
        let zeros = || MlpGrads::zeros_like(net).layers;
        AdamState {
            m: zeros(),
            v: zeros(),
            t: 0,
            pow_b1: 1.0,
            pow_b2: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update. `at_step` only labels the error if a non-finite gradient
    /// slips in.
    pub fn step(&mut self, net: &mut Mlp, grads: &MlpGrads, lr: f64, at_step: u64) -> Result<()> {
        if grads.layers.len() != net.layers.len() {
            return Err(Error::Contract(format!(
                "gradient has {} layers, net has {}",
                grads.layers.len(),
                net.layers.len()
            )));
        }
        if !grads.is_finite() {
            return Err(Error::Training {
                step: at_step,
                what: format!("non-finite gradient after {} optimizer steps", self.t),
            });
        }
        self.t += 1;
        self.pow_b1 *= self.beta1;
        self.pow_b2 *= self.beta2;
        let c1 = 1.0 - self.pow_b1;
        let c2 = 1.0 - self.pow_b2;
        for (li, l) in net.layers.iter_mut().enumerate() {
            let g = &grads.layers[li];
            assert_eq!(g.dw.len(), l.w.len(), "layer {li} weight shape");
            assert_eq!(g.db.len(), l.b.len(), "layer {li} bias shape");
            let (m, v) = (&mut self.m[li], &mut self.v[li]);
            for (i, p) in l.w.iter_mut().enumerate() {
                let gi = g.dw[i];
                m.dw[i] = self.beta1 * m.dw[i] + (1.0 - self.beta1) * gi;
                v.dw[i] = self.beta2 * v.dw[i] + (1.0 - self.beta2) * gi * gi;
                *p -= lr * (m.dw[i] / c1) / (math::sqrt(v.dw[i] / c2) + self.eps);
            }
            for (i, p) in l.b.iter_mut().enumerate() {
                let gi = g.db[i];
                m.db[i] = self.beta1 * m.db[i] + (1.0 - self.beta1) * gi;
                v.db[i] = self.beta2 * v.db[i] + (1.0 - self.beta2) * gi * gi;
                *p -= lr * (m.db[i] / c1) / (math::sqrt(v.db[i] / c2) + self.eps);
            }
        }
        Ok(())
    }
}

/// A network bundled with its optimizer state.
#[derive(Debug, Clone)]
pub struct Trainable {
    pub net: Mlp,
    pub adam: AdamState,
}

impl Trainable {
    pub fn new(net: Mlp) -> Self {
        let adam = AdamState::new(&net);
        Trainable { net, adam }
    }

    pub fn step(&mut self, grads: &MlpGrads, lr: f64, at_step: u64) -> Result<()> {
        self.adam.step(&mut self.net, grads, lr, at_step)
    }
}

/// Soft target update: target <- (1 - rate) * target + rate * online.
pub fn polyak_update(target: &mut Mlp, online: &Mlp, rate: f64) -> Result<()> {
    if target.dims() != online.dims() || target.out_act != online.out_act {
        return Err(Error::Config(format!(
            "polyak between mismatched nets {:?} and {:?}",
            target.dims(),
            online.dims()
        )));
    }
    for (tl, ol) in target.layers.iter_mut().zip(&online.layers) {
        for (t, o) in tl.w.iter_mut().zip(&ol.w) {
            *t = (1.0 - rate) * *t + rate * *o;
        }
        for (t, o) in tl.b.iter_mut().zip(&ol.b) {
            *t = (1.0 - rate) * *t + rate * *o;
        }
    }
    Ok(())
}

/// Central finite-difference gradient of `f` at `at`. Verification utility:
/// slow, allocation-happy, and deliberately independent of `Mlp::backward`.
pub fn numeric_gradient(mut f: impl FnMut(&[f64]) -> f64, at: &[f64], h: f64) -> Vec<f64> {
    let mut x = at.to_vec();
    let mut out = Vec::with_capacity(at.len());
    for i in 0..at.len() {
        let keep = x[i];
        x[i] = keep + h;
        let hi = f(&x);
        x[i] = keep - h;
        let lo = f(&x);
        x[i] = keep;
        out.push((hi - lo) / (2.0 * h));
    }
    out
}

/// Worst relative disagreement between two gradient vectors, with a floor so
/// near-zero entries compare absolutely.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let mut worst = 0.0f64;
    for (&a, &n) in analytic.iter().zip(numeric) {
        let scale = math::abs(a).max(math::abs(n)).max(1e-3);
        let rel = math::abs(a - n) / scale;
        if rel > worst {
            worst = rel;
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;

    fn rng(label: &str) -> StreamRng {
        SeedTree::new(99).stream(label)
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let a = Mlp::new(&[3, 8, 2], OutputActivation::Tanh, &mut rng("i")).unwrap();
        let b = Mlp::new(&[3, 8, 2], OutputActivation::Tanh, &mut rng("i")).unwrap();
        assert_eq!(a.flatten(), b.flatten());
    }

    #[test]
    fn forward_rejects_bad_width() {
        let net = Mlp::new(&[3, 4, 2], OutputActivation::Identity, &mut rng("w")).unwrap();
        let x = TensorBuf::matrix(1, 4, vec![0.0; 4]).unwrap();
        let err = net.forward(&x).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
        assert!(format!("{err}").contains("layer 0"));
    }

    #[test]
    fn single_and_batched_forward_agree() {
        let net = Mlp::new(&[4, 16, 3], OutputActivation::Tanh, &mut rng("fb")).unwrap();
        let mut r = rng("x");
        let rows: Vec<Vec<f64>> = (0..5).map(|_| r.uniform_vec(4, -1.0, 1.0)).collect();
        let batch = net.forward(&TensorBuf::from_rows(&rows).unwrap()).unwrap();
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(net.forward_single(row).unwrap(), batch.row(i));
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        // Scalar loss: sum of squared outputs over a small batch.
        let net = Mlp::new(&[3, 6, 5, 2], OutputActivation::Tanh, &mut rng("g")).unwrap();
        let mut r = rng("gx");
        let x = TensorBuf::from_rows(&(0..4).map(|_| r.uniform_vec(3, -1.0, 1.0)).collect::<Vec<_>>())
            .unwrap();

        let cache = net.forward_cached(x.clone()).unwrap();
        let y = cache.output();
        let mut dout = y.clone();
        for v in dout.data_mut() {
            *v *= 2.0;
        }
        let (grads, dx) = net.backward(&cache, &dout).unwrap();
        let mut analytic: Vec<f64> = Vec::new();
        for l in &grads.layers {
            analytic.extend_from_slice(&l.dw);
            analytic.extend_from_slice(&l.db);
        }

        let flat = net.flatten();
        let numeric = numeric_gradient(
            |p| {
                let mut probe = net.clone();
                probe.load_flat(p).unwrap();
                let out = probe.forward(&x).unwrap();
                out.data().iter().map(|v| v * v).sum::<f64>()
            },
            &flat,
            1e-6,
        );
        assert!(
            max_rel_err(&analytic, &numeric) < 1e-6,
            "param gradient mismatch: {}",
            max_rel_err(&analytic, &numeric)
        );

        // Input gradient against the same oracle.
        let numeric_dx = numeric_gradient(
            |p| {
                let probe = TensorBuf::matrix(4, 3, p.to_vec()).unwrap();
                let out = net.forward(&probe).unwrap();
                out.data().iter().map(|v| v * v).sum::<f64>()
            },
            x.data(),
            1e-6,
        );
        assert!(max_rel_err(dx.data(), &numeric_dx) < 1e-6);
    }

    #[test]
    fn adam_scalar_step_moves_by_lr() {
        // One weight, one bias; gradient 1 on the weight only. The first
        // bias-corrected step is -lr * 1/(sqrt(1) + eps), i.e. almost
        // exactly -lr.
        let mut net = Mlp::new(&[1, 1], OutputActivation::Identity, &mut rng("a")).unwrap();
        net.load_flat(&[0.0, 0.0]).unwrap();
        let mut adam = AdamState::new(&net);
        let grads = MlpGrads {
            layers: vec![LayerGrads {
                dw: vec![1.0],
                db: vec![0.0],
            }],
        };
        adam.step(&mut net, &grads, 0.1, 0).unwrap();
        let p = net.flatten();
        assert!((p[0] + 0.1).abs() < 1e-8, "weight {}", p[0]);
        assert_eq!(p[1], 0.0);
        assert_eq!(adam.steps_taken(), 1);
    }

    #[test]
    fn adam_zero_gradient_is_a_counted_noop() {
        let mut net = Mlp::new(&[2, 3, 1], OutputActivation::Identity, &mut rng("z")).unwrap();
        let before = net.flatten();
        let mut adam = AdamState::new(&net);
        let grads = MlpGrads::zeros_like(&net);
        adam.step(&mut net, &grads, 0.5, 0).unwrap();
        assert_eq!(net.flatten(), before);
        assert_eq!(adam.steps_taken(), 1);
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let mut net = Mlp::new(&[1, 1], OutputActivation::Identity, &mut rng("n")).unwrap();
        let mut adam = AdamState::new(&net);
        let grads = MlpGrads {
            layers: vec![LayerGrads {
                dw: vec![f64::NAN],
                db: vec![0.0],
            }],
        };
        let err = adam.step(&mut net, &grads, 0.1, 42).unwrap_err();
        assert!(matches!(err, Error::Training { step: 42, .. }));
    }

    #[test]
    fn polyak_contracts_distance_per_coordinate() {
        let online = Mlp::new(&[3, 5, 2], OutputActivation::Identity, &mut rng("p1")).unwrap();
        let mut target = Mlp::new(&[3, 5, 2], OutputActivation::Identity, &mut rng("p2")).unwrap();
        let rate = 0.01;
        let before: Vec<f64> = target
            .flatten()
            .iter()
            .zip(online.flatten())
            .map(|(t, o)| (t - o).abs())
            .collect();
        polyak_update(&mut target, &online, rate).unwrap();
        let after: Vec<f64> = target
            .flatten()
            .iter()
            .zip(online.flatten())
            .map(|(t, o)| (t - o).abs())
            .collect();
        for (a, b) in after.iter().zip(&before) {
            assert!((a - (1.0 - rate) * b).abs() < 1e-12);
        }
    }

    #[test]
    fn polyak_rejects_mismatched_architectures() {
        let online = Mlp::new(&[3, 5, 2], OutputActivation::Identity, &mut rng("m1")).unwrap();
        let mut target = Mlp::new(&[3, 4, 2], OutputActivation::Identity, &mut rng("m2")).unwrap();
        assert!(matches!(
            polyak_update(&mut target, &online, 0.01),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn flatten_roundtrip() {
        let mut net = Mlp::new(&[2, 4, 3], OutputActivation::Tanh, &mut rng("f")).unwrap();
        let flat = net.flatten();
        let mut r = rng("f2");
        let other = r.uniform_vec(flat.len(), -1.0, 1.0);
        net.load_flat(&other).unwrap();
        assert_eq!(net.flatten(), other);
        net.load_flat(&flat).unwrap();
        assert_eq!(net.flatten(), flat);
        assert!(net.load_flat(&flat[1..]).is_err());
    }
}
