//! Space-time graph neural networks.
//!
//! Layer `ℓ` maps `F_{ℓ−1}` input features to `F_ℓ` output features with a bank
//! of FIR space-time graph filters followed by a pointwise activation:
//!
//! ```text
//! X_ℓ^f = σ( Σ_g Σ_k h_{kℓ}^{fg} (S∘L)^k X_{ℓ−1}^g )
//! ```
//!
//! Gradients are computed by hand-written reverse mode; the adjoint of one
//! diffusion step is the same graph applied one sample earlier.

mod adam;
mod io;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use io::{load_params, load_params_with, params_from_bytes, params_to_bytes, save_params};
pub use train::{
    train_imitation, Dataset, EpochLog, Example, MseValidator, SelectionMetric, TrainConfig, TrainOutcome,
    Validator,
};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::signal::SpaceTimeSignal;
use crate::stfilter::{diffusion_adjoint, diffusions, perturbed_diffusions, GraphSeq};
use crate::timeline::WarpFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Identity => v,
        }
    }

    /// Derivative evaluated at the pre-activation `v`.
    fn derivative(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = v.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Filter bank of one layer; taps stored `(f_out, f_in, k)` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub f_out: usize,
    pub f_in: usize,
    pub k: usize,
    pub taps: Vec<f64>,
}

impl LayerParams {
    pub fn zeros(f_out: usize, f_in: usize, k: usize) -> Self {
        Self {
            f_out,
            f_in,
            k,
            taps: vec![0.0; f_out * f_in * k],
        }
    }

    pub fn index(&self, f: usize, g: usize, k: usize) -> usize {
        (f * self.f_in + g) * self.k + k
    }

    pub fn tap(&self, f: usize, g: usize, k: usize) -> f64 {
        self.taps[self.index(f, g, k)]
    }

    pub fn set_tap(&mut self, f: usize, g: usize, k: usize, v: f64) {
        let i = self.index(f, g, k);
        self.taps[i] = v;
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.f_out, self.f_in, self.k)
    }
}

/// Full learnable parameter set plus the output-layer activation. Hidden layers
/// always use `tanh`.
#[derive(Debug, Clone, PartialEq)]
pub struct StgnnParams {
    pub layers: Vec<LayerParams>,
    pub final_activation: Activation,
}

/// Layer widths and taps: `features = [F_0, …, F_L]`, `taps = [K_1, …, K_L]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub features: Vec<usize>,
    pub taps: Vec<usize>,
    pub final_activation: Activation,
}

impl Architecture {
    pub fn new(features: Vec<usize>, taps: Vec<usize>, final_activation: Activation) -> Result<Self> {
        if features.len() < 2 || taps.len() + 1 != features.len() {
            return Err(Error::InvalidArgument(format!(
                "need L+1 feature counts and L tap counts, got {features:?} / {taps:?}"
            )));
        }
        if features.contains(&0) || taps.contains(&0) {
            return Err(Error::InvalidArgument("feature and tap counts must be positive".into()));
        }
        Ok(Self {
            features,
            taps,
            final_activation,
        })
    }

    pub fn n_layers(&self) -> usize {
        self.taps.len()
    }
}

impl StgnnParams {
    pub fn zeros(arch: &Architecture) -> Self {
        let layers = (0..arch.n_layers())
            .map(|l| LayerParams::zeros(arch.features[l + 1], arch.features[l], arch.taps[l]))
            .collect();
        Self {
            layers,
            final_activation: arch.final_activation,
        }
    }

    /// Uniform on `[−a, a]` with `a = 1/√(F_in · K)` per layer.
    pub fn init_uniform(arch: &Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(arch);
        for layer in p.layers.iter_mut() {
            let a = 1.0 / ((layer.f_in * layer.k) as f64).sqrt();
            for t in layer.taps.iter_mut() {
                *t = rng.random_range(-a..=a);
            }
        }
        p
    }

    pub fn architecture(&self) -> Architecture {
        let mut features = vec![self.layers[0].f_in];
        features.extend(self.layers.iter().map(|l| l.f_out));
        Architecture {
            features,
            taps: self.layers.iter().map(|l| l.k).collect(),
            final_activation: self.final_activation,
        }
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_features(&self) -> usize {
        self.layers[0].f_in
    }

    pub fn output_features(&self) -> usize {
        self.layers[self.layers.len() - 1].f_out
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.taps.len()).sum()
    }

    pub fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.final_activation
        } else {
            Activation::Tanh
        }
    }

    /// Checks that consecutive layers chain and all taps are finite.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidArgument("network has no layers".into()));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.taps.len() != layer.f_out * layer.f_in * layer.k {
                return Err(Error::Dimension(format!("layer {l}: tap count does not match shape")));
            }
            if layer.taps.iter().any(|t| !t.is_finite()) {
                return Err(Error::InvalidArgument(format!("layer {l}: non-finite tap")));
            }
            if l > 0 && self.layers[l - 1].f_out != layer.f_in {
                return Err(Error::Dimension(format!(
                    "layer {l} expects {} inputs but layer {} emits {}",
                    layer.f_in,
                    l - 1,
                    self.layers[l - 1].f_out
                )));
            }
        }
        Ok(())
    }

    /// Flat view over all taps, layer by layer.
    pub fn flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.taps.iter().copied()).collect()
    }

    pub fn flat_get(&self, mut i: usize) -> f64 {
        for l in &self.layers {
            if i < l.taps.len() {
                return l.taps[i];
            }
            i -= l.taps.len();
        }
        panic!("parameter index out of range")
    }

    pub fn flat_set(&mut self, mut i: usize, v: f64) {
        for l in self.layers.iter_mut() {
            if i < l.taps.len() {
                l.taps[i] = v;
                return;
            }
            i -= l.taps.len();
        }
        panic!("parameter index out of range")
    }
}

/// Gradient with the same layout as [`StgnnParams`] taps.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &StgnnParams) -> Self {
        Self {
            layers: params.layers.iter().map(|l| vec![0.0; l.taps.len()]).collect(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.layers.iter().flatten().copied().collect()
    }

    pub fn add_scaled(&mut self, a: f64, other: &Gradients) {
        for (dst, src) in self.layers.iter_mut().zip(&other.layers) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += a * s;
            }
        }
    }
}

/// Intermediate values retained by [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct Tape {
    /// Input of every layer (`inputs[0]` is the network input).
    inputs: Vec<SpaceTimeSignal>,
    /// Pre-activations of every layer.
    pre: Vec<SpaceTimeSignal>,
    /// `diffusions[ℓ][g][k]`: k-step diffusion of input feature `g` of layer ℓ.
    diffusions: Vec<Vec<Vec<Vec<f64>>>>,
}

impl Tape {
    pub fn pre_activations(&self) -> &[SpaceTimeSignal] {
        &self.pre
    }
}

fn check_input(params: &StgnnParams, graphs: GraphSeq<'_>, x: &SpaceTimeSignal) -> Result<()> {
    params.validate()?;
    if x.features() != params.input_features() {
        return Err(Error::Dimension(format!(
            "network expects {} input features, signal has {}",
            params.input_features(),
            x.features()
        )));
    }
    graphs.check(x.nodes(), x.steps())
}

/// Runs the network and keeps every layer's pre-activation on the tape.
pub fn forward(params: &StgnnParams, graphs: GraphSeq<'_>, x: &SpaceTimeSignal) -> Result<(SpaceTimeSignal, Tape)> {
    check_input(params, graphs, x)?;
    let (nodes, steps) = (x.nodes(), x.steps());
    Ok(forward_with(params, x, |v, k| diffusions(graphs, v, nodes, steps, k)))
}

/// Inference on a fixed graph with the time shift perturbed to
/// `(1 + ξ(u))·L_u` in every layer.
pub fn predict_perturbed_shift(
    params: &StgnnParams,
    graph: &Graph,
    warp: &WarpFunction,
    x: &SpaceTimeSignal,
) -> Result<SpaceTimeSignal> {
    check_input(params, GraphSeq::Static(graph), x)?;
    let (nodes, steps, ts) = (x.nodes(), x.steps(), x.grid().ts);
    Ok(forward_with(params, x, |v, k| perturbed_diffusions(graph, warp, ts, v, nodes, steps, k)).0)
}

fn forward_with(
    params: &StgnnParams,
    x: &SpaceTimeSignal,
    diffuse: impl Fn(&[f64], usize) -> Vec<Vec<f64>>,
) -> (SpaceTimeSignal, Tape) {
    let nodes = x.nodes();
    let mut tape = Tape {
        inputs: Vec::with_capacity(params.n_layers()),
        pre: Vec::with_capacity(params.n_layers()),
        diffusions: Vec::with_capacity(params.n_layers()),
    };
    let mut current = x.clone();
    for (l, layer) in params.layers.iter().enumerate() {
        let z: Vec<Vec<Vec<f64>>> = (0..layer.f_in)
            .map(|g| diffuse(current.feature(g), layer.k))
            .collect();
        let mut pre = SpaceTimeSignal::zeros(layer.f_out, nodes, x.grid());
        for f in 0..layer.f_out {
            let out = pre.feature_mut(f);
            for (g, zg) in z.iter().enumerate() {
                for (k, zk) in zg.iter().enumerate() {
                    let h = layer.tap(f, g, k);
                    if h == 0.0 {
                        continue;
                    }
                    for (o, v) in out.iter_mut().zip(zk) {
                        *o += h * v;
                    }
                }
            }
        }
        let act = params.activation(l);
        let mut post = pre.clone();
        post.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
        tape.inputs.push(current);
        tape.pre.push(pre);
        tape.diffusions.push(z);
        current = post;
    }
    (current, tape)
}

/// Forward pass without keeping the tape.
pub fn predict(params: &StgnnParams, graphs: GraphSeq<'_>, x: &SpaceTimeSignal) -> Result<SpaceTimeSignal> {
    forward(params, graphs, x).map(|(y, _)| y)
}

/// Reverse-mode gradient of `⟨loss_grad, Φ(x)⟩` with respect to every tap.
pub fn backward(
    params: &StgnnParams,
    graphs: GraphSeq<'_>,
    tape: &Tape,
    loss_grad: &SpaceTimeSignal,
) -> Result<Gradients> {
    if tape.pre.len() != params.n_layers() {
        return Err(Error::Dimension("tape depth does not match the network".into()));
    }
    let last = tape.pre.last().unwrap();
    if !loss_grad.same_shape(last) {
        return Err(Error::Dimension(format!(
            "loss gradient shape {:?} vs output shape {:?}",
            loss_grad.shape(),
            last.shape()
        )));
    }
    for (l, layer) in params.layers.iter().enumerate() {
        if tape.pre[l].features() != layer.f_out || tape.inputs[l].features() != layer.f_in {
            return Err(Error::Dimension(format!("stale tape at layer {l}")));
        }
    }
    let (nodes, steps) = (loss_grad.nodes(), loss_grad.steps());
    let mut grads = Gradients::zeros_like(params);
    let mut upstream = loss_grad.clone();
    for l in (0..params.n_layers()).rev() {
        let layer = &params.layers[l];
        let act = params.activation(l);
        let mut d_pre = upstream;
        for (d, p) in d_pre.as_mut_slice().iter_mut().zip(tape.pre[l].as_slice()) {
            *d *= act.derivative(*p);
        }
        let z = &tape.diffusions[l];
        let g_layer = &mut grads.layers[l];
        for f in 0..layer.f_out {
            let df = d_pre.feature(f);
            for (g, zg) in z.iter().enumerate() {
                for (k, zk) in zg.iter().enumerate() {
                    g_layer[layer.index(f, g, k)] = df.iter().zip(zk).map(|(a, b)| a * b).sum();
                }
            }
        }
        if l == 0 {
            break;
        }
        let mut d_in = SpaceTimeSignal::zeros(layer.f_in, nodes, loss_grad.grid());
        for g in 0..layer.f_in {
            let mut w = vec![vec![0.0; nodes * steps]; layer.k];
            for (k, wk) in w.iter_mut().enumerate() {
                for f in 0..layer.f_out {
                    let h = layer.tap(f, g, k);
                    if h == 0.0 {
                        continue;
                    }
                    for (dst, v) in wk.iter_mut().zip(d_pre.feature(f)) {
                        *dst += h * v;
                    }
                }
            }
            let b = diffusion_adjoint(graphs, &w, nodes, steps);
            d_in.feature_mut(g).copy_from_slice(&b);
        }
        upstream = d_in;
    }
    Ok(grads)
}

/// Mean squared error over all `F·N·T` entries and its gradient.
pub fn mse_loss(pred: &SpaceTimeSignal, target: &SpaceTimeSignal) -> Result<(f64, SpaceTimeSignal)> {
    if !pred.same_shape(target) {
        return Err(Error::Dimension(format!(
            "prediction shape {:?} vs target shape {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let count = pred.as_slice().len() as f64;
    let mut grad = pred.clone();
    let mut sum = 0.0;
    for (g, t) in grad.as_mut_slice().iter_mut().zip(target.as_slice()) {
        let d = *g - t;
        sum += d * d;
        *g = 2.0 * d / count;
    }
    Ok((sum / count, grad))
}
