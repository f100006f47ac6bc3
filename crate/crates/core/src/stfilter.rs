//! FIR space-time graph filters.
//!
//! Execution follows the recursive time-varying form
//!
//! ```text
//! y_n = h_0 x_n + Σ_{k≥1} h_k (S_{n−1} S_{n−2} ⋯ S_{n−k}) x_{n−k}
//! ```
//!
//! with zero prehistory, so one tap costs one graph hop plus one sample of delay.
//! Two frequency-response conventions are exposed: the exponential form
//! `Σ h_k e^{−k T_s (λ + jω)}` used by the stability analysis, and the
//! executed GSO-shift form `Σ h_k λ^k e^{−jω k T_s}`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, Graph};
use crate::signal::SpaceTimeSignal;
use crate::timeline::WarpFunction;

/// Taps `h_0 … h_{K−1}` and the sampling period baked into the response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirFilter {
    pub taps: Vec<f64>,
    pub ts: f64,
}

impl FirFilter {
    pub fn new(taps: Vec<f64>, ts: f64) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::InvalidArgument("filter needs at least one tap".into()));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("filter taps must be finite".into()));
        }
        if !(ts > 0.0) {
            return Err(Error::InvalidArgument(format!("sampling period must be positive, got {ts}")));
        }
        Ok(Self { taps, ts })
    }

    pub fn n_taps(&self) -> usize {
        self.taps.len()
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            taps: self.taps.iter().map(|t| t * a).collect(),
            ts: self.ts,
        }
    }
}

/// Per-step graphs seen by a filter.
#[derive(Debug, Clone, Copy)]
pub enum GraphSeq<'a> {
    Static(&'a Graph),
    Dynamic(&'a [Graph]),
}

impl<'a> GraphSeq<'a> {
    pub fn at(&self, t: usize) -> &'a Graph {
        match self {
            GraphSeq::Static(g) => g,
            GraphSeq::Dynamic(gs) => &gs[t],
        }
    }

    pub fn n_nodes(&self) -> usize {
        match self {
            GraphSeq::Static(g) => g.n_nodes(),
            GraphSeq::Dynamic(gs) => gs.first().map_or(0, |g| g.n_nodes()),
        }
    }

    pub(crate) fn check(&self, nodes: usize, steps: usize) -> Result<()> {
        match self {
            GraphSeq::Static(g) => {
                if g.n_nodes() != nodes {
                    return Err(Error::Dimension(format!(
                        "graph has {} nodes, signal has {nodes}",
                        g.n_nodes()
                    )));
                }
            }
            GraphSeq::Dynamic(gs) => {
                if gs.len() != steps {
                    return Err(Error::Dimension(format!(
                        "{} graphs for a {steps}-step signal",
                        gs.len()
                    )));
                }
                if let Some(bad) = gs.iter().position(|g| g.n_nodes() != nodes) {
                    return Err(Error::Dimension(format!(
                        "graph {bad} has {} nodes, signal has {nodes}",
                        gs[bad].n_nodes()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Diffusion sequence of one feature: entry `k` holds `z^{(k)}_n = S_{n−1} z^{(k−1)}_{n−1}`
/// with `z^{(0)} = x`, laid out `(t, n)`.
pub(crate) fn diffusions(graphs: GraphSeq<'_>, x: &[f64], nodes: usize, steps: usize, k_max: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(k_max);
    out.push(x.to_vec());
    for k in 1..k_max {
        let prev = &out[k - 1];
        let mut next = vec![0.0; nodes * steps];
        for t in k..steps {
            let src = &prev[(t - 1) * nodes..t * nodes];
            graphs.at(t - 1).shift_into(src, &mut next[t * nodes..(t + 1) * nodes]);
        }
        out.push(next);
    }
    out
}

/// Adjoint of `x ↦ Σ_k w_k ⊙ z^{(k)}(x)` given per-tap cotangents `w[k]`:
/// `b^{(k)}_n = w^{(k)}_n + S_n b^{(k+1)}_{n+1}`, returning `b^{(0)}`.
pub(crate) fn diffusion_adjoint(graphs: GraphSeq<'_>, w: &[Vec<f64>], nodes: usize, steps: usize) -> Vec<f64> {
    let k_max = w.len();
    let mut b = w[k_max - 1].clone();
    let mut tmp = vec![0.0; nodes];
    for k in (0..k_max - 1).rev() {
        let mut next = w[k].clone();
        for t in 0..steps.saturating_sub(1) {
            graphs.at(t).shift_into(&b[(t + 1) * nodes..(t + 2) * nodes], &mut tmp);
            for (dst, v) in next[t * nodes..(t + 1) * nodes].iter_mut().zip(&tmp) {
                *dst += v;
            }
        }
        b = next;
    }
    b
}

fn apply_seq(filter: &FirFilter, graphs: GraphSeq<'_>, x: &SpaceTimeSignal) -> Result<SpaceTimeSignal> {
    let (features, nodes, steps) = x.shape();
    graphs.check(nodes, steps)?;
    let mut y = SpaceTimeSignal::zeros(features, nodes, x.grid());
    for f in 0..features {
        let z = diffusions(graphs, x.feature(f), nodes, steps, filter.n_taps());
        let out = y.feature_mut(f);
        for (h, zk) in filter.taps.iter().zip(&z) {
            for (o, v) in out.iter_mut().zip(zk) {
                *o += h * v;
            }
        }
    }
    Ok(y)
}

/// Applies the filter on a fixed graph, independently per feature:
/// `y_n = Σ_k h_k S^k x_{n−k}`.
pub fn apply_static(filter: &FirFilter, graph: &Graph, x: &SpaceTimeSignal) -> Result<SpaceTimeSignal> {
    apply_seq(filter, GraphSeq::Static(graph), x)
}

/// Applies the filter over one graph per step (recursive time-varying form).
pub fn apply_dynamic(filter: &FirFilter, graphs: &[Graph], x: &SpaceTimeSignal) -> Result<SpaceTimeSignal> {
    apply_seq(filter, GraphSeq::Dynamic(graphs), x)
}

/// Diffusion sequence on a fixed graph under the perturbed time shift
/// `(1 + ξ(u))·L_u`: entry `k` at step `n` is `S^k x` read `k·(1 + ξ(n·T_s))`
/// samples earlier, linearly interpolated with zero prehistory.
pub(crate) fn perturbed_diffusions(
    graph: &Graph,
    warp: &WarpFunction,
    ts: f64,
    x: &[f64],
    nodes: usize,
    steps: usize,
    k_max: usize,
) -> Vec<Vec<f64>> {
    let mut power = x.to_vec();
    let mut out = Vec::with_capacity(k_max);
    for k in 0..k_max {
        if k > 0 {
            let mut next = vec![0.0; nodes * steps];
            for t in 0..steps {
                graph.shift_into(&power[t * nodes..(t + 1) * nodes], &mut next[t * nodes..(t + 1) * nodes]);
            }
            power = next;
        }
        let mut delayed = vec![0.0; nodes * steps];
        for t in 0..steps {
            let pos = t as f64 - k as f64 * (1.0 + warp.xi(t as f64 * ts));
            let (lo, frac) = if (pos - pos.round()).abs() < 1e-12 {
                (pos.round(), 0.0)
            } else {
                (pos.floor(), pos - pos.floor())
            };
            let row = |i: f64| (i >= 0.0 && (i as usize) < steps).then(|| i as usize * nodes);
            let dst = &mut delayed[t * nodes..(t + 1) * nodes];
            if let Some(r) = row(lo) {
                for (d, v) in dst.iter_mut().zip(&power[r..r + nodes]) {
                    *d += (1.0 - frac) * v;
                }
            }
            if frac > 0.0 {
                if let Some(r) = row(lo + 1.0) {
                    for (d, v) in dst.iter_mut().zip(&power[r..r + nodes]) {
                        *d += frac * v;
                    }
                }
            }
        }
        out.push(delayed);
    }
    out
}

/// Fixed-graph filter whose time shift is perturbed to `(1 + ξ(u))·L_u`.
///
/// With `ξ ≡ 0` this is [`apply_static`].
pub fn apply_static_perturbed_shift(
    filter: &FirFilter,
    graph: &Graph,
    warp: &WarpFunction,
    x: &SpaceTimeSignal,
) -> Result<SpaceTimeSignal> {
    let (features, nodes, steps) = x.shape();
    GraphSeq::Static(graph).check(nodes, steps)?;
    let mut y = SpaceTimeSignal::zeros(features, nodes, x.grid());
    for f in 0..features {
        let z = perturbed_diffusions(graph, warp, x.grid().ts, x.feature(f), nodes, steps, filter.n_taps());
        let out = y.feature_mut(f);
        for (h, zk) in filter.taps.iter().zip(&z) {
            for (o, v) in out.iter_mut().zip(zk) {
                *o += h * v;
            }
        }
    }
    Ok(y)
}

/// Which closed form a spectral evaluation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseKind {
    /// `Σ h_k e^{−k T_s (λ + jω)}`.
    Exponential,
    /// `Σ h_k λ^k e^{−jω k T_s}`, matching what [`apply_static`] executes.
    GsoShift,
}

/// `h̃(λ, jω) = Σ_k h_k e^{−k T_s (λ + jω)}`.
pub fn frequency_response(filter: &FirFilter, lambda: f64, omega: f64) -> Complex64 {
    response(filter, ResponseKind::Exponential, lambda, omega)
}

/// `Σ_k h_k λ^k e^{−jω k T_s}`, the eigenvalue multiplier of the executed filter.
pub fn frequency_response_shift(filter: &FirFilter, lambda: f64, omega: f64) -> Complex64 {
    response(filter, ResponseKind::GsoShift, lambda, omega)
}

pub fn response(filter: &FirFilter, kind: ResponseKind, lambda: f64, omega: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, &h) in filter.taps.iter().enumerate() {
        acc += h * basis(filter.ts, kind, k, lambda, omega);
    }
    acc
}

fn basis(ts: f64, kind: ResponseKind, k: usize, lambda: f64, omega: f64) -> Complex64 {
    let kt = k as f64 * ts;
    match kind {
        ResponseKind::Exponential => (-kt * Complex64::new(lambda, omega)).exp(),
        ResponseKind::GsoShift => lambda.powi(k as i32) * Complex64::new(0.0, -omega * kt).exp(),
    }
}

/// Partial derivatives `(∂h̃/∂λ, ∂h̃/∂ω)` of the chosen response.
pub fn response_partials(filter: &FirFilter, kind: ResponseKind, lambda: f64, omega: f64) -> (Complex64, Complex64) {
    let mut d_lambda = Complex64::new(0.0, 0.0);
    let mut d_omega = Complex64::new(0.0, 0.0);
    for (k, &h) in filter.taps.iter().enumerate() {
        let kt = k as f64 * filter.ts;
        match kind {
            ResponseKind::Exponential => {
                let e = h * (-kt * Complex64::new(lambda, omega)).exp();
                d_lambda += -kt * e;
                d_omega += Complex64::new(0.0, -kt) * e;
            }
            ResponseKind::GsoShift => {
                if k == 0 {
                    continue;
                }
                let phase = Complex64::new(0.0, -omega * kt).exp();
                d_lambda += h * k as f64 * lambda.powi(k as i32 - 1) * phase;
                d_omega += h * lambda.powi(k as i32) * Complex64::new(0.0, -kt) * phase;
            }
        }
    }
    (d_lambda, d_omega)
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
    (0..n).map(move |i| if i + 1 == n { hi } else { lo + i as f64 * step })
}

/// Integral-Lipschitz constant of the exponential-form response over a
/// `grid_pts × grid_pts` grid on `[λ_min, λ_max] × [0, ω_max]`.
pub fn estimate_lipschitz(filter: &FirFilter, lambda_range: (f64, f64), omega_max: f64, grid_pts: usize) -> Result<f64> {
    estimate_lipschitz_with(filter, ResponseKind::Exponential, lambda_range, omega_max, grid_pts)
}

/// `max |λ + jω| · max(|∂h̃/∂λ|, |∂h̃/∂(jω)|)` over the tensor grid.
pub fn estimate_lipschitz_with(
    filter: &FirFilter,
    kind: ResponseKind,
    lambda_range: (f64, f64),
    omega_max: f64,
    grid_pts: usize,
) -> Result<f64> {
    if grid_pts < 16 {
        return Err(Error::InvalidArgument(format!("grid_pts must be at least 16, got {grid_pts}")));
    }
    let (lo, hi) = lambda_range;
    let mut best = 0.0f64;
    for lambda in linspace(lo, hi, grid_pts) {
        for omega in linspace(0.0, omega_max, grid_pts) {
            let (dl, dw) = response_partials(filter, kind, lambda, omega);
            // |∂/∂(jω)| = |∂/∂ω|
            let radius = Complex64::new(lambda, omega).norm();
            best = best.max(radius * dl.norm().max(dw.norm()));
        }
    }
    Ok(best)
}

/// Number of ω samples used by [`operator_norm`].
pub const OPERATOR_NORM_OMEGA_PTS: usize = 512;

/// `max_i max_ω |h̃(λ_i, jω)|` of the exponential-form response over the graph
/// spectrum and a 512-point grid on `[0, ω_max]`.
pub fn operator_norm(filter: &FirFilter, graph: &Graph, omega_max: f64) -> Result<f64> {
    operator_norm_with(filter, ResponseKind::Exponential, graph, omega_max)
}

pub fn operator_norm_with(filter: &FirFilter, kind: ResponseKind, graph: &Graph, omega_max: f64) -> Result<f64> {
    let spec = graph::sym_eigendecomposition(graph)?;
    let mut best = 0.0f64;
    for &lambda in spec.eigenvalues.iter() {
        for omega in linspace(0.0, omega_max, OPERATOR_NORM_OMEGA_PTS) {
            best = best.max(response(filter, kind, lambda, omega).norm());
        }
    }
    Ok(best)
}

/// Lipschitz constant bundled with the response it was measured on.
#[derive(Debug, Clone)]
pub struct FilterSpectrum {
    pub lipschitz_c: f64,
    pub kind: ResponseKind,
    filter: FirFilter,
}

impl FilterSpectrum {
    /// Measures `C` over the graph's realized spectrum and `ω ∈ [0, π/T_s]`.
    pub fn measure(filter: &FirFilter, kind: ResponseKind, graph: &Graph, grid_pts: usize) -> Result<Self> {
        let spec = graph::sym_eigendecomposition(graph)?;
        let omega_max = std::f64::consts::PI / filter.ts;
        let lipschitz_c =
            estimate_lipschitz_with(filter, kind, (spec.lambda_min(), spec.lambda_max()), omega_max, grid_pts)?;
        Ok(Self {
            lipschitz_c,
            kind,
            filter: filter.clone(),
        })
    }

    pub fn response(&self, lambda: f64, omega: f64) -> Complex64 {
        response(&self.filter, self.kind, lambda, omega)
    }
}
