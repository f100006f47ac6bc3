//! Operator distances modulo node relabeling and time translation, first-order
//! stability bounds, and the perturbation sweep used to check them.
//!
//! Operators are treated as black-box linear maps on `F×N×T` signals and
//! materialized column by column. Operator norms come from power iteration on
//! `MᵀM`; candidates that provably cannot beat the running minimum are pruned.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, Graph, Permutation};
use crate::signal::SpaceTimeSignal;
use crate::stfilter::{self, FirFilter, GraphSeq, ResponseKind};
use crate::stgnn::{predict, predict_perturbed_shift, StgnnParams};
use crate::timeline::{self, SamplingGrid};

pub const POWER_RESTARTS: usize = 20;
pub const POWER_ITERS: usize = 200;
pub const POWER_TOL: f64 = 1e-8;
/// Largest node count for exhaustive permutation search.
pub const BRUTE_FORCE_MAX_NODES: usize = 8;
const POWER_SEED: u64 = 0x5EED_0F_5AB1E;

type ApplyFn = Arc<dyn Fn(&SpaceTimeSignal) -> Result<SpaceTimeSignal> + Send + Sync>;

/// Linear map on space-time signals with fixed shapes.
#[derive(Clone)]
pub struct LinearStOperator {
    pub in_features: usize,
    pub out_features: usize,
    pub nodes: usize,
    pub grid: SamplingGrid,
    apply: ApplyFn,
}

impl std::fmt::Debug for LinearStOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearStOperator")
            .field("in_features", &self.in_features)
            .field("out_features", &self.out_features)
            .field("nodes", &self.nodes)
            .field("grid", &self.grid)
            .finish_non_exhaustive()
    }
}

impl LinearStOperator {
    pub fn new(
        in_features: usize,
        out_features: usize,
        nodes: usize,
        grid: SamplingGrid,
        apply: impl Fn(&SpaceTimeSignal) -> Result<SpaceTimeSignal> + Send + Sync + 'static,
    ) -> Self {
        Self {
            in_features,
            out_features,
            nodes,
            grid,
            apply: Arc::new(apply),
        }
    }

    /// Single-feature filter on a fixed graph.
    pub fn from_filter(filter: FirFilter, graph: Graph, grid: SamplingGrid) -> Self {
        let n = graph.n_nodes();
        Self::new(1, 1, n, grid, move |x| stfilter::apply_static(&filter, &graph, x))
    }

    /// Filter on `graph` observed through a warped clock: `x ↦ H(x ∘ warp)`.
    pub fn from_warped_filter(filter: FirFilter, graph: Graph, grid: SamplingGrid, warp: timeline::WarpFunction) -> Self {
        let n = graph.n_nodes();
        Self::new(1, 1, n, grid, move |x| stfilter::apply_static(&filter, &graph, &x.warped(&warp)?))
    }

    /// Filter on `graph` with the time shift perturbed by the warp's error
    /// function, leaving out the warp's pure translation.
    pub fn from_perturbed_shift(filter: FirFilter, graph: Graph, grid: SamplingGrid, warp: timeline::WarpFunction) -> Self {
        let n = graph.n_nodes();
        Self::new(1, 1, n, grid, move |x| stfilter::apply_static_perturbed_shift(&filter, &graph, &warp, x))
    }

    pub fn in_dim(&self) -> usize {
        self.in_features * self.nodes * self.grid.n_steps
    }

    pub fn out_dim(&self) -> usize {
        self.out_features * self.nodes * self.grid.n_steps
    }

    pub fn apply(&self, x: &SpaceTimeSignal) -> Result<SpaceTimeSignal> {
        if x.shape() != (self.in_features, self.nodes, self.grid.n_steps) {
            return Err(Error::Dimension(format!(
                "operator expects {:?}, got {:?}",
                (self.in_features, self.nodes, self.grid.n_steps),
                x.shape()
            )));
        }
        let y = (self.apply)(x)?;
        if y.shape() != (self.out_features, self.nodes, self.grid.n_steps) {
            return Err(Error::Dimension(format!("operator produced shape {:?}", y.shape())));
        }
        Ok(y)
    }

    /// Matrix of the operator in the flat `(f, t, n)` layout.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        let d = self.in_dim();
        let cols: Vec<Vec<f64>> = (0..d)
            .into_par_iter()
            .map(|j| {
                let mut e = vec![0.0; d];
                e[j] = 1.0;
                let x = SpaceTimeSignal::from_raw(self.in_features, self.nodes, self.grid, e)?;
                Ok(self.apply(&x)?.as_slice().to_vec())
            })
            .collect::<Result<_>>()?;
        Ok(DMatrix::from_fn(self.out_dim(), d, |i, j| cols[j][i]))
    }

    /// Largest relative violation of `A(ax + by) = aAx + bAy` over random probes.
    pub fn linearity_defect(&self, probes: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for _ in 0..probes {
            let mut rand_sig =
                || SpaceTimeSignal::from_fn(self.in_features, self.nodes, self.grid, |_, _, _| rng.random_range(-1.0..1.0));
            let x = rand_sig();
            let y = rand_sig();
            let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let mut mix = x.clone();
            mix.scale(a);
            mix.axpy(b, &y);
            let lhs = self.apply(&mix)?;
            let mut rhs = self.apply(&x)?;
            rhs.scale(a);
            rhs.axpy(b, &self.apply(&y)?);
            let scale = rhs.frobenius_norm().max(1e-300);
            worst = worst.max(lhs.max_abs_diff(&rhs) / scale);
        }
        Ok(worst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermutationStrategy {
    BruteForce,
    IdentityOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointDistance {
    pub distance: f64,
    pub permutation: Permutation,
    /// Translation in seconds.
    pub shift_s: f64,
}

/// `{−k·ts, …, +k·ts}`.
pub fn translation_grid(ts: f64, k: usize) -> Vec<f64> {
    let k = k as isize;
    (-k..=k).map(|i| i as f64 * ts).collect()
}

/// Largest singular value of `m` by power iteration on `mᵀm`.
///
/// Every iterate gives a lower bound; evaluation stops as soon as one reaches
/// `cutoff`, in which case that lower bound is returned.
pub fn power_iteration_norm(m: &DMatrix<f64>, cutoff: f64, seed: u64) -> f64 {
    let d = m.ncols();
    if d == 0 || m.nrows() == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for _ in 0..POWER_RESTARTS {
        let mut v = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let norm = v.norm();
        if norm == 0.0 {
            continue;
        }
        v /= norm;
        let mut sigma = 0.0f64;
        for _ in 0..POWER_ITERS {
            let mv = m * &v;
            let next = mv.norm();
            best = best.max(next);
            if best >= cutoff {
                return best;
            }
            let w = m.tr_mul(&mv);
            let wn = w.norm();
            if wn == 0.0 {
                break;
            }
            v = w / wn;
            let done = (next - sigma).abs() <= POWER_TOL * next;
            sigma = next;
            if done {
                break;
            }
        }
    }
    best
}

/// Operator norm of a materialized operator.
pub fn operator_norm(op: &LinearStOperator) -> Result<f64> {
    Ok(power_iteration_norm(&op.to_dense()?, f64::INFINITY, POWER_SEED))
}

struct Dense {
    a: DMatrix<f64>,
    a_hat: DMatrix<f64>,
    in_features: usize,
    out_features: usize,
    nodes: usize,
    steps: usize,
}

impl Dense {
    fn new(a: &LinearStOperator, a_hat: &LinearStOperator) -> Result<Self> {
        if (a.in_features, a.out_features, a.nodes, a.grid.n_steps)
            != (a_hat.in_features, a_hat.out_features, a_hat.nodes, a_hat.grid.n_steps)
        {
            return Err(Error::Dimension("operators act on different signal shapes".into()));
        }
        Ok(Self {
            a: a.to_dense()?,
            a_hat: a_hat.to_dense()?,
            in_features: a.in_features,
            out_features: a.out_features,
            nodes: a.nodes,
            steps: a.grid.n_steps,
        })
    }

    /// `Shift_d ∘ A − Pᵀ Â P` as a dense matrix.
    fn candidate(&self, perm: &Permutation, delay: isize) -> DMatrix<f64> {
        let (n, t_len) = (self.nodes, self.steps);
        let inv = perm.inverse();
        let inv = inv.as_slice();
        // (Pᵀ Â P)[r][c] = Â[ρ(r)][ρ(c)] with ρ relabeling the node index by P⁻¹
        let relabel = |features: usize| -> Vec<usize> {
            let mut idx = Vec::with_capacity(features * t_len * n);
            for f in 0..features {
                for t in 0..t_len {
                    for i in 0..n {
                        idx.push((f * t_len + t) * n + inv[i]);
                    }
                }
            }
            idx
        };
        let rows = relabel(self.out_features);
        let cols = relabel(self.in_features);
        let mut m = DMatrix::from_fn(rows.len(), cols.len(), |r, c| -self.a_hat[(rows[r], cols[c])]);
        for f in 0..self.out_features {
            for t in 0..t_len {
                let src = t as isize - delay;
                if !(0..t_len as isize).contains(&src) {
                    continue;
                }
                for i in 0..n {
                    let r = (f * t_len + t) * n + i;
                    let s = (f * t_len + src as usize) * n + i;
                    for c in 0..cols.len() {
                        m[(r, c)] += self.a[(s, c)];
                    }
                }
            }
        }
        m
    }
}

fn max_column_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.norm()).fold(0.0, f64::max)
}

fn candidate_perms(nodes: usize, strategy: PermutationStrategy) -> Result<Vec<Permutation>> {
    match strategy {
        PermutationStrategy::IdentityOnly => Ok(vec![Permutation::identity(nodes)]),
        PermutationStrategy::BruteForce if nodes > BRUTE_FORCE_MAX_NODES => Err(Error::InvalidArgument(format!(
            "brute-force permutation search is limited to {BRUTE_FORCE_MAX_NODES} nodes (got {nodes}); use identity_only"
        ))),
        PermutationStrategy::BruteForce => Ok(Permutation::all(nodes)),
    }
}

fn delays(s_grid: &[f64], ts: f64) -> Result<Vec<(f64, isize)>> {
    if s_grid.is_empty() {
        return Err(Error::InvalidArgument("empty translation grid".into()));
    }
    s_grid
        .iter()
        .map(|&s| {
            if !s.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite translation {s}")));
            }
            Ok((s, (s / ts).round() as isize))
        })
        .collect()
}

fn minimize(dense: &Dense, perms: &[Permutation], shifts: &[(f64, isize)]) -> JointDistance {
    let mut cands: Vec<(f64, usize, usize)> = Vec::with_capacity(perms.len() * shifts.len());
    for (pi, p) in perms.iter().enumerate() {
        for (si, &(_, d)) in shifts.iter().enumerate() {
            cands.push((max_column_norm(&dense.candidate(p, d)), pi, si));
        }
    }
    // most promising first so the incumbent tightens early
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut best = (f64::INFINITY, 0usize, 0usize);
    for &(lower, pi, si) in &cands {
        if lower >= best.0 {
            break;
        }
        let m = dense.candidate(&perms[pi], shifts[si].1);
        let norm = power_iteration_norm(&m, best.0, POWER_SEED);
        if norm < best.0 {
            best = (norm, pi, si);
        }
    }
    JointDistance {
        distance: best.0,
        permutation: perms[best.1].clone(),
        shift_s: shifts[best.2].0,
    }
}

/// `min_P ‖A − Pᵀ Â P‖`.
pub fn distance_mod_permutation(
    a: &LinearStOperator,
    a_hat: &LinearStOperator,
    strategy: PermutationStrategy,
) -> Result<(f64, Permutation)> {
    let perms = candidate_perms(a.nodes, strategy)?;
    let dense = Dense::new(a, a_hat)?;
    let r = minimize(&dense, &perms, &[(0.0, 0)]);
    Ok((r.distance, r.permutation))
}

/// `min_s ‖Shift_s ∘ B − B̂‖`, shifts rounded to whole samples.
pub fn distance_mod_translation(b: &LinearStOperator, b_hat: &LinearStOperator, s_grid: &[f64]) -> Result<(f64, f64)> {
    let shifts = delays(s_grid, b.grid.ts)?;
    let dense = Dense::new(b, b_hat)?;
    let r = minimize(&dense, &[Permutation::identity(b.nodes)], &shifts);
    Ok((r.distance, r.shift_s))
}

/// `min_P min_s ‖Shift_s ∘ A − Pᵀ Â P‖`.
pub fn distance_mod_joint(
    op: &LinearStOperator,
    op_hat: &LinearStOperator,
    strategy: PermutationStrategy,
    s_grid: &[f64],
) -> Result<JointDistance> {
    let perms = candidate_perms(op.nodes, strategy)?;
    let shifts = delays(s_grid, op.grid.ts)?;
    let dense = Dense::new(op, op_hat)?;
    Ok(minimize(&dense, &perms, &shifts))
}

/// Quantities entering the first-order bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityBoundInputs {
    pub lipschitz_c: f64,
    pub eps_s: f64,
    pub delta: f64,
    pub n_nodes: usize,
    pub kappa: f64,
    pub eps_u: f64,
    pub layers: usize,
    /// `(F_0, F, F_L)`.
    pub features: (usize, usize, usize),
}

impl StabilityBoundInputs {
    pub fn single_filter(lipschitz_c: f64, eps_s: f64, delta: f64, n_nodes: usize, kappa: f64, eps_u: f64) -> Self {
        Self {
            lipschitz_c,
            eps_s,
            delta,
            n_nodes,
            kappa,
            eps_u,
            layers: 1,
            features: (1, 1, 1),
        }
    }
}

/// `2Cε_s(1 + δ√N) + Cκε_u`.
pub fn bound_filter(b: &StabilityBoundInputs) -> f64 {
    let c = b.lipschitz_c;
    2.0 * c * b.eps_s * (1.0 + b.delta * (b.n_nodes as f64).sqrt()) + c * b.kappa * b.eps_u
}

/// `L` times the filter bound.
pub fn bound_gnn(b: &StabilityBoundInputs) -> f64 {
    b.layers as f64 * bound_filter(b)
}

/// `√F_L (F^{L−1} F_0 + Σ_{l=1}^{L−1} F^l)` times the filter bound.
pub fn bound_mimo(b: &StabilityBoundInputs) -> f64 {
    let (f0, f, fl) = (b.features.0 as f64, b.features.1 as f64, b.features.2 as f64);
    let l = b.layers.max(1) as i32;
    let inner: f64 = f.powi(l - 1) * f0 + (1..l).map(|k| f.powi(k)).sum::<f64>();
    fl.sqrt() * inner * bound_filter(b)
}

/// `‖y − ŷ‖_F / ‖y‖_F`.
pub fn relative_rmse(y: &SpaceTimeSignal, y_hat: &SpaceTimeSignal) -> Result<f64> {
    if !y.same_shape(y_hat) {
        return Err(Error::Dimension(format!("{:?} vs {:?}", y.shape(), y_hat.shape())));
    }
    let reference = y.frobenius_norm();
    if reference == 0.0 {
        return Err(Error::InvalidArgument("reference output has zero norm".into()));
    }
    let mut diff = y.clone();
    diff.axpy(-1.0, y_hat);
    Ok(diff.frobenius_norm() / reference)
}

/// Lipschitz grid resolution used by the sweep.
pub const SWEEP_LIPSCHITZ_GRID: usize = 64;

/// Largest integral-Lipschitz constant over every filter of every layer,
/// measured on the graph spectrum and `ω ∈ [0, π/T_s]`.
pub fn network_lipschitz(params: &StgnnParams, graph: &Graph, ts: f64) -> Result<f64> {
    let spec = graph::sym_eigendecomposition(graph)?;
    let range = (spec.lambda_min(), spec.lambda_max());
    let omega_max = std::f64::consts::PI / ts;
    let mut c = 0.0f64;
    for layer in &params.layers {
        for f in 0..layer.f_out {
            for g in 0..layer.f_in {
                let taps = (0..layer.k).map(|k| layer.tap(f, g, k)).collect();
                let filter = FirFilter::new(taps, ts)?;
                c = c.max(stfilter::estimate_lipschitz_with(
                    &filter,
                    ResponseKind::GsoShift,
                    range,
                    omega_max,
                    SWEEP_LIPSCHITZ_GRID,
                )?);
            }
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub mean_rel_rmse: f64,
    pub std_rel_rmse: f64,
    pub bound_first_order: f64,
    pub delta_measured: f64,
    pub c_used: f64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("eps,mean_rel_rmse,std_rel_rmse,bound_first_order,delta_measured,C_used\n");
    for r in rows {
        s.push_str(&format!(
            "{:?},{:?},{:?},{:?},{:?},{:?}\n",
            r.eps, r.mean_rel_rmse, r.std_rel_rmse, r.bound_first_order, r.delta_measured, r.c_used
        ));
    }
    s
}

/// Perturbs graph and time shift with the same size `ε` and records how far
/// the network output moves on unchanged inputs.
///
/// Signal `i` gets its own diagonal relative error direction (seeded from
/// `seed` and `i`), scaled to size `ε` in every row, together with the time
/// shift perturbed by the exponential-cosine warp of size `ε`. Rows report the
/// mean relative RMSE over signals with its population standard deviation, the
/// largest measured δ, and the first-order network bound at that δ.
pub fn stability_sweep(
    params: &StgnnParams,
    graph: &Graph,
    signals: &[SpaceTimeSignal],
    eps_list: &[f64],
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if signals.is_empty() {
        return Err(Error::InvalidArgument("stability sweep needs at least one signal".into()));
    }
    let ts = signals[0].grid().ts;
    let c = network_lipschitz(params, graph, ts)?;
    let seq = GraphSeq::Static(graph);
    let nominal: Vec<SpaceTimeSignal> = signals.iter().map(|x| predict(params, seq, x)).collect::<Result<_>>()?;
    let arch = params.architecture();
    let hidden = arch.features[1..arch.features.len() - 1].iter().copied().max().unwrap_or(1);
    let n = graph.n_nodes();
    eps_list
        .par_iter()
        .map(|&eps| {
            let warp = timeline::warp_exponential_cosine(eps)?;
            let mut rel = Vec::with_capacity(signals.len());
            let mut delta = 0.0f64;
            for (i, (x, y)) in signals.iter().zip(&nominal).enumerate() {
                let pert = graph::sample_diagonal_error(n, eps, seed ^ (i as u64).wrapping_mul(0x9E37_79B9));
                let s_hat = graph::apply_relative_perturbation(graph, &pert)?;
                let y_hat = predict_perturbed_shift(params, &s_hat, &warp, x)?;
                rel.push(relative_rmse(y, &y_hat)?);
                if eps > 0.0 {
                    delta = delta.max(graph::eigenvector_misalignment(graph, &pert)?);
                }
            }
            let mean = rel.iter().sum::<f64>() / rel.len() as f64;
            let var = rel.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / rel.len() as f64;
            let inputs = StabilityBoundInputs {
                lipschitz_c: c,
                eps_s: eps,
                delta,
                n_nodes: n,
                kappa: warp.kappa,
                eps_u: eps,
                layers: params.n_layers(),
                features: (arch.features[0], hidden, *arch.features.last().unwrap()),
            };
            Ok(SweepRow {
                eps,
                mean_rel_rmse: mean,
                std_rel_rmse: var.sqrt(),
                bound_first_order: bound_gnn(&inputs),
                delta_measured: delta,
                c_used: c,
            })
        })
        .collect()
}

/// Least-squares line through `(x, y)`: `(slope, intercept, R²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument("linear fit needs two or more paired points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("x values are all equal".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok((slope, my - slope * mx, r2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stgnn::{Activation, Architecture};
    use proptest::prelude::{prop_assert, proptest};

    fn weighted_graph(n: usize, rng: &mut impl Rng) -> Graph {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let w = rng.random_range(0.1..1.0);
                m[(i, j)] = w;
                m[(j, i)] = w;
            }
        }
        let norm = crate::linalg::sym_spectral_norm(&m).unwrap();
        Graph::from_gso(m / norm).unwrap()
    }

    fn filter(rng: &mut impl Rng, k: usize) -> FirFilter {
        FirFilter::new((0..k).map(|_| rng.random_range(-1.0..1.0)).collect(), 1.0).unwrap()
    }

    fn grid(t: usize) -> SamplingGrid {
        SamplingGrid::new(1.0, t).unwrap()
    }

    fn svd_norm(m: &DMatrix<f64>) -> f64 {
        crate::linalg::spectral_norm(m)
    }

    #[test]
    fn identical_operators_are_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = weighted_graph(4, &mut rng);
        let op = LinearStOperator::from_filter(filter(&mut rng, 3), g, grid(5));
        let (d, p) = distance_mod_permutation(&op, &op, PermutationStrategy::BruteForce).unwrap();
        assert!(d <= 1e-12);
        assert!(p.is_identity());
        let (d, s) = distance_mod_translation(&op, &op, &translation_grid(1.0, 4)).unwrap();
        assert!(d <= 1e-12);
        assert_eq!(s, 0.0);
        let j = distance_mod_joint(&op, &op, PermutationStrategy::BruteForce, &translation_grid(1.0, 4)).unwrap();
        assert!(j.distance <= 1e-12 && j.permutation.is_identity() && j.shift_s == 0.0);
    }

    #[test]
    fn permuted_copy_recovers_relabeling() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..3 {
            let g = weighted_graph(5, &mut rng);
            let h = filter(&mut rng, 3);
            let perm = Permutation::random(5, &mut rng);
            let a = LinearStOperator::from_filter(h.clone(), g.clone(), grid(4));
            let a_hat = LinearStOperator::from_filter(h, g.relabel(&perm), grid(4));
            let (d, p) = distance_mod_permutation(&a, &a_hat, PermutationStrategy::BruteForce).unwrap();
            assert!(d <= 1e-8, "{d}");
            assert_eq!(p, perm.inverse());
        }
    }

    #[test]
    fn delayed_copy_found_at_its_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = weighted_graph(3, &mut rng);
        let h = filter(&mut rng, 2);
        let ts = 0.5;
        let gr = SamplingGrid::new(ts, 8).unwrap();
        let b = LinearStOperator::from_filter(FirFilter::new(h.taps.clone(), ts).unwrap(), g.clone(), gr);
        let inner = b.clone();
        let b_hat = LinearStOperator::new(1, 1, 3, gr, move |x| Ok(inner.apply(x)?.shifted(2)));
        let (d, s) = distance_mod_translation(&b, &b_hat, &translation_grid(ts, 4)).unwrap();
        assert!(d <= 1e-8);
        assert_eq!(s, 2.0 * ts);
    }

    #[test]
    fn permuted_and_delayed_copy() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = weighted_graph(4, &mut rng);
        let perm = Permutation::random(4, &mut rng);
        let h = filter(&mut rng, 3);
        let op = LinearStOperator::from_filter(h.clone(), g.clone(), grid(6));
        let relabeled = LinearStOperator::from_filter(h, g.relabel(&perm), grid(6));
        let op_hat = LinearStOperator::new(1, 1, 4, grid(6), move |x| Ok(relabeled.apply(x)?.shifted(1)));
        let j = distance_mod_joint(&op, &op_hat, PermutationStrategy::BruteForce, &translation_grid(1.0, 4)).unwrap();
        assert!(j.distance <= 1e-8);
        assert_eq!(j.permutation, perm.inverse());
        assert_eq!(j.shift_s, 1.0);
    }

    #[test]
    fn permutation_distance_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = weighted_graph(4, &mut rng);
        let g_hat = weighted_graph(4, &mut rng);
        let a = LinearStOperator::from_filter(filter(&mut rng, 3), g, grid(4));
        let a_hat = LinearStOperator::from_filter(filter(&mut rng, 3), g_hat, grid(4));
        let (d, _) = distance_mod_permutation(&a, &a_hat, PermutationStrategy::BruteForce).unwrap();
        // materialize every Pᵀ Â P through the signal-level relabeling
        let dim = a.in_dim();
        let mut oracle = f64::INFINITY;
        for p in Permutation::all(4) {
            let m = DMatrix::from_fn(dim, dim, |_, _| 0.0);
            let mut m = m;
            for j in 0..dim {
                let mut e = vec![0.0; dim];
                e[j] = 1.0;
                let x = SpaceTimeSignal::from_raw(1, 4, grid(4), e).unwrap();
                let lhs = a.apply(&x).unwrap();
                let rhs = a_hat.apply(&x.permute(&p)).unwrap().permute_transpose(&p);
                for i in 0..dim {
                    m[(i, j)] = lhs.as_slice()[i] - rhs.as_slice()[i];
                }
            }
            oracle = oracle.min(svd_norm(&m));
        }
        assert!((d - oracle).abs() <= 1e-6 * oracle.max(1.0), "{d} vs {oracle}");
    }

    #[test]
    fn brute_force_limit() {
        let g = Graph::empty(9);
        let op = LinearStOperator::from_filter(FirFilter::new(vec![1.0], 1.0).unwrap(), g, grid(2));
        assert!(distance_mod_permutation(&op, &op, PermutationStrategy::BruteForce).is_err());
        let (d, _) = distance_mod_permutation(&op, &op, PermutationStrategy::IdentityOnly).unwrap();
        assert_eq!(d, 0.0);
        assert!(distance_mod_translation(&op, &op, &[]).is_err());
    }

    #[test]
    fn joint_never_exceeds_either_single_minimization() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = weighted_graph(4, &mut rng);
        let h = filter(&mut rng, 3);
        let pert = graph::sample_diagonal_error(4, 0.05, 9);
        let g_hat = graph::apply_relative_perturbation(&g, &pert).unwrap();
        let warp = timeline::warp_exponential_cosine(0.05).unwrap();
        let a = LinearStOperator::from_filter(h.clone(), g, grid(6));
        let a_hat = LinearStOperator::from_warped_filter(h, g_hat, grid(6), warp);
        let s_grid = translation_grid(1.0, 4);
        let j = distance_mod_joint(&a, &a_hat, PermutationStrategy::BruteForce, &s_grid).unwrap();
        let (dp, _) = distance_mod_permutation(&a, &a_hat, PermutationStrategy::BruteForce).unwrap();
        let (dt, _) = distance_mod_translation(&a, &a_hat, &s_grid).unwrap();
        assert!(j.distance <= dp + 1e-8 && j.distance <= dt + 1e-8);
    }

    #[test]
    fn refined_translation_grid_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = weighted_graph(3, &mut rng);
        let h = filter(&mut rng, 3);
        let warp = timeline::warp_exponential_cosine(0.05).unwrap();
        let b = LinearStOperator::from_filter(h.clone(), g.clone(), grid(8));
        let b_hat = LinearStOperator::from_warped_filter(h, g, grid(8), warp);
        let (coarse, _) = distance_mod_translation(&b, &b_hat, &translation_grid(1.0, 4)).unwrap();
        let fine: Vec<f64> = (-40..=40).map(|i| i as f64 * 0.1).collect();
        let (refined, _) = distance_mod_translation(&b, &b_hat, &fine).unwrap();
        assert!((coarse - refined).abs() <= 0.05 * refined.max(1e-12));
    }

    #[test]
    fn pseudometric_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ops: Vec<LinearStOperator> = (0..3)
            .map(|_| LinearStOperator::from_filter(filter(&mut rng, 2), weighted_graph(4, &mut rng), grid(3)))
            .collect();
        let d = |i: usize, j: usize| distance_mod_permutation(&ops[i], &ops[j], PermutationStrategy::BruteForce).unwrap().0;
        assert!((d(0, 1) - d(1, 0)).abs() <= 1e-8);
        assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-6);
    }

    #[test]
    fn power_iteration_matches_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let m = DMatrix::from_fn(7, 5, |_, _| rng.random_range(-1.0..1.0));
            let p = power_iteration_norm(&m, f64::INFINITY, 1);
            assert!((p - svd_norm(&m)).abs() <= 1e-6 * svd_norm(&m));
        }
    }

    #[test]
    fn operators_are_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let warp = timeline::warp_exponential_cosine(0.1).unwrap();
        let op = LinearStOperator::from_warped_filter(filter(&mut rng, 3), weighted_graph(4, &mut rng), grid(6), warp);
        assert!(op.linearity_defect(5, 1).unwrap() <= 1e-10);
    }

    #[test]
    fn bound_examples() {
        let b = StabilityBoundInputs::single_filter(1.0, 0.1, 0.5, 4, 0.75f64.sqrt(), 0.1);
        let expect = 2.0 * 0.1 * (1.0 + 0.5 * 2.0) + 0.75f64.sqrt() * 0.1;
        assert!((bound_filter(&b) - expect).abs() < 1e-15);
        assert!((bound_filter(&b) - 0.4866).abs() < 1e-4);
        let zero = StabilityBoundInputs { eps_s: 0.0, eps_u: 0.0, ..b };
        assert_eq!(bound_filter(&zero), 0.0);
        assert_eq!(bound_gnn(&zero), 0.0);
        assert_eq!(bound_mimo(&zero), 0.0);
        let dil = StabilityBoundInputs { delta: 0.0, eps_u: 0.0, ..b };
        assert!((bound_filter(&dil) - 2.0 * 0.1).abs() < 1e-15);
        assert_eq!(bound_gnn(&b), bound_filter(&b));
        let three = StabilityBoundInputs { layers: 3, ..b };
        assert!((bound_gnn(&three) - 3.0 * bound_filter(&b)).abs() < 1e-15);
        assert!((bound_mimo(&three) - bound_gnn(&three)).abs() < 1e-15);
        let wide_out = StabilityBoundInputs { features: (1, 1, 4), ..three };
        assert!((bound_mimo(&wide_out) - 2.0 * bound_mimo(&three)).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn bounds_are_monotone(
            c in 0.0..5.0f64, es in 0.0..0.2f64, d in 0.0..8.0f64, n in 1usize..20,
            k in 0.0..2.0f64, eu in 0.0..0.2f64, l in 1usize..4, f0 in 1usize..5, f in 1usize..5, fl in 1usize..5,
            which in 0usize..10, bump in 0.0..1.0f64,
        ) {
            let b = StabilityBoundInputs {
                lipschitz_c: c, eps_s: es, delta: d, n_nodes: n, kappa: k, eps_u: eu, layers: l, features: (f0, f, fl),
            };
            let mut up = b;
            match which {
                0 => up.lipschitz_c += bump,
                1 => up.eps_s += bump,
                2 => up.delta += bump,
                3 => up.n_nodes += 1,
                4 => up.kappa += bump,
                5 => up.eps_u += bump,
                6 => up.layers += 1,
                7 => up.features.0 += 1,
                8 => up.features.1 += 1,
                _ => up.features.2 += 1,
            }
            prop_assert!(bound_filter(&up) >= bound_filter(&b));
            prop_assert!(bound_gnn(&up) >= bound_gnn(&b));
            prop_assert!(bound_mimo(&up) >= bound_mimo(&b));
        }
    }

    #[test]
    fn relative_rmse_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let y = SpaceTimeSignal::from_fn(2, 3, grid(4), |_, _, _| rng.random_range(-1.0..1.0));
        assert_eq!(relative_rmse(&y, &y).unwrap(), 0.0);
        let mut y2 = y.clone();
        y2.scale(2.0);
        assert!((relative_rmse(&y, &y2).unwrap() - 1.0).abs() < 1e-15);
        let z = SpaceTimeSignal::from_fn(2, 3, grid(4), |_, _, _| rng.random_range(-1.0..1.0));
        let num: f64 = y.as_slice().iter().zip(z.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let den: f64 = y.as_slice().iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!((relative_rmse(&y, &z).unwrap() - num / den).abs() < 1e-14);
        let zero = SpaceTimeSignal::zeros(2, 3, grid(4));
        assert!(relative_rmse(&zero, &z).is_err());
    }

    #[test]
    fn sweep_zero_row_and_growth() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let g = weighted_graph(5, &mut rng);
        let arch = Architecture::new(vec![2, 4, 1], vec![3, 1], Activation::Identity).unwrap();
        let params = StgnnParams::init_uniform(&arch, 3);
        let gr = SamplingGrid::new(0.1, 30).unwrap();
        let signals: Vec<SpaceTimeSignal> = (0..4)
            .map(|_| {
                let phase: f64 = rng.random_range(0.0..6.0);
                SpaceTimeSignal::from_fn(2, 5, gr, |f, n, t| ((t as f64) * 0.3 + phase + (f + n) as f64).sin())
            })
            .collect();
        let eps: Vec<f64> = (0..=8).map(|i| i as f64 * 0.025).collect();
        let rows = stability_sweep(&params, &g, &signals, &eps, 1).unwrap();
        assert_eq!(rows[0].mean_rel_rmse, 0.0);
        assert_eq!(rows[0].bound_first_order, 0.0);
        let (slope, _, _) =
            linear_fit(&eps, &rows.iter().map(|r| r.mean_rel_rmse).collect::<Vec<_>>()).unwrap();
        assert!(slope > 0.0);
        let csv = sweep_csv(&rows);
        assert!(csv.starts_with("eps,mean_rel_rmse,std_rel_rmse,bound_first_order,delta_measured,C_used\n"));
        assert_eq!(csv.lines().count(), eps.len() + 1);
        assert_eq!(rows, stability_sweep(&params, &g, &signals, &eps, 1).unwrap());
    }

    #[test]
    fn linear_fit_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let (s, b, r2) = linear_fit(&x, &y).unwrap();
        assert!((s - 2.0).abs() < 1e-14 && (b - 1.0).abs() < 1e-14 && (r2 - 1.0).abs() < 1e-14);
    }
}
