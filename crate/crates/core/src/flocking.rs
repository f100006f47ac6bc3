//! Flocking and velocity consensus.
//!
//! Agents track a random-walk reference velocity that each of them only sees
//! through a private constant bias, while a short-range potential keeps them
//! apart. The optimal centralized controller supplies imitation targets; a
//! delayed k-hop controller is the decentralized baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, Graph};
use crate::signal::SpaceTimeSignal;
use crate::stfilter::GraphSeq;
use crate::stgnn::{predict, Example, StgnnParams};
use crate::timeline::SamplingGrid;

pub type Vec2 = [f64; 2];

/// Input features of the static experiment: `v`, `r̃`.
pub const FEATURES_STATIC: usize = 4;
/// Input features of the moving-swarm experiment: `v`, `r̃`, `q`.
pub const FEATURES_DYNAMIC: usize = 6;
/// Placement attempts per agent before an instance is declared infeasible.
const PLACEMENT_ATTEMPTS: usize = 10_000;

fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(a: Vec2) -> f64 {
    a[0].hypot(a[1])
}

fn norm2(a: Vec2) -> f64 {
    a[0] * a[0] + a[1] * a[1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlockingConfig {
    pub n_agents: usize,
    pub density_rho0: f64,
    pub comm_range_r: f64,
    pub mu_max_accel: f64,
    pub t_steps: usize,
    pub ts_seconds: f64,
    /// `E‖r_0‖`.
    pub ref_init_norm: f64,
    /// `E‖Δr_n‖`.
    pub ref_increment_norm: f64,
    /// `E‖Δr̃_i‖`.
    pub obs_noise_norm: f64,
    /// `E‖Δv‖`.
    pub init_velocity_noise_norm: f64,
    pub chi_potential: f64,
    pub k_hops: usize,
    /// Minimum spacing of random initial placements.
    pub min_spacing: f64,
    pub seed: u64,
}

impl Default for FlockingConfig {
    fn default() -> Self {
        Self {
            n_agents: 50,
            density_rho0: 0.5,
            comm_range_r: 2.0,
            mu_max_accel: 3.0,
            t_steps: 100,
            ts_seconds: 0.1,
            ref_init_norm: 1.0,
            ref_increment_norm: 1.0,
            obs_noise_norm: 1.0,
            init_velocity_noise_norm: 1.0,
            chi_potential: 1.0,
            k_hops: 4,
            min_spacing: 0.1,
            seed: 0,
        }
    }
}

impl FlockingConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("density_rho0", self.density_rho0),
            ("comm_range_r", self.comm_range_r),
            ("mu_max_accel", self.mu_max_accel),
            ("ts_seconds", self.ts_seconds),
            ("chi_potential", self.chi_potential),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        let nonneg = [
            ("ref_init_norm", self.ref_init_norm),
            ("ref_increment_norm", self.ref_increment_norm),
            ("obs_noise_norm", self.obs_noise_norm),
            ("init_velocity_noise_norm", self.init_velocity_noise_norm),
            ("min_spacing", self.min_spacing),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if self.n_agents == 0 || self.t_steps < 2 {
            return Err(Error::InvalidArgument("need at least one agent and two time steps".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<SamplingGrid> {
        SamplingGrid::new(self.ts_seconds, self.t_steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlockingExperiment {
    /// Frozen mesh grid, 4 features.
    StaticGrid,
    /// Moving swarm with per-step range graphs, 6 features.
    Dynamic,
}

impl FlockingExperiment {
    pub fn n_features(self) -> usize {
        match self {
            FlockingExperiment::StaticGrid => FEATURES_STATIC,
            FlockingExperiment::Dynamic => FEATURES_DYNAMIC,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    pub positions: Vec<Vec2>,
    pub velocities: Vec<Vec2>,
    pub step: usize,
}

impl SwarmState {
    pub fn n_agents(&self) -> usize {
        self.positions.len()
    }
}

/// Normal 2-vector scaled so that its expected norm is `target_norm`.
pub fn gaussian_vec2(rng: &mut impl Rng, target_norm: f64) -> Vec2 {
    let scale = target_norm / std::f64::consts::FRAC_PI_2.sqrt();
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    [x * scale, y * scale]
}

fn reference_from_rng(config: &FlockingConfig, rng: &mut impl Rng) -> Vec<Vec2> {
    let mut r = Vec::with_capacity(config.t_steps);
    let mut cur = gaussian_vec2(rng, config.ref_init_norm);
    r.push(cur);
    for _ in 1..config.t_steps {
        let d = gaussian_vec2(rng, config.ref_increment_norm);
        cur = [cur[0] + config.ts_seconds * d[0], cur[1] + config.ts_seconds * d[1]];
        r.push(cur);
    }
    r
}

/// Reference velocity `r_{n+1} = r_n + T_s Δr_n` over `t_steps` samples.
pub fn generate_reference(config: &FlockingConfig, seed: u64) -> Vec<Vec2> {
    reference_from_rng(config, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Per-agent observation bias, constant over a trajectory.
pub fn observation_bias(n_agents: usize, noise_norm: f64, seed: u64) -> Vec<Vec2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_agents).map(|_| gaussian_vec2(&mut rng, noise_norm)).collect()
}

/// `r̃_i = r_n + Δr̃_i`.
pub fn observe_reference(r_n: Vec2, bias: &[Vec2]) -> Vec<Vec2> {
    bias.iter().map(|b| [r_n[0] + b[0], r_n[1] + b[1]]).collect()
}

/// Scales `u` down to magnitude `mu` when it is larger.
pub fn clip_accel(u: Vec2, mu: f64) -> Vec2 {
    let n = norm(u);
    if n > mu {
        [u[0] * mu / n, u[1] * mu / n]
    } else {
        u
    }
}

/// One kinematic step with accelerations clipped to `mu`.
pub fn step_mobility(state: &SwarmState, accel: &[Vec2], ts: f64, mu: f64) -> Result<SwarmState> {
    if accel.len() != state.n_agents() {
        return Err(Error::Dimension(format!(
            "{} accelerations for {} agents",
            accel.len(),
            state.n_agents()
        )));
    }
    let mut next = state.clone();
    for (i, &a) in accel.iter().enumerate() {
        let u = clip_accel(a, mu);
        let (p, v) = (state.positions[i], state.velocities[i]);
        next.velocities[i] = [v[0] + ts * u[0], v[1] + ts * u[1]];
        next.positions[i] = [
            p[0] + ts * v[0] + 0.5 * ts * ts * u[0],
            p[1] + ts * v[1] + 0.5 * ts * ts * u[1],
        ];
    }
    next.step += 1;
    Ok(next)
}

/// Collision potential `1/‖p‖² − log ‖p‖²`, constant beyond `chi`.
pub fn potential(p_ij: Vec2, chi: f64) -> f64 {
    let d2 = if norm(p_ij) <= chi { norm2(p_ij) } else { chi * chi };
    1.0 / d2 - d2.ln()
}

/// Gradient of the potential with respect to `p_i`.
pub fn potential_gradient(p_i: Vec2, p_j: Vec2, chi: f64) -> Result<Vec2> {
    let d = sub(p_i, p_j);
    let d2 = norm2(d);
    if d2 == 0.0 {
        return Err(Error::InvalidArgument("potential is singular at coincident positions".into()));
    }
    if d2.sqrt() > chi {
        return Ok([0.0, 0.0]);
    }
    let c = -2.0 / (d2 * d2) - 2.0 / d2;
    Ok([c * d[0], c * d[1]])
}

fn mean(v: &[Vec2]) -> Vec2 {
    let n = v.len() as f64;
    let s = v.iter().fold([0.0, 0.0], |acc, x| [acc[0] + x[0], acc[1] + x[1]]);
    [s[0] / n, s[1] / n]
}

/// Optimal centralized accelerations, clipped.
pub fn centralized_controller(state: &SwarmState, r_tilde: &[Vec2], config: &FlockingConfig) -> Result<Vec<Vec2>> {
    let n = state.n_agents();
    if r_tilde.len() != n {
        return Err(Error::Dimension(format!("{} observations for {n} agents", r_tilde.len())));
    }
    let r_bar = mean(r_tilde);
    let k = 1.0 / (2.0 * config.ts_seconds);
    (0..n)
        .map(|i| {
            let v = state.velocities[i];
            let mut grad = [0.0, 0.0];
            for j in 0..n {
                if j == i {
                    continue;
                }
                let g = potential_gradient(state.positions[i], state.positions[j], config.chi_potential)
                    .map_err(|_| Error::CoincidentAgents(i.min(j), i.max(j)))?;
                grad = [grad[0] + g[0], grad[1] + g[1]];
            }
            let u = [-k * (v[0] - r_bar[0]) - k * grad[0], -k * (v[1] - r_bar[1]) - k * grad[1]];
            Ok(clip_accel(u, config.mu_max_accel))
        })
        .collect()
}

/// Everything an agent network has seen up to the current step.
#[derive(Debug, Clone, Default)]
pub struct SwarmHistory {
    pub positions: Vec<Vec<Vec2>>,
    pub velocities: Vec<Vec<Vec2>>,
    pub r_tilde: Vec<Vec<Vec2>>,
    pub graphs: Vec<Graph>,
}

impl SwarmHistory {
    pub fn push(&mut self, state: &SwarmState, r_tilde: Vec<Vec2>, graph: Graph) {
        self.positions.push(state.positions.clone());
        self.velocities.push(state.velocities.clone());
        self.r_tilde.push(r_tilde);
        self.graphs.push(graph);
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }
}

/// Delayed k-hop sets at step `n`: `sets[k][i][j]` is true when `j ∈ N^k_{i,n}`.
///
/// `N^0_{i,n} = {i}` and `N^k_{i,n} = ∪_{j ∈ N_{i,n}} N^{k−1}_{j,n−1}`, i.e. the
/// end points of length-k walks whose m-th hop uses the graph at step `n−m+1`.
/// The hop range is truncated to `min(k_max, n)`.
pub fn hop_sets(graphs: &[Graph], n: usize, k_max: usize) -> Vec<Vec<Vec<bool>>> {
    let k_max = k_max.min(n);
    let nodes = graphs[n].n_nodes();
    let identity: Vec<Vec<bool>> = (0..nodes).map(|i| (0..nodes).map(|j| i == j).collect()).collect();
    let mut out = vec![identity.clone()];
    // prev[o] holds level k−1 at step n − k_max + o
    let mut prev = vec![identity; k_max + 1];
    for k in 1..=k_max {
        let mut next = vec![Vec::new(); k_max + 1];
        for o in k..=k_max {
            let g = &graphs[n - k_max + o];
            let mut level = vec![vec![false; nodes]; nodes];
            for (i, row) in level.iter_mut().enumerate() {
                for j in g.neighbors(i) {
                    for (dst, &src) in row.iter_mut().zip(&prev[o - 1][j]) {
                        *dst |= src;
                    }
                }
            }
            next[o] = level;
        }
        out.push(next[k_max].clone());
        prev = next;
    }
    out
}

/// Decentralized accelerations from delayed k-hop information.
///
/// The consensus target averages, over hops `k = 0..K` with a nonempty set,
/// the mean of `r̃_{j,n−k}` on `N^k_{i,n}`; the repulsion sums the potential
/// gradient against delayed positions `p_{j,n−k}` for `k ≥ 1`, `j ≠ i`.
pub fn decentralized_controller(history: &SwarmHistory, k_hops: usize, config: &FlockingConfig) -> Result<Vec<Vec2>> {
    if history.is_empty() {
        return Err(Error::InvalidArgument("decentralized controller needs at least one step of history".into()));
    }
    let n = history.len() - 1;
    let sets = hop_sets(&history.graphs, n, k_hops);
    let nodes = history.positions[n].len();
    let gain = 1.0 / (2.0 * config.ts_seconds);
    (0..nodes)
        .map(|i| {
            let mut target = [0.0, 0.0];
            let mut used = 0usize;
            let mut grad = [0.0, 0.0];
            for (k, level) in sets.iter().enumerate() {
                let members: Vec<usize> = (0..nodes).filter(|&j| level[i][j]).collect();
                if members.is_empty() {
                    continue;
                }
                let obs = &history.r_tilde[n - k];
                let m = mean(&members.iter().map(|&j| obs[j]).collect::<Vec<_>>());
                target = [target[0] + m[0], target[1] + m[1]];
                used += 1;
                if k == 0 {
                    continue;
                }
                for &j in members.iter().filter(|&&j| j != i) {
                    let g = potential_gradient(history.positions[n][i], history.positions[n - k][j], config.chi_potential)
                        .map_err(|_| Error::CoincidentAgents(i.min(j), i.max(j)))?;
                    grad = [grad[0] + g[0], grad[1] + g[1]];
                }
            }
            let target = [target[0] / used as f64, target[1] / used as f64];
            let v = history.velocities[n][i];
            let u = [
                -gain * (v[0] - target[0]) - gain * grad[0],
                -gain * (v[1] - target[1]) - gain * grad[1],
            ];
            Ok(clip_accel(u, config.mu_max_accel))
        })
        .collect()
}

/// `1/(2N) Σ‖v_i − mean r̃‖² + 1/(2N) Σ‖T_s u_i‖²`.
pub fn step_cost(velocities: &[Vec2], r_tilde: &[Vec2], accel: &[Vec2], ts: f64) -> f64 {
    consensus_cost(velocities, r_tilde) + accel.iter().map(|u| ts * ts * norm2(*u)).sum::<f64>() / (2.0 * velocities.len() as f64)
}

/// `1/(2N) Σ‖v_i − mean r̃‖²`.
pub fn consensus_cost(velocities: &[Vec2], r_tilde: &[Vec2]) -> f64 {
    let r_bar = mean(r_tilde);
    velocities.iter().map(|v| norm2(sub(*v, r_bar))).sum::<f64>() / (2.0 * velocities.len() as f64)
}

/// Uniform placement in a square of area `n/ρ` with rejection below `min_spacing`.
pub fn uniform_positions(n: usize, density: f64, min_spacing: f64, rng: &mut impl Rng) -> Result<Vec<Vec2>> {
    let side = (n as f64 / density).sqrt();
    let mut out: Vec<Vec2> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let p = [rng.random_range(0.0..side), rng.random_range(0.0..side)];
            if out.iter().all(|q| norm(sub(p, *q)) >= min_spacing) {
                out.push(p);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Infeasible(format!(
                "could not place {n} agents at density {density} with spacing {min_spacing}"
            )));
        }
    }
    Ok(out)
}

/// Random inputs of one trajectory: reference, observation biases and start state.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub reference: Vec<Vec2>,
    pub bias: Vec<Vec2>,
    pub initial: SwarmState,
}

pub fn sample_scenario(config: &FlockingConfig, experiment: FlockingExperiment, seed: u64) -> Result<Scenario> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reference = reference_from_rng(config, &mut rng);
    let n = config.n_agents;
    let bias: Vec<Vec2> = (0..n).map(|_| gaussian_vec2(&mut rng, config.obs_noise_norm)).collect();
    let velocities: Vec<Vec2> = (0..n)
        .map(|_| {
            let dv = gaussian_vec2(&mut rng, config.init_velocity_noise_norm);
            [reference[0][0] + dv[0], reference[0][1] + dv[1]]
        })
        .collect();
    let positions = match experiment {
        FlockingExperiment::StaticGrid => {
            let side = (n as f64).sqrt().round() as usize;
            if side * side != n {
                return Err(Error::InvalidArgument(format!("mesh grid needs a square agent count, got {n}")));
            }
            graph::mesh_grid_positions(side, 1.0)
        }
        FlockingExperiment::Dynamic => uniform_positions(n, config.density_rho0, config.min_spacing, &mut rng)?,
    };
    Ok(Scenario {
        reference,
        bias,
        initial: SwarmState {
            positions,
            velocities,
            step: 0,
        },
    })
}

/// Controller used in closed loop.
#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    Centralized,
    Decentralized { k_hops: usize },
    Stgnn(&'a StgnnParams),
}

/// A closed-loop trajectory with its traces.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub experiment: FlockingExperiment,
    pub grid: SamplingGrid,
    pub history: SwarmHistory,
    pub reference: Vec<Vec2>,
    /// Applied (clipped) accelerations.
    pub accelerations: Vec<Vec<Vec2>>,
    pub costs: Vec<f64>,
    /// Mean over agents of `‖v_{i,n} − r_n‖`.
    pub velocity_gap: Vec<f64>,
    pub final_state: SwarmState,
}

impl Rollout {
    pub fn mean_cost(&self) -> f64 {
        self.costs.iter().sum::<f64>() / self.costs.len() as f64
    }

    /// Mean step cost over the last quarter of the horizon.
    pub fn final_quarter_cost(&self) -> f64 {
        let start = self.costs.len() - self.costs.len().div_ceil(4);
        let tail = &self.costs[start..];
        tail.iter().sum::<f64>() / tail.len() as f64
    }

    /// Consensus cost of the last step.
    pub fn final_consensus_cost(&self) -> f64 {
        let last = self.history.len() - 1;
        consensus_cost(&self.history.velocities[last], &self.history.r_tilde[last])
    }

    /// Input features of every visited state.
    pub fn features(&self) -> SpaceTimeSignal {
        features_of(&self.history, self.experiment, self.grid)
    }

    /// Applied accelerations as a 2-feature signal.
    pub fn accel_signal(&self) -> SpaceTimeSignal {
        vec2_signal(&self.accelerations, self.grid)
    }
}

fn vec2_signal(series: &[Vec<Vec2>], grid: SamplingGrid) -> SpaceTimeSignal {
    let nodes = series[0].len();
    SpaceTimeSignal::from_fn(2, nodes, grid, |f, n, t| series[t][n][f])
}

/// `q_i = Σ_{j ∈ N_i} (p_i − p_j)`.
pub fn relative_mass(graph: &Graph, positions: &[Vec2]) -> Vec<Vec2> {
    (0..positions.len())
        .map(|i| {
            graph.neighbors(i).into_iter().fold([0.0, 0.0], |acc, j| {
                let d = sub(positions[i], positions[j]);
                [acc[0] + d[0], acc[1] + d[1]]
            })
        })
        .collect()
}

fn write_features(out: &mut SpaceTimeSignal, t: usize, history: &SwarmHistory, experiment: FlockingExperiment) {
    let nodes = history.positions[t].len();
    let q = match experiment {
        FlockingExperiment::Dynamic => Some(relative_mass(&history.graphs[t], &history.positions[t])),
        FlockingExperiment::StaticGrid => None,
    };
    for i in 0..nodes {
        let v = history.velocities[t][i];
        let r = history.r_tilde[t][i];
        let mut vals = vec![v[0], v[1], r[0], r[1]];
        if let Some(q) = &q {
            vals.extend_from_slice(&q[i]);
        }
        for (f, val) in vals.into_iter().enumerate() {
            out.set(f, i, t, val);
        }
    }
}

/// Feature signal `(v, r̃[, q])` of a recorded history.
pub fn features_of(history: &SwarmHistory, experiment: FlockingExperiment, grid: SamplingGrid) -> SpaceTimeSignal {
    let nodes = history.positions[0].len();
    let mut out = SpaceTimeSignal::zeros(experiment.n_features(), nodes, grid);
    for t in 0..history.len() {
        write_features(&mut out, t, history, experiment);
    }
    out
}

/// Runs `policy` in closed loop for `t_steps` steps from a seeded scenario.
///
/// In the static experiment positions stay frozen while velocities evolve.
pub fn rollout_policy(
    policy: Policy<'_>,
    config: &FlockingConfig,
    experiment: FlockingExperiment,
    seed: u64,
) -> Result<Rollout> {
    let scenario = sample_scenario(config, experiment, seed)?;
    rollout_scenario(policy, config, experiment, &scenario)
}

pub fn rollout_scenario(
    policy: Policy<'_>,
    config: &FlockingConfig,
    experiment: FlockingExperiment,
    scenario: &Scenario,
) -> Result<Rollout> {
    let grid = config.grid()?;
    if let Policy::Stgnn(p) = policy {
        if p.input_features() != experiment.n_features() || p.output_features() != 2 {
            return Err(Error::Dimension(format!(
                "network maps {} → {} features, experiment needs {} → 2",
                p.input_features(),
                p.output_features(),
                experiment.n_features()
            )));
        }
    }
    let mut state = scenario.initial.clone();
    let mut history = SwarmHistory::default();
    let mut accelerations = Vec::with_capacity(config.t_steps);
    let mut costs = Vec::with_capacity(config.t_steps);
    let mut gap = Vec::with_capacity(config.t_steps);
    let mut features = SpaceTimeSignal::zeros(experiment.n_features(), config.n_agents, grid);
    let frozen_graph = match experiment {
        FlockingExperiment::StaticGrid => Some(graph::build_range_graph(&state.positions, config.comm_range_r)?),
        FlockingExperiment::Dynamic => None,
    };
    for t in 0..config.t_steps {
        let r_tilde = observe_reference(scenario.reference[t], &scenario.bias);
        let g = match &frozen_graph {
            Some(g) => g.clone(),
            None => graph::build_range_graph(&state.positions, config.comm_range_r)?,
        };
        history.push(&state, r_tilde.clone(), g);
        let u = match policy {
            Policy::Centralized => centralized_controller(&state, &r_tilde, config)?,
            Policy::Decentralized { k_hops } => decentralized_controller(&history, k_hops, config)?,
            Policy::Stgnn(params) => {
                write_features(&mut features, t, &history, experiment);
                let prefix = features.prefix(t + 1)?;
                let y = match &frozen_graph {
                    Some(g) => predict(params, GraphSeq::Static(g), &prefix)?,
                    None => predict(params, GraphSeq::Dynamic(&history.graphs), &prefix)?,
                };
                (0..config.n_agents)
                    .map(|i| clip_accel([y.get(0, i, t), y.get(1, i, t)], config.mu_max_accel))
                    .collect()
            }
        };
        if u.iter().any(|a| !a[0].is_finite() || !a[1].is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite acceleration at step {t}")));
        }
        costs.push(step_cost(&state.velocities, &r_tilde, &u, config.ts_seconds));
        let r = scenario.reference[t];
        gap.push(state.velocities.iter().map(|v| norm(sub(*v, r))).sum::<f64>() / config.n_agents as f64);
        let mut next = step_mobility(&state, &u, config.ts_seconds, config.mu_max_accel)?;
        if experiment == FlockingExperiment::StaticGrid {
            next.positions = state.positions.clone();
        }
        accelerations.push(u);
        state = next;
    }
    Ok(Rollout {
        experiment,
        grid,
        history,
        reference: scenario.reference.clone(),
        accelerations,
        costs,
        velocity_gap: gap,
        final_state: state,
    })
}

/// One imitation example: centralized rollout features and its accelerations.
pub fn generate_example(config: &FlockingConfig, experiment: FlockingExperiment, seed: u64) -> Result<Example> {
    let roll = rollout_policy(Policy::Centralized, config, experiment, seed)?;
    let input = roll.features();
    let target = roll.accel_signal();
    let graphs = match experiment {
        FlockingExperiment::StaticGrid => vec![roll.history.graphs[0].clone()],
        FlockingExperiment::Dynamic => roll.history.graphs,
    };
    Example::new(input, target, graphs)
}

/// `n_examples` examples with seeds `config.seed ⊕ index`.
pub fn generate_dataset(config: &FlockingConfig, n_examples: usize, experiment: FlockingExperiment) -> Result<Vec<Example>> {
    (0..n_examples)
        .into_par_iter()
        .map(|i| generate_example(config, experiment, config.seed ^ i as u64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeCostRow {
    /// Density (agents/m²) or sampling-time offset (s).
    pub value: f64,
    pub mean_final_cost: f64,
    pub relative_cost: f64,
}

fn mean_final_cost(params: &StgnnParams, config: &FlockingConfig, seeds: &[u64]) -> Result<f64> {
    let costs: Vec<f64> = seeds
        .par_iter()
        .map(|&s| Ok(rollout_policy(Policy::Stgnn(params), config, FlockingExperiment::Dynamic, s)?.final_consensus_cost()))
        .collect::<Result<_>>()?;
    Ok(costs.iter().sum::<f64>() / costs.len() as f64)
}

fn test_seeds(seed: u64, n: usize) -> Vec<u64> {
    (0..n).map(|i| seed ^ (0x7E57_0000 + i as u64)).collect()
}

/// Final consensus cost of ST-GNN rollouts at each density, relative to the
/// cost at `reference_density`.
pub fn density_sweep(
    params: &StgnnParams,
    config: &FlockingConfig,
    densities: &[f64],
    reference_density: f64,
    n_signals: usize,
    seed: u64,
) -> Result<Vec<RelativeCostRow>> {
    let seeds = test_seeds(seed, n_signals);
    let at = |rho: f64| {
        let cfg = FlockingConfig {
            density_rho0: rho,
            ..config.clone()
        };
        mean_final_cost(params, &cfg, &seeds)
    };
    let base = at(reference_density)?;
    densities
        .iter()
        .map(|&rho| {
            let c = if rho == reference_density { base } else { at(rho)? };
            Ok(RelativeCostRow {
                value: rho,
                mean_final_cost: c,
                relative_cost: (c - base) / base,
            })
        })
        .collect()
}

/// Same as [`density_sweep`] over sampling-time offsets, keeping the horizon
/// in seconds fixed.
pub fn ts_sweep(
    params: &StgnnParams,
    config: &FlockingConfig,
    delta_ts: &[f64],
    n_signals: usize,
    seed: u64,
) -> Result<Vec<RelativeCostRow>> {
    let seeds = test_seeds(seed, n_signals);
    let duration = config.ts_seconds * config.t_steps as f64;
    let at = |d: f64| {
        let ts = config.ts_seconds + d;
        if ts <= 0.0 {
            return Err(Error::InvalidArgument(format!("sampling time offset {d} leaves a nonpositive period")));
        }
        let cfg = FlockingConfig {
            ts_seconds: ts,
            t_steps: ((duration / ts).round() as usize).max(2),
            ..config.clone()
        };
        mean_final_cost(params, &cfg, &seeds)
    };
    let base = at(0.0)?;
    delta_ts
        .iter()
        .map(|&d| {
            let c = if d == 0.0 { base } else { at(d)? };
            Ok(RelativeCostRow {
                value: d,
                mean_final_cost: c,
                relative_cost: (c - base) / base,
            })
        })
        .collect()
}

pub fn relative_cost_csv(label: &str, rows: &[RelativeCostRow]) -> String {
    let mut s = format!("{label},mean_final_cost,relative_cost\n");
    for r in rows {
        s.push_str(&format!("{:?},{:?},{:?}\n", r.value, r.mean_final_cost, r.relative_cost));
    }
    s
}
