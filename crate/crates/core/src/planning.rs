//! Unlabeled motion planning.
//!
//! N agents must cover N goals without a preassigned pairing. The centralized
//! plan (CAPT) picks the assignment minimizing total squared travel and moves
//! every agent along a straight constant-speed line; its finite-difference
//! accelerations are the imitation targets for an ST-GNN that only sees its
//! M nearest neighbours and goals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{assignment_cost, hungarian, hungarian_lexicographic};
use crate::error::{Error, Result};
use crate::flocking::{clip_accel, step_mobility, uniform_positions, SwarmState, Vec2};
use crate::graph::{self, Graph};
use crate::signal::SpaceTimeSignal;
use crate::stfilter::GraphSeq;
use crate::stgnn::{predict, Example, StgnnParams};
use crate::timeline::SamplingGrid;

/// Instance draws before generation gives up.
const MAX_INSTANCE_DRAWS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanningConfig {
    pub n_agents: usize,
    pub m_neighbors: usize,
    /// Minimum spacing `d` among starts and among goals.
    pub min_spacing: f64,
    /// Side of the square holding starts and goals.
    pub arena_side: f64,
    /// Initial speed with a uniformly random heading per agent.
    pub initial_speed: f64,
    pub mu_max_accel: f64,
    pub t_steps: usize,
    pub ts_seconds: f64,
    /// Feed absolute coordinates instead of egocentric ones.
    pub absolute_features: bool,
    pub seed: u64,
}

impl Default for PlanningConfig {
    fn default() -> Self {
        Self {
            n_agents: 12,
            m_neighbors: 5,
            min_spacing: 1.5,
            arena_side: 8.0,
            initial_speed: 0.0,
            mu_max_accel: 5.0,
            t_steps: 30,
            ts_seconds: 0.1,
            absolute_features: false,
            seed: 0,
        }
    }
}

impl PlanningConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_agents < 2 {
            return Err(Error::Config("planning needs at least 2 agents".into()));
        }
        if self.m_neighbors == 0 || self.m_neighbors >= self.n_agents {
            return Err(Error::Config(format!(
                "m_neighbors must lie in [1, {}], got {}",
                self.n_agents - 1,
                self.m_neighbors
            )));
        }
        if self.t_steps < 2 {
            return Err(Error::Config("planning horizon needs at least 2 steps".into()));
        }
        for (name, v) in [
            ("min_spacing", self.min_spacing),
            ("arena_side", self.arena_side),
            ("mu_max_accel", self.mu_max_accel),
            ("ts_seconds", self.ts_seconds),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.initial_speed >= 0.0 && self.initial_speed.is_finite()) {
            return Err(Error::Config(format!("initial_speed must be nonnegative, got {}", self.initial_speed)));
        }
        Ok(())
    }

    /// `6M + 4`.
    pub fn n_features(&self) -> usize {
        feature_count(self.m_neighbors)
    }

    pub fn grid(&self) -> SamplingGrid {
        SamplingGrid::new(self.ts_seconds, self.t_steps).expect("validated config")
    }

    /// Largest straight-line speed an instance may demand.
    pub fn max_speed(&self) -> f64 {
        self.mu_max_accel * self.ts_seconds * self.t_steps as f64
    }
}

pub fn feature_count(m: usize) -> usize {
    6 * m + 4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningInstance {
    pub starts: Vec<Vec2>,
    pub goals: Vec<Vec2>,
    pub initial_velocities: Vec<Vec2>,
    pub min_spacing: f64,
    pub t_steps: usize,
    pub ts: f64,
}

impl PlanningInstance {
    pub fn n_agents(&self) -> usize {
        self.starts.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.starts.len();
        if self.goals.len() != n || self.initial_velocities.len() != n {
            return Err(Error::Dimension(format!(
                "{n} starts, {} goals, {} initial velocities",
                self.goals.len(),
                self.initial_velocities.len()
            )));
        }
        for (what, pts) in [("starts", &self.starts), ("goals", &self.goals)] {
            if let Some((i, j)) = closest_violation(pts, self.min_spacing) {
                return Err(Error::InvalidArgument(format!("{what} {i} and {j} closer than {}", self.min_spacing)));
            }
        }
        Ok(())
    }

    /// Mean of starts and goals together.
    pub fn centroid(&self) -> Vec2 {
        let all: Vec<Vec2> = self.starts.iter().chain(&self.goals).copied().collect();
        mean(&all)
    }
}

fn closest_violation(pts: &[Vec2], d: f64) -> Option<(usize, usize)> {
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            if dist(pts[i], pts[j]) < d {
                return Some((i, j));
            }
        }
    }
    None
}

fn dist(a: Vec2, b: Vec2) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn mean(v: &[Vec2]) -> Vec2 {
    let n = v.len() as f64;
    let s = v.iter().fold([0.0, 0.0], |acc, x| [acc[0] + x[0], acc[1] + x[1]]);
    [s[0] / n, s[1] / n]
}

/// Rejection counts of instance generation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub accepted: usize,
    /// Draws where spacing could not be met.
    pub rejected_spacing: usize,
    /// Draws whose plan exceeded the speed limit.
    pub rejected_speed: usize,
}

impl GenerationStats {
    pub fn merge(&mut self, other: &Self) {
        self.accepted += other.accepted;
        self.rejected_spacing += other.rejected_spacing;
        self.rejected_speed += other.rejected_speed;
    }

    pub fn rejection_rate(&self) -> f64 {
        let rejected = self.rejected_spacing + self.rejected_speed;
        let total = rejected + self.accepted;
        if total == 0 {
            0.0
        } else {
            rejected as f64 / total as f64
        }
    }
}

/// Random instance whose CAPT plan respects the speed limit.
pub fn sample_instance(config: &PlanningConfig, seed: u64) -> Result<(PlanningInstance, GenerationStats)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.n_agents;
    let density = n as f64 / (config.arena_side * config.arena_side);
    let mut stats = GenerationStats::default();
    for _ in 0..MAX_INSTANCE_DRAWS {
        let placed = uniform_positions(n, density, config.min_spacing, &mut rng)
            .and_then(|s| Ok((s, uniform_positions(n, density, config.min_spacing, &mut rng)?)));
        let (starts, goals) = match placed {
            Ok(pair) => pair,
            Err(Error::Infeasible(_)) => {
                stats.rejected_spacing += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let initial_velocities = (0..n)
            .map(|_| {
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                [config.initial_speed * theta.cos(), config.initial_speed * theta.sin()]
            })
            .collect();
        let inst = PlanningInstance {
            starts,
            goals,
            initial_velocities,
            min_spacing: config.min_spacing,
            t_steps: config.t_steps,
            ts: config.ts_seconds,
        };
        let phi = capt_assignment(&inst.starts, &inst.goals)?;
        let travel = (config.t_steps - 1) as f64 * config.ts_seconds;
        let speed = (0..n).map(|i| dist(inst.starts[i], inst.goals[phi[i]]) / travel).fold(0.0, f64::max);
        if speed > config.max_speed() {
            stats.rejected_speed += 1;
            continue;
        }
        stats.accepted += 1;
        return Ok((inst, stats));
    }
    Err(Error::Infeasible(format!(
        "no feasible planning instance in {MAX_INSTANCE_DRAWS} draws ({} spacing, {} speed rejections)",
        stats.rejected_spacing, stats.rejected_speed
    )))
}

fn squared_distance_matrix(a: &[Vec2], b: &[Vec2]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|p| b.iter().map(|q| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).collect())
        .collect()
}

/// Goal index for every agent minimizing total squared distance.
pub fn capt_assignment(starts: &[Vec2], goals: &[Vec2]) -> Result<Vec<usize>> {
    if starts.len() != goals.len() {
        return Err(Error::Dimension(format!("{} starts but {} goals", starts.len(), goals.len())));
    }
    if starts.is_empty() {
        return Ok(Vec::new());
    }
    hungarian_lexicographic(&squared_distance_matrix(starts, goals), 1e-12)
}

/// Total squared travel of an assignment.
pub fn capt_cost(starts: &[Vec2], goals: &[Vec2], assignment: &[usize]) -> f64 {
    assignment_cost(&squared_distance_matrix(starts, goals), assignment)
}

/// Straight-line plan sampled on the step grid, indexed `[step][agent]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptPlan {
    pub assignment: Vec<usize>,
    pub positions: Vec<Vec<Vec2>>,
    /// `(p_{n+1} − p_n)/T_s`; the last step repeats the previous one.
    pub velocities: Vec<Vec<Vec2>>,
    /// `(v_n − v_{n−1})/T_s` with `v_{−1}` the initial velocity.
    pub accelerations: Vec<Vec<Vec2>>,
}

impl CaptPlan {
    /// Velocity an agent carries into step `n`.
    pub fn state_velocity(&self, n: usize, initial: &[Vec2]) -> Vec<Vec2> {
        if n == 0 {
            initial.to_vec()
        } else {
            self.velocities[n - 1].clone()
        }
    }
}

pub fn capt_trajectories(instance: &PlanningInstance, assignment: &[usize]) -> Result<CaptPlan> {
    let n = instance.n_agents();
    if assignment.len() != n {
        return Err(Error::Dimension(format!("assignment of {} for {n} agents", assignment.len())));
    }
    let mut seen = vec![false; n];
    for &g in assignment {
        if g >= n || std::mem::replace(&mut seen[g], true) {
            return Err(Error::InvalidArgument("assignment is not a permutation".into()));
        }
    }
    let t = instance.t_steps;
    if t < 2 {
        return Err(Error::InvalidArgument("plan needs at least 2 steps".into()));
    }
    let ts = instance.ts;
    let positions: Vec<Vec<Vec2>> = (0..t)
        .map(|k| {
            let a = k as f64 / (t - 1) as f64;
            (0..n)
                .map(|i| {
                    let (s, g) = (instance.starts[i], instance.goals[assignment[i]]);
                    [s[0] + a * (g[0] - s[0]), s[1] + a * (g[1] - s[1])]
                })
                .collect()
        })
        .collect();
    let mut velocities: Vec<Vec<Vec2>> = (0..t - 1)
        .map(|k| {
            (0..n)
                .map(|i| {
                    let (p, q) = (positions[k][i], positions[k + 1][i]);
                    [(q[0] - p[0]) / ts, (q[1] - p[1]) / ts]
                })
                .collect()
        })
        .collect();
    velocities.push(velocities[t - 2].clone());
    let accelerations = (0..t)
        .map(|k| {
            let prev = if k == 0 { &instance.initial_velocities } else { &velocities[k - 1] };
            (0..n)
                .map(|i| [(velocities[k][i][0] - prev[i][0]) / ts, (velocities[k][i][1] - prev[i][1]) / ts])
                .collect()
        })
        .collect();
    Ok(CaptPlan {
        assignment: assignment.to_vec(),
        positions,
        velocities,
        accelerations,
    })
}

/// Indices of the `m` goals nearest to `p`, by distance then index.
fn nearest_goals(p: Vec2, goals: &[Vec2], m: usize) -> Vec<usize> {
    let mut order: Vec<(f64, usize)> = goals.iter().enumerate().map(|(j, &g)| (dist(p, g), j)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    order.into_iter().take(m).map(|(_, j)| j).collect()
}

/// Fills column `t` of `out` with the features of every agent.
///
/// Layout per agent: own position, own velocity, the positions of the `m`
/// nearest agents, their velocities, the `m` nearest goals; blocks are sorted
/// by distance and zero-padded. Positions are relative to the agent (own
/// position relative to `origin`) unless `absolute` is set.
pub fn write_features(
    out: &mut SpaceTimeSignal,
    t: usize,
    positions: &[Vec2],
    velocities: &[Vec2],
    goals: &[Vec2],
    m: usize,
    origin: Vec2,
    absolute: bool,
) -> Result<()> {
    let n = positions.len();
    if out.features() != feature_count(m) || out.nodes() != n || velocities.len() != n {
        return Err(Error::Dimension(format!(
            "feature buffer {:?} for {n} agents with M = {m}",
            out.shape()
        )));
    }
    for i in 0..n {
        let p = positions[i];
        let rel = |q: Vec2| if absolute { q } else { [q[0] - p[0], q[1] - p[1]] };
        let own = if absolute { p } else { [p[0] - origin[0], p[1] - origin[1]] };
        let mut row = vec![0.0; feature_count(m)];
        row[..2].copy_from_slice(&own);
        row[2..4].copy_from_slice(&velocities[i]);
        let nbrs = if m == 0 || n < 2 { Vec::new() } else { graph::nearest_neighbors(positions, i, m)? };
        for (slot, &j) in nbrs.iter().enumerate() {
            row[4 + 2 * slot..6 + 2 * slot].copy_from_slice(&rel(positions[j]));
            row[4 + 2 * m + 2 * slot..6 + 2 * m + 2 * slot].copy_from_slice(&velocities[j]);
        }
        for (slot, &g) in nearest_goals(p, goals, m).iter().enumerate() {
            row[4 + 4 * m + 2 * slot..6 + 4 * m + 2 * slot].copy_from_slice(&rel(goals[g]));
        }
        for (f, v) in row.into_iter().enumerate() {
            out.set(f, i, t, v);
        }
    }
    Ok(())
}

/// Feature signal of a whole trajectory given per-step states.
pub fn assemble_features(
    positions: &[Vec<Vec2>],
    velocities: &[Vec<Vec2>],
    goals: &[Vec2],
    m: usize,
    origin: Vec2,
    absolute: bool,
    grid: SamplingGrid,
) -> Result<SpaceTimeSignal> {
    let steps = positions.len();
    if velocities.len() != steps || grid.n_steps != steps || steps == 0 {
        return Err(Error::Dimension("state history and grid disagree".into()));
    }
    let n = positions[0].len();
    let mut out = SpaceTimeSignal::zeros(feature_count(m), n, grid);
    for t in 0..steps {
        write_features(&mut out, t, &positions[t], &velocities[t], goals, m, origin, absolute)?;
    }
    Ok(out)
}

fn vec2_signal(values: &[Vec<Vec2>], grid: SamplingGrid) -> SpaceTimeSignal {
    let n = values[0].len();
    let mut out = SpaceTimeSignal::zeros(2, n, grid);
    for (t, row) in values.iter().enumerate() {
        for (i, v) in row.iter().enumerate() {
            out.set(0, i, t, v[0]);
            out.set(1, i, t, v[1]);
        }
    }
    out
}

/// One training pair together with the instance that produced it.
#[derive(Debug, Clone)]
pub struct PlanningSample {
    pub instance: PlanningInstance,
    pub plan: CaptPlan,
    pub example: Example,
    pub seed: u64,
}

/// Imitation pair of one instance: plan states as input, plan accelerations as target.
pub fn planning_example(instance: &PlanningInstance, config: &PlanningConfig) -> Result<(CaptPlan, Example)> {
    instance.validate()?;
    let phi = capt_assignment(&instance.starts, &instance.goals)?;
    let plan = capt_trajectories(instance, &phi)?;
    let grid = SamplingGrid::new(instance.ts, instance.t_steps)?;
    let state_v: Vec<Vec<Vec2>> = (0..instance.t_steps)
        .map(|t| plan.state_velocity(t, &instance.initial_velocities))
        .collect();
    let input = assemble_features(
        &plan.positions,
        &state_v,
        &instance.goals,
        config.m_neighbors,
        instance.centroid(),
        config.absolute_features,
        grid,
    )?;
    let target = vec2_signal(&plan.accelerations, grid);
    let graphs = plan
        .positions
        .iter()
        .map(|p| graph::build_knn_graph(p, config.m_neighbors))
        .collect::<Result<Vec<Graph>>>()?;
    let example = Example::new(input, target, graphs)?;
    Ok((plan, example))
}

/// `n` samples with seeds `config.seed ^ i`, generated in parallel.
pub fn generate_planning_dataset(config: &PlanningConfig, n: usize) -> Result<(Vec<PlanningSample>, GenerationStats)> {
    config.validate()?;
    let made: Vec<(PlanningSample, GenerationStats)> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let seed = config.seed ^ i;
            let (instance, stats) = sample_instance(config, seed)?;
            let (plan, example) = planning_example(&instance, config)?;
            Ok((
                PlanningSample {
                    instance,
                    plan,
                    example,
                    seed,
                },
                stats,
            ))
        })
        .collect::<Result<_>>()?;
    let mut stats = GenerationStats::default();
    let samples = made
        .into_iter()
        .map(|(s, st)| {
            stats.merge(&st);
            s
        })
        .collect();
    Ok((samples, stats))
}

/// Mean and spread of final agent-to-goal distances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalDistance {
    pub mean: f64,
    pub variance_population: f64,
    pub variance_sample: f64,
    pub count: usize,
}

impl FinalDistance {
    pub fn from_distances(d: &[f64]) -> Self {
        let n = d.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                variance_population: f64::NAN,
                variance_sample: f64::NAN,
                count: 0,
            };
        }
        let mean = d.iter().sum::<f64>() / n as f64;
        let ss: f64 = d.iter().map(|x| (x - mean).powi(2)).sum();
        Self {
            mean,
            variance_population: ss / n as f64,
            variance_sample: if n > 1 { ss / (n - 1) as f64 } else { 0.0 },
            count: n,
        }
    }
}

/// Distances from final positions to goals under the assignment minimizing
/// their sum (agents are unlabeled, so the pairing is recomputed).
pub fn final_distances(finals: &[Vec2], goals: &[Vec2]) -> Result<Vec<f64>> {
    if finals.len() != goals.len() {
        return Err(Error::Dimension(format!("{} agents but {} goals", finals.len(), goals.len())));
    }
    if finals.is_empty() {
        return Ok(Vec::new());
    }
    let cost: Vec<Vec<f64>> = finals.iter().map(|p| goals.iter().map(|g| dist(*p, *g)).collect()).collect();
    let phi = hungarian(&cost)?;
    Ok(phi.iter().enumerate().map(|(i, &g)| cost[i][g]).collect())
}

pub fn evaluate_final_distance(finals: &[Vec2], goals: &[Vec2]) -> Result<FinalDistance> {
    Ok(FinalDistance::from_distances(&final_distances(finals, goals)?))
}

/// Closed-loop execution of a network on one instance.
#[derive(Debug, Clone)]
pub struct PlanningRollout {
    /// States `0..T`, indexed `[step][agent]`.
    pub positions: Vec<Vec<Vec2>>,
    pub velocities: Vec<Vec<Vec2>>,
    /// Clipped accelerations applied between consecutive states.
    pub accelerations: Vec<Vec<Vec2>>,
    pub graphs: Vec<Graph>,
    pub features: SpaceTimeSignal,
}

impl PlanningRollout {
    pub fn final_positions(&self) -> &[Vec2] {
        self.positions.last().expect("rollout has at least one state")
    }
}

/// Runs the network online: at each step the kNN graph and features are built
/// from the current state and the newest network output moves the swarm.
///
/// `graph_m` is the neighbourhood size of the communication graph and may differ
/// from the feature layout's `config.m_neighbors`; `ts` is the physics step.
pub fn rollout_planning_with(
    params: &StgnnParams,
    instance: &PlanningInstance,
    config: &PlanningConfig,
    graph_m: usize,
    ts: f64,
) -> Result<PlanningRollout> {
    let n = instance.n_agents();
    if params.input_features() != config.n_features() || params.output_features() != 2 {
        return Err(Error::Dimension(format!(
            "network maps {} → {} features, planning needs {} → 2",
            params.input_features(),
            params.output_features(),
            config.n_features()
        )));
    }
    let steps = instance.t_steps;
    let grid = SamplingGrid::new(ts, steps)?;
    let origin = instance.centroid();
    let mut state = SwarmState {
        positions: instance.starts.clone(),
        velocities: instance.initial_velocities.clone(),
        step: 0,
    };
    let mut features = SpaceTimeSignal::zeros(config.n_features(), n, grid);
    let mut graphs = Vec::with_capacity(steps);
    let mut positions = vec![state.positions.clone()];
    let mut velocities = vec![state.velocities.clone()];
    let mut accelerations = Vec::with_capacity(steps - 1);
    for t in 0..steps {
        graphs.push(graph::build_knn_graph(&state.positions, graph_m)?);
        write_features(
            &mut features,
            t,
            &state.positions,
            &state.velocities,
            &instance.goals,
            config.m_neighbors,
            origin,
            config.absolute_features,
        )?;
        if t + 1 == steps {
            break;
        }
        let y = predict(params, GraphSeq::Dynamic(&graphs), &features.prefix(t + 1)?)?;
        let u: Vec<Vec2> = (0..n)
            .map(|i| clip_accel([y.get(0, i, t), y.get(1, i, t)], config.mu_max_accel))
            .collect();
        state = step_mobility(&state, &u, ts, config.mu_max_accel)?;
        positions.push(state.positions.clone());
        velocities.push(state.velocities.clone());
        accelerations.push(u);
    }
    Ok(PlanningRollout {
        positions,
        velocities,
        accelerations,
        graphs,
        features,
    })
}

pub fn rollout_planning(params: &StgnnParams, instance: &PlanningInstance, config: &PlanningConfig) -> Result<PlanningRollout> {
    rollout_planning_with(params, instance, config, config.m_neighbors, instance.ts)
}

/// Final-distance statistics pooled over all agents of all instances.
pub fn evaluate_policy(
    params: &StgnnParams,
    instances: &[PlanningInstance],
    config: &PlanningConfig,
    graph_m: usize,
    ts: f64,
) -> Result<FinalDistance> {
    let per: Vec<Vec<f64>> = instances
        .par_iter()
        .map(|inst| {
            let r = rollout_planning_with(params, inst, config, graph_m, ts)?;
            final_distances(r.final_positions(), &inst.goals)
        })
        .collect::<Result<_>>()?;
    Ok(FinalDistance::from_distances(&per.concat()))
}

/// Which topology a sensitivity row perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    NeighborhoodSize,
    SamplingTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub kind: Perturbation,
    pub delta: f64,
    pub mean_distance: f64,
    /// `(d_pert − d_orig)/d_orig`; NaN for skipped rows.
    pub relative_error: f64,
    pub skipped: bool,
}

/// Relative change of the mean final distance when the graph uses `M + ΔM`
/// neighbours or the physics runs at `T_s + ΔT_s`.
pub fn sensitivity_sweep(
    params: &StgnnParams,
    config: &PlanningConfig,
    instances: &[PlanningInstance],
    delta_m: &[i64],
    delta_ts: &[f64],
) -> Result<Vec<SensitivityRow>> {
    let base = evaluate_policy(params, instances, config, config.m_neighbors, config.ts_seconds)?.mean;
    let rel = |d: f64| (d - base) / base;
    let mut rows = Vec::with_capacity(delta_m.len() + delta_ts.len());
    for &dm in delta_m {
        let m = config.m_neighbors as i64 + dm;
        if m < 1 || m > config.n_agents as i64 - 1 {
            rows.push(SensitivityRow {
                kind: Perturbation::NeighborhoodSize,
                delta: dm as f64,
                mean_distance: f64::NAN,
                relative_error: f64::NAN,
                skipped: true,
            });
            continue;
        }
        let d = evaluate_policy(params, instances, config, m as usize, config.ts_seconds)?.mean;
        rows.push(SensitivityRow {
            kind: Perturbation::NeighborhoodSize,
            delta: dm as f64,
            mean_distance: d,
            relative_error: rel(d),
            skipped: false,
        });
    }
    for &dt in delta_ts {
        let ts = config.ts_seconds + dt;
        if !(ts > 0.0) {
            return Err(Error::InvalidArgument(format!("T_s + ΔT_s = {ts} is not positive")));
        }
        let d = evaluate_policy(params, instances, config, config.m_neighbors, ts)?.mean;
        rows.push(SensitivityRow {
            kind: Perturbation::SamplingTime,
            delta: dt,
            mean_distance: d,
            relative_error: rel(d),
            skipped: false,
        });
    }
    Ok(rows)
}

pub fn sensitivity_csv(rows: &[SensitivityRow]) -> String {
    let mut s = String::from("kind,delta,mean_distance,relative_error,skipped\n");
    for r in rows {
        let kind = match r.kind {
            Perturbation::NeighborhoodSize => "delta_m",
            Perturbation::SamplingTime => "delta_ts",
        };
        s.push_str(&format!("{kind},{},{},{},{}\n", r.delta, r.mean_distance, r.relative_error, r.skipped));
    }
    s
}

/// Average ranks with ties sharing the mean rank.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; NaN when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spearman needs paired samples");
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Permutation;
    use crate::stgnn::{Activation, Architecture};
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    fn random_points(n: usize, rng: &mut impl Rng) -> Vec<Vec2> {
        (0..n).map(|_| [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]).collect()
    }

    fn brute_force_min(cost: &[Vec<f64>]) -> f64 {
        Permutation::all(cost.len())
            .iter()
            .map(|p| assignment_cost(cost, p.as_slice()))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn assignment_trivial_and_crossed() {
        let pts = vec![[0.0, 0.0], [1.0, 2.0], [3.0, -1.0]];
        assert_eq!(capt_assignment(&pts, &pts).unwrap(), vec![0, 1, 2]);
        let starts = vec![[0.0, 0.0], [0.0, 1.0]];
        let goals = vec![[5.0, 1.0], [5.0, 0.0]];
        let phi = capt_assignment(&starts, &goals).unwrap();
        assert_eq!(phi, vec![1, 0]);
        assert!(capt_cost(&starts, &goals, &phi) < capt_cost(&starts, &goals, &[0, 1]));
        assert!(capt_assignment(&starts, &goals[..1]).is_err());
    }

    #[test]
    fn assignment_matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..60 {
            let n = rng.random_range(1..=6);
            let (s, g) = (random_points(n, &mut rng), random_points(n, &mut rng));
            let phi = capt_assignment(&s, &g).unwrap();
            let best = brute_force_min(&squared_distance_matrix(&s, &g));
            assert!((capt_cost(&s, &g, &phi) - best).abs() <= 1e-9 * best.max(1.0));
        }
    }

    fn instance(starts: Vec<Vec2>, goals: Vec<Vec2>, t: usize, ts: f64) -> PlanningInstance {
        let n = starts.len();
        PlanningInstance {
            starts,
            goals,
            initial_velocities: vec![[0.0, 0.0]; n],
            min_spacing: 0.5,
            t_steps: t,
            ts,
        }
    }

    #[test]
    fn trajectories_of_a_unit_segment() {
        let inst = instance(vec![[0.0, 0.0], [0.0, 3.0]], vec![[1.0, 0.0], [0.0, 3.0]], 11, 0.1);
        let plan = capt_trajectories(&inst, &[0, 1]).unwrap();
        for k in 0..11 {
            let v = plan.velocities[k][0];
            assert!((v[0].hypot(v[1]) - 1.0).abs() < 1e-12);
            assert_eq!(plan.velocities[k][1], [0.0, 0.0]);
            assert_eq!(plan.accelerations[k][1], [0.0, 0.0]);
        }
        assert!((plan.accelerations[0][0][0] - 10.0).abs() < 1e-9);
        for k in 1..11 {
            assert!(plan.accelerations[k][0][0].abs() < 1e-9);
        }
        assert_eq!(plan.positions[10][0], [1.0, 0.0]);
        assert!(capt_trajectories(&inst, &[0, 0]).is_err());
    }

    #[test]
    fn parallel_lines_keep_their_spacing() {
        let inst = instance(vec![[0.0, 0.0], [0.0, 1.5]], vec![[4.0, 0.3], [4.0, 1.8]], 30, 0.1);
        let plan = capt_trajectories(&inst, &[0, 1]).unwrap();
        for p in &plan.positions {
            assert!(dist(p[0], p[1]) >= 1.5 - 1e-12);
        }
    }

    #[test]
    fn features_of_two_agents_by_hand() {
        let pos = vec![[0.0, 0.0], [3.0, 4.0]];
        let vel = vec![[1.0, 0.0], [0.0, -1.0]];
        let goals = vec![[1.0, 1.0], [10.0, 0.0]];
        let grid = SamplingGrid::new(0.1, 1).unwrap();
        let x = assemble_features(&[pos], &[vel], &goals, 1, [1.0, 1.0], false, grid).unwrap();
        let agent = |i: usize| (0..10).map(|f| x.get(f, i, 0)).collect::<Vec<_>>();
        assert_eq!(agent(0), vec![-1.0, -1.0, 1.0, 0.0, 3.0, 4.0, 0.0, -1.0, 1.0, 1.0]);
        assert_eq!(agent(1), vec![2.0, 3.0, 0.0, -1.0, -3.0, -4.0, 1.0, 0.0, -2.0, -3.0]);
    }

    #[test]
    fn features_of_a_lone_agent() {
        let grid = SamplingGrid::new(0.1, 1).unwrap();
        let x = assemble_features(&[vec![[2.0, 1.0]]], &[vec![[0.5, 0.5]]], &[[9.0, 9.0]], 0, [0.0, 0.0], false, grid)
            .unwrap();
        assert_eq!(x.features(), 4);
        assert_eq!((0..4).map(|f| x.get(f, 0, 0)).collect::<Vec<_>>(), vec![2.0, 1.0, 0.5, 0.5]);
        // fewer agents than M pads with zeros
        let x = assemble_features(&[vec![[2.0, 1.0]]], &[vec![[0.5, 0.5]]], &[[3.0, 1.0]], 2, [0.0, 0.0], false, grid)
            .unwrap();
        assert_eq!(x.get(4 + 4 * 2, 0, 0), 1.0);
        assert!((4..16).filter(|&f| f != 12).all(|f| x.get(f, 0, 0) == 0.0));
    }

    #[test]
    fn dataset_is_deterministic_and_feasible() {
        let cfg = PlanningConfig {
            seed: 7,
            ..Default::default()
        };
        let (a, stats) = generate_planning_dataset(&cfg, 3).unwrap();
        let (b, _) = generate_planning_dataset(&cfg, 3).unwrap();
        assert_eq!(stats.accepted, 3);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.instance, y.instance);
            assert_eq!(x.example.input, y.example.input);
            x.instance.validate().unwrap();
            assert_eq!(x.example.input.features(), 34);
            assert_eq!(x.example.graphs.len(), 30);
        }
        let tight = PlanningConfig {
            arena_side: 2.0,
            ..cfg
        };
        assert!(matches!(sample_instance(&tight, 0), Err(Error::Infeasible(_))));
    }

    #[test]
    fn final_distance_examples() {
        let goals = vec![[0.0, 0.0], [5.0, 0.0], [0.0, 5.0]];
        let d = evaluate_final_distance(&goals, &goals).unwrap();
        assert_eq!((d.mean, d.variance_population), (0.0, 0.0));
        let shifted: Vec<Vec2> = [[0.0, 1.0], [5.0, -1.0], [1.0, 5.0]].to_vec();
        let d = evaluate_final_distance(&shifted, &goals).unwrap();
        assert!((d.mean - 1.0).abs() < 1e-12 && d.variance_population.abs() < 1e-12);
        let d = FinalDistance::from_distances(&[1.0, 3.0]);
        assert_eq!((d.mean, d.variance_population, d.variance_sample), (2.0, 1.0, 2.0));
    }

    #[test]
    fn final_distance_matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..40 {
            let n = rng.random_range(1..=6);
            let (f, g) = (random_points(n, &mut rng), random_points(n, &mut rng));
            let cost: Vec<Vec<f64>> = f.iter().map(|p| g.iter().map(|q| dist(*p, *q)).collect()).collect();
            let d = evaluate_final_distance(&f, &g).unwrap();
            assert!((d.mean * n as f64 - brute_force_min(&cost)).abs() < 1e-9);
        }
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 25.0, 100.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(ranks(&[2.0, 1.0, 2.0]), vec![2.5, 1.0, 2.5]);
    }

    fn small_net(cfg: &PlanningConfig, seed: u64) -> StgnnParams {
        let arch = Architecture::new(vec![cfg.n_features(), 8, 2], vec![3, 1], Activation::Identity).unwrap();
        StgnnParams::init_uniform(&arch, seed)
    }

    #[test]
    fn rollout_features_match_offline_assembly() {
        let cfg = PlanningConfig {
            n_agents: 5,
            m_neighbors: 2,
            t_steps: 8,
            arena_side: 6.0,
            ..Default::default()
        };
        let (inst, _) = sample_instance(&cfg, 3).unwrap();
        let p = small_net(&cfg, 1);
        let r = rollout_planning(&p, &inst, &cfg).unwrap();
        assert_eq!(r.positions.len(), 8);
        let again = assemble_features(&r.positions, &r.velocities, &inst.goals, 2, inst.centroid(), false, cfg.grid()).unwrap();
        assert_eq!(again, r.features);
        let y = predict(&p, GraphSeq::Dynamic(&r.graphs), &r.features).unwrap();
        for t in 0..7 {
            for i in 0..5 {
                assert_eq!(r.accelerations[t][i], clip_accel([y.get(0, i, t), y.get(1, i, t)], cfg.mu_max_accel));
            }
        }
    }

    #[test]
    fn sweep_at_zero_perturbation_is_zero() {
        let cfg = PlanningConfig {
            n_agents: 5,
            m_neighbors: 2,
            t_steps: 6,
            arena_side: 6.0,
            ..Default::default()
        };
        let inst: Vec<_> = (0..2).map(|s| sample_instance(&cfg, s).unwrap().0).collect();
        let rows = sensitivity_sweep(&small_net(&cfg, 2), &cfg, &inst, &[0, -2, 9], &[0.0]).unwrap();
        assert_eq!(rows[0].relative_error, 0.0);
        assert!(rows[1].skipped && rows[2].skipped);
        assert_eq!(rows[3].relative_error, 0.0);
    }

    proptest! {
        #[test]
        fn assignment_never_worse_than_identity(seed in 0u64..1000, n in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (s, g) = (random_points(n, &mut rng), random_points(n, &mut rng));
            let phi = capt_assignment(&s, &g).unwrap();
            let ident: Vec<usize> = (0..n).collect();
            prop_assert!(capt_cost(&s, &g, &phi) <= capt_cost(&s, &g, &ident) + 1e-12);
        }

        #[test]
        fn features_are_translation_invariant(seed in 0u64..500, dx in -50.0f64..50.0, dy in -50.0f64..50.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pos = random_points(6, &mut rng);
            let vel = random_points(6, &mut rng);
            let goals = random_points(6, &mut rng);
            let origin = mean(&pos.iter().chain(&goals).copied().collect::<Vec<_>>());
            let mv = |v: &[Vec2]| v.iter().map(|p| [p[0] + dx, p[1] + dy]).collect::<Vec<_>>();
            let grid = SamplingGrid::new(0.1, 1).unwrap();
            let a = assemble_features(&[pos.clone()], &[vel.clone()], &goals, 3, origin, false, grid).unwrap();
            let b = assemble_features(&[mv(&pos)], &[vel], &mv(&goals), 3, [origin[0] + dx, origin[1] + dy], false, grid).unwrap();
            prop_assert!(a.max_abs_diff(&b) < 1e-9);
        }

        #[test]
        fn features_permute_with_agents(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pos = random_points(5, &mut rng);
            let vel = random_points(5, &mut rng);
            let goals = random_points(5, &mut rng);
            let perm = Permutation::random(5, &mut rng);
            let grid = SamplingGrid::new(0.1, 1).unwrap();
            let a = assemble_features(&[pos.clone()], &[vel.clone()], &goals, 2, [0.0, 0.0], false, grid).unwrap();
            let pp: Vec<Vec2> = perm.as_slice().iter().map(|&j| pos[j]).collect();
            let pv: Vec<Vec2> = perm.as_slice().iter().map(|&j| vel[j]).collect();
            let b = assemble_features(&[pp], &[pv], &goals, 2, [0.0, 0.0], false, grid).unwrap();
            for (new, &old) in perm.as_slice().iter().enumerate() {
                for f in 0..16 {
                    prop_assert_eq!(a.get(f, old, 0), b.get(f, new, 0));
                }
            }
        }

        #[test]
        fn final_distance_ignores_agent_order(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_points(5, &mut rng);
            let g = random_points(5, &mut rng);
            let perm = Permutation::random(5, &mut rng);
            let pf: Vec<Vec2> = perm.as_slice().iter().map(|&j| f[j]).collect();
            let (a, b) = (evaluate_final_distance(&f, &g).unwrap(), evaluate_final_distance(&pf, &g).unwrap());
            prop_assert!((a.mean - b.mean).abs() < 1e-12);
        }
    }
}
