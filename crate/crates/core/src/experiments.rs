//! Command implementations behind the `stgnn-lab` binary.
//!
//! Each command reads an [`ExperimentConfig`], writes its artifacts under
//! `output_dir`, and finishes by atomically writing a run manifest
//! `manifest-<command>.json` with the input hash, stage timings and artifact
//! hashes. Artifacts depend only on the config and seed.

use std::fs::File;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{
    derive_seed, ExperimentConfig, Task, STREAM_INIT, STREAM_SWEEP, STREAM_TEST_DATA, STREAM_TRAIN_DATA,
    STREAM_VALIDATION_DATA,
};
use crate::dataset::{example_dir, load_split, save_example, ExampleMeta, StoredExample};
use crate::error::{Error, Result};
use crate::flocking::{self, FlockingConfig, FlockingExperiment, Policy};
use crate::graph;
use crate::planning::{self, PlanningConfig, PlanningInstance};
use crate::plot::{line_chart_svg, Series};
use crate::stability;
use crate::stgnn::{
    load_params_with, save_params, train_imitation, Dataset, EpochLog, Example, SelectionMetric, StgnnParams, Validator,
};

pub const SPLITS: [(&str, u64); 3] = [
    ("train", STREAM_TRAIN_DATA),
    ("validation", STREAM_VALIDATION_DATA),
    ("test", STREAM_TEST_DATA),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: PathBuf,
    /// SHA-256 of the file, or of the sorted file hashes for a directory.
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub task: Task,
    pub seed: u64,
    pub config: ExperimentConfig,
    /// Hash of the config text and every input file.
    pub input_hash: String,
    pub stages: Vec<StageTiming>,
    pub artifacts: Vec<Artifact>,
}

impl RunManifest {
    fn new(command: &str, cfg: &ExperimentConfig, inputs: &[PathBuf]) -> Result<Self> {
        let mut h = Sha256::new();
        h.update(cfg.to_toml().as_bytes());
        for p in inputs {
            h.update(hash_path(p)?.as_bytes());
        }
        Ok(Self {
            command: command.to_string(),
            task: cfg.task,
            seed: cfg.seed,
            config: cfg.clone(),
            input_hash: hex(&h.finalize()),
            stages: Vec::new(),
            artifacts: Vec::new(),
        })
    }

    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f()?;
        self.stages.push(StageTiming {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        Ok(out)
    }

    fn record(&mut self, path: &Path) -> Result<()> {
        self.artifacts.push(Artifact {
            path: path.to_path_buf(),
            sha256: hash_path(path)?,
        });
        Ok(())
    }

    pub fn path(output_dir: &Path, command: &str) -> PathBuf {
        output_dir.join(format!("manifest-{command}.json"))
    }

    /// Writes via a temporary file and a rename so readers never see a partial manifest.
    pub fn write_atomic(&self, output_dir: &Path) -> Result<PathBuf> {
        let path = Self::path(output_dir, &self.command);
        let tmp = path.with_extension("json.tmp");
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        write_file(&tmp, &(json + "\n"))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn files_under(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            files_under(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

/// Content hash of a file, or of a directory tree (relative names and contents).
pub fn hash_path(path: &Path) -> Result<String> {
    if path.is_dir() {
        let mut files = Vec::new();
        files_under(path, &mut files)?;
        let mut h = Sha256::new();
        for f in files {
            let rel = f.strip_prefix(path).unwrap_or(&f);
            h.update(rel.to_string_lossy().as_bytes());
            h.update([0u8]);
            h.update(hash_path(&f)?.as_bytes());
        }
        Ok(hex(&h.finalize()))
    } else {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(hex(&Sha256::digest(&bytes)))
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn config_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("config serializes")
}

fn experiment_of(cfg: &ExperimentConfig) -> Option<FlockingExperiment> {
    cfg.task.flocking_experiment()
}

/// Generates train, validation and test splits under the dataset directory.
pub fn cmd_gen_data(cfg: &ExperimentConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let mut manifest = RunManifest::new("gen-data", cfg, &[])?;
    let root = cfg.dataset_dir();
    create_dir(&cfg.output_dir)?;
    let mut stats = planning::GenerationStats::default();
    for (split, stream) in SPLITS {
        let count = match split {
            "train" => cfg.data.n_train,
            "validation" => cfg.data.n_validation,
            _ => cfg.data.n_test,
        };
        let dir = root.join(split);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        create_dir(&dir)?;
        manifest.time(&format!("generate-{split}"), || match experiment_of(cfg) {
            Some(exp) => {
                let fc = cfg.seeded_flocking(stream);
                (0..count).into_par_iter().try_for_each(|i| {
                    let seed = fc.seed ^ i as u64;
                    let ex = flocking::generate_example(&fc, exp, seed)?;
                    let meta = ExampleMeta::describe(cfg.task.name(), seed, &ex, config_json(&fc));
                    save_example(&example_dir(&dir, i), &ex, &meta, None)
                })
            }
            None => {
                let pc = cfg.seeded_planning(stream);
                let (samples, st) = planning::generate_planning_dataset(&pc, count)?;
                stats.merge(&st);
                samples.par_iter().enumerate().try_for_each(|(i, s)| {
                    let meta = ExampleMeta::describe(cfg.task.name(), s.seed, &s.example, config_json(&pc));
                    save_example(&example_dir(&dir, i), &s.example, &meta, Some(&s.instance.goals))
                })
            }
        })?;
        manifest.record(&dir)?;
    }
    if experiment_of(cfg).is_none() {
        let path = root.join("generation.json");
        let json = serde_json::json!({
            "accepted": stats.accepted,
            "rejected_spacing": stats.rejected_spacing,
            "rejected_speed": stats.rejected_speed,
            "rejection_rate": stats.rejection_rate(),
        });
        write_file(&path, &(serde_json::to_string_pretty(&json).unwrap() + "\n"))?;
        manifest.record(&path)?;
    }
    manifest.write_atomic(&cfg.output_dir)?;
    Ok(manifest)
}

fn load_split_checked(cfg: &ExperimentConfig, split: &str) -> Result<Vec<StoredExample>> {
    let dir = cfg.dataset_dir().join(split);
    let items = load_split(&dir)?;
    if items.is_empty() {
        return Err(Error::InvalidArgument(format!("split {} is empty", dir.display())));
    }
    let want = cfg.input_features();
    for s in &items {
        if s.example.input.features() != want {
            return Err(Error::Dimension(format!(
                "dataset {} has {} input features, the {} network expects {want}",
                dir.display(),
                s.example.input.features(),
                cfg.task.name()
            )));
        }
    }
    Ok(items)
}

fn flocking_config_of(item: &StoredExample) -> Result<FlockingConfig> {
    serde_json::from_value(item.meta.config.clone()).map_err(|e| Error::InvalidArgument(format!("meta.json config: {e}")))
}

/// Planning instance of a stored example, regenerated from its seed.
fn planning_instance_of(item: &StoredExample) -> Result<PlanningInstance> {
    let pc: PlanningConfig =
        serde_json::from_value(item.meta.config.clone()).map_err(|e| Error::InvalidArgument(format!("meta.json config: {e}")))?;
    let (inst, _) = planning::sample_instance(&pc, item.meta.seed)?;
    if item.goals.as_deref() != Some(&inst.goals[..]) {
        return Err(Error::InvalidArgument(format!(
            "stored goals of seed {} do not match the regenerated instance",
            item.meta.seed
        )));
    }
    Ok(inst)
}

/// Closed-loop validation score matching the configured selection metric.
fn make_validator(cfg: &ExperimentConfig, validation: &[StoredExample]) -> Result<Option<Box<dyn Validator>>> {
    match (cfg.train.selection_metric, experiment_of(cfg)) {
        (SelectionMetric::ValidationMse, _) => Ok(None),
        (SelectionMetric::ValidationCost, Some(exp)) => {
            let runs: Vec<(FlockingConfig, u64)> = validation
                .iter()
                .map(|s| Ok((flocking_config_of(s)?, s.meta.seed)))
                .collect::<Result<_>>()?;
            Ok(Some(Box::new(move |p: &StgnnParams| -> Result<f64> {
                let costs: Vec<f64> = runs
                    .par_iter()
                    .map(|(fc, seed)| Ok(flocking::rollout_policy(Policy::Stgnn(p), fc, exp, *seed)?.mean_cost()))
                    .collect::<Result<_>>()?;
                Ok(costs.iter().sum::<f64>() / costs.len() as f64)
            })))
        }
        (SelectionMetric::FinalGoalDistance, None) => {
            let instances: Vec<PlanningInstance> = validation.iter().map(planning_instance_of).collect::<Result<_>>()?;
            let pc = cfg.planning.clone();
            Ok(Some(Box::new(move |p: &StgnnParams| -> Result<f64> {
                Ok(planning::evaluate_policy(p, &instances, &pc, pc.m_neighbors, pc.ts_seconds)?.mean)
            })))
        }
        (metric, _) => Err(Error::Config(format!(
            "selection metric {metric:?} does not apply to task {}",
            cfg.task.name()
        ))),
    }
}

/// Trains on the stored dataset; writes the best parameters and `train_log.csv`.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let root = cfg.dataset_dir();
    let mut manifest = RunManifest::new("train", cfg, &[root.join("train"), root.join("validation")])?;
    let (train, validation) = manifest.time("load", || Ok((load_split_checked(cfg, "train")?, load_split_checked(cfg, "validation")?)))?;
    let validator = make_validator(cfg, &validation)?;
    let dataset = Dataset {
        train: train.into_iter().map(|s| s.example).collect(),
        validation: validation.into_iter().map(|s| s.example).collect(),
        test: Vec::new(),
    };
    let arch = cfg.architecture()?;
    let init = StgnnParams::init_uniform(&arch, derive_seed(cfg.seed, STREAM_INIT));
    create_dir(&cfg.output_dir)?;
    let log_path = cfg.output_dir.join("train_log.csv");
    let mut log = File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    writeln!(log, "epoch,train_loss,val_metric").map_err(|e| Error::io(&log_path, e))?;
    let mut log_err = None;
    let outcome = manifest.time("train", || {
        train_imitation(&dataset, &init, &cfg.seeded_train(), validator.as_deref(), |e: &EpochLog| {
            let line = writeln!(log, "{},{:?},{:?}", e.epoch, e.train_loss, e.val_metric).and_then(|_| log.flush());
            if let Err(err) = line {
                log_err.get_or_insert(err);
            }
        })
    })?;
    if let Some(err) = log_err {
        return Err(Error::io(&log_path, err));
    }
    let params_path = cfg.params_path();
    if let Some(parent) = params_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_params(&outcome.best_params, &params_path)?;
    manifest.record(&params_path)?;
    manifest.record(&log_path)?;
    manifest.write_atomic(&cfg.output_dir)?;
    Ok(manifest)
}

fn load_trained(cfg: &ExperimentConfig) -> Result<StgnnParams> {
    let p = load_params_with(&cfg.params_path(), cfg.network.final_activation)?;
    if p.input_features() != cfg.input_features() || p.output_features() != 2 {
        return Err(Error::Dimension(format!(
            "parameters map {} → {} features, task {} needs {} → 2",
            p.input_features(),
            p.output_features(),
            cfg.task.name(),
            cfg.input_features()
        )));
    }
    Ok(p)
}

/// Per-example rows plus a final `mean` row of column means.
pub fn metrics_csv(header: &str, rows: &[(String, Vec<f64>)]) -> String {
    let mut s = format!("{header}\n");
    for (key, vals) in rows {
        let cols: Vec<String> = vals.iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&format!("{key},{}\n", cols.join(",")));
    }
    if let Some((_, first)) = rows.first() {
        let means: Vec<String> = (0..first.len())
            .map(|c| format!("{:?}", rows.iter().map(|r| r.1[c]).sum::<f64>() / rows.len() as f64))
            .collect();
        s.push_str(&format!("mean,,{}\n", means.join(",")));
    }
    s
}

/// Evaluates the trained network on the test split; writes `metrics.csv`.
///
/// Flocking columns hold final-quarter closed-loop costs of the network and
/// of both baselines on the example's scenario; planning columns hold the
/// final distance statistics of the closed-loop network.
pub fn cmd_eval(cfg: &ExperimentConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let test_dir = cfg.dataset_dir().join("test");
    let mut manifest = RunManifest::new("eval", cfg, &[test_dir, cfg.params_path()])?;
    let params = load_trained(cfg)?;
    let test = manifest.time("load", || load_split_checked(cfg, "test"))?;
    let (header, rows) = manifest.time("evaluate", || {
        let rows: Vec<(String, Vec<f64>)> = test
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let mse = s.example.loss(&params)?;
                let vals = match experiment_of(cfg) {
                    Some(exp) => {
                        let fc = flocking_config_of(s)?;
                        let k = fc.k_hops;
                        let run = |p: Policy| Ok::<f64, Error>(flocking::rollout_policy(p, &fc, exp, s.meta.seed)?.final_quarter_cost());
                        vec![mse, run(Policy::Stgnn(&params))?, run(Policy::Decentralized { k_hops: k })?, run(Policy::Centralized)?]
                    }
                    None => {
                        let inst = planning_instance_of(s)?;
                        let r = planning::rollout_planning(&params, &inst, &cfg.planning)?;
                        let d = planning::evaluate_final_distance(r.final_positions(), &inst.goals)?;
                        vec![mse, d.mean, d.variance_population, d.variance_sample]
                    }
                };
                Ok((format!("{i},{}", s.meta.seed), vals))
            })
            .collect::<Result<_>>()?;
        let header = match experiment_of(cfg) {
            Some(_) => "example,seed,mse,stgnn_cost,decentralized_cost,centralized_cost",
            None => "example,seed,mse,mean_distance,variance_population,variance_sample",
        };
        Ok((header, rows))
    })?;
    create_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join("metrics.csv");
    write_file(&path, &metrics_csv(header, &rows))?;
    manifest.record(&path)?;
    manifest.write_atomic(&cfg.output_dir)?;
    Ok(manifest)
}

fn mesh_grid_graph(fc: &FlockingConfig) -> Result<graph::Graph> {
    let side = (fc.n_agents as f64).sqrt().round() as usize;
    if side * side != fc.n_agents {
        return Err(Error::Config(format!("mesh grid needs a square agent count, got {}", fc.n_agents)));
    }
    graph::build_range_graph(&graph::mesh_grid_positions(side, 1.0), fc.comm_range_r)
}

/// Runs the task's sweep; writes `sweep.csv` and optionally `sweep.svg`.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let mut manifest = RunManifest::new("sweep", cfg, &[cfg.params_path()])?;
    let params = load_trained(cfg)?;
    let seed = derive_seed(cfg.seed, STREAM_SWEEP);
    let sw = &cfg.sweep;
    let (csv, svg) = manifest.time("sweep", || match cfg.task {
        Task::StabilitySweep => {
            let fc = cfg.seeded_flocking(STREAM_SWEEP);
            let graph = mesh_grid_graph(&fc)?;
            let signals: Vec<_> = (0..sw.n_signals)
                .into_par_iter()
                .map(|i| Ok(flocking::generate_example(&fc, FlockingExperiment::StaticGrid, fc.seed ^ i as u64)?.input))
                .collect::<Result<_>>()?;
            let rows = stability::stability_sweep(&params, &graph, &signals, &sw.eps, seed)?;
            let pts = rows.iter().map(|r| (r.eps, r.mean_rel_rmse)).collect();
            let svg = line_chart_svg("Relative RMSE under joint perturbation", "eps", "relative RMSE", &[Series::new("mean", pts)]);
            Ok((stability::sweep_csv(&rows), svg))
        }
        Task::DensitySweep => {
            let rows = flocking::density_sweep(&params, &cfg.flocking, &sw.densities, sw.reference_density, sw.n_signals, seed)?;
            let pts = rows.iter().map(|r| (r.value.log2(), r.relative_cost)).collect();
            let svg = line_chart_svg("Relative cost vs density", "log2 density (agents/m²)", "relative cost", &[Series::new("ST-GNN", pts)]);
            Ok((flocking::relative_cost_csv("density", &rows), svg))
        }
        Task::TsSweep => {
            let rows = flocking::ts_sweep(&params, &cfg.flocking, &sw.delta_ts, sw.n_signals, seed)?;
            let pts = rows.iter().map(|r| (r.value, r.relative_cost)).collect();
            let svg = line_chart_svg("Relative cost vs sampling-time offset", "ΔTs (s)", "relative cost", &[Series::new("ST-GNN", pts)]);
            Ok((flocking::relative_cost_csv("delta_ts", &rows), svg))
        }
        Task::MotionPlanning => {
            let pc = cfg.seeded_planning(STREAM_SWEEP);
            let instances: Vec<PlanningInstance> = (0..sw.n_signals as u64)
                .into_par_iter()
                .map(|i| Ok(planning::sample_instance(&pc, pc.seed ^ i)?.0))
                .collect::<Result<_>>()?;
            let rows = planning::sensitivity_sweep(&params, &cfg.planning, &instances, &sw.delta_m, &sw.delta_ts)?;
            let series = [planning::Perturbation::NeighborhoodSize, planning::Perturbation::SamplingTime].map(|kind| {
                let pts = rows.iter().filter(|r| r.kind == kind && !r.skipped).map(|r| (r.delta, r.relative_error)).collect();
                Series::new(if kind == planning::Perturbation::NeighborhoodSize { "ΔM" } else { "ΔTs ×100" }, pts)
            });
            let mut series = series.to_vec();
            for p in &mut series[1].points {
                p.0 *= 100.0;
            }
            let svg = line_chart_svg("Relative final-distance error", "ΔM  /  100·ΔTs (s)", "relative error", &series);
            Ok((planning::sensitivity_csv(&rows), svg))
        }
        other => Err(Error::Config(format!(
            "task {} has no sweep; use stability_sweep, density_sweep, ts_sweep or motion_planning",
            other.name()
        ))),
    })?;
    create_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join("sweep.csv");
    write_file(&path, &csv)?;
    manifest.record(&path)?;
    if sw.plot {
        let path = cfg.output_dir.join("sweep.svg");
        write_file(&path, &svg)?;
        manifest.record(&path)?;
    }
    manifest.write_atomic(&cfg.output_dir)?;
    Ok(manifest)
}

/// Default config text of a task.
pub fn print_defaults(task: Task) -> String {
    format!(
        "# stgnn-lab experiment config, schema version {}\n{}",
        crate::config::SCHEMA_VERSION,
        ExperimentConfig::defaults_for(task).to_toml()
    )
}

/// Evaluates a set of examples against their own targets; a sanity baseline.
pub fn teacher_mse(examples: &[Example]) -> Result<f64> {
    let losses: Vec<f64> = examples
        .iter()
        .map(|e| Ok(crate::stgnn::mse_loss(&e.target, &e.target)?.0))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}
