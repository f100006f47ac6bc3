//! Experiment configuration files.
//!
//! A config is TOML. Keys the user leaves out take the defaults of the chosen
//! `task`, so `task = "motion_planning"` alone is a complete config. The
//! top-level `seed` drives every random stream; nested `seed` fields are
//! overwritten from it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flocking::{FlockingConfig, FlockingExperiment, FEATURES_DYNAMIC, FEATURES_STATIC};
use crate::planning::PlanningConfig;
use crate::stgnn::{Activation, Architecture, SelectionMetric, TrainConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    FlockingStatic,
    FlockingDynamic,
    MotionPlanning,
    StabilitySweep,
    DensitySweep,
    TsSweep,
}

impl Task {
    pub const ALL: [Task; 6] = [
        Task::FlockingStatic,
        Task::FlockingDynamic,
        Task::MotionPlanning,
        Task::StabilitySweep,
        Task::DensitySweep,
        Task::TsSweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::FlockingStatic => "flocking_static",
            Task::FlockingDynamic => "flocking_dynamic",
            Task::MotionPlanning => "motion_planning",
            Task::StabilitySweep => "stability_sweep",
            Task::DensitySweep => "density_sweep",
            Task::TsSweep => "ts_sweep",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown task {s:?}")))
    }

    /// Flocking variant whose data and network the task uses.
    pub fn flocking_experiment(self) -> Option<FlockingExperiment> {
        match self {
            Task::FlockingStatic | Task::StabilitySweep => Some(FlockingExperiment::StaticGrid),
            Task::FlockingDynamic | Task::DensitySweep | Task::TsSweep => Some(FlockingExperiment::Dynamic),
            Task::MotionPlanning => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    /// Hidden widths; input and output widths follow from the task.
    pub hidden: Vec<usize>,
    /// Taps per layer, one more entry than `hidden`.
    pub taps: Vec<usize>,
    pub final_activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Perturbation sizes of the stability sweep.
    pub eps: Vec<f64>,
    /// Test signals or rollouts per sweep point.
    pub n_signals: usize,
    pub densities: Vec<f64>,
    pub reference_density: f64,
    /// Sampling-time offsets (seconds).
    pub delta_ts: Vec<f64>,
    /// Neighbourhood-size offsets of the planning sweep.
    pub delta_m: Vec<i64>,
    pub plot: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub task: Task,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Dataset root; defaults to `<output_dir>/data`.
    pub dataset_dir: Option<PathBuf>,
    /// Trained parameters; defaults to `<output_dir>/params.bin`.
    pub params_path: Option<PathBuf>,
    pub data: DataConfig,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub flocking: FlockingConfig,
    pub planning: PlanningConfig,
    pub sweep: SweepConfig,
}

impl ExperimentConfig {
    pub fn defaults_for(task: Task) -> Self {
        let flocking = match task.flocking_experiment() {
            Some(FlockingExperiment::StaticGrid) => FlockingConfig {
                n_agents: 100,
                ..Default::default()
            },
            _ => FlockingConfig::default(),
        };
        let (network, train) = match task.flocking_experiment() {
            Some(FlockingExperiment::StaticGrid) => (
                NetworkConfig {
                    hidden: vec![16],
                    taps: vec![4, 1],
                    final_activation: Activation::Identity,
                },
                TrainConfig {
                    selection_metric: SelectionMetric::ValidationCost,
                    ..Default::default()
                },
            ),
            Some(FlockingExperiment::Dynamic) => (
                NetworkConfig {
                    hidden: vec![64],
                    taps: vec![4, 1],
                    final_activation: Activation::Identity,
                },
                TrainConfig {
                    selection_metric: SelectionMetric::ValidationCost,
                    ..Default::default()
                },
            ),
            None => (
                NetworkConfig {
                    hidden: vec![64],
                    taps: vec![3, 1],
                    final_activation: Activation::Identity,
                },
                TrainConfig {
                    learning_rate: 0.0005,
                    epochs: 60,
                    selection_metric: SelectionMetric::FinalGoalDistance,
                    ..Default::default()
                },
            ),
        };
        let data = match task {
            Task::MotionPlanning => DataConfig {
                n_train: 2000,
                n_validation: 125,
                n_test: 1000,
            },
            _ => DataConfig {
                n_train: 460,
                n_validation: 20,
                n_test: 20,
            },
        };
        Self {
            schema_version: SCHEMA_VERSION,
            task,
            output_dir: PathBuf::from("runs").join(task.name()),
            seed: 0,
            dataset_dir: None,
            params_path: None,
            data,
            network,
            train,
            flocking,
            planning: PlanningConfig::default(),
            sweep: SweepConfig {
                eps: vec![0.0, 0.0125, 0.025, 0.05, 0.075, 0.1, 0.125, 0.15, 0.175, 0.2],
                n_signals: 20,
                densities: vec![2.0, 0.5, 0.125, 1.0 / 32.0, 1.0 / 128.0, 1.0 / 512.0],
                reference_density: 2.0,
                delta_ts: match task {
                    Task::MotionPlanning => vec![-0.04, -0.02, -0.01, 0.01, 0.02, 0.04, 0.06, 0.08, 0.1],
                    _ => vec![0.0, 0.01, 0.02, 0.05, 0.1, 0.2],
                },
                delta_m: vec![-4, -3, -2, -1, 1, 2, 3, 4, 5, 6],
                plot: true,
            },
        }
    }

    /// Parses TOML text, filling missing keys with the task's defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let task = match user.get("task") {
            Some(toml::Value::String(s)) => Task::parse(s)?,
            Some(other) => return Err(Error::Config(format!("task must be a string, got {other}"))),
            None => return Err(Error::Config("missing required key `task`".into())),
        };
        if let Some(v) = user.get("schema_version") {
            if v.as_integer() != Some(SCHEMA_VERSION as i64) {
                return Err(Error::Config(format!("unsupported schema_version {v}; this build reads {SCHEMA_VERSION}")));
            }
        }
        let mut merged = toml::Table::try_from(Self::defaults_for(task)).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut merged, user);
        let cfg: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Replaces the top-level seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Nested configs with seeds derived from the top-level one.
    pub fn seeded_flocking(&self, stream: u64) -> FlockingConfig {
        FlockingConfig {
            seed: derive_seed(self.seed, stream),
            ..self.flocking.clone()
        }
    }

    pub fn seeded_planning(&self, stream: u64) -> PlanningConfig {
        PlanningConfig {
            seed: derive_seed(self.seed, stream),
            ..self.planning.clone()
        }
    }

    pub fn seeded_train(&self) -> TrainConfig {
        TrainConfig {
            seed: derive_seed(self.seed, STREAM_TRAIN),
            ..self.train.clone()
        }
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.dataset_dir.clone().unwrap_or_else(|| self.output_dir.join("data"))
    }

    pub fn params_path(&self) -> PathBuf {
        self.params_path.clone().unwrap_or_else(|| self.output_dir.join("params.bin"))
    }

    pub fn input_features(&self) -> usize {
        match self.task.flocking_experiment() {
            Some(FlockingExperiment::StaticGrid) => FEATURES_STATIC,
            Some(FlockingExperiment::Dynamic) => FEATURES_DYNAMIC,
            None => self.planning.n_features(),
        }
    }

    pub fn architecture(&self) -> Result<Architecture> {
        let mut features = vec![self.input_features()];
        features.extend(&self.network.hidden);
        features.push(2);
        Architecture::new(features, self.network.taps.clone(), self.network.final_activation)
            .map_err(|e| Error::Config(format!("network: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!("unsupported schema_version {}", self.schema_version)));
        }
        let cfg = |r: Result<()>, what: &str| r.map_err(|e| Error::Config(format!("{what}: {e}")));
        cfg(self.flocking.validate(), "flocking")?;
        cfg(self.planning.validate(), "planning")?;
        cfg(self.train.validate(), "train")?;
        self.architecture()?;
        if self.data.n_train == 0 || self.data.n_validation == 0 || self.data.n_test == 0 {
            return Err(Error::Config("data: every split needs at least one example".into()));
        }
        if self.sweep.n_signals == 0 {
            return Err(Error::Config("sweep: n_signals must be positive".into()));
        }
        if self.sweep.eps.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
            return Err(Error::Config("sweep: eps values must be finite and nonnegative".into()));
        }
        if self.sweep.densities.iter().chain([&self.sweep.reference_density]).any(|d| !(*d > 0.0)) {
            return Err(Error::Config("sweep: densities must be positive".into()));
        }
        Ok(())
    }
}

pub const STREAM_TRAIN_DATA: u64 = 1;
pub const STREAM_VALIDATION_DATA: u64 = 2;
pub const STREAM_TEST_DATA: u64 = 3;
pub const STREAM_TRAIN: u64 = 4;
pub const STREAM_INIT: u64 = 5;
pub const STREAM_SWEEP: u64 = 6;

/// Independent 64-bit seed per stream (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn merge(base: &mut toml::Table, user: toml::Table) {
    for (k, v) in user {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => merge(b, u),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
