//! Imitation training with minibatch ADAM and best-epoch selection.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{adam_step, backward, forward, mse_loss, predict, AdamConfig, AdamState, Gradients, StgnnParams};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::signal::SpaceTimeSignal;
use crate::stfilter::GraphSeq;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    ValidationCost,
    ValidationMse,
    FinalGoalDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub selection_metric: SelectionMetric,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epochs: 30,
            batch_size: 20,
            seed: 0,
            selection_metric: SelectionMetric::ValidationMse,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| b > 0.0 && b < 1.0;
        if !unit(self.beta1) || !unit(self.beta2) {
            return Err(Error::InvalidArgument("beta1 and beta2 must lie in (0, 1)".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            ..AdamConfig::default()
        }
    }
}

/// One imitation pair. A single graph means a static support.
#[derive(Debug, Clone)]
pub struct Example {
    pub input: SpaceTimeSignal,
    pub target: SpaceTimeSignal,
    pub graphs: Arc<Vec<Graph>>,
}

impl Example {
    pub fn new(input: SpaceTimeSignal, target: SpaceTimeSignal, graphs: Vec<Graph>) -> Result<Self> {
        let ex = Self {
            input,
            target,
            graphs: Arc::new(graphs),
        };
        if ex.input.nodes() != ex.target.nodes() || ex.input.steps() != ex.target.steps() {
            return Err(Error::Dimension("input and target disagree on N or T".into()));
        }
        ex.seq().check(ex.input.nodes(), ex.input.steps())?;
        Ok(ex)
    }

    pub fn seq(&self) -> GraphSeq<'_> {
        if self.graphs.len() == 1 {
            GraphSeq::Static(&self.graphs[0])
        } else {
            GraphSeq::Dynamic(&self.graphs)
        }
    }

    /// MSE loss and tap gradients of one example.
    pub fn loss_and_grad(&self, params: &StgnnParams) -> Result<(f64, Gradients)> {
        let (y, tape) = forward(params, self.seq(), &self.input)?;
        let (loss, dy) = mse_loss(&y, &self.target)?;
        Ok((loss, backward(params, self.seq(), &tape, &dy)?))
    }

    pub fn loss(&self, params: &StgnnParams) -> Result<f64> {
        mse_loss(&predict(params, self.seq(), &self.input)?, &self.target).map(|r| r.0)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub train: Vec<Example>,
    pub validation: Vec<Example>,
    pub test: Vec<Example>,
}

impl Dataset {
    /// Mean per-example MSE; parallel evaluation, serial summation.
    pub fn mean_mse(examples: &[Example], params: &StgnnParams) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::InvalidArgument("empty split".into()));
        }
        let losses: Vec<f64> = examples.par_iter().map(|e| e.loss(params)).collect::<Result<_>>()?;
        Ok(losses.iter().sum::<f64>() / examples.len() as f64)
    }
}

/// Task-specific validation score; lower is better.
pub trait Validator: Sync {
    fn evaluate(&self, params: &StgnnParams) -> Result<f64>;
}

impl<F: Fn(&StgnnParams) -> Result<f64> + Sync> Validator for F {
    fn evaluate(&self, params: &StgnnParams) -> Result<f64> {
        self(params)
    }
}

/// Mean MSE over a fixed set of examples.
pub struct MseValidator<'a>(pub &'a [Example]);

impl Validator for MseValidator<'_> {
    fn evaluate(&self, params: &StgnnParams) -> Result<f64> {
        Dataset::mean_mse(self.0, params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_metric: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best_params: StgnnParams,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

impl TrainOutcome {
    pub fn log_csv(&self) -> String {
        log_csv(&self.log)
    }
}

pub fn log_csv(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch,train_loss,val_metric\n");
    for e in log {
        s.push_str(&format!("{},{:?},{:?}\n", e.epoch, e.train_loss, e.val_metric));
    }
    s
}

/// Minibatch ADAM on the train split starting from `init`.
///
/// `validator` scores the parameters after each epoch; it is required for the
/// cost and goal-distance metrics and defaults to validation MSE otherwise.
/// `on_epoch` sees every log row as it is produced, including the last one
/// before a divergence error.
pub fn train_imitation(
    dataset: &Dataset,
    init: &StgnnParams,
    config: &TrainConfig,
    validator: Option<&dyn Validator>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    config.validate()?;
    init.validate()?;
    if dataset.train.is_empty() || dataset.validation.is_empty() {
        return Err(Error::InvalidArgument("train and validation splits must be nonempty".into()));
    }
    let mse_validator = MseValidator(&dataset.validation);
    let validator: &dyn Validator = match (config.selection_metric, validator) {
        (_, Some(v)) => v,
        (SelectionMetric::ValidationMse, None) => &mse_validator,
        (m, None) => {
            return Err(Error::InvalidArgument(format!(
                "selection metric {m:?} needs a task validator"
            )))
        }
    };
    let adam = config.adam();
    let mut params = init.clone();
    let mut state = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..dataset.train.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut best = (f64::INFINITY, 0usize, params.clone());

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let results: Vec<(f64, Gradients)> = batch
                .par_iter()
                .map(|&i| dataset.train[i].loss_and_grad(&params))
                .collect::<Result<_>>()?;
            let mut grad = Gradients::zeros_like(&params);
            let scale = 1.0 / batch.len() as f64;
            for (loss, g) in &results {
                loss_sum += loss;
                grad.add_scaled(scale, g);
            }
            if !loss_sum.is_finite() || grad.flat().iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged { epoch, loss: loss_sum });
            }
            adam_step(&mut params, &mut state, &grad, &adam)?;
        }
        let train_loss = loss_sum / dataset.train.len() as f64;
        let val_metric = validator.evaluate(&params)?;
        let row = EpochLog {
            epoch,
            train_loss,
            val_metric,
        };
        on_epoch(&row);
        log.push(row);
        if !train_loss.is_finite() || params.flat().iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { epoch, loss: train_loss });
        }
        if val_metric < best.0 {
            best = (val_metric, epoch, params.clone());
        }
    }
    if log.is_empty() {
        return Err(Error::InvalidArgument("epochs must be positive".into()));
    }
    // every epoch non-finite: keep the last parameters
    if !best.0.is_finite() {
        best = (f64::INFINITY, config.epochs - 1, params);
    }
    Ok(TrainOutcome {
        best_params: best.2,
        best_epoch: best.1,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stgnn::{Activation, Architecture};
    use crate::timeline::SamplingGrid;
    use nalgebra::DMatrix;
    use rand::Rng;

    fn ring(n: usize) -> Graph {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            let j = (i + 1) % n;
            m[(i, j)] = 1.0;
            m[(j, i)] = 1.0;
        }
        Graph::from_gso(m.scale(0.5)).unwrap()
    }

    fn examples(teacher: &StgnnParams, count: usize, seed: u64) -> Vec<Example> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = SamplingGrid::new(0.1, 6).unwrap();
        (0..count)
            .map(|_| {
                let x = SpaceTimeSignal::from_fn(teacher.input_features(), 5, grid, |_, _, _| rng.random_range(-1.0..1.0));
                let g = ring(5);
                let y = predict(teacher, GraphSeq::Static(&g), &x).unwrap();
                Example::new(x, y, vec![g]).unwrap()
            })
            .collect()
    }

    #[test]
    fn teacher_student_recovery() {
        let arch = Architecture::new(vec![2, 1], vec![3], Activation::Identity).unwrap();
        let teacher = StgnnParams::init_uniform(&arch, 100);
        let ds = Dataset {
            train: examples(&teacher, 40, 1),
            validation: examples(&teacher, 10, 2),
            test: vec![],
        };
        let init = StgnnParams::init_uniform(&arch, 7);
        let initial = Dataset::mean_mse(&ds.train, &init).unwrap();
        let cfg = TrainConfig {
            epochs: 200,
            ..Default::default()
        };
        let out = train_imitation(&ds, &init, &cfg, None, |_| {}).unwrap();
        let last = Dataset::mean_mse(&ds.train, &out.best_params).unwrap();
        assert!(last <= 1e-3 * initial, "{last} vs {initial}");
    }

    #[test]
    fn overfit_single_example() {
        let arch = Architecture::new(vec![2, 4, 1], vec![2, 1], Activation::Identity).unwrap();
        let teacher = StgnnParams::init_uniform(&arch, 3);
        let ex = examples(&teacher, 1, 3);
        let ds = Dataset {
            train: ex.clone(),
            validation: ex,
            test: vec![],
        };
        let cfg = TrainConfig {
            epochs: 10,
            ..Default::default()
        };
        let out = train_imitation(&ds, &StgnnParams::init_uniform(&arch, 5), &cfg, None, |_| {}).unwrap();
        for w in out.log.windows(2) {
            assert!(w[1].train_loss < w[0].train_loss);
        }
    }

    #[test]
    fn zero_targets_converge() {
        let arch = Architecture::new(vec![2, 1], vec![2], Activation::Identity).unwrap();
        let zero = StgnnParams::zeros(&arch);
        let ds = Dataset {
            train: examples(&zero, 20, 4),
            validation: examples(&zero, 5, 5),
            test: vec![],
        };
        let cfg = TrainConfig {
            epochs: 300,
            ..Default::default()
        };
        let out = train_imitation(&ds, &StgnnParams::init_uniform(&arch, 1), &cfg, None, |_| {}).unwrap();
        assert!(Dataset::mean_mse(&ds.train, &out.best_params).unwrap() <= 1e-6);
    }

    #[test]
    fn deterministic_logs_and_best_selection() {
        let arch = Architecture::new(vec![2, 3, 1], vec![2, 2], Activation::Identity).unwrap();
        let teacher = StgnnParams::init_uniform(&arch, 8);
        let ds = Dataset {
            train: examples(&teacher, 30, 6),
            validation: examples(&teacher, 5, 7),
            test: vec![],
        };
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 7,
            ..Default::default()
        };
        let init = StgnnParams::init_uniform(&arch, 2);
        let a = train_imitation(&ds, &init, &cfg, None, |_| {}).unwrap();
        let b = train_imitation(&ds, &init, &cfg, None, |_| {}).unwrap();
        assert_eq!(a.log_csv(), b.log_csv());
        assert_eq!(a.best_params, b.best_params);
        let min = a.log.iter().map(|e| e.val_metric).fold(f64::INFINITY, f64::min);
        assert_eq!(a.log[a.best_epoch].val_metric, min);
        let check = Dataset::mean_mse(&ds.validation, &a.best_params).unwrap();
        assert_eq!(check, min);
    }

    #[test]
    fn divergence_is_reported() {
        let arch = Architecture::new(vec![2, 1], vec![2], Activation::Identity).unwrap();
        let teacher = StgnnParams::init_uniform(&arch, 8);
        let ds = Dataset {
            train: examples(&teacher, 4, 6),
            validation: examples(&teacher, 2, 7),
            test: vec![],
        };
        let cfg = TrainConfig {
            learning_rate: 1e300,
            epochs: 5,
            ..Default::default()
        };
        let mut seen = 0;
        let err = train_imitation(&ds, &StgnnParams::init_uniform(&arch, 2), &cfg, None, |_| seen += 1).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let arch = Architecture::new(vec![2, 1], vec![2], Activation::Identity).unwrap();
        let p = StgnnParams::zeros(&arch);
        let ds = Dataset::default();
        assert!(train_imitation(&ds, &p, &TrainConfig::default(), None, |_| {}).is_err());
        let full = Dataset {
            train: examples(&p, 2, 1),
            validation: examples(&p, 2, 2),
            test: vec![],
        };
        let bad = TrainConfig {
            beta1: 1.0,
            ..Default::default()
        };
        assert!(train_imitation(&full, &p, &bad, None, |_| {}).is_err());
        let needs_task = TrainConfig {
            selection_metric: SelectionMetric::ValidationCost,
            ..Default::default()
        };
        assert!(train_imitation(&full, &p, &needs_task, None, |_| {}).is_err());
    }
}
