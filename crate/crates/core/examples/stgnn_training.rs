// Fit a student ST-GNN to a randomly initialized teacher, then persist the
// selected parameters and read them back.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stgnn_lab::graph::build_knn_graph;
use stgnn_lab::signal::SpaceTimeSignal;
use stgnn_lab::stfilter::GraphSeq;
use stgnn_lab::stgnn::{
    load_params, predict, save_params, train_imitation, Activation, Architecture, Dataset, Example, StgnnParams,
    TrainConfig,
};
use stgnn_lab::timeline::SamplingGrid;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let positions: Vec<[f64; 2]> = (0..8).map(|_| [rng.random_range(0.0..4.0), rng.random_range(0.0..4.0)]).collect();
    let graph = build_knn_graph(&positions, 3)?;
    let grid = SamplingGrid::new(0.1, 10)?;
    let arch = Architecture::new(vec![2, 6, 1], vec![3, 1], Activation::Identity)?;
    let teacher = StgnnParams::init_uniform(&arch, 100);

    let mut make = |count: usize| -> stgnn_lab::Result<Vec<Example>> {
        (0..count)
            .map(|_| {
                let data = (0..2 * graph.n_nodes() * grid.n_steps).map(|_| rng.random_range(-1.0..1.0)).collect();
                let x = SpaceTimeSignal::from_raw(2, graph.n_nodes(), grid, data)?;
                let y = predict(&teacher, GraphSeq::Static(&graph), &x)?;
                Example::new(x, y, vec![graph.clone()])
            })
            .collect()
    };
    let dataset = Dataset {
        train: make(60)?,
        validation: make(10)?,
        test: make(10)?,
    };

    let student = StgnnParams::init_uniform(&arch, 1);
    let before = Dataset::mean_mse(&dataset.test, &student)?;
    let config = TrainConfig {
        epochs: 25,
        ..Default::default()
    };
    let outcome = train_imitation(&dataset, &student, &config, None, |e| {
        if e.epoch % 5 == 0 {
            println!("epoch {:>2}: train {:.5}, validation {:.5}", e.epoch, e.train_loss, e.val_metric);
        }
    })?;
    let after = Dataset::mean_mse(&dataset.test, &outcome.best_params)?;
    println!("test MSE {before:.5} -> {after:.5} (best epoch {})", outcome.best_epoch);
    assert!(after < 0.5 * before);

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("student.bin");
    save_params(&outcome.best_params, &path)?;
    let restored = load_params(&path)?;
    assert_eq!(restored, outcome.best_params);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
