// Velocity consensus with a noisy reference: centralized and local
// controllers, then an ST-GNN imitating the centralized one.

use stgnn_lab::flocking::{generate_dataset, rollout_policy, FlockingConfig, FlockingExperiment, Policy};
use stgnn_lab::stgnn::{train_imitation, Activation, Architecture, Dataset, StgnnParams, TrainConfig};

pub fn run_example() -> stgnn_lab::Result<()> {
    let experiment = FlockingExperiment::Dynamic;
    let config = FlockingConfig {
        n_agents: 12,
        t_steps: 40,
        seed: 5,
        ..Default::default()
    };

    let central = rollout_policy(Policy::Centralized, &config, experiment, 1)?;
    let local = rollout_policy(Policy::Decentralized { k_hops: config.k_hops }, &config, experiment, 1)?;
    println!(
        "final-quarter cost: centralized {:.4}, decentralized {:.4}",
        central.final_quarter_cost(),
        local.final_quarter_cost()
    );
    assert!(central.final_quarter_cost() <= local.final_quarter_cost());

    let split = |offset: u64, n: usize| {
        generate_dataset(
            &FlockingConfig {
                seed: config.seed ^ offset,
                ..config.clone()
            },
            n,
            experiment,
        )
    };
    let dataset = Dataset {
        train: split(1 << 20, 40)?,
        validation: split(2 << 20, 5)?,
        test: Vec::new(),
    };
    let arch = Architecture::new(vec![experiment.n_features(), 16, 2], vec![3, 1], Activation::Identity)?;
    let init = StgnnParams::init_uniform(&arch, 9);
    let train = TrainConfig {
        epochs: 5,
        ..Default::default()
    };
    let outcome = train_imitation(&dataset, &init, &train, None, |_| {})?;
    let learned = rollout_policy(Policy::Stgnn(&outcome.best_params), &config, experiment, 1)?;
    println!("final-quarter cost of the trained ST-GNN: {:.4}", learned.final_quarter_cost());
    assert!(learned.final_quarter_cost().is_finite());
    Ok(())
}

#[allow(dead_code)]
fn main() -> stgnn_lab::Result<()> {
    run_example()
}
