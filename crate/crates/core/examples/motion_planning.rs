// Unlabeled motion planning: sample a feasible instance, plan it with the
// concurrent assignment teacher, learn a local policy and probe how it
// reacts to a different neighborhood size or sampling period.

use stgnn_lab::planning::{
    capt_assignment, capt_trajectories, evaluate_final_distance, evaluate_policy, generate_planning_dataset,
    sample_instance, sensitivity_csv, sensitivity_sweep, PlanningConfig, PlanningInstance,
};
use stgnn_lab::stgnn::{train_imitation, Activation, Architecture, Dataset, StgnnParams, TrainConfig};

pub fn run_example() -> stgnn_lab::Result<()> {
    let config = PlanningConfig {
        n_agents: 8,
        m_neighbors: 3,
        t_steps: 20,
        ..Default::default()
    };

    let (instance, stats) = sample_instance(&config, 42)?;
    let plan = capt_trajectories(&instance, &capt_assignment(&instance.starts, &instance.goals)?)?;
    let teacher = evaluate_final_distance(plan.positions.last().unwrap(), &instance.goals)?;
    println!(
        "teacher final distance {:.2e} after {} rejected draws",
        teacher.mean,
        stats.rejected_spacing + stats.rejected_speed
    );
    assert!(teacher.mean < 1e-9);

    let split = |seed: u64, n: usize| {
        generate_planning_dataset(
            &PlanningConfig {
                seed,
                ..config.clone()
            },
            n,
        )
        .map(|(samples, _)| samples)
    };
    let (train, validation, test) = (split(1 << 20, 80)?, split(2 << 20, 5)?, split(3 << 20, 10)?);
    let dataset = Dataset {
        train: train.iter().map(|s| s.example.clone()).collect(),
        validation: validation.iter().map(|s| s.example.clone()).collect(),
        test: Vec::new(),
    };
    let arch = Architecture::new(vec![config.n_features(), 32, 2], vec![3, 1], Activation::Identity)?;
    let init = StgnnParams::init_uniform(&arch, 1);
    let train_cfg = TrainConfig {
        epochs: 4,
        learning_rate: 0.002,
        ..Default::default()
    };
    let outcome = train_imitation(&dataset, &init, &train_cfg, None, |_| {})?;

    let instances: Vec<PlanningInstance> = test.iter().map(|s| s.instance.clone()).collect();
    let before = evaluate_policy(&init, &instances, &config, config.m_neighbors, config.ts_seconds)?;
    let after = evaluate_policy(&outcome.best_params, &instances, &config, config.m_neighbors, config.ts_seconds)?;
    println!("mean final distance: untrained {:.3}, trained {:.3}", before.mean, after.mean);

    let rows = sensitivity_sweep(&outcome.best_params, &config, &instances, &[-1, 1, 2], &[-0.02, 0.02])?;
    print!("{}", sensitivity_csv(&rows));
    Ok(())
}

#[allow(dead_code)]
fn main() -> stgnn_lab::Result<()> {
    run_example()
}
