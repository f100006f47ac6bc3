// The full command pipeline from a TOML config: generate data, train,
// evaluate and sweep, all inside a scratch directory.

use stgnn_lab::config::ExperimentConfig;
use stgnn_lab::experiments::{cmd_eval, cmd_gen_data, cmd_sweep, cmd_train};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let out = tempfile::tempdir()?;
    let text = format!(
        r#"
task = "ts_sweep"
output_dir = "{}"
seed = 17

[data]
n_train = 8
n_validation = 2
n_test = 2

[network]
hidden = [8]

[train]
epochs = 3
batch_size = 4

[flocking]
n_agents = 8
t_steps = 20

[sweep]
n_signals = 2
delta_ts = [0.0, 0.02, 0.05]
"#,
        out.path().display().to_string().replace('\\', "/")
    );
    let config = ExperimentConfig::from_toml_str(&text)?;

    for manifest in [cmd_gen_data(&config)?, cmd_train(&config)?, cmd_eval(&config)?, cmd_sweep(&config)?] {
        let secs: f64 = manifest.stages.iter().map(|s| s.seconds).sum();
        println!("{:<9} {:>3} artifact(s) in {secs:.2}s", manifest.command, manifest.artifacts.len());
    }
    let sweep = std::fs::read_to_string(out.path().join("sweep.csv"))?;
    print!("{sweep}");
    assert_eq!(sweep.lines().count(), 4);
    assert!(out.path().join("sweep.svg").exists());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
