// Space-time FIR filtering on a nearest-neighbor graph, with its frequency
// response and the Lipschitz constant that drives the stability bounds.

use stgnn_lab::graph::{build_knn_graph, sym_eigendecomposition};
use stgnn_lab::signal::SpaceTimeSignal;
use stgnn_lab::stfilter::{apply_static, estimate_lipschitz, frequency_response, operator_norm, FirFilter};
use stgnn_lab::timeline::SamplingGrid;

pub fn run_example() -> stgnn_lab::Result<()> {
    let positions: Vec<[f64; 2]> = (0..12)
        .map(|i| {
            let a = i as f64 * 0.9;
            [a.cos() * (1.0 + 0.1 * i as f64), a.sin() * (1.0 + 0.1 * i as f64)]
        })
        .collect();
    let graph = build_knn_graph(&positions, 3)?;
    let grid = SamplingGrid::new(0.1, 40)?;
    let filter = FirFilter::new(vec![0.5, 0.3, -0.1], grid.ts)?;

    // An impulse at node 0, time 0 spreads one hop and one step per tap.
    let mut x = SpaceTimeSignal::zeros(1, graph.n_nodes(), grid);
    x.set(0, 0, 0, 1.0);
    let y = apply_static(&filter, &graph, &x)?;
    let reached: Vec<usize> = (0..3)
        .map(|t| (0..graph.n_nodes()).filter(|&n| y.get(0, n, t) != 0.0).count())
        .collect();
    println!("nodes reached after 0/1/2 steps: {reached:?}");
    assert_eq!(reached[0], 1);

    let spectrum = sym_eigendecomposition(&graph)?;
    let (lo, hi) = (spectrum.lambda_min(), spectrum.lambda_max());
    let h0 = frequency_response(&filter, hi, 0.0);
    println!("spectrum [{lo:.3}, {hi:.3}], response at (λmax, ω=0) = {:.4}", h0.re);

    let c = estimate_lipschitz(&filter, (lo, hi), std::f64::consts::PI / grid.ts, 64)?;
    let norm = operator_norm(&filter, &graph, std::f64::consts::PI / grid.ts)?;
    println!("Lipschitz constant ≈ {c:.4}, operator norm ≈ {norm:.4}");
    assert!(c.is_finite() && norm > 0.0);
    Ok(())
}

#[allow(dead_code)]
fn main() -> stgnn_lab::Result<()> {
    run_example()
}
