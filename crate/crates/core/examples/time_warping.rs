// Clock deformations: the exponential-cosine warp, resampling a sampled
// trajectory under it, and moving a signal to a new sampling period.

use stgnn_lab::timeline::{regrid, resample_warped, warp_exponential_cosine, xi_l2_norm, SamplingGrid};

pub fn run_example() -> stgnn_lab::Result<()> {
    let grid = SamplingGrid::new(0.1, 100)?;
    let samples: Vec<f64> = (0..grid.n_steps).map(|k| (0.7 * grid.time(k)).sin()).collect();

    for eps in [0.0, 0.05, 0.2] {
        let warp = warp_exponential_cosine(eps)?;
        let warped = resample_warped(&samples, &grid, &warp)?;
        let gap = samples.iter().zip(&warped).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!(
            "eps {eps:.2}: ‖ξ‖₂ = {:.4} (κ·ε = {:.4}), max sample change {gap:.4}",
            xi_l2_norm(&warp),
            warp.kappa * eps
        );
        if eps == 0.0 {
            assert!(gap < 1e-12);
        }
    }

    let finer = regrid(&samples, grid.ts, 0.05)?;
    let coarser = regrid(&samples, grid.ts, 0.2)?;
    println!("regridded lengths: {} at 0.05 s, {} at 0.2 s", finer.len(), coarser.len());
    assert!((coarser[3] - samples[6]).abs() < 1e-12);
    Ok(())
}

#[allow(dead_code)]
fn main() -> stgnn_lab::Result<()> {
    run_example()
}
