//! Scaling-factor estimation from pure pixels on the desk scene, scored
//! against the truth. The true library spectra serve as the reference so
//! the estimate and the ground truth share a scale.
//!
//! ```text
//! cargo run --release --example variability_estimation
//! ```

use hyperunmix::config::RunConfig;
use hyperunmix::extraction::find_pure_pixels;
use hyperunmix::metrics::rmse_tensor;
use hyperunmix::pipeline::load_scene;
use hyperunmix::tensor::Tensor4;
use hyperunmix::variability::estimate_variability;

fn main() -> hyperunmix::error::Result<()> {
    let cfg = RunConfig::desk();
    let (cube, gt) = load_scene(&cfg)?;
    let gt = gt.expect("synthetic scene");
    let pure = find_pure_pixels(&cube, &gt.m_true, &cfg.pure)?;

    let est = estimate_variability(&cube, &gt.m_true, &pure, &cfg.variability)?;
    for (i, v) in est.objective_trace.iter().enumerate().step_by(5) {
        println!("iteration {:>2}: objective {v:.6e}", i + 1);
    }
    let ones = Tensor4::ones(gt.psi_true.dims());
    println!("RMSE_Psi estimate: {:.5}", rmse_tensor(&est.psi, &gt.psi_true)?);
    println!("RMSE_Psi all ones: {:.5}", rmse_tensor(&ones, &gt.psi_true)?);
    for w in &est.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
