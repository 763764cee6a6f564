//! Unmixing the desk scene with estimated scaling factors, against FCLS and
//! against the same unmixing with all-ones scaling.
//!
//! ```text
//! cargo run --release --example unmix_scene
//! ```

use hyperunmix::config::RunConfig;
use hyperunmix::extraction::{extract_endmembers_vca, find_pure_pixels};
use hyperunmix::metrics::{match_endmember_matrices, rmse_abundances};
use hyperunmix::pipeline::load_scene;
use hyperunmix::tensor::Tensor4;
use hyperunmix::unmixing::{fcls, unmix};
use hyperunmix::variability::estimate_variability;

fn main() -> hyperunmix::error::Result<()> {
    let cfg = RunConfig::desk();
    let (cube, gt) = load_scene(&cfg)?;
    let gt = gt.expect("synthetic scene");
    let m0 = extract_endmembers_vca(&cube, cfg.synth.endmembers, cfg.vca_seed)?.endmembers;
    let perm = match_endmember_matrices(&m0, &gt.m_true)?;
    let pure = find_pure_pixels(&cube, &m0, &cfg.pure)?;
    let psi = estimate_variability(&cube, &m0, &pure, &cfg.variability)?.psi;

    let baseline = fcls(&cube, &m0)?;
    let with_psi = unmix(&cube, &m0, &psi, &cfg.unmix, Some(&baseline))?;
    let ones = unmix(&cube, &m0, &Tensor4::ones(psi.dims()), &cfg.unmix, Some(&baseline))?;

    println!("FCLS          RMSE_A {:.5}", rmse_abundances(&baseline, &gt.a_true, &perm)?);
    println!("unmix, ones   RMSE_A {:.5}", rmse_abundances(&ones.abundances, &gt.a_true, &perm)?);
    println!("unmix, Psi    RMSE_A {:.5}", rmse_abundances(&with_psi.abundances, &gt.a_true, &perm)?);
    println!("outer iterations: {}", with_psi.iterations);
    println!("objective: {:?}", with_psi.objective_trace);
    println!("warnings: {}", with_psi.warnings.len());
    Ok(())
}
