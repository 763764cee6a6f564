//! Fully constrained least squares with the true library spectra and with
//! VCA endmembers.
//!
//! ```text
//! cargo run --release --example fcls_baseline
//! ```

use hyperunmix::extraction::extract_endmembers_vca;
use hyperunmix::io::bundled_library;
use hyperunmix::metrics::{match_endmember_matrices, rmse_abundances};
use hyperunmix::synthgen::{generate, SynthConfig};
use hyperunmix::unmixing::fcls;

fn main() -> hyperunmix::error::Result<()> {
    let cfg = SynthConfig::default();
    let gt = generate(&cfg, &bundled_library().resample(cfg.bands)?)?;

    let a = fcls(&gt.cube, &gt.m_true)?;
    println!("library endmembers: RMSE_A {:.5}", rmse_abundances(&a, &gt.a_true, &[0, 1, 2])?);

    let m0 = extract_endmembers_vca(&gt.cube, cfg.endmembers, 0)?.endmembers;
    let perm = match_endmember_matrices(&m0, &gt.m_true)?;
    let a = fcls(&gt.cube, &m0)?;
    println!("VCA endmembers:     RMSE_A {:.5} (matching {perm:?})", rmse_abundances(&a, &gt.a_true, &perm)?);
    assert!(a.is_feasible());
    Ok(())
}
