//! Rank-2 CP fit of a small four-way tensor.
//!
//! ```text
//! cargo run --release --example cp_decomposition
//! ```

use hyperunmix::tensor::{cp_als, CpDecomposition, CpOptions};
use nalgebra::DMatrix;

fn main() -> hyperunmix::error::Result<()> {
    let dims = [4, 4, 5, 3];
    let factors = dims.map(|d| DMatrix::from_fn(d, 2, |i, j| ((i + 1) as f64 * 0.7 + j as f64).sin()));
    let truth = CpDecomposition::new(vec![2.0, 0.5], factors)?.reconstruct()?;

    let fit = cp_als(&truth, &CpOptions { rank: 2, seed: 7, max_iter: 500, rel_tol: 1e-12 })?;
    println!("sweeps: {} (converged: {})", fit.sweeps, fit.converged);
    for (s, e) in fit.error_trace.iter().enumerate().step_by(10) {
        println!("sweep {s:>4}: error {e:.3e}");
    }
    let mut d = fit.decomposition;
    d.canonicalize();
    println!("weights: {:?}", d.weights);
    println!("relative error: {:.3e}", fit.error_trace.last().unwrap() / truth.frobenius_norm());
    Ok(())
}
