//! Label matching and scores on a relabeled estimate.
//!
//! ```text
//! cargo run --release --example metrics
//! ```

use hyperunmix::io::bundled_library;
use hyperunmix::metrics::{evaluate, match_endmembers, METRICS_HEADER};
use hyperunmix::synthgen::{generate, SynthConfig};

fn main() -> hyperunmix::error::Result<()> {
    let cfg = SynthConfig { n1: 20, n2: 20, ..SynthConfig::default() };
    let gt = generate(&cfg, &bundled_library().resample(cfg.bands)?)?;
    let m_true = gt.endmember_tensor()?;

    // The truth with its labels shuffled scores perfectly once matched.
    let shuffle = [2, 0, 1];
    let m_est = m_true.permute_columns(&shuffle);
    let a_est = gt.a_true.permute_rows(&shuffle);
    let perm = match_endmembers(&m_est, &m_true)?;
    // perm[k] is the estimated column holding true endmember k: the inverse shuffle.
    println!("shuffle {shuffle:?}, recovered matching {perm:?}");
    let report = evaluate(&gt.cube, &a_est, &m_est, &gt.a_true, Some(&m_true), &perm, false)?;
    println!("{report}");
    println!("{METRICS_HEADER}\n{}", report.csv_row());
    Ok(())
}
