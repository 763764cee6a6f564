//! Pure-pixel selection with both policies: a fixed count per endmember and
//! an angle threshold.
//!
//! ```text
//! cargo run --release --example pure_pixels
//! ```

use hyperunmix::extraction::{extract_endmembers_vca, find_pure_pixels, PurePolicy};
use hyperunmix::io::bundled_library;
use hyperunmix::synthgen::{generate, SynthConfig};

fn main() -> hyperunmix::error::Result<()> {
    let cfg = SynthConfig::default();
    let gt = generate(&cfg, &bundled_library().resample(cfg.bands)?)?;
    let m0 = extract_endmembers_vca(&gt.cube, cfg.endmembers, 0)?.endmembers;

    for policy in [PurePolicy::Counts(vec![100, 50, 10]), PurePolicy::Threshold(0.05)] {
        let pure = find_pure_pixels(&gt.cube, &m0, &policy)?;
        println!("{policy:?}: threshold used {:.4} rad", pure.threshold_used);
        for (k, set) in pure.sets.iter().enumerate() {
            // Fraction of the selected pixels that are truly pure for some endmember.
            let exact = set
                .iter()
                .filter(|&&(a, b)| gt.a_true.column(gt.cube.index(a, b)).max() == 1.0)
                .count();
            println!("  endmember {k}: {} pixels, {exact} truly pure", set.len());
        }
        for w in &pure.warnings {
            println!("  warning: {w}");
        }
    }
    Ok(())
}
