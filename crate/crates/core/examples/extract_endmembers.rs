//! VCA on a synthetic scene, with the spectral angle of every extracted
//! endmember to the library spectrum it matches.
//!
//! ```text
//! cargo run --release --example extract_endmembers
//! ```

use hyperunmix::extraction::{extract_endmembers_vca, spectral_angle};
use hyperunmix::io::bundled_library;
use hyperunmix::metrics::match_endmember_matrices;
use hyperunmix::synthgen::{generate, SynthConfig};

fn main() -> hyperunmix::error::Result<()> {
    let cfg = SynthConfig::default();
    let gt = generate(&cfg, &bundled_library().resample(cfg.bands)?)?;
    let ex = extract_endmembers_vca(&gt.cube, cfg.endmembers, 0)?;
    let perm = match_endmember_matrices(&ex.endmembers, &gt.m_true)?;
    let names = gt.m_true.names.clone().unwrap_or_default();
    for (k, &j) in perm.iter().enumerate() {
        let n = ex.pixel_indices[j];
        let angle = spectral_angle(ex.endmembers.column(j).as_slice(), gt.m_true.column(k).as_slice())?;
        println!(
            "{:<12} column {j} from pixel {:?}: angle {angle:.4} rad, true abundance {:.3}",
            names.get(k).map(String::as_str).unwrap_or("?"),
            gt.cube.coords(n),
            gt.a_true.matrix()[(k, n)],
        );
    }
    Ok(())
}
