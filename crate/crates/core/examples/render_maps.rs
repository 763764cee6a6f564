//! Heatmaps of the true abundances and band-mean scaling factors.
//!
//! ```text
//! cargo run --release --example render_maps -- out/maps
//! ```

use hyperunmix::io::{self, bundled_library};
use hyperunmix::synthgen::{generate, SynthConfig};

fn main() -> hyperunmix::error::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "out/maps".into());
    std::fs::create_dir_all(&dir).map_err(|e| hyperunmix::error::Error::io(&dir, e))?;
    let cfg = SynthConfig::default();
    let gt = generate(&cfg, &bundled_library().resample(cfg.bands)?)?;

    println!("colormap: 0 -> {:?}, 0.5 -> {:?}, 1 -> {:?}", io::colormap(0.0), io::colormap(0.5), io::colormap(1.0));
    for f in io::render_abundances(&dir, &gt.a_true)?.into_iter().chain(io::render_psi(&dir, &gt.psi_true)?) {
        println!("wrote {}", f.display());
    }
    Ok(())
}
