//! Generates a seeded scene from the bundled library and writes it with its
//! ground truth.
//!
//! ```text
//! cargo run --release --example synthetic_scene -- out/scene
//! ```

use hyperunmix::io::{bundled_library, Dtype};
use hyperunmix::pipeline::write_scene;
use hyperunmix::synthgen::{generate, SynthConfig};

fn main() -> hyperunmix::error::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "out/scene".into());
    let cfg = SynthConfig { n1: 30, n2: 40, seed: 11, ..SynthConfig::default() };
    let library = bundled_library().resample(cfg.bands)?;
    let gt = generate(&cfg, &library)?;

    println!("library: {:?}", library.names.as_deref().unwrap_or_default());
    println!("measured SNR: {:.2} dB", gt.measured_snr_db());
    let pure = gt.a_true.matrix().column_iter().filter(|c| c.max() == 1.0).count();
    println!("pure pixels: {pure} of {}", gt.a_true.pixels());
    let psi = gt.psi_true.data();
    let (lo, hi) = psi.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
    println!("scaling factors in [{lo:.3}, {hi:.3}]");

    for f in write_scene(dir.as_ref(), &gt, Dtype::F32)? {
        println!("wrote {}", f.display());
    }
    Ok(())
}
