//! The full run on the desk-scale scene: synthesis, VCA, pure pixels,
//! scaling factors, FCLS and the proposed unmixing, with every artifact
//! written to the output directory.
//!
//! ```text
//! cargo run --release --example full_pipeline -- out/desk
//! ```

use hyperunmix::config::RunConfig;
use hyperunmix::pipeline::run;

fn main() -> hyperunmix::error::Result<()> {
    let mut cfg = RunConfig::desk();
    if let Some(dir) = std::env::args().nth(1) {
        cfg.output_dir = dir.into();
    }
    let start = std::time::Instant::now();
    let report = run(&cfg)?;
    println!("finished in {:.1?}", start.elapsed());
    for (method, m) in &report.metrics {
        println!("\n{method}\n{m}");
    }
    for w in &report.warnings {
        println!("warning: {w}");
    }
    println!("\n{} files in {}", report.files.len(), cfg.output_dir.display());
    Ok(())
}
