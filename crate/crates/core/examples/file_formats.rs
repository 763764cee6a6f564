//! Cube, tensor and CSV round trips, and the error reported for a damaged
//! file.
//!
//! ```text
//! cargo run --release --example file_formats
//! ```

use hyperunmix::io::{self, bundled_library, Dtype};
use hyperunmix::synthgen::{generate, SynthConfig};

fn main() -> hyperunmix::error::Result<()> {
    let cfg = SynthConfig { n1: 8, n2: 6, bands: 12, sigma_spatial: 2.0, abundance_sigma: 1.5, ..SynthConfig::default() };
    let gt = generate(&cfg, &bundled_library().resample(cfg.bands)?)?;

    let bytes = io::encode_cube(&gt.cube, Dtype::F64);
    let header_len = bytes.windows(11).position(|w| w == b"end_header\n").unwrap() + 11;
    println!("{}", String::from_utf8_lossy(&bytes[..header_len]));
    let back = io::decode_cube(&bytes, "memory".as_ref())?;
    println!("f64 cube round trip exact: {}", back == gt.cube);

    let psi = io::decode_tensor(&io::encode_tensor(&gt.psi_true, Dtype::F64), "memory".as_ref())?;
    println!("f64 tensor round trip exact: {}", psi == gt.psi_true);

    let text = io::format_abundances(&gt.a_true, gt.m_true.names.as_deref())?;
    println!("abundance CSV header: {}", text.lines().next().unwrap());
    println!("CSV round trip exact: {}", io::parse_abundances(&text, "memory".as_ref())? == gt.a_true);

    let truncated = &bytes[..bytes.len() - 5];
    match io::decode_cube(truncated, "truncated.hscube".as_ref()) {
        Err(e) => println!("damaged file: {e}"),
        Ok(_) => unreachable!("a truncated payload is rejected"),
    }
    Ok(())
}
