//! Writes a small synthetic corpus to the directory given as the first
//! argument.

use stp_core::corpus::{generate_synthetic, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "synth-out".into());
    let count = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(8);
    let m = generate_synthetic(
        &SynthConfig {
            count,
            ..SynthConfig::default()
        },
        std::path::Path::new(&out),
    )?;
    println!("{} images, {} lines", m.entries.len(), m.total_rects(None));
    Ok(())
}
