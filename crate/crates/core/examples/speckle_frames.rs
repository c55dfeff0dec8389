//! Synthetic double-slit speckle: generate frames, write and re-read them as
//! SPKL, and report the statistics of a single slit and of both slits.
//!
//! `cargo run --release --example speckle_frames -- 5000`

use thermal_bell::frames::{FrameSource, Pixel};
use thermal_bell::speckle::{generate_frames, SlitMask, SpeckleConfig, SpeckleSource};
use thermal_bell::spkl;

fn main() -> thermal_bell::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(2000);
    let config = SpeckleConfig { seed: 7, ..SpeckleConfig::default() };
    let g = &config.geometry;
    println!("fringe period {:.4} mm = {:.2} pixels", g.fringe_period() * 1e3, g.fringe_period_pixels());

    let frames = generate_frames(&config, n)?;
    println!("{n} frames: mean intensity {:.4}, contrast {:.4}", frames.mean_intensity(), frames.speckle_contrast());

    let dir = std::env::temp_dir().join("thermal_bell_speckle_example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("frames.spkl");
    spkl::save(&frames, &path)?;
    let back = spkl::load(&path)?;
    println!("round trip through {}: identical = {}", path.display(), back == frames);

    let single = SpeckleSource::new(SpeckleConfig { slits: SlitMask::First, tau_ratio: 0.0, ..config.clone() }, n)?;
    let (mut s1, mut s2) = (0.0, 0.0);
    let mut v = [0.0];
    for f in 0..n {
        single.read_pixels(f, &[Pixel::new(g.width / 2, 0)], &mut v);
        s1 += v[0];
        s2 += v[0] * v[0];
    }
    println!("single slit <I^2>/<I>^2 = {:.3} (exponential statistics give 2)", s2 * n as f64 / (s1 * s1));
    Ok(())
}
