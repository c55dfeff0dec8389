//! Visibility against correlation order from synthetic frames: translation
//! averaged curves for m = 1..6 and a fixed-period cosine fit of each.
//!
//! `cargo run --release --example frame_correlation -- 20000 0.06`

use thermal_bell::correlator::{estimate_gm1_translated, fit_visibility, EstimatorOptions, TranslatedScheme};
use thermal_bell::frames::ColumnCache;
use thermal_bell::speckle::{SpeckleConfig, SpeckleSource};

fn main() -> thermal_bell::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(5000);
    let tau: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0.06);
    let config = SpeckleConfig { tau_ratio: tau, seed: 21, ..SpeckleConfig::default() };
    let geometry = config.geometry.clone();

    let source = SpeckleSource::new(config, n)?;
    let cache = ColumnCache::build(&source, &(0..geometry.width).collect::<Vec<_>>())?;
    let orders: Vec<usize> = (1..=6).collect();
    let scheme = TranslatedScheme::spanning_period(&geometry, &orders, 4, 2)?;
    let curves = estimate_gm1_translated(&cache, &scheme, &EstimatorOptions::default())?;

    println!("{n} frames, tau_i/tau_c = {tau}");
    println!("{:>3} {:>8} {:>8} {:>8} {:>10}", "m", "theory", "fit", "stderr", "midline");
    for c in &curves {
        let v = fit_visibility(c, &geometry)?;
        println!(
            "{:>3} {:>8.4} {:>8.4} {:>8.4} {:>10.2}",
            c.m,
            c.m as f64 / (c.m as f64 + 2.0),
            v.value,
            v.stderr,
            v.midline
        );
    }
    Ok(())
}
