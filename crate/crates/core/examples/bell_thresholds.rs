//! CH74 statistics at the canonical angles, the visibility thresholds for a
//! violation, and a coarse angle scan confirming the `±2√2` bracket.

use thermal_bell::analytic::visibility_tls;
use thermal_bell::bell::{
    angle_scan, bell_statistic, default_angles, min_violating_m, scan_extremes, threshold_visibility, Bound, ModelTag,
};

fn main() -> thermal_bell::Result<()> {
    for (tag, name) in [(ModelTag::SixTermSpe, "six-term"), (ModelTag::FourTermTls, "four-term")] {
        println!(
            "{name}: upper threshold {:.6}, lower threshold {:.6}",
            threshold_visibility(tag, Bound::Upper),
            threshold_visibility(tag, Bound::Lower)
        );
    }
    println!("smallest violating m: {}", min_violating_m());

    let upper = default_angles(Bound::Upper);
    println!("\n{:>3} {:>8} {:>11} {}", "m", "V", "statistic", "violated");
    for m in 1..=8 {
        let v = visibility_tls(m)?;
        let r = bell_statistic(ModelTag::FourTermTls, v, &upper)?;
        println!("{m:>3} {v:>8.5} {:>+11.7} {}", r.statistic, r.violated());
    }

    let scan = angle_scan(ModelTag::FourTermTls, 1.0, std::f64::consts::PI / 8.0)?;
    if let Some(((_, hi), (_, lo))) = scan_extremes(&scan) {
        println!("\nscan over {} angle sets at V = 1: max {hi:+.6}, min {lo:+.6}", scan.len());
    }
    Ok(())
}
