//! Closed-form correlations of two independent sources: the second-order
//! fringes of single photon emitters and thermal light, then the visibility
//! ladder `m/(m+2)` of higher orders and the post-selected probabilities.
//!
//! Run with `cargo run --example analytic_correlations`.

use std::f64::consts::PI;

use thermal_bell::analytic::{
    g2_spe, g2_tls, gm1_tls_set_normalized, probabilities_four, second_order_visibility, visibility_tls_ratio,
    DetectorSetting, SettingPair, SourceKind, SourceModel,
};

fn main() -> thermal_bell::Result<()> {
    let thermal = SourceModel::thermal(1.0, 1.0)?;
    let d1 = DetectorSetting::new(0.0);

    println!("second order, E0 = n = 1");
    println!("{:>8} {:>10} {:>10}", "delta", "G2 spe", "G2 tls");
    for k in 0..=4 {
        let d2 = DetectorSetting::new(k as f64 * PI / 4.0);
        let spe = g2_spe(d1, d2, second_order_visibility(SourceKind::SinglePhoton), 1.0)?;
        let tls = g2_tls(d1, d2, second_order_visibility(SourceKind::Thermal), &thermal)?;
        println!("{:>8.4} {:>10.4} {:>10.4}", d2.delta, spe, tls);
    }

    println!("\nvisibility of the (m+1)-th order fringe");
    for m in 1..=8 {
        let (num, den) = visibility_tls_ratio(m)?;
        let set = gm1_tls_set_normalized(m, d1, DetectorSetting::new(0.0), None)?;
        println!("m = {m}: V = {num}/{den}, peak g = {}", set.get(SettingPair::D1D2)?);
    }

    println!("\npost-selected probabilities at m = 6, delta = pi/4");
    let set = gm1_tls_set_normalized(6, DetectorSetting::new(PI / 4.0), DetectorSetting::new(0.0), None)?;
    let p = probabilities_four(&set)?;
    for pair in SettingPair::CROSS {
        println!("  {:<6} {:.6}", pair.label(), p.get(pair)?);
    }
    println!("  marginals {:.6} {:.6}", p.marginal_1, p.marginal_2);
    Ok(())
}
