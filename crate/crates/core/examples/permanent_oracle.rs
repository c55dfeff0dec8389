//! The Gaussian moment theorem as an oracle: thermal correlations of any
//! order are permanents of the coherence matrix. Compares the permanent
//! with the closed form over a phase grid.

use std::f64::consts::PI;

use thermal_bell::analytic::{gm1_tls_set_normalized, DetectorSetting, SettingPair, SourceModel};
use thermal_bell::gaussian::gm1_from_permanent;

fn main() -> thermal_bell::Result<()> {
    let model = SourceModel::thermal(1.0, 1.0)?;
    for m in 1..=8 {
        let mut worst: f64 = 0.0;
        for k in 0..64 {
            let delta = 2.0 * PI * k as f64 / 64.0;
            let oracle = gm1_from_permanent(m, delta, 0.0, &model)?.normalized;
            let closed = gm1_tls_set_normalized(m, DetectorSetting::new(delta), DetectorSetting::new(0.0), None)?
                .get(SettingPair::D1D2)?;
            worst = worst.max((oracle / closed - 1.0).abs());
        }
        println!("m = {m}: max relative deviation over 64 phases {worst:.2e}");
    }
    Ok(())
}
