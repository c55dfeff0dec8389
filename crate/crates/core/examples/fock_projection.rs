//! Photon detection as state projection: after `m` detections at one phase
//! the two thermal source modes become partially coherent, with normalized
//! cross correlation `m/(m+2)` regardless of the mean photon number.

use thermal_bell::fock::{cross_corr, project_thermal};

fn main() -> thermal_bell::Result<()> {
    println!("{:>3} {:>6} {:>5} {:>12} {:>12}", "m", "nbar", "dim", "|C(m)|", "m/(m+2)");
    for m in 1..=4 {
        for nbar in [0.05, 0.2, 0.5] {
            let state = project_thermal(nbar, 0.3, m)?;
            let c = cross_corr(&state)?;
            println!(
                "{m:>3} {nbar:>6} {:>5} {:>12.9} {:>12.9}",
                state.dim(),
                c.norm(),
                m as f64 / (m as f64 + 2.0)
            );
        }
    }
    let state = project_thermal(0.2, 0.0, 3)?;
    println!(
        "\nm = 3, nbar = 0.2: occupations {:.4} and {:.4} (each (m+2)nbar/2 = {:.4})",
        state.occupation(1),
        state.occupation(2),
        5.0 * 0.2 / 2.0
    );
    Ok(())
}
