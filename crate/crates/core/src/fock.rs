//! Exact two-mode computations on a truncated Fock space.
//!
//! Basis states `|n₁, n₂⟩` with `n₁, n₂ < dim` are stored at index
//! `n₁·dim + n₂`. Modes 1 and 2 are the two source modes. A detection at
//! phase `δ` applies `E⁺(δ) = E₀(a₁ + e^{iδ} a₂)`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest trace deficit accepted when building a truncated thermal state.
pub const THERMAL_TRUNCATION_TOL: f64 = 1e-8;
/// Target tail mass when choosing a cutoff automatically.
pub const AUTO_TAIL_TOL: f64 = 1e-10;
/// Tolerance for vanishing first moments in [`cross_corr`].
pub const FIRST_MOMENT_TOL: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Density matrix of the two source modes.
#[derive(Clone, Debug)]
pub struct TwoModeState {
    dim: usize,
    matrix: DMatrix<Complex64>,
    /// Probability mass lost to the cutoff before renormalization, or the
    /// mass on the outermost Fock shell after a projection.
    pub trace_deficit: f64,
    /// Set when `trace_deficit` exceeds [`AUTO_TAIL_TOL`].
    pub under_truncated: bool,
}

/// `E⁺(δ) = E₀(a₁ + e^{iδ} a₂)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectionOperator {
    pub delta: f64,
    pub scale: f64,
}

impl DetectionOperator {
    pub fn new(delta: f64) -> Self {
        DetectionOperator { delta, scale: 1.0 }
    }

    pub fn with_scale(delta: f64, scale: f64) -> Self {
        DetectionOperator { delta, scale }
    }

    fn phase(&self) -> Complex64 {
        Complex64::from_polar(1.0, self.delta)
    }
}

impl TwoModeState {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    fn index(&self, n1: usize, n2: usize) -> usize {
        n1 * self.dim + n2
    }

    fn from_matrix(dim: usize, matrix: DMatrix<Complex64>, trace_deficit: f64) -> Self {
        TwoModeState { dim, matrix, trace_deficit, under_truncated: trace_deficit > AUTO_TAIL_TOL }
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    /// Largest elementwise deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.matrix.nrows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue; dense diagonalization, intended for checks on
    /// small cutoffs.
    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
        herm.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Expectation of `a₁†a₁` (mode 1) or `a₂†a₂` (mode 2).
    pub fn occupation(&self, mode: usize) -> f64 {
        let mut total = 0.0;
        for n1 in 0..self.dim {
            for n2 in 0..self.dim {
                let n = if mode == 1 { n1 } else { n2 };
                let i = self.index(n1, n2);
                total += n as f64 * self.matrix[(i, i)].re;
            }
        }
        total
    }

    /// `⟨b†b⟩` for the detected mode `b = (a₁ + e^{iδ} a₂)/√2`.
    pub fn detected_mode_occupation(&self, delta: f64) -> f64 {
        let op = DetectionOperator::new(delta);
        0.5 * expect_normal(self, &[op]).re
    }

    /// `⟨a₁⟩` and `⟨a₂⟩`.
    pub fn first_moments(&self) -> (Complex64, Complex64) {
        let (mut a1, mut a2) = (ZERO, ZERO);
        for n1 in 0..self.dim {
            for n2 in 0..self.dim {
                let i = self.index(n1, n2);
                // tr(ρ a) = Σ ρ[k,i] ⟨i|a|k⟩
                if n1 > 0 {
                    a1 += (n1 as f64).sqrt() * self.matrix[(self.index(n1 - 1, n2), i)];
                }
                if n2 > 0 {
                    a2 += (n2 as f64).sqrt() * self.matrix[(self.index(n1, n2 - 1), i)];
                }
            }
        }
        (a1, a2)
    }

    /// `⟨a₁†a₂⟩`.
    pub fn coherence_12(&self) -> Complex64 {
        let mut total = ZERO;
        for n1 in 0..self.dim - 1 {
            for n2 in 1..self.dim {
                // a₁†a₂ |n₁,n₂⟩ = √((n₁+1) n₂) |n₁+1, n₂−1⟩
                let from = self.index(n1, n2);
                let to = self.index(n1 + 1, n2 - 1);
                total += ((n1 + 1) as f64 * n2 as f64).sqrt() * self.matrix[(from, to)];
            }
        }
        total
    }

    /// Mass on the outermost Fock shell of either mode.
    pub fn boundary_mass(&self) -> f64 {
        let last = self.dim - 1;
        let mut mass = 0.0;
        for n1 in 0..self.dim {
            for n2 in 0..self.dim {
                if n1 == last || n2 == last {
                    let i = self.index(n1, n2);
                    mass += self.matrix[(i, i)].re;
                }
            }
        }
        mass
    }

    /// Exchanges the two mode labels.
    pub fn swap_modes(&self) -> TwoModeState {
        let d = self.dim;
        let perm = |i: usize| (i % d) * d + i / d;
        let matrix = DMatrix::from_fn(d * d, d * d, |i, j| self.matrix[(perm(i), perm(j))]);
        TwoModeState::from_matrix(d, matrix, self.trace_deficit)
    }

    /// Applies the passive phase shift `a₂ → e^{iφ} a₂`.
    pub fn phase_shift_mode2(&self, phi: f64) -> TwoModeState {
        self.phase_shift(0.0, phi)
    }

    /// Applies `a₁ → e^{iφ₁} a₁`, `a₂ → e^{iφ₂} a₂`.
    pub fn phase_shift(&self, phi1: f64, phi2: f64) -> TwoModeState {
        let d = self.dim;
        let phase = |i: usize| phi1 * (i / d) as f64 + phi2 * (i % d) as f64;
        let matrix = DMatrix::from_fn(d * d, d * d, |i, j| {
            self.matrix[(i, j)] * Complex64::from_polar(1.0, phase(i) - phase(j))
        });
        TwoModeState::from_matrix(d, matrix, self.trace_deficit)
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim < 2 {
        return Err(Error::param("dim", format!("must be >= 2, got {dim}")));
    }
    Ok(())
}

/// Product of two independent thermal modes with mean photon number `n̄`,
/// truncated at `dim` and renormalized.
pub fn thermal_state(mean_photons: f64, dim: usize) -> Result<TwoModeState> {
    check_dim(dim)?;
    if !(mean_photons >= 0.0 && mean_photons.is_finite()) {
        return Err(Error::param("mean_photons", format!("must be >= 0, got {mean_photons}")));
    }
    let ratio = mean_photons / (1.0 + mean_photons);
    let weights: Vec<f64> = (0..dim).map(|n| (1.0 - ratio) * ratio.powi(n as i32)).collect();
    let kept: f64 = weights.iter().sum();
    let trace_deficit = 1.0 - kept * kept;
    if trace_deficit > THERMAL_TRUNCATION_TOL {
        return Err(Error::UnderTruncated {
            detail: format!("thermal n̄ = {mean_photons} loses {trace_deficit:.3e} of its trace at dim {dim}"),
            suggested_dim: thermal_dim(mean_photons, THERMAL_TRUNCATION_TOL / 2.0),
        });
    }
    let mut matrix = DMatrix::from_element(dim * dim, dim * dim, ZERO);
    for n1 in 0..dim {
        for n2 in 0..dim {
            let i = n1 * dim + n2;
            matrix[(i, i)] = Complex64::new(weights[n1] * weights[n2] / (kept * kept), 0.0);
        }
    }
    Ok(TwoModeState { dim, matrix, trace_deficit, under_truncated: false })
}

/// Smallest cutoff keeping the two-mode thermal trace deficit below `tol`.
pub fn thermal_dim(mean_photons: f64, tol: f64) -> usize {
    let ratio = mean_photons / (1.0 + mean_photons);
    let mut dim = 2;
    while 1.0 - (1.0 - ratio.powi(dim as i32)).powi(2) > tol {
        dim += 1;
    }
    dim
}

/// Two single photon emitters, `|1,1⟩⟨1,1|`.
pub fn spe_state(dim: usize) -> Result<TwoModeState> {
    check_dim(dim)?;
    let mut matrix = DMatrix::from_element(dim * dim, dim * dim, ZERO);
    let i = dim + 1;
    matrix[(i, i)] = Complex64::new(1.0, 0.0);
    Ok(TwoModeState::from_matrix(dim, matrix, 0.0))
}

/// Column action of `E⁺`: returns `E⁺ ρ`.
fn lower_left(state: &TwoModeState, op: &DetectionOperator, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let d = state.dim;
    let n = d * d;
    let phase = op.phase() * op.scale;
    let scale = Complex64::new(op.scale, 0.0);
    let mut out = DMatrix::from_element(n, n, ZERO);
    for n1 in 0..d {
        for n2 in 0..d {
            let src = n1 * d + n2;
            // a₁|n₁,n₂⟩ = √n₁ |n₁−1,n₂⟩ and a₂|n₁,n₂⟩ = √n₂ |n₁,n₂−1⟩
            if n1 > 0 {
                let c = scale * (n1 as f64).sqrt();
                let dst = (n1 - 1) * d + n2;
                for j in 0..n {
                    out[(dst, j)] += c * rho[(src, j)];
                }
            }
            if n2 > 0 {
                let c = phase * (n2 as f64).sqrt();
                let dst = n1 * d + n2 - 1;
                for j in 0..n {
                    out[(dst, j)] += c * rho[(src, j)];
                }
            }
        }
    }
    out
}

/// `K ρ K†` where `K` is the product of the given detection operators.
fn sandwich(state: &TwoModeState, ops: &[DetectionOperator]) -> DMatrix<Complex64> {
    let mut rho = state.matrix.clone();
    for op in ops {
        let left = lower_left(state, op, &rho);
        // (K ρ K†) = (K (K ρ)†)† for Hermitian ρ, so reuse the column action.
        rho = lower_left(state, op, &left.adjoint()).adjoint();
    }
    rho
}

/// `⟨E⁻(δ_k)…E⁻(δ_1) E⁺(δ_1)…E⁺(δ_k)⟩` for the listed detection operators.
pub fn expect_normal(state: &TwoModeState, ops: &[DetectionOperator]) -> Complex64 {
    sandwich(state, ops).trace()
}

/// Conditional state after `m` detections at phase `δ₁`:
/// `E⁺(δ₁)^m ρ E⁻(δ₁)^m / tr(·)`.
pub fn project_m(state: &TwoModeState, delta1: f64, m: usize) -> Result<TwoModeState> {
    if m < 1 {
        return Err(Error::param("m", "must be >= 1"));
    }
    let ops = vec![DetectionOperator::new(delta1); m];
    let mut rho = sandwich(state, &ops);
    let trace = rho.trace().re;
    if !(trace >= 1e-300) {
        return Err(Error::ZeroProbability(trace));
    }
    rho /= Complex64::new(trace, 0.0);
    let mut projected = TwoModeState::from_matrix(state.dim, rho, 0.0);
    let tail = projected.boundary_mass();
    projected.trace_deficit = tail;
    projected.under_truncated = tail > AUTO_TAIL_TOL;
    Ok(projected)
}

/// Cutoff for an m-fold projection of a thermal pair such that the
/// pre-projection total photon number stays below `dim − 1` up to `tol`.
///
/// After projection the detected mode carries `NB(m+1)` and the orthogonal
/// mode a geometric distribution, so total photon number is `NB(m+2)` plus
/// the `m` detected photons.
pub fn auto_dim(mean_photons: f64, m: usize, tol: f64) -> usize {
    let x = mean_photons / (1.0 + mean_photons);
    let r = (m + 2) as f64;
    // NB(r, x) pmf: C(n+r−1, n) (1−x)^r x^n, accumulated until the tail is small.
    let mut pmf = (1.0 - x).powf(r);
    let mut cdf = pmf;
    let mut n = 0usize;
    while 1.0 - cdf > tol && n < 10_000 {
        n += 1;
        pmf *= x * (n as f64 + r - 1.0) / n as f64;
        cdf += pmf;
    }
    (n + m + 2).max(2)
}

/// Thermal pair projected by `m` detections with an automatically chosen
/// cutoff, raised once if the post-projection tail check fails.
pub fn project_thermal(mean_photons: f64, delta1: f64, m: usize) -> Result<TwoModeState> {
    let mut dim = auto_dim(mean_photons, m, AUTO_TAIL_TOL).max(thermal_dim(mean_photons, THERMAL_TRUNCATION_TOL));
    for attempt in 0..2 {
        let projected = project_m(&thermal_state(mean_photons, dim)?, delta1, m)?;
        if !projected.under_truncated {
            return Ok(projected);
        }
        if attempt == 1 {
            return Err(Error::UnderTruncated {
                detail: format!("projected tail mass {:.3e} at dim {dim}", projected.trace_deficit),
                suggested_dim: dim + dim / 2 + 4,
            });
        }
        dim += dim / 2 + 4;
    }
    unreachable!()
}

/// Normalized cross correlation of the two source modes,
/// `⟨a₁†a₂⟩ / √(⟨a₁†a₁⟩⟨a₂†a₂⟩)`.
pub fn cross_corr(state: &TwoModeState) -> Result<Complex64> {
    let (n1, n2) = (state.occupation(1), state.occupation(2));
    let smallest = n1.min(n2);
    if !(smallest >= 1e-300) {
        return Err(Error::VanishingOccupation(smallest));
    }
    let (m1, m2) = state.first_moments();
    let largest = m1.norm().max(m2.norm());
    if largest > FIRST_MOMENT_TOL {
        return Err(Error::NonzeroFirstMoment(largest));
    }
    Ok(state.coherence_12() / (n1 * n2).sqrt())
}

/// `⟨E⁻(δ₁)^m E⁻(δ₂) E⁺(δ₂) E⁺(δ₁)^m⟩` with unit field amplitude. `m = 0`
/// gives the first-order correlation at `δ₂`.
pub fn expect_gm1(state: &TwoModeState, m: usize, delta1: f64, delta2: f64) -> Result<f64> {
    expect_gm1_scaled(state, m, delta1, delta2, 1.0)
}

pub fn expect_gm1_scaled(state: &TwoModeState, m: usize, delta1: f64, delta2: f64, field_amp: f64) -> Result<f64> {
    if state.under_truncated {
        return Err(Error::UnderTruncated {
            detail: format!("input state tail mass {:.3e}", state.trace_deficit),
            suggested_dim: state.dim + state.dim / 2 + 4,
        });
    }
    let mut ops = vec![DetectionOperator::with_scale(delta1, field_amp); m];
    ops.push(DetectionOperator::with_scale(delta2, field_amp));
    let value = expect_normal(state, &ops);
    Ok(value.re.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn thermal_mean_photon_number() {
        let rho = thermal_state(0.2, 15).unwrap();
        assert_relative_eq!(rho.occupation(1), 0.2, epsilon = 1e-9);
        assert_relative_eq!(rho.occupation(2), 0.2, epsilon = 1e-9);
        assert_relative_eq!(rho.trace().re, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn vacuum_limit_and_truncation_error() {
        let rho = thermal_state(0.0, 3).unwrap();
        assert_eq!(rho.matrix()[(0, 0)].re, 1.0);
        assert_eq!(rho.purity(), 1.0);
        assert!(matches!(thermal_state(2.0, 4), Err(Error::UnderTruncated { .. })));
        assert!(thermal_state(0.2, 1).is_err());
    }

    #[test]
    fn mode_swap_symmetry() {
        let rho = thermal_state(0.3, 16).unwrap();
        let swapped = rho.swap_modes();
        assert!((rho.matrix() - swapped.matrix()).camax() < 1e-15);
    }

    #[test]
    fn spe_state_properties() {
        let rho = spe_state(3).unwrap();
        assert_eq!(rho.occupation(1) + rho.occupation(2), 2.0);
        assert_relative_eq!(rho.purity(), 1.0);
        for k in 0..16 {
            let d2 = k as f64 * 0.4;
            let g = expect_gm1(&rho, 1, 0.25, d2).unwrap();
            let want = 2.0 * (1.0 + (0.25 - d2).cos());
            assert!((g - want).abs() <= 1e-10 * want.max(1e-12) + 1e-15, "{g} vs {want}");
        }
    }

    #[test]
    fn first_order_via_fock() {
        let rho = thermal_state(1.0, 40).unwrap();
        assert_relative_eq!(expect_gm1(&rho, 0, 0.0, 0.3).unwrap(), 2.0, max_relative = 1e-9);
        let spe = spe_state(2).unwrap();
        assert_relative_eq!(expect_gm1(&spe, 0, 0.0, 1.3).unwrap(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn thermal_second_order() {
        let n = 0.3;
        let rho = thermal_state(n, 40).unwrap();
        for k in 0..12 {
            let d = k as f64 * 0.5;
            let want = 6.0 * n * n * (1.0 + d.cos() / 3.0);
            assert_relative_eq!(expect_gm1(&rho, 1, d, 0.0).unwrap(), want, max_relative = 1e-8);
        }
    }

    #[test]
    fn projection_doubles_detected_mode() {
        let rho = project_thermal(0.2, 0.7, 1).unwrap();
        assert_relative_eq!(rho.detected_mode_occupation(0.7), 0.4, epsilon = 1e-9);
        assert_relative_eq!(rho.occupation(1), 1.5 * 0.2, epsilon = 1e-9);
    }

    #[test]
    fn projection_keeps_density_matrix_valid() {
        let rho = project_m(&thermal_state(0.2, 11).unwrap(), 0.4, 2).unwrap();
        assert!(rho.hermiticity_error() < 1e-12);
        assert!(rho.min_eigenvalue() > -1e-10);
        assert_relative_eq!(rho.trace().re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn vacuum_projection_fails() {
        let vac = thermal_state(0.0, 4).unwrap();
        assert!(matches!(project_m(&vac, 0.0, 1), Err(Error::ZeroProbability(_))));
    }

    #[test]
    fn projection_is_phase_covariant() {
        let base = thermal_state(0.2, 12).unwrap();
        let a = project_m(&base, 0.3, 2).unwrap();
        let global = a.phase_shift(1.1, 1.1);
        assert!((a.matrix() - global.matrix()).camax() < 1e-15);
        // A relative phase on mode 2 maps the δ₁ projection onto δ₁ − φ.
        let b = project_m(&base, 0.8, 2).unwrap().phase_shift_mode2(0.5);
        assert!((a.matrix() - b.matrix()).camax() < 1e-13);
    }

    #[test]
    fn cross_correlation_coefficient() {
        for m in 1..=4 {
            let c = cross_corr(&project_thermal(0.2, 0.0, m).unwrap()).unwrap();
            assert_relative_eq!(c.norm(), m as f64 / (m as f64 + 2.0), epsilon = 1e-8);
        }
        let c0 = cross_corr(&thermal_state(0.2, 20).unwrap()).unwrap();
        assert_eq!(c0.norm(), 0.0);
        assert!(matches!(cross_corr(&thermal_state(0.0, 3).unwrap()), Err(Error::VanishingOccupation(_))));
    }

    #[test]
    fn small_cutoff_is_flagged() {
        let rho = project_m(&thermal_state(0.2, 11).unwrap(), 0.0, 4).unwrap();
        assert!(rho.under_truncated);
        assert!(matches!(expect_gm1(&rho, 1, 0.0, 0.0), Err(Error::UnderTruncated { .. })));
    }
}
