//! Thermal-light correlations from the Gaussian moment theorem.
//!
//! For zero-mean circular Gaussian fields every normally ordered moment
//! `⟨E⁻(r₁)…E⁻(r_k) E⁺(r_k)…E⁺(r₁)⟩` is the permanent of the first-order
//! coherence matrix `J_pq = ⟨E⁻(r_p)E⁺(r_q)⟩`. This module evaluates that
//! permanent directly and is kept free of the closed forms in
//! [`crate::analytic`].

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::analytic::{SourceKind, SourceModel};
use crate::error::{Error, Result};

/// Largest matrix accepted by [`permanent`].
pub const PERMANENT_MAX_SIZE: usize = 16;

/// Hermitian matrix of first-order correlations between detector positions.
#[derive(Clone, Debug, PartialEq)]
pub struct CoherenceMatrix {
    entries: DMatrix<Complex64>,
}

impl CoherenceMatrix {
    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    /// Product of the diagonal, the moment of independent detectors.
    pub fn diagonal_product(&self) -> f64 {
        (0..self.size()).map(|p| self.entries[(p, p)].re).product()
    }

    /// Checks Hermiticity, a positive real diagonal and the Cauchy-Schwarz
    /// bound on every off-diagonal entry.
    pub fn is_valid(&self, tol: f64) -> bool {
        let n = self.size();
        for p in 0..n {
            let jpp = self.entries[(p, p)];
            if jpp.re <= 0.0 || jpp.im.abs() > tol {
                return false;
            }
            for q in 0..n {
                let jpq = self.entries[(p, q)];
                let jqq = self.entries[(q, q)].re;
                if (jpq - self.entries[(q, p)].conj()).norm() > tol || jpq.norm() > (jpp.re * jqq).sqrt() + tol {
                    return false;
                }
            }
        }
        true
    }
}

/// `J_pq = E₀²⟨n⟩(1 + e^{i(δ_q − δ_p)})` for two thermal sources.
pub fn coherence_matrix(deltas: &[f64], model: &SourceModel) -> Result<CoherenceMatrix> {
    if model.kind != SourceKind::Thermal {
        return Err(Error::param("model", "the Gaussian moment theorem applies to thermal sources only"));
    }
    if deltas.is_empty() {
        return Err(Error::param("deltas", "need at least one detector position"));
    }
    let scale = model.field_amp.powi(2) * model.mean_photons;
    let n = deltas.len();
    let entries = DMatrix::from_fn(n, n, |p, q| {
        scale * (Complex64::new(1.0, 0.0) + Complex64::from_polar(1.0, deltas[q] - deltas[p]))
    });
    Ok(CoherenceMatrix { entries })
}

/// Permanent by Ryser's inclusion-exclusion formula with Gray-code column
/// updates, `O(2ⁿ n)`.
pub fn permanent(matrix: &DMatrix<Complex64>) -> Result<Complex64> {
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(Error::param("matrix", "must be square"));
    }
    if n > PERMANENT_MAX_SIZE {
        return Err(Error::PermanentTooLarge { size: n, limit: PERMANENT_MAX_SIZE });
    }
    if n == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    // perm(A) = (−1)ⁿ Σ_{S ⊆ cols} (−1)^{|S|} Π_i Σ_{j∈S} a_ij
    let mut row_sums = vec![Complex64::new(0.0, 0.0); n];
    let mut total = Complex64::new(0.0, 0.0);
    let mut gray: u32 = 0;
    for k in 1u32..(1u32 << n) {
        let next = k ^ (k >> 1);
        let flipped = (gray ^ next).trailing_zeros() as usize;
        let added = next & (1 << flipped) != 0;
        for (i, sum) in row_sums.iter_mut().enumerate() {
            if added {
                *sum += matrix[(i, flipped)];
            } else {
                *sum -= matrix[(i, flipped)];
            }
        }
        gray = next;
        let product: Complex64 = row_sums.iter().product();
        if next.count_ones() % 2 == 0 {
            total += product;
        } else {
            total -= product;
        }
    }
    Ok(if n % 2 == 0 { total } else { -total })
}

/// Raw and g1-normalized (m+1)-th order correlation from the permanent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleValue {
    pub raw: f64,
    pub normalized: f64,
}

/// (m+1)-th order thermal correlation with `m` detectors at `δ₁` and one at
/// `δ₂`, from the permanent of the coherence matrix with the `δ₁` row and
/// column literally repeated `m` times.
pub fn gm1_from_permanent(m: usize, delta1: f64, delta2: f64, model: &SourceModel) -> Result<OracleValue> {
    if m + 1 > PERMANENT_MAX_SIZE {
        return Err(Error::PermanentTooLarge { size: m + 1, limit: PERMANENT_MAX_SIZE });
    }
    let mut deltas = vec![delta1; m];
    deltas.push(delta2);
    let coherence = coherence_matrix(&deltas, model)?;
    let perm = permanent(coherence.entries())?;
    Ok(OracleValue { raw: perm.re, normalized: perm.re / coherence.diagonal_product() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Permanent by expansion over all permutations, for cross-checking.
    fn permanent_by_permutations(a: &DMatrix<Complex64>) -> Complex64 {
        fn rec(a: &DMatrix<Complex64>, row: usize, used: &mut Vec<bool>) -> Complex64 {
            if row == a.nrows() {
                return c(1.0, 0.0);
            }
            let mut total = c(0.0, 0.0);
            for j in 0..a.ncols() {
                if !used[j] {
                    used[j] = true;
                    total += a[(row, j)] * rec(a, row + 1, used);
                    used[j] = false;
                }
            }
            total
        }
        rec(a, 0, &mut vec![false; a.ncols()])
    }

    fn tls() -> SourceModel {
        SourceModel::thermal(1.0, 1.0).unwrap()
    }

    #[test]
    fn coherence_matrix_examples() {
        let j = coherence_matrix(&[0.0, 0.0], &tls()).unwrap();
        assert!(j.entries().iter().all(|&e| (e - c(2.0, 0.0)).norm() < 1e-15));
        let j = coherence_matrix(&[0.0, PI], &tls()).unwrap();
        assert_eq!(j.entries()[(0, 0)], c(2.0, 0.0));
        assert!(j.entries()[(0, 1)].norm() < 1e-15);
        for k in 0..10 {
            let d = 0.37 * k as f64;
            let j = coherence_matrix(&[0.0, d], &tls()).unwrap();
            assert_relative_eq!(j.entries()[(0, 1)].norm() / j.entries()[(0, 0)].re, (d / 2.0).cos().abs(), epsilon = 1e-14);
            assert!(j.is_valid(1e-12));
        }
        assert!(coherence_matrix(&[0.0], &SourceModel::single_photon(1.0).unwrap()).is_err());
        assert!(coherence_matrix(&[], &tls()).is_err());
    }

    #[test]
    fn permanent_small_cases() {
        assert_eq!(permanent(&DMatrix::identity(3, 3)).unwrap(), c(1.0, 0.0));
        assert_eq!(permanent(&DMatrix::from_element(2, 2, c(1.0, 0.0))).unwrap(), c(2.0, 0.0));
        assert_eq!(permanent(&DMatrix::from_element(3, 3, c(1.0, 0.0))).unwrap(), c(6.0, 0.0));
        let mu = c(0.3, -0.4);
        let a = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), mu, mu.conj(), c(1.0, 0.0)]);
        assert_relative_eq!(permanent(&a).unwrap().re, 1.0 + mu.norm_sqr(), epsilon = 1e-15);
        assert!(matches!(
            permanent(&DMatrix::from_element(17, 17, c(1.0, 0.0))),
            Err(Error::PermanentTooLarge { .. })
        ));
    }

    #[test]
    fn ryser_matches_permutation_expansion() {
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for n in 1..=6 {
            let a = DMatrix::from_fn(n, n, |_, _| c(next(), next()));
            let want = permanent_by_permutations(&a);
            assert!((permanent(&a).unwrap() - want).norm() < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn second_order_from_permanent() {
        assert_relative_eq!(gm1_from_permanent(1, 0.0, 0.0, &tls()).unwrap().normalized, 2.0, epsilon = 1e-14);
        assert_relative_eq!(gm1_from_permanent(1, 0.0, PI, &tls()).unwrap().normalized, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn seventh_order_from_permanent() {
        assert_relative_eq!(gm1_from_permanent(6, 0.0, 0.0, &tls()).unwrap().normalized, 5040.0, max_relative = 1e-13);
        // Midline of the fringe: the mean of the values half a period apart.
        let n = 64;
        let mean = (0..n)
            .map(|k| gm1_from_permanent(6, 0.0, 2.0 * PI * k as f64 / n as f64, &tls()).unwrap().normalized)
            .sum::<f64>()
            / n as f64;
        assert_relative_eq!(mean, 2880.0, max_relative = 1e-12);
        let min = gm1_from_permanent(6, 0.0, PI, &tls()).unwrap().normalized;
        assert_relative_eq!((5040.0 - min) / (5040.0 + min), 0.75, epsilon = 1e-12);
    }

    #[test]
    fn permanent_of_coherence_matrix_is_nonnegative() {
        for m in 1..=8 {
            let p = permanent(coherence_matrix(&[0.0, 0.4, 1.3, 2.0, 2.9][..m.min(5)], &tls()).unwrap().entries()).unwrap();
            assert!(p.re >= 0.0 && p.im.abs() < 1e-10 * p.re.max(1.0));
        }
    }
}
