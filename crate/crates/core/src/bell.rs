//! CH74 Bell statistics on probabilities derived from intensity
//! correlations.
//!
//! With `X = Y = 1` the inequality reads
//! `−1 ≤ xy − xy′ + x′y + x′y′ − x′ − y ≤ 0`. For correlation sets of the
//! form `A(1 ± V cos Δ)` the middle term collapses onto the cosine bracket
//! `B = cos(δ₁−δ₂) − cos(δ₁−δ₂′) + cos(δ₁′−δ₂) + cos(δ₁′−δ₂′)`.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI, SQRT_2, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{
    g2_spe_set, g2_tls_set, gm1_tls_set_normalized, probabilities_four, probabilities_six, DetectorSetting,
    ProbabilitySet, SettingPair, SourceModel,
};
use crate::error::{Error, Result};

/// Numerical guard band applied to both bounds.
pub const GUARD_BAND: f64 = 1e-12;

pub const LOWER_BOUND: f64 = -1.0;
pub const UPPER_BOUND: f64 = 0.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelTag {
    /// Six detector pairs, single photon emitters.
    SixTermSpe,
    /// Six detector pairs, thermal sources at second order.
    SixTermTls,
    /// Four cross pairs with post-selection, (m+1)-th order thermal.
    FourTermTls,
}

impl ModelTag {
    pub fn is_six_term(self) -> bool {
        !matches!(self, ModelTag::FourTermTls)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    Upper,
    Lower,
}

impl Bound {
    /// The canonical cosine arguments
    /// `(δ₁−δ₂, δ₁−δ₂′, δ₁′−δ₂, δ₁′−δ₂′)` testing this bound.
    pub fn cosine_args(self) -> [f64; 4] {
        let q = FRAC_PI_4;
        match self {
            Bound::Upper => [q, 3.0 * q, q, q],
            Bound::Lower => [3.0 * q, q, 3.0 * q, 3.0 * q],
        }
    }
}

/// Detector phases `(δ₁, δ₁′, δ₂, δ₂′)` for the two measurement settings on
/// each side. Only the four differences enter any statistic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleSet {
    pub a1: f64,
    pub a1p: f64,
    pub a2: f64,
    pub a2p: f64,
}

impl AngleSet {
    pub fn new(a1: f64, a1p: f64, a2: f64, a2p: f64) -> Self {
        AngleSet { a1, a1p, a2, a2p }
    }

    /// The arguments `(δ₁−δ₂, δ₁−δ₂′, δ₁′−δ₂, δ₁′−δ₂′)`.
    pub fn cosine_args(&self) -> [f64; 4] {
        [self.a1 - self.a2, self.a1 - self.a2p, self.a1p - self.a2, self.a1p - self.a2p]
    }

    pub fn bracket(&self) -> f64 {
        bracket(self.cosine_args())
    }

    /// Adds a common phase to every detector.
    pub fn shifted(&self, phase: f64) -> Self {
        AngleSet::new(self.a1 + phase, self.a1p + phase, self.a2 + phase, self.a2p + phase)
    }

    /// Finds detector phases reproducing the given cosine arguments up to
    /// sign (cosine is even), with the gauge `δ₁ = 0`.
    ///
    /// Three arguments fix the phases; the fourth must be consistent with
    /// them, otherwise an error is returned.
    pub fn from_cosine_args(args: [f64; 4]) -> Result<Self> {
        const TOL: f64 = 1e-9;
        for signs in 0..16u32 {
            let s = |i: u32| if signs >> i & 1 == 0 { 1.0 } else { -1.0 };
            let [t1, t2, t3, t4] = [s(0) * args[0], s(1) * args[1], s(2) * args[2], s(3) * args[3]];
            // t1 − t2 − t3 + t4 must vanish modulo 2π.
            let closure = (t1 - t2 - t3 + t4).rem_euclid(TAU);
            if closure.min(TAU - closure) < TOL {
                let a2 = -t1;
                let a2p = -t2;
                let a1p = a2 + t3;
                return Ok(AngleSet::new(0.0, a1p, a2, a2p));
            }
        }
        Err(Error::param("angles", "cosine arguments cannot be realized by four detector phases"))
    }
}

/// The four-cosine bracket `cos t₁ − cos t₂ + cos t₃ + cos t₄`.
pub fn bracket(args: [f64; 4]) -> f64 {
    args[0].cos() - args[1].cos() + args[2].cos() + args[3].cos()
}

/// Canonical angle set for testing the given bound; its bracket is `±2√2`.
pub fn default_angles(bound: Bound) -> AngleSet {
    AngleSet::from_cosine_args(bound.cosine_args()).expect("canonical Bell arguments are realizable")
}

/// Outcome of a Bell evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BellReport {
    pub statistic: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub violates_lower: bool,
    pub violates_upper: bool,
    pub model_tag: ModelTag,
    pub visibility_used: f64,
    /// Statistical uncertainty when the statistic is estimated from data.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stderr: Option<f64>,
}

impl BellReport {
    /// Flags a bound only when it is exceeded by more than the guard band.
    pub fn new(statistic: f64, model_tag: ModelTag, visibility_used: f64) -> Self {
        BellReport {
            statistic,
            lower_bound: LOWER_BOUND,
            upper_bound: UPPER_BOUND,
            violates_lower: statistic < LOWER_BOUND - GUARD_BAND,
            violates_upper: statistic > UPPER_BOUND + GUARD_BAND,
            model_tag,
            visibility_used,
            stderr: None,
        }
    }

    /// Flags a bound only when it is exceeded by at least `sigmas` standard
    /// errors.
    pub fn with_uncertainty(statistic: f64, stderr: f64, sigmas: f64, model_tag: ModelTag, visibility_used: f64) -> Self {
        let margin = sigmas * stderr + GUARD_BAND;
        BellReport {
            statistic,
            lower_bound: LOWER_BOUND,
            upper_bound: UPPER_BOUND,
            violates_lower: statistic < LOWER_BOUND - margin,
            violates_upper: statistic > UPPER_BOUND + margin,
            model_tag,
            visibility_used,
            stderr: Some(stderr),
        }
    }

    pub fn violated(&self) -> bool {
        self.violates_lower || self.violates_upper
    }
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::ProbabilityOutOfRange(p))
    }
}

/// Middle term of the CH74 inequality with `X = Y = 1`; `joints` are
/// ordered `(xy, xy′, x′y, x′y′)`.
pub fn ch74_middle(x: f64, xp: f64, y: f64, yp: f64, joints: [f64; 4]) -> Result<f64> {
    for p in [x, xp, y, yp].into_iter().chain(joints) {
        check_probability(p)?;
    }
    Ok(joints[0] - joints[1] + joints[2] + joints[3] - xp - y)
}

/// Closed-form Bell statistic for a correlation set of visibility `V`.
///
/// Six-term: `V·B/(6−2V) + 2/(6−2V) − 1`. Four-term: `V·B/4 − 1/2`.
pub fn bell_statistic(model_tag: ModelTag, visibility: f64, angles: &AngleSet) -> Result<BellReport> {
    if !(0.0..=1.0).contains(&visibility) {
        return Err(Error::VisibilityOutOfRange(visibility));
    }
    let b = angles.bracket();
    let statistic = if model_tag.is_six_term() {
        let n = 6.0 - 2.0 * visibility;
        visibility * b / n + 2.0 / n - 1.0
    } else {
        visibility * b / 4.0 - 0.5
    };
    Ok(BellReport::new(statistic, model_tag, visibility))
}

fn probability_set(model_tag: ModelTag, visibility: f64, d1: f64, d2: f64) -> Result<ProbabilitySet> {
    let (d1, d2) = (DetectorSetting::new(d1), DetectorSetting::new(d2));
    match model_tag {
        ModelTag::SixTermSpe => probabilities_six(&g2_spe_set(d1, d2, visibility, 1.0)?),
        ModelTag::SixTermTls => probabilities_six(&g2_tls_set(d1, d2, visibility, &SourceModel::default())?),
        ModelTag::FourTermTls => probabilities_four(&gm1_tls_set_normalized(1, d1, d2, Some(visibility))?),
    }
}

/// Bell statistic assembled from per-setting probability sets through
/// [`ch74_middle`], without the collapsed bracket formula.
pub fn bell_statistic_from_probabilities(model_tag: ModelTag, visibility: f64, angles: &AngleSet) -> Result<BellReport> {
    let p11 = probability_set(model_tag, visibility, angles.a1, angles.a2)?;
    let p12 = probability_set(model_tag, visibility, angles.a1, angles.a2p)?;
    let p21 = probability_set(model_tag, visibility, angles.a1p, angles.a2)?;
    let p22 = probability_set(model_tag, visibility, angles.a1p, angles.a2p)?;
    let joints = [
        p11.get(SettingPair::D1D2)?,
        p12.get(SettingPair::D1D2)?,
        p21.get(SettingPair::D1D2)?,
        p22.get(SettingPair::D1D2)?,
    ];
    let statistic = ch74_middle(p11.marginal_1, p21.marginal_1, p11.marginal_2, p12.marginal_2, joints)?;
    Ok(BellReport::new(statistic, model_tag, visibility))
}

/// Minimal visibility for violating the given bound at the canonical angles.
pub fn threshold_visibility(model_tag: ModelTag, bound: Bound) -> f64 {
    match (model_tag.is_six_term(), bound) {
        (true, Bound::Upper) => 2.0 / (1.0 + SQRT_2),
        (true, Bound::Lower) => FRAC_1_SQRT_2,
        (false, _) => FRAC_1_SQRT_2,
    }
}

/// Smallest `m` with `m/(m+2) > 1/√2`, decided in exact integer arithmetic
/// as `2m² > (m+2)²`.
pub fn min_violating_m() -> usize {
    (1usize..).find(|&m| 2 * m * m > (m + 2) * (m + 2)).expect("unbounded search terminates")
}

/// Exhaustive grid over detector phases `(δ₁′, δ₂, δ₂′)` in `[0, 2π)` with
/// the gauge `δ₁ = 0`. Points are returned in grid index order.
pub fn angle_scan(model_tag: ModelTag, visibility: f64, grid_step: f64) -> Result<Vec<(AngleSet, f64)>> {
    if !(grid_step > 0.0 && grid_step.is_finite()) {
        return Err(Error::param("grid_step", format!("must be > 0, got {grid_step}")));
    }
    if !(0.0..=1.0).contains(&visibility) {
        return Err(Error::VisibilityOutOfRange(visibility));
    }
    let n = (TAU / grid_step - 1e-9).ceil() as usize;
    let phase = |k: usize| k as f64 * grid_step;
    (0..n * n * n)
        .into_par_iter()
        .map(|idx| {
            let (i, j, k) = (idx / (n * n), (idx / n) % n, idx % n);
            let angles = AngleSet::new(0.0, phase(i), phase(j), phase(k));
            bell_statistic(model_tag, visibility, &angles).map(|r| (angles, r.statistic))
        })
        .collect()
}

/// Maximum and minimum entries of a scan.
pub fn scan_extremes(scan: &[(AngleSet, f64)]) -> Option<((AngleSet, f64), (AngleSet, f64))> {
    let max = scan.iter().copied().max_by(|a, b| a.1.total_cmp(&b.1))?;
    let min = scan.iter().copied().min_by(|a, b| a.1.total_cmp(&b.1))?;
    Some((max, min))
}

/// Cosine arguments reduced to `[0, π]`, the form in which the canonical
/// tuples are quoted.
pub fn folded_args(angles: &AngleSet) -> [f64; 4] {
    angles.cosine_args().map(|t| {
        let r = t.rem_euclid(TAU);
        if r > PI { TAU - r } else { r }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ch74_trivial_cases() {
        assert_eq!(ch74_middle(0.0, 0.0, 0.0, 0.0, [0.0; 4]).unwrap(), 0.0);
        assert_eq!(ch74_middle(0.5, 0.5, 0.5, 0.5, [0.25; 4]).unwrap(), -0.5);
        assert!(ch74_middle(1.2, 0.0, 0.0, 0.0, [0.0; 4]).is_err());
        assert!(ch74_middle(0.0, 0.0, 0.0, 0.0, [0.0, -0.1, 0.0, 0.0]).is_err());
    }

    #[test]
    fn canonical_angles_give_extremal_brackets() {
        let up = default_angles(Bound::Upper);
        let lo = default_angles(Bound::Lower);
        assert_relative_eq!(up.bracket(), 2.0 * SQRT_2, epsilon = 1e-14);
        assert_relative_eq!(lo.bracket(), -2.0 * SQRT_2, epsilon = 1e-14);
        assert_relative_eq!(bracket(Bound::Upper.cosine_args()), -bracket(Bound::Lower.cosine_args()), epsilon = 1e-14);
        for (got, want) in folded_args(&up).iter().zip(Bound::Upper.cosine_args()) {
            assert_relative_eq!(*got, want, epsilon = 1e-12);
        }
        for (got, want) in folded_args(&lo).iter().zip(Bound::Lower.cosine_args()) {
            assert_relative_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn unrealizable_arguments_are_rejected() {
        assert!(AngleSet::from_cosine_args([0.0, 0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn statistic_examples() {
        let up = default_angles(Bound::Upper);
        let six = bell_statistic(ModelTag::SixTermSpe, 1.0, &up).unwrap();
        assert_relative_eq!(six.statistic, (SQRT_2 - 1.0) / 2.0, epsilon = 1e-14);
        assert!(six.violates_upper && !six.violates_lower);

        let four = bell_statistic(ModelTag::FourTermTls, 5.0 / 7.0, &up).unwrap();
        assert_relative_eq!(four.statistic, 5.0 / 28.0 * 2.0 * SQRT_2 - 0.5, epsilon = 1e-15);
        assert!(four.violates_upper);

        let flat = bell_statistic(ModelTag::FourTermTls, 0.0, &AngleSet::new(0.3, 1.0, 2.0, -1.0)).unwrap();
        assert_eq!(flat.statistic, -0.5);
        assert!(!flat.violated());
        assert!(bell_statistic(ModelTag::FourTermTls, 1.1, &up).is_err());
    }

    #[test]
    fn closed_form_matches_probability_route() {
        for tag in [ModelTag::SixTermSpe, ModelTag::SixTermTls, ModelTag::FourTermTls] {
            for &v in &[0.0, 0.2, 0.5, 0.75, 1.0] {
                for bound in [Bound::Upper, Bound::Lower] {
                    let angles = default_angles(bound).shifted(0.37);
                    let a = bell_statistic(tag, v, &angles).unwrap().statistic;
                    let b = bell_statistic_from_probabilities(tag, v, &angles).unwrap().statistic;
                    assert_relative_eq!(a, b, epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn thresholds() {
        assert_relative_eq!(threshold_visibility(ModelTag::SixTermTls, Bound::Upper), 0.828_427_124_746_190_1, epsilon = 1e-15);
        assert_relative_eq!(threshold_visibility(ModelTag::SixTermSpe, Bound::Lower), 0.707_106_781_186_547_5, epsilon = 1e-15);
        assert_eq!(
            threshold_visibility(ModelTag::FourTermTls, Bound::Upper),
            threshold_visibility(ModelTag::FourTermTls, Bound::Lower)
        );
    }

    #[test]
    fn threshold_crossing_straddles_bound() {
        for tag in [ModelTag::SixTermSpe, ModelTag::FourTermTls] {
            for bound in [Bound::Upper, Bound::Lower] {
                let t = threshold_visibility(tag, bound);
                let angles = default_angles(bound);
                let below = bell_statistic(tag, t - 1e-9, &angles).unwrap();
                let above = bell_statistic(tag, t + 1e-9, &angles).unwrap();
                match bound {
                    Bound::Upper => assert!(!below.violates_upper && above.violates_upper),
                    Bound::Lower => assert!(!below.violates_lower && above.violates_lower),
                }
            }
        }
    }

    #[test]
    fn minimal_m() {
        assert_eq!(min_violating_m(), 5);
        assert!(4.0 / 6.0 < FRAC_1_SQRT_2);
        let s = bell_statistic(ModelTag::FourTermTls, 5.0 / 7.0, &default_angles(Bound::Upper)).unwrap();
        assert!(s.statistic > 0.0);
    }

    #[test]
    fn scan_finds_canonical_maximum() {
        let scan = angle_scan(ModelTag::FourTermTls, 1.0, PI / 12.0).unwrap();
        assert_eq!(scan.len(), 24 * 24 * 24);
        let ((best, max), (worst, min)) = scan_extremes(&scan).unwrap();
        assert_relative_eq!(max, 2.0 * SQRT_2 / 4.0 - 0.5, epsilon = 1e-12);
        assert_relative_eq!(min, -2.0 * SQRT_2 / 4.0 - 0.5, epsilon = 1e-12);
        let mut args = folded_args(&best);
        let mut canonical = Bound::Upper.cosine_args();
        args.sort_by(f64::total_cmp);
        canonical.sort_by(f64::total_cmp);
        for (a, c) in args.iter().zip(canonical) {
            assert_relative_eq!(*a, c, epsilon = 1e-9);
        }
        assert_relative_eq!(worst.bracket(), -2.0 * SQRT_2, epsilon = 1e-9);
    }

    #[test]
    fn scan_rejects_bad_step_and_is_flat_without_visibility() {
        assert!(angle_scan(ModelTag::FourTermTls, 1.0, 0.0).is_err());
        let scan = angle_scan(ModelTag::FourTermTls, 0.0, PI / 4.0).unwrap();
        assert!(scan.iter().all(|&(_, s)| s == -0.5));
    }
}
