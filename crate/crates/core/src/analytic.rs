//! Closed-form correlation functions for two statistically independent
//! sources observed in the far field.
//!
//! The field at a detector with relative source phase `δ` is
//! `E⁺(δ) = E₀ (a₁ + e^{iδ} a₂)`. Every correlation below depends on
//! detector phases only through `δ₁ − δ₂`. Detector pairs are labelled by
//! [`SettingPair`]: `δⱼ` is the chosen setting and `πⱼ = δⱼ + π` its
//! partner on the same side.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest `m` for which the amplitude of the (m+1)-th order correlation is
/// evaluated from an exact integer factorial.
pub const EXACT_AMPLITUDE_MAX_M: usize = 20;

/// Tolerance for probability normalization checks.
pub const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceKind {
    /// Single photon emitters, each contributing exactly one photon.
    #[serde(rename = "spe")]
    SinglePhoton,
    /// Thermal light sources with Bose-Einstein photon statistics.
    #[serde(rename = "tls")]
    Thermal,
    /// Coherent sources with independent random phases.
    #[serde(rename = "coherent")]
    Coherent,
}

/// A pair of identical, statistically independent emitters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceModel {
    pub kind: SourceKind,
    /// Mean photon number per source; ignored for single photon emitters.
    pub mean_photons: f64,
    /// Field amplitude scale `E₀`.
    pub field_amp: f64,
}

impl SourceModel {
    pub fn new(kind: SourceKind, mean_photons: f64, field_amp: f64) -> Result<Self> {
        let model = SourceModel { kind, mean_photons, field_amp };
        model.validate()?;
        Ok(model)
    }

    pub fn thermal(mean_photons: f64, field_amp: f64) -> Result<Self> {
        Self::new(SourceKind::Thermal, mean_photons, field_amp)
    }

    pub fn single_photon(field_amp: f64) -> Result<Self> {
        Self::new(SourceKind::SinglePhoton, 1.0, field_amp)
    }

    pub fn coherent(mean_photons: f64, field_amp: f64) -> Result<Self> {
        Self::new(SourceKind::Coherent, mean_photons, field_amp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.field_amp > 0.0 && self.field_amp.is_finite()) {
            return Err(Error::param("field_amp", format!("must be finite and > 0, got {}", self.field_amp)));
        }
        if !(self.mean_photons >= 0.0 && self.mean_photons.is_finite()) {
            return Err(Error::param(
                "mean_photons",
                format!("must be finite and >= 0, got {}", self.mean_photons),
            ));
        }
        Ok(())
    }

    /// Photons per source entering the moment formulas.
    pub fn photons_per_source(&self) -> f64 {
        match self.kind {
            SourceKind::SinglePhoton => 1.0,
            SourceKind::Thermal | SourceKind::Coherent => self.mean_photons,
        }
    }
}

impl Default for SourceModel {
    fn default() -> Self {
        SourceModel { kind: SourceKind::Thermal, mean_photons: 1.0, field_amp: 1.0 }
    }
}

/// A detector position expressed as the relative optical phase of the two
/// sources, in radians. Phases are never wrapped for arithmetic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorSetting {
    pub delta: f64,
}

impl DetectorSetting {
    pub fn new(delta: f64) -> Self {
        DetectorSetting { delta }
    }

    /// The partner detector half a fringe away.
    pub fn shifted_by_pi(self) -> Self {
        DetectorSetting { delta: self.delta + std::f64::consts::PI }
    }

    /// Phase reduced to `[0, 2π)`, for display only.
    pub fn display_phase(self) -> f64 {
        self.delta.rem_euclid(std::f64::consts::TAU)
    }
}

/// Label of a detector pair among the four detectors `δ₁, π₁, δ₂, π₂`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SettingPair {
    /// (δ₁, δ₂)
    D1D2,
    /// (π₁, π₂)
    P1P2,
    /// (δ₁, π₂)
    D1P2,
    /// (π₁, δ₂)
    P1D2,
    /// (δ₁, π₁), same-side pair
    D1P1,
    /// (δ₂, π₂), same-side pair
    D2P2,
}

impl SettingPair {
    pub const CROSS: [SettingPair; 4] =
        [SettingPair::D1D2, SettingPair::P1P2, SettingPair::D1P2, SettingPair::P1D2];
    pub const ALL: [SettingPair; 6] = [
        SettingPair::D1D2,
        SettingPair::P1P2,
        SettingPair::D1P2,
        SettingPair::P1D2,
        SettingPair::D1P1,
        SettingPair::D2P2,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SettingPair::D1D2 => "(d1,d2)",
            SettingPair::P1P2 => "(p1,p2)",
            SettingPair::D1P2 => "(d1,p2)",
            SettingPair::P1D2 => "(p1,d2)",
            SettingPair::D1P1 => "(d1,p1)",
            SettingPair::D2P2 => "(d2,p2)",
        }
    }

    /// Sign of the cosine term for a cross pair; `None` for same-side pairs.
    pub fn fringe_sign(self) -> Option<f64> {
        match self {
            SettingPair::D1D2 | SettingPair::P1P2 => Some(1.0),
            SettingPair::D1P2 | SettingPair::P1D2 => Some(-1.0),
            SettingPair::D1P1 | SettingPair::D2P2 => None,
        }
    }
}

impl fmt::Display for SettingPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A set of correlation values `A (1 ± V cos(δ₁ − δ₂))` over detector pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSet {
    /// Correlation order m+1.
    pub order: usize,
    pub values: BTreeMap<SettingPair, f64>,
    pub visibility: f64,
    pub amplitude: f64,
    /// True when values are divided by the product of first-order
    /// correlations (the g-normalized form).
    pub normalized: bool,
}

impl CorrelationSet {
    fn from_amplitude(order: usize, amplitude: f64, visibility: f64, d1: DetectorSetting, d2: DetectorSetting, normalized: bool) -> Self {
        let c = (d1.delta - d2.delta).cos();
        let values = SettingPair::CROSS
            .iter()
            .map(|&p| (p, amplitude * (1.0 + p.fringe_sign().unwrap() * visibility * c)))
            .collect();
        CorrelationSet { order, values, visibility, amplitude, normalized }
    }

    /// Adds the same-side pairs `(δ₁,π₁)` and `(δ₂,π₂)`, each `A (1 − V)`.
    pub fn with_same_side_pairs(mut self) -> Self {
        let same = self.amplitude * (1.0 - self.visibility);
        self.values.insert(SettingPair::D1P1, same);
        self.values.insert(SettingPair::D2P2, same);
        self
    }

    pub fn get(&self, pair: SettingPair) -> Result<f64> {
        self.values.get(&pair).copied().ok_or_else(|| Error::MissingPair(pair.to_string()))
    }

    fn check_nonnegative(&self) -> Result<()> {
        for (pair, &value) in &self.values {
            if !(value >= 0.0) {
                return Err(Error::NegativeCorrelation { pair: pair.to_string(), value });
            }
        }
        Ok(())
    }
}

/// Joint detection probabilities over detector pairs plus the single-photon
/// marginals at `δ₁` and `δ₂`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilitySet {
    pub joint: BTreeMap<SettingPair, f64>,
    pub marginal_1: f64,
    pub marginal_2: f64,
    pub normalization: f64,
}

impl ProbabilitySet {
    pub fn get(&self, pair: SettingPair) -> Result<f64> {
        self.joint.get(&pair).copied().ok_or_else(|| Error::MissingPair(pair.to_string()))
    }

    pub fn total(&self) -> f64 {
        self.joint.values().sum()
    }
}

fn check_visibility(vis: f64) -> Result<()> {
    if (0.0..=1.0).contains(&vis) {
        Ok(())
    } else {
        Err(Error::VisibilityOutOfRange(vis))
    }
}

/// First-order correlation `⟨E⁻E⁺⟩`, the same at every detector position.
pub fn g1(model: &SourceModel, _setting: DetectorSetting) -> f64 {
    2.0 * model.field_amp.powi(2) * model.photons_per_source()
}

/// Second-order correlation of two single photon emitters,
/// `2E₀⁴(1 + V cos(δ₁ − δ₂))`.
pub fn g2_spe(d1: DetectorSetting, d2: DetectorSetting, vis: f64, field_amp: f64) -> Result<f64> {
    check_visibility(vis)?;
    Ok(2.0 * field_amp.powi(4) * (1.0 + vis * (d1.delta - d2.delta).cos()))
}

/// Second-order correlation of two thermal sources,
/// `6E₀⁴⟨n⟩²(1 + V cos(δ₁ − δ₂))`; `V = 1/3` is the ideal thermal case.
pub fn g2_tls(d1: DetectorSetting, d2: DetectorSetting, vis: f64, model: &SourceModel) -> Result<f64> {
    check_visibility(vis)?;
    let n = model.mean_photons;
    Ok(6.0 * model.field_amp.powi(4) * n * n * (1.0 + vis * (d1.delta - d2.delta).cos()))
}

/// Six-pair second-order set for single photon emitters.
pub fn g2_spe_set(d1: DetectorSetting, d2: DetectorSetting, vis: f64, field_amp: f64) -> Result<CorrelationSet> {
    check_visibility(vis)?;
    let amplitude = 2.0 * field_amp.powi(4);
    Ok(CorrelationSet::from_amplitude(2, amplitude, vis, d1, d2, false).with_same_side_pairs())
}

/// Six-pair second-order set for thermal sources.
pub fn g2_tls_set(d1: DetectorSetting, d2: DetectorSetting, vis: f64, model: &SourceModel) -> Result<CorrelationSet> {
    check_visibility(vis)?;
    let n = model.mean_photons;
    let amplitude = 6.0 * model.field_amp.powi(4) * n * n;
    Ok(CorrelationSet::from_amplitude(2, amplitude, vis, d1, d2, false).with_same_side_pairs())
}

/// Visibility `m/(m+2)` of the (m+1)-th order thermal correlation with m
/// detectors on one side and one on the other.
pub fn visibility_tls(m: usize) -> Result<f64> {
    let (num, den) = visibility_tls_ratio(m)?;
    Ok(num as f64 / den as f64)
}

/// `m/(m+2)` as a reduced fraction.
pub fn visibility_tls_ratio(m: usize) -> Result<(u64, u64)> {
    if m < 1 {
        return Err(Error::param("m", "must be >= 1"));
    }
    let (num, den) = (m as u64, m as u64 + 2);
    let g = gcd(num, den);
    Ok((num / g, den / g))
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Second-order visibility of two independent sources of the given kind:
/// 1 for single photon emitters, 1/3 thermal, 1/2 coherent (the classical
/// maximum).
pub fn second_order_visibility(kind: SourceKind) -> f64 {
    match kind {
        SourceKind::SinglePhoton => 1.0,
        SourceKind::Thermal => 1.0 / 3.0,
        SourceKind::Coherent => 0.5,
    }
}

fn exact_factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

/// `(m+2)!/(2(m+1))`: the amplitude of the (m+1)-th order thermal
/// correlation divided by `g1^{m+1}`.
pub fn normalized_amplitude(m: usize) -> Result<f64> {
    if m < 1 {
        return Err(Error::param("m", "must be >= 1"));
    }
    if m <= EXACT_AMPLITUDE_MAX_M {
        // (m+2)!/(m+1) = m! (m+2), an exact integer.
        let exact = exact_factorial(m) * (m as u128 + 2);
        return Ok(exact as f64 / 2.0);
    }
    let value = (1..=m).fold((m as f64 + 2.0) / 2.0, |acc, k| acc * k as f64);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::AmplitudeOverflow { m, limit: m - 1 })
    }
}

/// Amplitude `A = ((m+2)!/(m+1)) 2^m E₀^{2(m+1)} ⟨n⟩^{m+1}`.
pub fn amplitude_tls(m: usize, model: &SourceModel) -> Result<f64> {
    if m < 1 {
        return Err(Error::param("m", "must be >= 1"));
    }
    if m > EXACT_AMPLITUDE_MAX_M {
        return Err(Error::AmplitudeOverflow { m, limit: EXACT_AMPLITUDE_MAX_M });
    }
    let combinatorial = (exact_factorial(m) * (m as u128 + 2)) << m;
    let field = model.field_amp.powi(2 * (m as i32 + 1));
    Ok(combinatorial as f64 * field * model.mean_photons.powi(m as i32 + 1))
}

/// The four cross-pair (m+1)-th order thermal correlations with m detectors
/// at `δ₁` (or `π₁`) and one at `δ₂` (or `π₂`).
///
/// For `m` beyond [`EXACT_AMPLITUDE_MAX_M`] the set is returned in
/// normalized form (divided by `g1^{m+1}`).
pub fn gm1_tls_set(
    m: usize,
    d1: DetectorSetting,
    d2: DetectorSetting,
    model: &SourceModel,
    vis_override: Option<f64>,
) -> Result<CorrelationSet> {
    let visibility = match vis_override {
        Some(v) => {
            check_visibility(v)?;
            v
        }
        None => visibility_tls(m)?,
    };
    if m > EXACT_AMPLITUDE_MAX_M {
        return gm1_tls_set_normalized(m, d1, d2, Some(visibility));
    }
    let amplitude = amplitude_tls(m, model)?;
    Ok(CorrelationSet::from_amplitude(m + 1, amplitude, visibility, d1, d2, false))
}

/// Normalized counterpart of [`gm1_tls_set`], independent of `E₀` and `⟨n⟩`.
pub fn gm1_tls_set_normalized(
    m: usize,
    d1: DetectorSetting,
    d2: DetectorSetting,
    vis_override: Option<f64>,
) -> Result<CorrelationSet> {
    let visibility = match vis_override {
        Some(v) => {
            check_visibility(v)?;
            v
        }
        None => visibility_tls(m)?,
    };
    let amplitude = normalized_amplitude(m)?;
    Ok(CorrelationSet::from_amplitude(m + 1, amplitude, visibility, d1, d2, true))
}

/// Probabilities from all six detector pairs, normalized by their sum.
pub fn probabilities_six(set: &CorrelationSet) -> Result<ProbabilitySet> {
    set.check_nonnegative()?;
    let values: Vec<f64> = SettingPair::ALL.iter().map(|&p| set.get(p)).collect::<Result<_>>()?;
    let normalization: f64 = values.iter().sum();
    if !(normalization > 0.0) {
        return Err(Error::param("set", "correlation values sum to zero"));
    }
    let joint: BTreeMap<_, _> =
        SettingPair::ALL.iter().zip(&values).map(|(&p, &v)| (p, v / normalization)).collect();
    let marginal_1 = joint[&SettingPair::D1P1] + joint[&SettingPair::D1P2] + joint[&SettingPair::D1D2];
    let marginal_2 = joint[&SettingPair::P1D2] + joint[&SettingPair::D2P2] + joint[&SettingPair::D1D2];
    Ok(ProbabilitySet { joint, marginal_1, marginal_2, normalization })
}

/// Probabilities from the four cross pairs only. Events with detections on
/// both `δ₁` and `π₁` (or both `δ₂` and `π₂`) are discarded by
/// post-selection, so the same-side pairs never enter.
pub fn probabilities_four(set: &CorrelationSet) -> Result<ProbabilitySet> {
    set.check_nonnegative()?;
    let values: Vec<f64> = SettingPair::CROSS.iter().map(|&p| set.get(p)).collect::<Result<_>>()?;
    let normalization: f64 = values.iter().sum();
    if !(normalization > 0.0) {
        return Err(Error::param("set", "correlation values sum to zero"));
    }
    let joint: BTreeMap<_, _> =
        SettingPair::CROSS.iter().zip(&values).map(|(&p, &v)| (p, v / normalization)).collect();
    let marginal_1 = joint[&SettingPair::D1D2] + joint[&SettingPair::D1P2];
    let marginal_2 = joint[&SettingPair::D1D2] + joint[&SettingPair::P1D2];
    Ok(ProbabilitySet { joint, marginal_1, marginal_2, normalization })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn tls() -> SourceModel {
        SourceModel::thermal(1.0, 1.0).unwrap()
    }

    fn at(d: f64) -> DetectorSetting {
        DetectorSetting::new(d)
    }

    #[test]
    fn g1_is_isotropic() {
        assert_eq!(g1(&tls(), at(0.3)), 2.0);
        let spe = SourceModel::single_photon(1.0).unwrap();
        assert_eq!(g1(&spe, at(1.7)), 2.0);
        assert_eq!(g1(&tls(), at(0.1)), g1(&tls(), at(-4.0)));
    }

    #[test]
    fn g2_spe_examples() {
        assert_eq!(g2_spe(at(0.4), at(0.4), 1.0, 1.0).unwrap(), 4.0);
        assert!(g2_spe(at(PI), at(0.0), 1.0, 1.0).unwrap().abs() < 1e-15);
        assert_eq!(g2_spe(at(0.9), at(0.1), 0.0, 1.0).unwrap(), 2.0);
        assert!(matches!(g2_spe(at(0.0), at(0.0), 1.5, 1.0), Err(Error::VisibilityOutOfRange(_))));
    }

    #[test]
    fn g2_tls_examples() {
        let third = 1.0 / 3.0;
        assert_relative_eq!(g2_tls(at(0.2), at(0.2), third, &tls()).unwrap(), 8.0, epsilon = 1e-14);
        assert_relative_eq!(g2_tls(at(FRAC_PI_2), at(0.0), third, &tls()).unwrap(), 6.0, epsilon = 1e-14);
        let bunching = g2_tls(at(0.0), at(0.0), third, &tls()).unwrap() / g1(&tls(), at(0.0)).powi(2);
        assert_relative_eq!(bunching, 2.0, epsilon = 1e-14);
        assert!(g2_tls(at(0.0), at(0.0), -0.1, &tls()).is_err());
    }

    #[test]
    fn visibility_law() {
        assert_eq!(visibility_tls_ratio(1).unwrap(), (1, 3));
        assert_eq!(visibility_tls_ratio(6).unwrap(), (3, 4));
        assert_relative_eq!(visibility_tls(5).unwrap(), 5.0 / 7.0);
        assert!(visibility_tls(0).is_err());
        let mut prev = 0.0;
        for m in 1..200 {
            let v = visibility_tls(m).unwrap();
            assert!(v > prev && v < 1.0);
            prev = v;
        }
    }

    #[test]
    fn m1_reduces_to_second_order() {
        let model = SourceModel::thermal(0.7, 1.3).unwrap();
        for k in 0..32 {
            let d = k as f64 * 0.2;
            let set = gm1_tls_set(1, at(d), at(0.1), &model, None).unwrap();
            assert_eq!(set.amplitude, amplitude_tls(1, &model).unwrap());
            let direct = g2_tls(at(d), at(0.1), 1.0 / 3.0, &model).unwrap();
            assert_relative_eq!(set.get(SettingPair::D1D2).unwrap(), direct, max_relative = 1e-12);
        }
        let unit = gm1_tls_set(1, at(0.0), at(0.0), &tls(), None).unwrap();
        assert_eq!(unit.amplitude, 6.0);
        assert_relative_eq!(unit.get(SettingPair::D1D2).unwrap(), 8.0, epsilon = 1e-14);
    }

    #[test]
    fn m6_normalized_fringe() {
        // A / g1^{m+1} with g1 = 2 at unit field and photon number.
        let raw = gm1_tls_set(6, at(0.0), at(0.0), &tls(), None).unwrap();
        assert_eq!(raw.amplitude / 2f64.powi(7), 2880.0);
        let norm = gm1_tls_set_normalized(6, at(0.0), at(0.0), None).unwrap();
        assert_eq!(norm.amplitude, 2880.0);
        assert_eq!(norm.get(SettingPair::D1D2).unwrap(), 5040.0);
        assert_eq!(norm.get(SettingPair::D1P2).unwrap(), 720.0);
    }

    #[test]
    fn large_m_falls_back_to_normalized() {
        let set = gm1_tls_set(25, at(0.0), at(1.0), &tls(), None).unwrap();
        assert!(set.normalized);
        assert!(amplitude_tls(21, &tls()).is_err());
        assert!(normalized_amplitude(200).is_err());
        assert!(normalized_amplitude(150).unwrap().is_finite());
    }

    #[test]
    fn six_term_ideal_spe() {
        let set = g2_spe_set(at(0.3), at(1.1), 1.0, 1.0).unwrap();
        let p = probabilities_six(&set).unwrap();
        let c = (0.3f64 - 1.1).cos();
        assert_relative_eq!(p.get(SettingPair::D1D2).unwrap(), (1.0 + c) / 4.0, epsilon = 1e-15);
        assert_eq!(p.get(SettingPair::D1P1).unwrap(), 0.0);
        assert_eq!(p.get(SettingPair::D2P2).unwrap(), 0.0);
        assert_relative_eq!(p.marginal_1, 0.5, epsilon = 1e-15);
        assert_relative_eq!(p.total(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn six_term_normalization_matches_closed_form() {
        let model = SourceModel::thermal(0.5, 2.0).unwrap();
        let v = 0.4;
        let set = g2_tls_set(at(0.0), at(0.0), v, &model).unwrap();
        let p = probabilities_six(&set).unwrap();
        assert_relative_eq!(p.normalization, set.amplitude * (6.0 - 2.0 * v), max_relative = 1e-14);
        assert_relative_eq!(p.marginal_2, (3.0 - v) / (6.0 - 2.0 * v), epsilon = 1e-15);
    }

    #[test]
    fn four_term_examples() {
        let set = gm1_tls_set(6, at(0.0), at(0.0), &tls(), None).unwrap();
        let p = probabilities_four(&set).unwrap();
        assert_relative_eq!(p.get(SettingPair::D1D2).unwrap(), 0.4375, epsilon = 1e-15);
        assert_relative_eq!(p.normalization, 4.0 * set.amplitude, max_relative = 1e-15);
        let flat = gm1_tls_set(3, at(0.0), at(2.0), &tls(), Some(0.0)).unwrap();
        let p = probabilities_four(&flat).unwrap();
        for pair in SettingPair::CROSS {
            assert_eq!(p.get(pair).unwrap(), 0.25);
        }
    }

    #[test]
    fn missing_and_negative_entries_are_rejected() {
        let four = gm1_tls_set(2, at(0.0), at(0.0), &tls(), None).unwrap();
        assert!(matches!(probabilities_six(&four), Err(Error::MissingPair(_))));
        let mut bad = four.clone();
        bad.values.insert(SettingPair::D1P2, -1.0);
        assert!(matches!(probabilities_four(&bad), Err(Error::NegativeCorrelation { .. })));
    }

    #[test]
    fn invalid_models_are_rejected() {
        assert!(SourceModel::thermal(1.0, 0.0).is_err());
        assert!(SourceModel::thermal(-1.0, 1.0).is_err());
        assert!(SourceModel::thermal(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn pi_partner_is_exact() {
        let d = at(0.123);
        assert_eq!(d.shifted_by_pi().delta, 0.123 + PI);
        assert!((at(7.0).display_phase() - (7.0 - 2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn coherent_bound_cannot_violate() {
        assert_eq!(second_order_visibility(SourceKind::Coherent), 0.5);
        assert!(second_order_visibility(SourceKind::Coherent) < std::f64::consts::FRAC_1_SQRT_2);
    }
}
