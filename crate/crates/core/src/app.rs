//! Configuration records and command drivers for the `thermal-bell` binary.
//!
//! Every command reads an optional JSON config (unknown fields rejected),
//! then applies command-line flags on top. Precedence, lowest first:
//! built-in defaults, config file, flags. Primary outputs carry no
//! timestamps, so identical configs produce byte-identical files.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 numeric guard
//! (truncation, sampling, size limits, failed fits), 4 I/O or file format.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analytic::{
    gm1_tls_set, gm1_tls_set_normalized, probabilities_four, visibility_tls, visibility_tls_ratio, DetectorSetting,
    SettingPair, SourceKind, SourceModel,
};
use crate::bell::{self, AngleSet, BellReport, Bound, ModelTag};
use crate::correlator::{
    bell_from_frames, estimate_gm1_translated, fit_visibility, BellFrameOptions, CorrelationCurve, EstimatorOptions,
    FrameBellReport, TranslatedScheme,
};
use crate::error::{Error, Result};
use crate::fock;
use crate::frames::{ColumnCache, FrameSet, FrameSource};
use crate::gaussian::gm1_from_permanent;
use crate::speckle::{photonize, Geometry, SlitMask, SpeckleConfig, SpeckleSource};
use crate::spkl;

/// Inclusive range of `m` (detector-1 photon counts).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderRange {
    pub min: usize,
    pub max: usize,
}

impl OrderRange {
    /// Parses `"a..b"`, `"a..=b"` (both inclusive) or a single `"a"`.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || Error::param("m", format!("expected `a..b` or `a`, got {text:?}"));
        let (a, b) = match text.split_once("..") {
            Some((a, b)) => (a, b.trim_start_matches('=')),
            None => (text, text),
        };
        let min = a.trim().parse().map_err(|_| bad())?;
        let max = b.trim().parse().map_err(|_| bad())?;
        OrderRange { min, max }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if self.min == 0 {
            return Err(Error::param("m", "m starts at 1"));
        }
        if self.max < self.min {
            return Err(Error::param("m", format!("empty range {}..{}", self.min, self.max)));
        }
        Ok(self)
    }

    pub fn orders(self) -> Vec<usize> {
        (self.min..=self.max).collect()
    }
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| spkl::with_path(e, p))?;
            Ok(serde_json::from_str(&text)?)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => Ok(fs::write(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

// ---------------------------------------------------------------- analytic

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    /// Fringe visibility `m/(m+2)` as an exact fraction.
    #[default]
    Visibility,
    /// Normalized correlation against the phase difference.
    Fringe,
    /// Post-selected joint probabilities against the phase difference.
    Probabilities,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyticConfig {
    pub m: OrderRange,
    pub curve: CurveKind,
    /// Add permanent-based cross-check columns.
    pub oracle: bool,
    /// Phase-difference grid size for curves and oracle checks.
    pub grid_points: usize,
}

impl Default for AnalyticConfig {
    fn default() -> Self {
        AnalyticConfig { m: OrderRange { min: 1, max: 8 }, curve: CurveKind::Visibility, oracle: false, grid_points: 64 }
    }
}

fn grid(points: usize) -> Vec<f64> {
    (0..points).map(|k| 2.0 * PI * k as f64 / points as f64).collect()
}

/// Normalized closed-form correlation `(m+2)!/(2(m+1)) (1 + V cos Δ)`.
fn closed_form_g(m: usize, delta: f64) -> Result<f64> {
    gm1_tls_set_normalized(m, DetectorSetting::new(delta), DetectorSetting::new(0.0), None)?.get(SettingPair::D1D2)
}

fn oracle_deviation(m: usize, deltas: &[f64]) -> Result<f64> {
    let model = SourceModel::default();
    let mut worst: f64 = 0.0;
    for &d in deltas {
        let want = closed_form_g(m, d)?;
        let got = gm1_from_permanent(m, d, 0.0, &model)?.normalized;
        worst = worst.max(((got - want) / want).abs());
    }
    Ok(worst)
}

/// CSV text for the analytic curves.
pub fn cmd_analytic(config: &AnalyticConfig) -> Result<String> {
    let range = config.m.validated()?;
    if config.grid_points < 2 {
        return Err(Error::param("grid_points", "need at least 2 points"));
    }
    let deltas = grid(config.grid_points);
    let mut out = String::new();
    match config.curve {
        CurveKind::Visibility => {
            out.push_str("m,order,v_num,v_den,visibility");
            if config.oracle {
                out.push_str(",v_oracle,max_rel_dev");
            }
            out.push('\n');
            for m in range.orders() {
                let (num, den) = visibility_tls_ratio(m)?;
                write!(out, "{m},{},{num},{den},{}", m + 1, visibility_tls(m)?).unwrap();
                if config.oracle {
                    let model = SourceModel::default();
                    let hi = gm1_from_permanent(m, 0.0, 0.0, &model)?.normalized;
                    let lo = gm1_from_permanent(m, PI, 0.0, &model)?.normalized;
                    write!(out, ",{},{:e}", (hi - lo) / (hi + lo), oracle_deviation(m, &deltas)?).unwrap();
                }
                out.push('\n');
            }
        }
        CurveKind::Fringe => {
            out.push_str("m,delta_rad,g_normalized");
            if config.oracle {
                out.push_str(",g_oracle,rel_dev");
            }
            out.push('\n');
            for m in range.orders() {
                for &d in &deltas {
                    let g = closed_form_g(m, d)?;
                    write!(out, "{m},{d},{g}").unwrap();
                    if config.oracle {
                        let o = gm1_from_permanent(m, d, 0.0, &SourceModel::default())?.normalized;
                        write!(out, ",{o},{:e}", ((o - g) / g).abs()).unwrap();
                    }
                    out.push('\n');
                }
            }
        }
        CurveKind::Probabilities => {
            out.push_str("m,delta_rad,p_d1d2,p_p1p2,p_d1p2,p_p1d2,marginal_1,marginal_2\n");
            for m in range.orders() {
                for &d in &deltas {
                    let set = gm1_tls_set_normalized(m, DetectorSetting::new(d), DetectorSetting::new(0.0), None)?;
                    let p = probabilities_four(&set)?;
                    writeln!(
                        out,
                        "{m},{d},{},{},{},{},{},{}",
                        p.get(SettingPair::D1D2)?,
                        p.get(SettingPair::P1P2)?,
                        p.get(SettingPair::D1P2)?,
                        p.get(SettingPair::P1D2)?,
                        p.marginal_1,
                        p.marginal_2
                    )
                    .unwrap();
                }
            }
        }
    }
    Ok(out)
}

// -------------------------------------------------------------------- bell

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BellModel {
    /// Four cross pairs with post-selection, (m+1)-th order thermal light.
    #[default]
    FourTerm,
    /// All six detector pairs at second order.
    SixTerm,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BoundChoice {
    Upper,
    Lower,
    #[default]
    Both,
}

impl BoundChoice {
    fn bounds(self) -> Vec<Bound> {
        match self {
            BoundChoice::Upper => vec![Bound::Upper],
            BoundChoice::Lower => vec![Bound::Lower],
            BoundChoice::Both => vec![Bound::Upper, Bound::Lower],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BellConfig {
    pub model: BellModel,
    /// Emitter type for the six-term model.
    pub source: SourceKind,
    pub m: Option<usize>,
    pub visibility: Option<f64>,
    pub bound: BoundChoice,
}

impl Default for BellConfig {
    fn default() -> Self {
        BellConfig { model: BellModel::FourTerm, source: SourceKind::SinglePhoton, m: None, visibility: None, bound: BoundChoice::Both }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Thresholds {
    pub six_term_upper: f64,
    pub six_term_lower: f64,
    pub four_term_upper: f64,
    pub four_term_lower: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundEvaluation {
    pub bound: Bound,
    pub angles: AngleSet,
    pub cosine_args: [f64; 4],
    pub report: BellReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BellOutput {
    pub model_tag: ModelTag,
    pub visibility: f64,
    pub m: Option<usize>,
    pub evaluations: Vec<BoundEvaluation>,
    pub thresholds: Thresholds,
    pub min_violating_m: usize,
}

pub fn cmd_bell(config: &BellConfig) -> Result<BellOutput> {
    let model_tag = match (config.model, config.source) {
        (BellModel::FourTerm, _) => ModelTag::FourTermTls,
        (BellModel::SixTerm, SourceKind::Thermal) => ModelTag::SixTermTls,
        (BellModel::SixTerm, SourceKind::SinglePhoton) => ModelTag::SixTermSpe,
        (BellModel::SixTerm, SourceKind::Coherent) => {
            return Err(Error::param("source", "the six-term model covers spe and tls sources"))
        }
    };
    let visibility = match (config.visibility, config.m) {
        (Some(v), _) => v,
        (None, Some(m)) if model_tag == ModelTag::FourTermTls => visibility_tls(m)?,
        (None, Some(_)) => return Err(Error::param("m", "the six-term model is second order; give a visibility")),
        (None, None) => match model_tag {
            ModelTag::SixTermSpe => 1.0,
            ModelTag::SixTermTls => visibility_tls(1)?,
            ModelTag::FourTermTls => return Err(Error::param("m", "the four-term model needs m or a visibility")),
        },
    };
    let evaluations = config
        .bound
        .bounds()
        .into_iter()
        .map(|b| {
            let angles = bell::default_angles(b);
            Ok(BoundEvaluation { bound: b, angles, cosine_args: angles.cosine_args(), report: bell::bell_statistic(model_tag, visibility, &angles)? })
        })
        .collect::<Result<_>>()?;
    Ok(BellOutput {
        model_tag,
        visibility,
        m: config.m,
        evaluations,
        thresholds: Thresholds {
            six_term_upper: bell::threshold_visibility(ModelTag::SixTermSpe, Bound::Upper),
            six_term_lower: bell::threshold_visibility(ModelTag::SixTermSpe, Bound::Lower),
            four_term_upper: bell::threshold_visibility(ModelTag::FourTermTls, Bound::Upper),
            four_term_lower: bell::threshold_visibility(ModelTag::FourTermTls, Bound::Lower),
        },
        min_violating_m: bell::min_violating_m(),
    })
}

// ----------------------------------------------------------------- quantum

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuantumConfig {
    pub m: OrderRange,
    pub mean_photons: Vec<f64>,
    pub delta1: Vec<f64>,
    /// Fixed Fock cutoff; chosen automatically when absent.
    pub dim: Option<usize>,
    /// Phase points for the Fock-versus-closed-form comparison.
    pub grid_points: usize,
}

impl Default for QuantumConfig {
    fn default() -> Self {
        QuantumConfig {
            m: OrderRange { min: 1, max: 4 },
            mean_photons: vec![0.05, 0.2],
            delta1: vec![0.0, 0.7],
            dim: None,
            grid_points: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuantumRow {
    pub m: usize,
    pub mean_photons: f64,
    pub delta1: f64,
    pub dim: usize,
    pub c_abs: f64,
    pub c_theory: f64,
    pub c_abs_error: f64,
    /// Largest relative deviation of the Fock-space correlation from the
    /// closed form over the phase grid.
    pub gm1_max_rel_dev: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuantumOutput {
    pub rows: Vec<QuantumRow>,
    pub max_c_error: f64,
    pub max_gm1_rel_dev: f64,
}

pub fn cmd_quantum(config: &QuantumConfig) -> Result<QuantumOutput> {
    let range = config.m.validated()?;
    if config.mean_photons.is_empty() || config.delta1.is_empty() {
        return Err(Error::param("mean_photons/delta1", "need at least one value each"));
    }
    let deltas = grid(config.grid_points.max(1));
    let mut rows = Vec::new();
    for m in range.orders() {
        for &nbar in &config.mean_photons {
            for &d1 in &config.delta1 {
                let projected = match config.dim {
                    Some(dim) => {
                        let p = fock::project_m(&fock::thermal_state(nbar, dim)?, d1, m)?;
                        if p.under_truncated {
                            return Err(Error::UnderTruncated {
                                detail: format!("m = {m}, n̄ = {nbar}: projected tail mass {:.3e} at dim {dim}", p.trace_deficit),
                                suggested_dim: fock::auto_dim(nbar, m, fock::AUTO_TAIL_TOL),
                            });
                        }
                        p
                    }
                    None => fock::project_thermal(nbar, d1, m)?,
                };
                let c_abs = fock::cross_corr(&projected)?.norm();
                let c_theory = visibility_tls(m)?;

                let dim = config.dim.unwrap_or_else(|| fock::auto_dim(nbar, m, 1e-13).max(fock::thermal_dim(nbar, 1e-13)));
                let thermal = fock::thermal_state(nbar, dim)?;
                let model = SourceModel::thermal(nbar, 1.0)?;
                let mut worst: f64 = 0.0;
                for &d in &deltas {
                    let d2 = d1 + d;
                    let got = fock::expect_gm1(&thermal, m, d1, d2)?;
                    let want = gm1_tls_set(m, DetectorSetting::new(d1), DetectorSetting::new(d2), &model, None)?
                        .get(SettingPair::D1D2)?;
                    worst = worst.max(((got - want) / want).abs());
                }
                rows.push(QuantumRow {
                    m,
                    mean_photons: nbar,
                    delta1: d1,
                    dim: projected.dim(),
                    c_abs,
                    c_theory,
                    c_abs_error: (c_abs - c_theory).abs(),
                    gm1_max_rel_dev: worst,
                });
            }
        }
    }
    let max_c_error = rows.iter().map(|r| r.c_abs_error).fold(0.0, f64::max);
    let max_gm1_rel_dev = rows.iter().map(|r| r.gm1_max_rel_dev).fold(0.0, f64::max);
    Ok(QuantumOutput { rows, max_c_error, max_gm1_rel_dev })
}

// ---------------------------------------------------------------- simulate

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub speckle: SpeckleConfig,
    pub n_frames: usize,
    /// Convert intensities to Poisson photon counts with this gain.
    pub photon_gain: Option<f64>,
    pub photon_seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig { speckle: SpeckleConfig::default(), n_frames: 1000, photon_gain: None, photon_seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulateSummary {
    pub n_frames: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    pub tau_ratio: f64,
    pub mean_intensity: f64,
    pub speckle_contrast: f64,
    pub fringe_period_m: f64,
    pub fringe_period_pixels: f64,
}

/// Generates frames according to `config`.
pub fn simulate(config: &SimulateConfig) -> Result<FrameSet> {
    let frames = SpeckleSource::new(config.speckle.clone(), config.n_frames)?.to_frames();
    match config.photon_gain {
        Some(gain) => photonize(&frames, gain, config.photon_seed),
        None => Ok(frames),
    }
}

pub fn summarize(frames: &FrameSet, geometry: &Geometry) -> SimulateSummary {
    SimulateSummary {
        n_frames: frames.n_frames,
        height: frames.height,
        width: frames.width,
        seed: frames.meta.seed,
        tau_ratio: frames.meta.tau_ratio,
        mean_intensity: frames.mean_intensity(),
        speckle_contrast: frames.speckle_contrast(),
        fringe_period_m: geometry.fringe_period(),
        fringe_period_pixels: geometry.fringe_period_pixels(),
    }
}

/// Writes the SPKL file and its sidecar to `out`; returns the summary.
pub fn cmd_simulate(config: &SimulateConfig, out: &Path) -> Result<SimulateSummary> {
    let frames = simulate(config)?;
    spkl::save(&frames, out)?;
    Ok(summarize(&frames, &config.speckle.geometry))
}

// --------------------------------------------------------------- correlate

/// Frames generated on the fly instead of read from a file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticFrames {
    pub speckle: SpeckleConfig,
    pub n_frames: usize,
}

impl Default for SyntheticFrames {
    fn default() -> Self {
        SyntheticFrames { speckle: SpeckleConfig::default(), n_frames: 100_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BellSection {
    pub bound: Bound,
    pub options: BellFrameOptions,
}

impl Default for BellSection {
    fn default() -> Self {
        BellSection { bound: Bound::Upper, options: BellFrameOptions::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrelateConfig {
    /// SPKL input; takes precedence over `synthetic`.
    pub input: Option<PathBuf>,
    pub synthetic: Option<SyntheticFrames>,
    /// Geometry for inputs without a sidecar.
    pub geometry: Option<Geometry>,
    pub m: OrderRange,
    pub x1_stride: usize,
    pub offset_stride: usize,
    pub estimator: EstimatorOptions,
    /// Evaluate the Bell statistic from frames for every `m` in range.
    pub bell: Option<BellSection>,
}

impl Default for CorrelateConfig {
    fn default() -> Self {
        CorrelateConfig {
            input: None,
            synthetic: None,
            geometry: None,
            m: OrderRange { min: 1, max: 7 },
            x1_stride: 4,
            offset_stride: 2,
            estimator: EstimatorOptions::default(),
            bell: None,
        }
    }
}

/// One row of the visibility-versus-order table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VisibilityRow {
    pub m: usize,
    pub v_theory: f64,
    pub v_hat: f64,
    pub stderr: f64,
    pub fit_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelateOutput {
    pub n_frames: usize,
    pub curves: Vec<CorrelationCurve>,
    pub visibilities: Vec<VisibilityRow>,
    pub bell: Vec<FrameBellReport>,
}

/// Curves, visibility fits and optional Bell statistics for any frame
/// source with known geometry.
pub fn correlate_source(source: &dyn FrameSource, geometry: &Geometry, config: &CorrelateConfig) -> Result<CorrelateOutput> {
    let range = config.m.validated()?;
    let scheme = TranslatedScheme::spanning_period(geometry, &range.orders(), config.x1_stride, config.offset_stride)?;
    let curves = estimate_gm1_translated(source, &scheme, &config.estimator)?;
    let visibilities = curves
        .iter()
        .map(|c| {
            let fit = fit_visibility(c, geometry)?;
            Ok(VisibilityRow { m: c.m, v_theory: visibility_tls(c.m)?, v_hat: fit.value, stderr: fit.stderr, fit_residual: fit.fit_residual })
        })
        .collect::<Result<_>>()?;
    let bell = match &config.bell {
        None => Vec::new(),
        Some(section) => {
            let angles = bell::default_angles(section.bound);
            let mut options = section.options.clone();
            options.estimator = config.estimator.clone();
            range.orders().into_iter().map(|m| bell_from_frames(source, m, &angles, &options)).collect::<Result<_>>()?
        }
    };
    Ok(CorrelateOutput { n_frames: source.n_frames(), curves, visibilities, bell })
}

/// Loads or synthesizes the frames named by `config` and runs
/// [`correlate_source`].
pub fn cmd_correlate(config: &CorrelateConfig) -> Result<(CorrelateOutput, Geometry)> {
    if let Some(path) = &config.input {
        let mut frames = spkl::load(path)?;
        let geometry = frames
            .meta
            .geometry
            .clone()
            .or_else(|| config.geometry.clone())
            .ok_or_else(|| Error::param("geometry", "input has no sidecar geometry and none is configured"))?;
        if geometry.width != frames.width || geometry.height != frames.height {
            return Err(Error::param("geometry", "width/height disagree with the frame file"));
        }
        frames.meta.geometry = Some(geometry.clone());
        let output = correlate_source(&frames, &geometry, config)?;
        return Ok((output, geometry));
    }
    let synthetic = config
        .synthetic
        .as_ref()
        .ok_or_else(|| Error::param("input", "give an SPKL input or a synthetic source"))?;
    let geometry = synthetic.speckle.geometry.clone();
    let source = SpeckleSource::new(synthetic.speckle.clone(), synthetic.n_frames)?;
    // Every analysis reads the same columns, so generate them once.
    let cache = ColumnCache::build(&source, &(0..geometry.width).collect::<Vec<_>>())?;
    let output = correlate_source(&cache, &geometry, config)?;
    Ok((output, geometry))
}

#[derive(Serialize)]
struct CurveRecord {
    x2_pixel: f64,
    delta_rad: f64,
    g_value: f64,
    stderr: f64,
}

fn to_csv<T: Serialize>(records: impl IntoIterator<Item = T>) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for r in records {
        writer.serialize(r)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output of numbers is utf-8"))
}

/// `x2_pixel,delta_rad,g_value,stderr`, one row per scanned position.
pub fn curve_csv(curve: &CorrelationCurve, geometry: &Geometry) -> Result<String> {
    let deltas = curve.deltas(geometry);
    to_csv((0..curve.values.len()).map(|i| CurveRecord {
        x2_pixel: curve.x2_positions[i],
        delta_rad: deltas[i],
        g_value: curve.values[i],
        stderr: curve.stderr[i],
    }))
}

/// `m,v_theory,v_hat,stderr` plus the fit residual.
pub fn visibility_csv(rows: &[VisibilityRow]) -> Result<String> {
    to_csv(rows)
}

/// Writes `curve_m<m>.csv`, `visibility.csv` and, when present,
/// `bell.json` into `dir`.
pub fn write_correlate_outputs(output: &CorrelateOutput, geometry: &Geometry, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for c in &output.curves {
        fs::write(dir.join(format!("curve_m{}.csv", c.m)), curve_csv(c, geometry)?)?;
    }
    fs::write(dir.join("visibility.csv"), visibility_csv(&output.visibilities)?)?;
    if !output.bell.is_empty() {
        fs::write(dir.join("bell.json"), to_json(&output.bell)?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CorrelateSummary<'a> {
    n_frames: usize,
    visibilities: &'a [VisibilityRow],
    bell: Vec<&'a BellReport>,
}

// --------------------------------------------------------------------- CLI

#[derive(Parser, Debug)]
#[command(name = "thermal-bell", version, about = "Higher-order thermal-light correlations and CH74 Bell tests")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// JSON config file; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Random seed for commands that draw random numbers.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file (directory for `correlate`); stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Closed-form visibilities, fringes and probabilities as CSV.
    Analytic {
        #[command(flatten)]
        common: CommonArgs,
        /// Range of m, e.g. `1..8`.
        #[arg(long)]
        m: Option<String>,
        #[arg(long, value_enum)]
        curve: Option<CurveKind>,
        /// Add permanent cross-check columns.
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        grid_points: Option<usize>,
    },
    /// CH74 statistics, thresholds and the minimal violating m as JSON.
    Bell {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, conflicts_with = "six_term")]
        four_term: bool,
        #[arg(long)]
        six_term: bool,
        /// Emitters for the six-term model: spe or tls.
        #[arg(long, value_parser = parse_source)]
        source: Option<SourceKind>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        vis: Option<f64>,
        #[arg(long, value_enum)]
        bound: Option<BoundChoice>,
    },
    /// Fock-space projections: C(m) table and closed-form deviations.
    Quantum {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        m: Option<String>,
        /// Mean photon numbers, comma separated.
        #[arg(long, value_delimiter = ',')]
        nbar: Option<Vec<f64>>,
        /// Detection phases, comma separated.
        #[arg(long, value_delimiter = ',')]
        delta1: Option<Vec<f64>>,
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Synthetic speckle frames written as SPKL.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long, value_parser = parse_slits)]
        slits: Option<SlitMask>,
        #[arg(long)]
        gain: Option<f64>,
    },
    /// Correlation curves, visibility fits and Bell statistics from frames.
    Correlate {
        #[command(flatten)]
        common: CommonArgs,
        /// SPKL input file.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Generate this many synthetic frames instead of reading a file.
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        m: Option<String>,
        #[arg(long)]
        bell: bool,
        /// Destroy inter-side correlations in the Bell evaluation.
        #[arg(long)]
        shuffle: bool,
    },
}

fn parse_source(text: &str) -> std::result::Result<SourceKind, String> {
    match text {
        "spe" => Ok(SourceKind::SinglePhoton),
        "tls" => Ok(SourceKind::Thermal),
        _ => Err(format!("expected spe or tls, got {text:?}")),
    }
}

fn parse_slits(text: &str) -> std::result::Result<SlitMask, String> {
    match text {
        "both" => Ok(SlitMask::Both),
        "first" => Ok(SlitMask::First),
        "second" => Ok(SlitMask::Second),
        _ => Err(format!("expected both, first or second, got {text:?}")),
    }
}

/// Process exit code for an error.
pub fn exit_code(error: &Error) -> i32 {
    if error.is_io() {
        4
    } else if error.is_numeric_guard() {
        3
    } else {
        2
    }
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analytic { common, m, curve, oracle, grid_points } => {
            let mut cfg: AnalyticConfig = load_config(common.config.as_deref())?;
            if let Some(m) = m {
                cfg.m = OrderRange::parse(&m)?;
            }
            if let Some(c) = curve {
                cfg.curve = c;
            }
            cfg.oracle |= oracle;
            if let Some(g) = grid_points {
                cfg.grid_points = g;
            }
            emit(common.out.as_deref(), &cmd_analytic(&cfg)?)
        }
        Command::Bell { common, four_term, six_term, source, m, vis, bound } => {
            let mut cfg: BellConfig = load_config(common.config.as_deref())?;
            if four_term {
                cfg.model = BellModel::FourTerm;
            }
            if six_term {
                cfg.model = BellModel::SixTerm;
            }
            if let Some(s) = source {
                cfg.source = s;
            }
            if m.is_some() {
                cfg.m = m;
            }
            if vis.is_some() {
                cfg.visibility = vis;
            }
            if let Some(b) = bound {
                cfg.bound = b;
            }
            emit(common.out.as_deref(), &to_json(&cmd_bell(&cfg)?)?)
        }
        Command::Quantum { common, m, nbar, delta1, dim } => {
            let mut cfg: QuantumConfig = load_config(common.config.as_deref())?;
            if let Some(m) = m {
                cfg.m = OrderRange::parse(&m)?;
            }
            if let Some(n) = nbar {
                cfg.mean_photons = n;
            }
            if let Some(d) = delta1 {
                cfg.delta1 = d;
            }
            if dim.is_some() {
                cfg.dim = dim;
            }
            emit(common.out.as_deref(), &to_json(&cmd_quantum(&cfg)?)?)
        }
        Command::Simulate { common, frames, tau, slits, gain } => {
            let mut cfg: SimulateConfig = load_config(common.config.as_deref())?;
            if let Some(s) = common.seed {
                cfg.speckle.seed = s;
            }
            if let Some(n) = frames {
                cfg.n_frames = n;
            }
            if let Some(t) = tau {
                cfg.speckle.tau_ratio = t;
            }
            if let Some(s) = slits {
                cfg.speckle.slits = s;
            }
            if gain.is_some() {
                cfg.photon_gain = gain;
            }
            let out = common.out.ok_or_else(|| Error::param("out", "simulate needs --out <file.spkl>"))?;
            print!("{}", to_json(&cmd_simulate(&cfg, &out)?)?);
            Ok(())
        }
        Command::Correlate { common, input, frames, tau, m, bell, shuffle } => {
            let mut cfg: CorrelateConfig = load_config(common.config.as_deref())?;
            if input.is_some() {
                cfg.input = input;
            }
            if frames.is_some() || tau.is_some() || common.seed.is_some() {
                let synthetic = cfg.synthetic.get_or_insert_with(SyntheticFrames::default);
                if let Some(n) = frames {
                    synthetic.n_frames = n;
                }
                if let Some(t) = tau {
                    synthetic.speckle.tau_ratio = t;
                }
                if let Some(s) = common.seed {
                    synthetic.speckle.seed = s;
                }
            }
            if let Some(m) = m {
                cfg.m = OrderRange::parse(&m)?;
            }
            if bell || shuffle {
                let section = cfg.bell.get_or_insert_with(BellSection::default);
                section.options.shuffle |= shuffle;
            }
            let (output, geometry) = cmd_correlate(&cfg)?;
            if let Some(dir) = &common.out {
                write_correlate_outputs(&output, &geometry, dir)?;
            }
            let summary = CorrelateSummary {
                n_frames: output.n_frames,
                visibilities: &output.visibilities,
                bell: output.bell.iter().map(|b| &b.report).collect(),
            };
            print!("{}", to_json(&summary)?);
            Ok(())
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_ranges() {
        assert_eq!(OrderRange::parse("1..8").unwrap(), OrderRange { min: 1, max: 8 });
        assert_eq!(OrderRange::parse("2..=3").unwrap(), OrderRange { min: 2, max: 3 });
        assert_eq!(OrderRange::parse("6").unwrap(), OrderRange { min: 6, max: 6 });
        assert!(OrderRange::parse("5..4").is_err());
        assert!(OrderRange::parse("0..3").is_err());
        assert!(OrderRange::parse("x").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::param("m", "bad")), 2);
        assert_eq!(exit_code(&Error::UnderSampled { pixels: 3.0, min: 16.0 }), 3);
        assert_eq!(exit_code(&Error::Io(std::io::Error::other("x"))), 4);
    }

    #[test]
    fn unknown_config_fields_are_rejected() {
        assert!(serde_json::from_str::<AnalyticConfig>(r#"{"curve": "fringe"}"#).is_ok());
        assert!(serde_json::from_str::<AnalyticConfig>(r#"{"curv": "fringe"}"#).is_err());
        assert!(serde_json::from_str::<CorrelateConfig>(r#"{"synthetic": {"n_frames": 10, "speckle": {"tau": 1}}}"#).is_err());
    }
}
