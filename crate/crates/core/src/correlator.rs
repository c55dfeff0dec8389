//! Normalized intensity-correlation estimators over frame ensembles.
//!
//! Every estimate here is a product moment
//! `ĝ = ⟨∏ I(pᵢ)⟩ / ∏⟨I(pᵢ)⟩` over frames. Products are formed from
//! intensities already divided by their pixel means, which keeps the
//! accumulated numbers of order one and makes the result exactly invariant
//! under a power-of-two rescaling of all frames.
//!
//! Terms that share their detector-1 pixels are evaluated together: the
//! product over the `m` shared pixels is computed once per frame (in the log
//! domain when `m ≥ 6`) and then multiplied by each detector-2 pixel.
//!
//! Uncertainties come from a block bootstrap over frames. Each resample
//! reweights per-block sums, so the cost of a resample does not depend on
//! the number of frames.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::visibility_tls;
use crate::bell::{AngleSet, BellReport, ModelTag};
use crate::error::{Error, Result};
use crate::frames::{FrameSource, Pixel};
use crate::speckle::Geometry;

pub const BOOTSTRAP_RESAMPLES: usize = 200;
pub const BLOCK_LEN: usize = 64;
pub const MIN_FRAMES: usize = 100;

/// Shared detector-1 products with at least this many factors are
/// accumulated as sums of logarithms.
pub const LOG_DOMAIN_MIN_FACTORS: usize = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorOptions {
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
    #[serde(default = "default_block_len")]
    pub block_len: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_min_frames")]
    pub min_frames: usize,
}

fn default_resamples() -> usize {
    BOOTSTRAP_RESAMPLES
}
fn default_block_len() -> usize {
    BLOCK_LEN
}
fn default_min_frames() -> usize {
    MIN_FRAMES
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            bootstrap_resamples: BOOTSTRAP_RESAMPLES,
            block_len: BLOCK_LEN,
            seed: 0,
            min_frames: MIN_FRAMES,
        }
    }
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    #[inline]
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.carry
    }
}

/// A pixel read `lag` frames after the current one, cyclically.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Factor {
    slot: usize,
    lag: usize,
}

/// Terms `common × tailₖ`.
#[derive(Clone, Debug)]
struct Group {
    common: Vec<Factor>,
    tails: Vec<Factor>,
}

/// Product moments for a set of groups, with bootstrap replicates.
struct Moments {
    /// Group-major, tail-minor.
    values: Vec<f64>,
    /// One vector like `values` per resample.
    replicates: Vec<Vec<f64>>,
    n_frames: usize,
}

struct PlanBuilder {
    row_uniform: bool,
    keys: Vec<Pixel>,
    groups: Vec<(Vec<(Pixel, usize)>, Vec<(Pixel, usize)>)>,
}

impl PlanBuilder {
    fn new(source: &dyn FrameSource) -> Self {
        PlanBuilder { row_uniform: source.row_uniform(), keys: Vec::new(), groups: Vec::new() }
    }

    fn key(&self, p: Pixel) -> Pixel {
        if self.row_uniform {
            Pixel::new(p.x, 0)
        } else {
            p
        }
    }

    fn push(&mut self, common: Vec<(Pixel, usize)>, tails: Vec<(Pixel, usize)>) {
        for &(p, _) in common.iter().chain(&tails) {
            let k = self.key(p);
            self.keys.push(k);
        }
        self.groups.push((common, tails));
    }

    /// Resolves pixels to table slots. Slots follow sorted pixel order, so
    /// the plan does not depend on the order pixels were supplied in.
    fn finish(mut self) -> (Vec<Pixel>, Vec<Group>) {
        self.keys.sort_unstable();
        self.keys.dedup();
        let slot = |p: Pixel, keys: &[Pixel], rw: bool| {
            let k = if rw { Pixel::new(p.x, 0) } else { p };
            keys.binary_search(&k).unwrap()
        };
        let groups = self
            .groups
            .iter()
            .map(|(c, t)| {
                let mut common: Vec<Factor> =
                    c.iter().map(|&(p, lag)| Factor { slot: slot(p, &self.keys, self.row_uniform), lag }).collect();
                common.sort_unstable();
                let tails = t.iter().map(|&(p, lag)| Factor { slot: slot(p, &self.keys, self.row_uniform), lag }).collect();
                Group { common, tails }
            })
            .collect();
        (self.keys, groups)
    }
}

fn evaluate(source: &dyn FrameSource, pixels: &[Pixel], groups: &[Group], opts: &EstimatorOptions) -> Result<Moments> {
    let n = source.n_frames();
    let needed = opts.min_frames.max(1);
    if n < needed {
        return Err(Error::InsufficientFrames { needed, got: n });
    }
    if opts.block_len == 0 {
        return Err(Error::param("block_len", "must be at least 1"));
    }
    for &p in pixels {
        source.check_pixel(p)?;
    }
    let s = pixels.len();
    let block_len = opts.block_len;
    let n_blocks = n.div_ceil(block_len);

    // Raw intensities, then per-block pixel sums and full-sample means.
    let mut table = vec![0.0; n * s];
    table.par_chunks_mut(s).enumerate().for_each(|(f, row)| source.read_pixels(f, pixels, row));
    let pixel_sums: Vec<Vec<f64>> = table
        .par_chunks(s * block_len)
        .map(|block| {
            let mut acc = vec![Compensated::default(); s];
            for row in block.chunks(s) {
                for (a, &v) in acc.iter_mut().zip(row) {
                    a.add(v);
                }
            }
            acc.into_iter().map(Compensated::value).collect()
        })
        .collect();
    let mut means = vec![Compensated::default(); s];
    for block in &pixel_sums {
        for (a, &v) in means.iter_mut().zip(block) {
            a.add(v);
        }
    }
    let means: Vec<f64> = means.into_iter().map(|c| c.value() / n as f64).collect();
    for (p, &mu) in pixels.iter().zip(&means) {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::param("frames", format!("pixel ({}, {}) has mean intensity {mu}", p.x, p.y)));
        }
    }
    table.par_chunks_mut(s).for_each(|row| {
        for (v, mu) in row.iter_mut().zip(&means) {
            *v /= mu;
        }
    });

    let n_terms: usize = groups.iter().map(|g| g.tails.len()).sum();
    let term_sums: Vec<Vec<f64>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![Compensated::default(); n_terms];
            let at = |frame: usize, f: &Factor| table[((frame + f.lag) % n) * s + f.slot];
            for i in b * block_len..((b + 1) * block_len).min(n) {
                let mut t = 0;
                for g in groups {
                    let common = if g.common.len() >= LOG_DOMAIN_MIN_FACTORS {
                        g.common.iter().map(|f| at(i, f).ln()).sum::<f64>().exp()
                    } else {
                        g.common.iter().map(|f| at(i, f)).product::<f64>()
                    };
                    for tail in &g.tails {
                        acc[t].add(common * at(i, tail));
                        t += 1;
                    }
                }
            }
            acc.into_iter().map(Compensated::value).collect()
        })
        .collect();

    let mut values = vec![Compensated::default(); n_terms];
    for block in &term_sums {
        for (a, &v) in values.iter_mut().zip(block) {
            a.add(v);
        }
    }
    let values: Vec<f64> = values.into_iter().map(|c| c.value() / n as f64).collect();

    let block_sizes: Vec<usize> = (0..n_blocks).map(|b| ((b + 1) * block_len).min(n) - b * block_len).collect();
    let replicates = (0..opts.bootstrap_resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(r as u64);
            let mut weight = vec![0u32; n_blocks];
            for _ in 0..n_blocks {
                weight[rng.gen_range(0..n_blocks)] += 1;
            }
            let mut frames = 0usize;
            let mut sums = vec![0.0; n_terms];
            let mut psums = vec![0.0; s];
            for (b, &w) in weight.iter().enumerate() {
                if w == 0 {
                    continue;
                }
                let w_f = w as f64;
                frames += w as usize * block_sizes[b];
                for (a, &v) in sums.iter_mut().zip(&term_sums[b]) {
                    *a += w_f * v;
                }
                for (a, &v) in psums.iter_mut().zip(&pixel_sums[b]) {
                    *a += w_f * v;
                }
            }
            let ratio: Vec<f64> = psums.iter().zip(&means).map(|(p, mu)| p / frames as f64 / mu).collect();
            let mut out = Vec::with_capacity(n_terms);
            let mut t = 0;
            for g in groups {
                let common: f64 = g.common.iter().map(|f| ratio[f.slot]).product();
                for tail in &g.tails {
                    out.push(sums[t] / frames as f64 / (common * ratio[tail.slot]));
                    t += 1;
                }
            }
            out
        })
        .collect();
    Ok(Moments { values, replicates, n_frames: n })
}

fn sample_sd(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (count, sum) = values.clone().fold((0usize, 0.0), |(c, s), v| (c + 1, s + v));
    if count < 2 {
        return 0.0;
    }
    let mean = sum / count as f64;
    (values.map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
}

/// A normalized correlation as a function of the detector-2 position.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationCurve {
    pub m: usize,
    /// Detector-1 column (the mean column for translation-averaged curves).
    pub x1: f64,
    /// Detector-2 columns, possibly fractional after translation averaging.
    pub x2_positions: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_frames_used: usize,
    /// Bootstrap replicates of `values`, one vector per resample.
    #[serde(skip)]
    pub replicates: Vec<Vec<f64>>,
}

impl CorrelationCurve {
    /// Phase difference `δ(x₂) − δ(x₁)` of each point.
    pub fn deltas(&self, geom: &Geometry) -> Vec<f64> {
        self.x2_positions.iter().map(|&x2| geom.phase_step(x2 - self.x1)).collect()
    }

    fn from_moments(m: usize, x1: f64, x2_positions: Vec<f64>, values: Vec<f64>, replicates: Vec<Vec<f64>>, n: usize) -> Self {
        let stderr = (0..values.len()).map(|k| sample_sd(replicates.iter().map(move |r| r[k]))).collect();
        CorrelationCurve { m, x1, x2_positions, values, stderr, n_frames_used: n, replicates }
    }
}

/// `m` detector-1 pixels stacked along one column, scanned against one
/// detector-2 row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelScheme {
    pub x1: usize,
    pub y1_rows: Vec<usize>,
    pub y2: usize,
    pub x2_scan: Vec<usize>,
}

impl PixelScheme {
    /// Rows `0..m` at `x1`, detector 2 on row `m`, scanning `x2_scan`.
    pub fn stacked(m: usize, x1: usize, x2_scan: Vec<usize>) -> Self {
        PixelScheme { x1, y1_rows: (0..m).collect(), y2: m, x2_scan }
    }
}

fn check_rows(rows: &[usize]) -> Result<()> {
    let mut sorted = rows.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::param("y1_rows", "detector-1 rows must be distinct"));
    }
    Ok(())
}

fn check_collision(detector1: &[Pixel], p: Pixel) -> Result<()> {
    if detector1.contains(&p) {
        return Err(Error::PixelCollision { x: p.x, y: p.y });
    }
    Ok(())
}

/// `ĝ^{(m+1)}(x₁, x₂)` along a detector-2 scan, `m = scheme.y1_rows.len()`.
pub fn estimate_gm1(source: &dyn FrameSource, scheme: &PixelScheme, opts: &EstimatorOptions) -> Result<CorrelationCurve> {
    let m = scheme.y1_rows.len();
    if m == 0 {
        return Err(Error::param("m", "need at least one detector-1 pixel"));
    }
    if scheme.x2_scan.is_empty() {
        return Err(Error::param("x2_scan", "empty scan"));
    }
    check_rows(&scheme.y1_rows)?;
    let det1: Vec<Pixel> = scheme.y1_rows.iter().map(|&y| Pixel::new(scheme.x1, y)).collect();
    let tails: Vec<Pixel> = scheme.x2_scan.iter().map(|&x| Pixel::new(x, scheme.y2)).collect();
    for &p in det1.iter().chain(&tails) {
        source.check_pixel(p)?;
    }
    for &p in &tails {
        check_collision(&det1, p)?;
    }
    let mut plan = PlanBuilder::new(source);
    plan.push(det1.iter().map(|&p| (p, 0)).collect(), tails.iter().map(|&p| (p, 0)).collect());
    let (pixels, groups) = plan.finish();
    let moments = evaluate(source, &pixels, &groups, opts)?;
    Ok(CorrelationCurve::from_moments(
        m,
        scheme.x1 as f64,
        scheme.x2_scan.iter().map(|&x| x as f64).collect(),
        moments.values,
        moments.replicates,
        moments.n_frames,
    ))
}

/// Correlation curves averaged over translations of the detector pair.
///
/// For every detector-1 column in `x1_columns` and every `offset`, the
/// detector-2 pixel sits at `x1 + offset`. The estimate at an offset is the
/// mean over detector-1 columns. Stacking translations reuses the same
/// frames many times, which removes most of the speckle noise that a single
/// pixel pair carries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslatedScheme {
    pub orders: Vec<usize>,
    pub x1_columns: Vec<usize>,
    /// Detector-1 rows; the first `m` are used for order `m+1`.
    pub rows: Vec<usize>,
    pub y2: usize,
    pub offsets: Vec<i64>,
}

impl TranslatedScheme {
    /// Detector-1 columns spread over one fringe period, offsets covering
    /// one period centred on zero, rows `0..max(m)`, detector 2 on the next
    /// row.
    pub fn spanning_period(geom: &Geometry, orders: &[usize], x1_stride: usize, offset_stride: usize) -> Result<Self> {
        let max_m = orders.iter().copied().max().ok_or_else(|| Error::param("orders", "empty"))?;
        if max_m >= geom.height {
            return Err(Error::param("orders", format!("m = {max_m} needs at least {} rows", max_m + 1)));
        }
        let period = geom.fringe_period_pixels();
        let half = (period / 2.0).ceil() as i64;
        let span = period.ceil() as usize;
        if geom.width < 2 * half as usize + span {
            return Err(Error::param("width", "sensor too narrow for a translation-averaged scan"));
        }
        let start = half as usize;
        let x1_columns = (0..span).step_by(x1_stride.max(1)).map(|k| start + k).collect();
        let offsets = (-half..=half).step_by(offset_stride.max(1)).collect();
        Ok(TranslatedScheme { orders: orders.to_vec(), x1_columns, rows: (0..max_m).collect(), y2: max_m, offsets })
    }

    /// Sorted columns read by this scheme, e.g. for a [`crate::frames::ColumnCache`].
    pub fn columns(&self) -> Vec<usize> {
        let mut cols: Vec<usize> = self.x1_columns.clone();
        for &x1 in &self.x1_columns {
            cols.extend(self.offsets.iter().filter_map(|&o| usize::try_from(x1 as i64 + o).ok()));
        }
        cols.sort_unstable();
        cols.dedup();
        cols
    }
}

/// One curve per entry of `scheme.orders`, in that order.
pub fn estimate_gm1_translated(
    source: &dyn FrameSource,
    scheme: &TranslatedScheme,
    opts: &EstimatorOptions,
) -> Result<Vec<CorrelationCurve>> {
    if scheme.x1_columns.is_empty() || scheme.offsets.is_empty() || scheme.orders.is_empty() {
        return Err(Error::param("scheme", "needs orders, detector-1 columns and offsets"));
    }
    check_rows(&scheme.rows)?;
    let mut plan = PlanBuilder::new(source);
    for &m in &scheme.orders {
        if m == 0 || m > scheme.rows.len() {
            return Err(Error::param("orders", format!("m = {m} outside 1..={}", scheme.rows.len())));
        }
        for &x1 in &scheme.x1_columns {
            let det1: Vec<Pixel> = scheme.rows[..m].iter().map(|&y| Pixel::new(x1, y)).collect();
            let mut tails = Vec::with_capacity(scheme.offsets.len());
            for &o in &scheme.offsets {
                let x2 = x1 as i64 + o;
                if x2 < 0 {
                    return Err(Error::PixelOutOfFrame { x: 0, y: scheme.y2, width: source.width(), height: source.height() });
                }
                let p = Pixel::new(x2 as usize, scheme.y2);
                source.check_pixel(p)?;
                check_collision(&det1, p)?;
                tails.push((p, 0));
            }
            for &p in &det1 {
                source.check_pixel(p)?;
            }
            plan.push(det1.into_iter().map(|p| (p, 0)).collect(), tails);
        }
    }
    let (pixels, groups) = plan.finish();
    let moments = evaluate(source, &pixels, &groups, opts)?;

    let n_x1 = scheme.x1_columns.len();
    let n_off = scheme.offsets.len();
    let x1_mean = scheme.x1_columns.iter().sum::<usize>() as f64 / n_x1 as f64;
    let average = |v: &[f64], order_index: usize| -> Vec<f64> {
        let base = order_index * n_x1 * n_off;
        (0..n_off)
            .map(|k| (0..n_x1).map(|j| v[base + j * n_off + k]).sum::<f64>() / n_x1 as f64)
            .collect()
    };
    Ok(scheme
        .orders
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let values = average(&moments.values, i);
            let replicates = moments.replicates.iter().map(|r| average(r, i)).collect();
            let x2 = scheme.offsets.iter().map(|&o| x1_mean + o as f64).collect();
            CorrelationCurve::from_moments(m, x1_mean, x2, values, replicates, moments.n_frames)
        })
        .collect())
}

/// Fringe visibility fitted to a correlation curve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VisibilityEstimate {
    /// Fitted visibility, clipped to `[0, 1]`.
    pub value: f64,
    /// Bootstrap standard error when replicates are available, otherwise
    /// the covariance estimate.
    pub stderr: f64,
    pub stderr_covariance: f64,
    /// Root-mean-square residual relative to the fitted midline.
    pub fit_residual: f64,
    pub midline: f64,
    pub phase: f64,
}

struct CosineFit {
    coef: Vector3<f64>,
    normal_inverse: Matrix3<f64>,
    rss_weighted: f64,
    rss: f64,
}

fn fit_cosine(deltas: &[f64], values: &[f64], weights: &[f64]) -> Result<CosineFit> {
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for ((&d, &y), &w) in deltas.iter().zip(values).zip(weights) {
        let row = Vector3::new(1.0, d.cos(), d.sin());
        ata += w * row * row.transpose();
        atb += w * y * row;
    }
    let normal_inverse = ata.try_inverse().ok_or(Error::FitFailed("singular normal equations".into()))?;
    let coef = normal_inverse * atb;
    let (mut rss_weighted, mut rss) = (0.0, 0.0);
    for ((&d, &y), &w) in deltas.iter().zip(values).zip(weights) {
        let r = y - (coef[0] + coef[1] * d.cos() + coef[2] * d.sin());
        rss_weighted += w * r * r;
        rss += r * r;
    }
    Ok(CosineFit { coef, normal_inverse, rss_weighted, rss })
}

fn visibility_of(coef: &Vector3<f64>) -> Result<f64> {
    if !(coef[0] > 0.0) {
        return Err(Error::FitFailed(format!("non-positive midline {}", coef[0])));
    }
    Ok(coef[1].hypot(coef[2]) / coef[0])
}

/// Least-squares fit of `A(1 + V cos(δ − φ))` with the period fixed by the
/// geometry. The model is linear in `(A, AV cos φ, AV sin φ)`, so the fit
/// is a single weighted linear solve.
pub fn fit_visibility(curve: &CorrelationCurve, geom: &Geometry) -> Result<VisibilityEstimate> {
    let deltas = curve.deltas(geom);
    let n = deltas.len();
    if n < 4 || curve.values.len() != n || curve.stderr.len() != n {
        return Err(Error::FitFailed(format!("need at least 4 consistent points, got {n}")));
    }
    let (lo, hi) = deltas.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &d| (l.min(d), h.max(d)));
    let coverage = (hi - lo) * n as f64 / (n - 1) as f64;
    if coverage < 2.0 * PI * (1.0 - 1e-9) {
        return Err(Error::FitFailed(format!("scan covers {:.3} rad, less than one fringe period", coverage)));
    }
    let weighted = curve.stderr.iter().all(|&s| s > 0.0);
    let weights: Vec<f64> = if weighted { curve.stderr.iter().map(|s| 1.0 / (s * s)).collect() } else { vec![1.0; n] };

    let fit = fit_cosine(&deltas, &curve.values, &weights)?;
    let c = fit.coef;
    let v = visibility_of(&c)?;
    let r = c[1].hypot(c[2]);
    let grad = if r > 0.0 { Vector3::new(-v / c[0], c[1] / (c[0] * r), c[2] / (c[0] * r)) } else { Vector3::new(0.0, 0.0, 0.0) };
    let scale = if weighted { 1.0 } else { fit.rss_weighted / (n - 3).max(1) as f64 };
    let stderr_covariance = (scale * (grad.transpose() * fit.normal_inverse * grad)[0]).max(0.0).sqrt();

    let stderr = if curve.replicates.is_empty() {
        stderr_covariance
    } else {
        let vs: Vec<f64> = curve
            .replicates
            .iter()
            .filter_map(|rep| fit_cosine(&deltas, rep, &weights).ok().and_then(|f| visibility_of(&f.coef).ok()))
            .collect();
        sample_sd(vs.iter().copied())
    };
    Ok(VisibilityEstimate {
        value: v.clamp(0.0, 1.0),
        stderr,
        stderr_covariance,
        fit_residual: (fit.rss / n as f64).sqrt() / c[0],
        midline: c[0],
        phase: c[2].atan2(c[1]),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BellFrameOptions {
    /// Number of one-column translations of the whole detector layout.
    /// `None` spans one fringe period or as many as fit on the sensor.
    #[serde(default)]
    pub translations: Option<usize>,
    /// Pair detector-2 intensities with frames half the record later,
    /// destroying all correlation between the two sides.
    #[serde(default)]
    pub shuffle: bool,
    #[serde(default = "default_sigmas")]
    pub sigmas: f64,
    #[serde(default)]
    pub estimator: EstimatorOptions,
}

fn default_sigmas() -> f64 {
    2.0
}

impl Default for BellFrameOptions {
    fn default() -> Self {
        BellFrameOptions { translations: None, shuffle: false, sigmas: 2.0, estimator: EstimatorOptions::default() }
    }
}

/// Bell evaluation from frames with its ingredients.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameBellReport {
    pub m: usize,
    pub report: BellReport,
    /// `ĝ` for the combinations `(δ₁,δ₂), (δ₁,δ₂′), (δ₁′,δ₂), (δ₁′,δ₂′)`,
    /// each as `[g(s,s), g(π,π), g(s,π), g(π,s)]`.
    pub correlations: [[f64; 4]; 4],
    /// Post-selected joint probabilities in the same layout.
    pub probabilities: [[f64; 4]; 4],
    pub translations: usize,
    pub n_frames_used: usize,
}

fn wrap_phase(phase: f64) -> f64 {
    phase.rem_euclid(2.0 * PI)
}

/// Column offset, within one fringe period, realizing a detector phase.
fn phase_column(geom: &Geometry, phase: f64) -> usize {
    let period = geom.fringe_period_pixels();
    ((wrap_phase(phase) / (2.0 * PI) * period).round() as usize) % (period.round() as usize).max(1)
}

fn four_term_statistic(g: &[[f64; 4]; 4]) -> Result<(f64, [[f64; 4]; 4])> {
    let mut probs = [[0.0; 4]; 4];
    for (c, row) in g.iter().enumerate() {
        let total: f64 = row.iter().sum();
        if !(total > 0.0) {
            return Err(Error::ZeroProbability(total));
        }
        for k in 0..4 {
            probs[c][k] = row[k] / total;
        }
    }
    // Combination c: 0 = (x,y), 1 = (x,y′), 2 = (x′,y), 3 = (x′,y′).
    let joints = [probs[0][0], probs[1][0], probs[2][0], probs[3][0]];
    let x_prime = probs[2][0] + probs[2][2];
    let y = probs[0][0] + probs[0][3];
    Ok((crate::bell::ch74_middle(0.5, x_prime, y, 0.5, joints)?, probs))
}

/// Visibility from the four combinations: each
/// `P(s,s) + P(π,π) − P(s,π) − P(π,s)` equals `V cos Δ`.
fn combination_visibility(probs: &[[f64; 4]; 4], args: [f64; 4]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (p, a) in probs.iter().zip(args) {
        let r = p[0] + p[1] - p[2] - p[3];
        num += r * a.cos();
        den += a.cos() * a.cos();
    }
    if den > 0.0 {
        (num / den).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Four-term CH74 statistic of the `(m+1)`-th order correlation measured
/// from frames at the pixels realizing `angles`.
///
/// Each detector phase maps to the column where the geometric phase matches
/// it modulo `2π`; partners shifted by `π` sit half a period away. The
/// detector-1 setting occupies rows `0..m`, detector 2 row `m`.
pub fn bell_from_frames(
    source: &dyn FrameSource,
    m: usize,
    angles: &AngleSet,
    opts: &BellFrameOptions,
) -> Result<FrameBellReport> {
    if m == 0 {
        return Err(Error::param("m", "must be at least 1"));
    }
    let geom = source.geometry().cloned().ok_or_else(|| Error::param("geometry", "frame source carries no geometry"))?;
    geom.validate()?;
    if m >= source.height() {
        return Err(Error::param("m", format!("m = {m} needs at least {} rows", m + 1)));
    }
    let side1 = [angles.a1, angles.a1 + PI, angles.a1p, angles.a1p + PI].map(|p| phase_column(&geom, p));
    let side2 = [angles.a2, angles.a2 + PI, angles.a2p, angles.a2p + PI].map(|p| phase_column(&geom, p));
    let reach = side1.iter().chain(&side2).copied().max().unwrap();
    if reach >= source.width() {
        return Err(Error::param("angles", "detector layout does not fit on the sensor"));
    }
    let room = source.width() - reach;
    let translations = match opts.translations {
        Some(0) => return Err(Error::param("translations", "must be at least 1")),
        Some(t) if t > room => return Err(Error::param("translations", format!("at most {room} fit on the sensor"))),
        Some(t) => t,
        None => room.min(geom.fringe_period_pixels().round() as usize),
    };
    let lag = if opts.shuffle { source.n_frames() / 2 } else { 0 };
    if opts.shuffle && lag == 0 {
        return Err(Error::InsufficientFrames { needed: 2, got: source.n_frames() });
    }

    let mut plan = PlanBuilder::new(source);
    for t in 0..translations {
        for &c1 in &side1 {
            let det1: Vec<(Pixel, usize)> = (0..m).map(|y| (Pixel::new(t + c1, y), 0)).collect();
            let tails = side2.iter().map(|&c2| (Pixel::new(t + c2, m), lag)).collect();
            plan.push(det1, tails);
        }
    }
    let (pixels, groups) = plan.finish();
    let moments = evaluate(source, &pixels, &groups, &opts.estimator)?;

    // Term layout: translation, side-1 column (s1, π1, s1′, π1′), side-2
    // column (s2, π2, s2′, π2′).
    let assemble = |v: &[f64]| -> [[f64; 4]; 4] {
        let mut mean = [[0.0; 4]; 4];
        for t in 0..translations {
            for i in 0..4 {
                for j in 0..4 {
                    mean[i][j] += v[t * 16 + i * 4 + j] / translations as f64;
                }
            }
        }
        let combo = |i: usize, j: usize| [mean[i][j], mean[i + 1][j + 1], mean[i][j + 1], mean[i + 1][j]];
        [combo(0, 0), combo(0, 2), combo(2, 0), combo(2, 2)]
    };
    let correlations = assemble(&moments.values);
    let (statistic, probabilities) = four_term_statistic(&correlations)?;
    let replicate_stats: Vec<f64> =
        moments.replicates.iter().filter_map(|r| four_term_statistic(&assemble(r)).ok().map(|(s, _)| s)).collect();
    let stderr = sample_sd(replicate_stats.iter().copied());
    let visibility = combination_visibility(&probabilities, angles.cosine_args());
    Ok(FrameBellReport {
        m,
        report: BellReport::with_uncertainty(statistic, stderr, opts.sigmas, ModelTag::FourTermTls, visibility),
        correlations,
        probabilities,
        translations,
        n_frames_used: moments.n_frames,
    })
}

/// Theory visibility `m/(m+2)` next to an estimate, for Fig.-4 style tables.
pub fn visibility_row(m: usize, estimate: &VisibilityEstimate) -> Result<(usize, f64, f64, f64)> {
    Ok((m, visibility_tls(m)?, estimate.value, estimate.stderr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{FrameMeta, FrameSet};

    fn meta() -> FrameMeta {
        FrameMeta::bare(0, 0.0)
    }

    #[test]
    fn constant_frames_give_unity() {
        let frames = FrameSet::new(128, 3, 5, vec![2.5; 128 * 15], meta()).unwrap();
        let curve = estimate_gm1(&frames, &PixelScheme::stacked(2, 0, vec![1, 2, 3, 4]), &EstimatorOptions::default()).unwrap();
        assert!(curve.values.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!(curve.stderr.iter().all(|&s| s < 1e-14));
    }

    #[test]
    fn guards() {
        let frames = FrameSet::new(99, 3, 5, vec![1.0; 99 * 15], meta()).unwrap();
        let scheme = PixelScheme::stacked(1, 0, vec![1, 2]);
        assert!(matches!(
            estimate_gm1(&frames, &scheme, &EstimatorOptions::default()),
            Err(Error::InsufficientFrames { needed: 100, got: 99 })
        ));
        let frames = FrameSet::new(100, 3, 5, vec![1.0; 100 * 15], meta()).unwrap();
        let collide = PixelScheme { x1: 1, y1_rows: vec![0, 1], y2: 1, x2_scan: vec![0, 1] };
        assert!(matches!(estimate_gm1(&frames, &collide, &EstimatorOptions::default()), Err(Error::PixelCollision { x: 1, y: 1 })));
        let outside = PixelScheme::stacked(1, 0, vec![5]);
        assert!(matches!(estimate_gm1(&frames, &outside, &EstimatorOptions::default()), Err(Error::PixelOutOfFrame { .. })));
        let repeated = PixelScheme { x1: 0, y1_rows: vec![0, 0], y2: 2, x2_scan: vec![1] };
        assert!(estimate_gm1(&frames, &repeated, &EstimatorOptions::default()).is_err());
    }

    #[test]
    fn hand_computed_moment() {
        // Two frames repeated: pixel a = (1, 3), pixel b = (2, 2).
        let mut data = Vec::new();
        for f in 0..128 {
            let (a, b) = if f % 2 == 0 { (1.0, 2.0) } else { (3.0, 2.0) };
            data.extend_from_slice(&[a, b]);
        }
        let frames = FrameSet::new(128, 1, 2, data, meta()).unwrap();
        let opts = EstimatorOptions { bootstrap_resamples: 0, ..EstimatorOptions::default() };
        let curve = estimate_gm1(&frames, &PixelScheme { x1: 0, y1_rows: vec![0], y2: 0, x2_scan: vec![1] }, &opts).unwrap();
        // <ab>/(<a><b>) = 4/(2·2) = 1
        assert!((curve.values[0] - 1.0).abs() < 1e-15);
        let curve = estimate_gm1(&frames, &PixelScheme { x1: 1, y1_rows: vec![0], y2: 0, x2_scan: vec![0] }, &opts).unwrap();
        assert!((curve.values[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fit_recovers_noiseless_cosine() {
        let geom = Geometry::default();
        let p = geom.fringe_period_pixels();
        let x2: Vec<f64> = (0..=146).map(|k| k as f64).collect();
        let values: Vec<f64> = x2.iter().map(|&x| 2880.0 * (1.0 + 0.75 * (2.0 * PI * x / p - 0.3).cos())).collect();
        let curve = CorrelationCurve {
            m: 6,
            x1: 0.0,
            x2_positions: x2,
            stderr: vec![0.0; values.len()],
            values,
            n_frames_used: 0,
            replicates: vec![],
        };
        let v = fit_visibility(&curve, &geom).unwrap();
        assert!((v.value - 0.75).abs() < 1e-12);
        assert!(v.fit_residual < 1e-12);
        assert!((v.phase - 0.3).abs() < 1e-12);
        let short = CorrelationCurve {
            x2_positions: curve.x2_positions[..100].to_vec(),
            values: curve.values[..100].to_vec(),
            stderr: curve.stderr[..100].to_vec(),
            ..curve.clone()
        };
        assert!(matches!(fit_visibility(&short, &geom), Err(Error::FitFailed(_))));
    }
}
