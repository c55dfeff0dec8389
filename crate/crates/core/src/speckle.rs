//! Synthetic pseudothermal double-slit experiment.
//!
//! Each slit is a row of equally spaced sub-sources whose complex
//! amplitudes follow independent stationary Gauss–Markov processes with
//! coherence time `τ_c`. A camera frame integrates `|E(x)|²` over `τ_i`,
//! approximated by averaging `substeps` snapshots. The slit model is one
//! dimensional, so every row of a frame holds the same intensities.
//!
//! Randomness comes from one ChaCha stream per frame, selected by the frame
//! index, so frames can be produced in any order or in parallel and still
//! match bit for bit.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{SourceKind, SourceModel};
use crate::error::{Error, Result};
use crate::frames::{FrameMeta, FrameSet, FrameSource, Pixel};

/// Fewest pixels per fringe period accepted by [`Geometry::validate`].
pub const MIN_PIXELS_PER_PERIOD: f64 = 16.0;

/// Double-slit and camera geometry in SI units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub wavelength: f64,
    pub slit_separation: f64,
    pub slit_width: f64,
    pub propagation: f64,
    pub pixel_pitch: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry {
            wavelength: 532e-9,
            slit_separation: 200e-6,
            slit_width: 25e-6,
            propagation: 0.3,
            pixel_pitch: 5.5e-6,
            width: 320,
            height: 8,
        }
    }
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("wavelength", self.wavelength),
            ("slit_separation", self.slit_separation),
            ("slit_width", self.slit_width),
            ("propagation", self.propagation),
            ("pixel_pitch", self.pixel_pitch),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be finite and > 0, got {v}")));
            }
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::param("width/height", "frame must have at least one pixel"));
        }
        let period = self.fringe_period_pixels();
        if period < MIN_PIXELS_PER_PERIOD {
            return Err(Error::UnderSampled { pixels: period, min: MIN_PIXELS_PER_PERIOD });
        }
        Ok(())
    }

    /// Fringe period `λz/d` in metres.
    pub fn fringe_period(&self) -> f64 {
        self.wavelength * self.propagation / self.slit_separation
    }

    pub fn fringe_period_pixels(&self) -> f64 {
        self.fringe_period() / self.pixel_pitch
    }

    /// Abscissa of a pixel centre, zero at the middle of the sensor.
    pub fn pixel_x(&self, column: usize) -> f64 {
        (column as f64 - (self.width / 2) as f64) * self.pixel_pitch
    }

    /// Relative source phase `δ(x) = 2π d x / (λ z)` seen by a column.
    pub fn phase(&self, column: usize) -> f64 {
        2.0 * PI * self.slit_separation * self.pixel_x(column) / (self.wavelength * self.propagation)
    }

    /// Phase difference accumulated over `offset` columns.
    pub fn phase_step(&self, offset: f64) -> f64 {
        2.0 * PI * offset / self.fringe_period_pixels()
    }

    /// Single-slit far-field amplitude `sinc(π a x / (λ z))`.
    pub fn envelope_amplitude(&self, column: usize) -> f64 {
        let u = PI * self.slit_width * self.pixel_x(column) / (self.wavelength * self.propagation);
        if u.abs() < 1e-12 {
            1.0
        } else {
            u.sin() / u
        }
    }
}

/// Which slits are open.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlitMask {
    #[default]
    Both,
    First,
    Second,
}

impl SlitMask {
    fn is_open(self, slit: usize) -> bool {
        match self {
            SlitMask::Both => true,
            SlitMask::First => slit == 0,
            SlitMask::Second => slit == 1,
        }
    }
}

fn default_substeps() -> usize {
    8
}
fn default_subsources() -> usize {
    64
}
fn default_tau_ratio() -> f64 {
    0.06
}
fn default_true() -> bool {
    true
}

/// Everything that determines a synthetic frame stack except its length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeckleConfig {
    #[serde(default)]
    pub geometry: Geometry,
    #[serde(default)]
    pub model: SourceModel,
    /// Camera integration time over source coherence time, `τ_i/τ_c`.
    #[serde(default = "default_tau_ratio")]
    pub tau_ratio: f64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    /// Sub-sources per slit.
    #[serde(default = "default_subsources")]
    pub subsources: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub slits: SlitMask,
    /// Multiply the field by the single-slit diffraction amplitude.
    #[serde(default = "default_true")]
    pub envelope: bool,
}

impl Default for SpeckleConfig {
    fn default() -> Self {
        SpeckleConfig {
            geometry: Geometry::default(),
            model: SourceModel::default(),
            tau_ratio: default_tau_ratio(),
            substeps: default_substeps(),
            subsources: default_subsources(),
            seed: 0,
            slits: SlitMask::Both,
            envelope: true,
        }
    }
}

impl SpeckleConfig {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.model.validate()?;
        if self.model.kind == SourceKind::SinglePhoton {
            return Err(Error::param("model", "single photon emitters have no classical speckle field"));
        }
        if !(self.tau_ratio >= 0.0 && self.tau_ratio.is_finite()) {
            return Err(Error::param("tau_ratio", format!("must be finite and >= 0, got {}", self.tau_ratio)));
        }
        if self.substeps == 0 {
            return Err(Error::param("substeps", "must be at least 1"));
        }
        if self.subsources == 0 {
            return Err(Error::param("subsources", "must be at least 1"));
        }
        Ok(())
    }

    pub fn meta(&self) -> FrameMeta {
        FrameMeta {
            seed: self.seed,
            tau_ratio: self.tau_ratio,
            substeps: Some(self.substeps),
            subsources: Some(self.subsources),
            geometry: Some(self.geometry.clone()),
            fringe_period_m: Some(self.geometry.fringe_period()),
        }
    }
}

/// Lazily evaluated frames: intensities are computed on request, only for
/// the columns asked for.
#[derive(Clone, Debug)]
pub struct SpeckleSource {
    config: SpeckleConfig,
    n_frames: usize,
    /// Per column, the propagation factors of all sub-sources (real parts,
    /// then imaginary parts), envelope included.
    table_re: Vec<f64>,
    table_im: Vec<f64>,
    n_amp: usize,
}

impl SpeckleSource {
    pub fn new(config: SpeckleConfig, n_frames: usize) -> Result<Self> {
        config.validate()?;
        if n_frames == 0 {
            return Err(Error::param("n_frames", "must be at least 1"));
        }
        let g = &config.geometry;
        let k = config.subsources;
        let n_amp = 2 * k;
        let mut table_re = Vec::with_capacity(g.width * n_amp);
        let mut table_im = Vec::with_capacity(g.width * n_amp);
        let k_over_z = 2.0 * PI / (g.wavelength * g.propagation);
        for col in 0..g.width {
            let x = g.pixel_x(col);
            let env = if config.envelope { g.envelope_amplitude(col) } else { 1.0 };
            for slit in 0..2 {
                let centre = if slit == 0 { -g.slit_separation / 2.0 } else { g.slit_separation / 2.0 };
                for j in 0..k {
                    // Sub-source positions at the centres of k equal cells.
                    let s = centre + g.slit_width * ((j as f64 + 0.5) / k as f64 - 0.5);
                    let phase = k_over_z * s * x;
                    table_re.push(env * phase.cos());
                    table_im.push(env * phase.sin());
                }
            }
        }
        Ok(SpeckleSource { config, n_frames, table_re, table_im, n_amp })
    }

    pub fn config(&self) -> &SpeckleConfig {
        &self.config
    }

    fn frame_rng(&self, frame: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(frame as u64);
        rng
    }

    /// Time-averaged intensities of `columns` in `frame`.
    pub fn column_intensities(&self, frame: usize, columns: &[usize], out: &mut [f64]) {
        let k = self.config.subsources;
        let model = &self.config.model;
        let power = model.field_amp * model.field_amp * model.photons_per_source();
        let mut rng = self.frame_rng(frame);
        let mut re = vec![0.0; self.n_amp];
        let mut im = vec![0.0; self.n_amp];
        match model.kind {
            SourceKind::Coherent => {
                // One fixed-modulus amplitude per slit with a random phase,
                // shared by all its sub-sources.
                let amp = power.sqrt() / k as f64;
                for slit in 0..2 {
                    let phi: f64 = rng.gen::<f64>() * 2.0 * PI;
                    for j in slit * k..(slit + 1) * k {
                        re[j] = amp * phi.cos();
                        im[j] = amp * phi.sin();
                    }
                }
            }
            _ => {
                let sigma = (power / (2.0 * k as f64)).sqrt();
                for j in 0..self.n_amp {
                    re[j] = sigma * rng.sample::<f64, _>(StandardNormal);
                    im[j] = sigma * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
        for slit in 0..2 {
            if !self.config.slits.is_open(slit) {
                re[slit * k..(slit + 1) * k].fill(0.0);
                im[slit * k..(slit + 1) * k].fill(0.0);
            }
        }

        out[..columns.len()].fill(0.0);
        let substeps = self.config.substeps;
        let rho = (-self.config.tau_ratio / substeps as f64).exp();
        let kick = (1.0 - rho * rho).sqrt() * (power / (2.0 * k as f64)).sqrt();
        let evolves = model.kind == SourceKind::Thermal && self.config.tau_ratio > 0.0;
        for step in 0..substeps {
            if step > 0 && evolves {
                for j in 0..self.n_amp {
                    re[j] = rho * re[j] + kick * rng.sample::<f64, _>(StandardNormal);
                    im[j] = rho * im[j] + kick * rng.sample::<f64, _>(StandardNormal);
                }
            }
            for (o, &col) in out.iter_mut().zip(columns) {
                let tr = &self.table_re[col * self.n_amp..(col + 1) * self.n_amp];
                let ti = &self.table_im[col * self.n_amp..(col + 1) * self.n_amp];
                let (mut er, mut ei) = (0.0, 0.0);
                for j in 0..self.n_amp {
                    er += re[j] * tr[j] - im[j] * ti[j];
                    ei += re[j] * ti[j] + im[j] * tr[j];
                }
                *o += er * er + ei * ei;
            }
        }
        let inv = 1.0 / substeps as f64;
        out[..columns.len()].iter_mut().for_each(|v| *v *= inv);
    }

    /// Materializes every frame as `f32` pixels.
    pub fn to_frames(&self) -> FrameSet {
        let g = &self.config.geometry;
        let (w, h) = (g.width, g.height);
        let columns: Vec<usize> = (0..w).collect();
        let mut data = vec![0f32; self.n_frames * h * w];
        data.par_chunks_mut(h * w).enumerate().for_each(|(f, frame)| {
            let mut row = vec![0.0; w];
            self.column_intensities(f, &columns, &mut row);
            for r in frame.chunks_mut(w) {
                for (d, &v) in r.iter_mut().zip(&row) {
                    *d = v as f32;
                }
            }
        });
        FrameSet { n_frames: self.n_frames, height: h, width: w, data, meta: self.config.meta() }
    }
}

impl FrameSource for SpeckleSource {
    fn n_frames(&self) -> usize {
        self.n_frames
    }

    fn width(&self) -> usize {
        self.config.geometry.width
    }

    fn height(&self) -> usize {
        self.config.geometry.height
    }

    fn read_pixels(&self, frame: usize, pixels: &[Pixel], out: &mut [f64]) {
        let mut columns: Vec<usize> = pixels.iter().map(|p| p.x).collect();
        columns.sort_unstable();
        columns.dedup();
        let mut values = vec![0.0; columns.len()];
        self.column_intensities(frame, &columns, &mut values);
        for (o, p) in out.iter_mut().zip(pixels) {
            *o = values[columns.binary_search(&p.x).unwrap()];
        }
    }

    fn row_uniform(&self) -> bool {
        true
    }

    fn geometry(&self) -> Option<&Geometry> {
        Some(&self.config.geometry)
    }
}

/// Generates `n_frames` camera frames.
pub fn generate_frames(config: &SpeckleConfig, n_frames: usize) -> Result<FrameSet> {
    Ok(SpeckleSource::new(config.clone(), n_frames)?.to_frames())
}

/// Replaces each intensity with a Poisson photon count of mean `gain·I`.
pub fn photonize(frames: &FrameSet, gain: f64, seed: u64) -> Result<FrameSet> {
    if !(gain > 0.0 && gain.is_finite()) {
        return Err(Error::param("gain", format!("must be finite and > 0, got {gain}")));
    }
    let size = frames.height * frames.width;
    let mut data = frames.data.clone();
    data.par_chunks_mut(size.max(1)).enumerate().for_each(|(f, frame)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(f as u64);
        for v in frame.iter_mut() {
            let mean = gain * *v as f64;
            *v = if mean > 0.0 {
                // The small-mean sampler returns -1 once exp(-mean) rounds to 1.
                Poisson::new(mean).map(|p| p.sample(&mut rng).max(0.0) as f32).unwrap_or(0.0)
            } else {
                0.0
            };
        }
    });
    Ok(FrameSet { data, ..frames.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small(tau: f64, slits: SlitMask) -> SpeckleConfig {
        SpeckleConfig {
            geometry: Geometry { width: 160, height: 2, ..Geometry::default() },
            tau_ratio: tau,
            subsources: 16,
            slits,
            seed: 11,
            ..SpeckleConfig::default()
        }
    }

    #[test]
    fn default_fringe_period() {
        let g = Geometry::default();
        assert_relative_eq!(g.fringe_period(), 0.798e-3, epsilon = 1e-15);
        assert_relative_eq!(g.fringe_period_pixels(), 145.0 + 1.0 / 11.0, epsilon = 1e-9);
        assert_relative_eq!(g.phase(g.width / 2 + 1) - g.phase(g.width / 2), g.phase_step(1.0), epsilon = 1e-12);
    }

    #[test]
    fn undersampled_geometry_is_rejected() {
        let g = Geometry { pixel_pitch: 60e-6, ..Geometry::default() };
        assert!(matches!(g.validate(), Err(Error::UnderSampled { .. })));
        let bad = SpeckleConfig { tau_ratio: -0.1, ..SpeckleConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SpeckleConfig { tau_ratio: f64::NAN, ..SpeckleConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn frames_are_deterministic_and_order_independent() {
        let src = SpeckleSource::new(small(0.06, SlitMask::Both), 20).unwrap();
        let a = src.to_frames();
        let b = generate_frames(&small(0.06, SlitMask::Both), 20).unwrap();
        assert_eq!(a, b);
        let mut v = [0.0];
        src.read_pixels(13, &[Pixel::new(40, 1)], &mut v);
        assert_eq!(v[0] as f32, a.value(13, Pixel::new(40, 1)));
        assert!(a.data.iter().all(|&x| x >= 0.0));
        let other = generate_frames(&SpeckleConfig { seed: 12, ..small(0.06, SlitMask::Both) }, 20).unwrap();
        assert_ne!(a.data, other.data);
    }

    #[test]
    fn single_slit_is_exponential() {
        let src = SpeckleSource::new(small(0.0, SlitMask::First), 20_000).unwrap();
        let (mut s1, mut s2) = (0.0, 0.0);
        let mut v = [0.0];
        for f in 0..20_000 {
            src.read_pixels(f, &[Pixel::new(80, 0)], &mut v);
            s1 += v[0];
            s2 += v[0] * v[0];
        }
        let ratio = s2 * 20_000.0 / (s1 * s1);
        assert!((ratio - 2.0).abs() < 0.06, "<I^2>/<I>^2 = {ratio}");
    }

    #[test]
    fn coherent_sources_have_no_intensity_fluctuation_per_slit() {
        let cfg = SpeckleConfig { model: SourceModel::coherent(1.0, 1.0).unwrap(), ..small(0.0, SlitMask::First) };
        let frames = generate_frames(&cfg, 50).unwrap();
        let first = frames.value(0, Pixel::new(30, 0));
        assert!(frames.frame(7).iter().zip(frames.frame(0)).all(|(a, b)| (a - b).abs() < 1e-5 * first));
        assert!(generate_frames(
            &SpeckleConfig { model: SourceModel::single_photon(1.0).unwrap(), ..SpeckleConfig::default() },
            1
        )
        .is_err());
    }

    #[test]
    fn photonize_limits() {
        let frames = generate_frames(&small(0.06, SlitMask::Both), 200).unwrap();
        let zero = photonize(&frames, 1e-300, 3).unwrap();
        assert!(zero.data.iter().all(|&c| c == 0.0));
        assert_eq!(photonize(&frames, 2.0, 3).unwrap(), photonize(&frames, 2.0, 3).unwrap());
        assert!(photonize(&frames, 0.0, 3).is_err());
        let gain = 100.0 / frames.mean_intensity();
        let counts = photonize(&frames, gain, 5).unwrap();
        assert_relative_eq!(counts.mean_intensity() / gain, frames.mean_intensity(), max_relative = 0.01);
    }
}
