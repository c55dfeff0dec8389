//! Camera frame stacks and random access to pixel intensities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::speckle::Geometry;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pixel {
    pub x: usize,
    pub y: usize,
}

impl Pixel {
    pub fn new(x: usize, y: usize) -> Self {
        Pixel { x, y }
    }
}

/// Generation metadata carried alongside a frame stack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub seed: u64,
    pub tau_ratio: f64,
    #[serde(default)]
    pub substeps: Option<usize>,
    #[serde(default)]
    pub subsources: Option<usize>,
    #[serde(default)]
    pub geometry: Option<Geometry>,
    /// Fringe period `λz/d` in metres, recorded for convenience.
    #[serde(default)]
    pub fringe_period_m: Option<f64>,
}

impl FrameMeta {
    pub fn bare(seed: u64, tau_ratio: f64) -> Self {
        FrameMeta { seed, tau_ratio, substeps: None, subsources: None, geometry: None, fringe_period_m: None }
    }
}

/// Anything that can report pixel intensities frame by frame.
///
/// Implementations must be deterministic: the same `(frame, pixel)` always
/// yields the same value.
pub trait FrameSource: Sync {
    fn n_frames(&self) -> usize;
    fn width(&self) -> usize;
    fn height(&self) -> usize;

    /// Writes the intensities of `pixels` in `frame` to `out`.
    fn read_pixels(&self, frame: usize, pixels: &[Pixel], out: &mut [f64]);

    /// True when the intensity does not depend on the row.
    fn row_uniform(&self) -> bool {
        false
    }

    fn geometry(&self) -> Option<&Geometry> {
        None
    }

    fn check_pixel(&self, pixel: Pixel) -> Result<()> {
        if pixel.x < self.width() && pixel.y < self.height() {
            Ok(())
        } else {
            Err(Error::PixelOutOfFrame { x: pixel.x, y: pixel.y, width: self.width(), height: self.height() })
        }
    }
}

/// A materialized stack of frames, row-major within a frame and
/// frame-major overall.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSet {
    pub n_frames: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
    pub meta: FrameMeta,
}

impl FrameSet {
    pub fn new(n_frames: usize, height: usize, width: usize, data: Vec<f32>, meta: FrameMeta) -> Result<Self> {
        if data.len() != n_frames * height * width {
            return Err(Error::Format(format!(
                "expected {} intensities for {n_frames}x{height}x{width}, got {}",
                n_frames * height * width,
                data.len()
            )));
        }
        Ok(FrameSet { n_frames, height, width, data, meta })
    }

    pub fn frame(&self, index: usize) -> &[f32] {
        let size = self.height * self.width;
        &self.data[index * size..(index + 1) * size]
    }

    pub fn value(&self, frame: usize, pixel: Pixel) -> f32 {
        self.data[(frame * self.height + pixel.y) * self.width + pixel.x]
    }

    /// Every intensity multiplied by `factor`.
    pub fn scaled(&self, factor: f32) -> FrameSet {
        FrameSet { data: self.data.iter().map(|v| v * factor).collect(), ..self.clone() }
    }

    pub fn mean_intensity(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    /// Per-pixel mean over frames, row-major.
    pub fn mean_profile(&self) -> Vec<f64> {
        let size = self.height * self.width;
        let mut mean = vec![0.0; size];
        for f in 0..self.n_frames {
            for (acc, &v) in mean.iter_mut().zip(self.frame(f)) {
                *acc += v as f64;
            }
        }
        mean.iter_mut().for_each(|v| *v /= self.n_frames.max(1) as f64);
        mean
    }

    /// Temporal standard deviation over mean, averaged over pixels.
    pub fn speckle_contrast(&self) -> f64 {
        let size = self.height * self.width;
        if self.n_frames < 2 || size == 0 {
            return 0.0;
        }
        let mean = self.mean_profile();
        let mut var = vec![0.0; size];
        for f in 0..self.n_frames {
            for ((acc, &v), mu) in var.iter_mut().zip(self.frame(f)).zip(&mean) {
                *acc += (v as f64 - mu).powi(2);
            }
        }
        var.iter()
            .zip(&mean)
            .filter(|(_, &mu)| mu > 0.0)
            .map(|(v, mu)| (v / (self.n_frames - 1) as f64).sqrt() / mu)
            .sum::<f64>()
            / size as f64
    }
}

impl FrameSource for FrameSet {
    fn n_frames(&self) -> usize {
        self.n_frames
    }

    fn width(&self) -> usize {
        self.width
    }

    fn height(&self) -> usize {
        self.height
    }

    fn read_pixels(&self, frame: usize, pixels: &[Pixel], out: &mut [f64]) {
        for (o, &p) in out.iter_mut().zip(pixels) {
            *o = self.value(frame, p) as f64;
        }
    }

    fn geometry(&self) -> Option<&Geometry> {
        self.meta.geometry.as_ref()
    }
}

/// Selected columns of a row-uniform source, held in memory so several
/// analyses can share one generation pass.
#[derive(Clone, Debug)]
pub struct ColumnCache {
    n_frames: usize,
    width: usize,
    height: usize,
    slot: Vec<Option<usize>>,
    columns: Vec<usize>,
    values: Vec<f64>,
    geometry: Option<Geometry>,
}

impl ColumnCache {
    pub fn build(source: &dyn FrameSource, columns: &[usize]) -> Result<Self> {
        use rayon::prelude::*;
        if !source.row_uniform() {
            return Err(Error::param("source", "column caching needs a row-uniform source"));
        }
        let mut cols = columns.to_vec();
        cols.sort_unstable();
        cols.dedup();
        for &c in &cols {
            source.check_pixel(Pixel::new(c, 0))?;
        }
        let mut slot = vec![None; source.width()];
        for (i, &c) in cols.iter().enumerate() {
            slot[c] = Some(i);
        }
        let pixels: Vec<Pixel> = cols.iter().map(|&c| Pixel::new(c, 0)).collect();
        let stride = cols.len().max(1);
        let mut values = vec![0.0; source.n_frames() * stride];
        values.par_chunks_mut(stride).enumerate().for_each(|(f, row)| {
            source.read_pixels(f, &pixels, &mut row[..pixels.len()]);
        });
        Ok(ColumnCache {
            n_frames: source.n_frames(),
            width: source.width(),
            height: source.height(),
            slot,
            columns: cols,
            values,
            geometry: source.geometry().cloned(),
        })
    }

    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    /// The first `n` frames only.
    pub fn truncated(&self, n: usize) -> ColumnCache {
        let n = n.min(self.n_frames);
        let stride = self.columns.len().max(1);
        ColumnCache { n_frames: n, values: self.values[..n * stride].to_vec(), ..self.clone() }
    }
}

impl FrameSource for ColumnCache {
    fn n_frames(&self) -> usize {
        self.n_frames
    }

    fn width(&self) -> usize {
        self.width
    }

    fn height(&self) -> usize {
        self.height
    }

    /// Panics if a requested column was not cached.
    fn read_pixels(&self, frame: usize, pixels: &[Pixel], out: &mut [f64]) {
        let stride = self.columns.len().max(1);
        let row = &self.values[frame * stride..(frame + 1) * stride];
        for (o, p) in out.iter_mut().zip(pixels) {
            let slot = self.slot[p.x].unwrap_or_else(|| panic!("column {} not cached", p.x));
            *o = row[slot];
        }
    }

    fn row_uniform(&self) -> bool {
        true
    }

    fn geometry(&self) -> Option<&Geometry> {
        self.geometry.as_ref()
    }
}
