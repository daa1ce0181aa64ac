//! Self-guided edge-preserving smoothing and over-subtraction binarization.
//!
//! The guided filter is computed in O(width·height) regardless of radius:
//! every window statistic is read from a summed-area table built over an
//! edge-replicated copy of the input. With a large `epsilon`, thin bright
//! stripes count as "flat" and get pulled toward their darker surroundings,
//! so keeping only pixels brighter than `delta` times the smoothed value
//! isolates lane paint.

use crate::error::{Error, Result};
use crate::image::{BinaryMask, GrayFrame};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterParams {
    /// Half-width of the square window; the window side is `2 * radius + 1`.
    pub radius: usize,
    pub epsilon: f64,
    pub delta: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            radius: 4,
            epsilon: 0.1,
            delta: 1.06,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        if self.radius < 1 {
            return Err(Error::InvalidParameter("radius must be >= 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if !(self.delta > 1.0 && self.delta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "delta must be > 1, got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Summed-area table with a zero first row and column, so that
/// `sum(x0, y0, x1, y1)` covers the half-open rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone)]
pub struct IntegralImage {
    stride: usize,
    rows: usize,
    sums: Vec<f64>,
}

impl IntegralImage {
    pub fn new(data: &[f64], width: usize, height: usize) -> Self {
        Self::from_fn(width, height, |x, y| data[y * width + x])
    }

    pub fn of_squares(data: &[f64], width: usize, height: usize) -> Self {
        Self::from_fn(width, height, |x, y| {
            let v = data[y * width + x];
            v * v
        })
    }

    fn from_fn(width: usize, height: usize, value: impl Fn(usize, usize) -> f64) -> Self {
        let stride = width + 1;
        let mut sums = vec![0.0; stride * (height + 1)];
        for y in 0..height {
            let mut row = 0.0;
            for x in 0..width {
                row += value(x, y);
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Self {
            stride,
            rows: height + 1,
            sums,
        }
    }

    #[inline]
    pub fn sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        debug_assert!(x1 < self.stride && y1 < self.rows);
        let s = &self.sums;
        let w = self.stride;
        s[y1 * w + x1] - s[y0 * w + x1] - s[y1 * w + x0] + s[y0 * w + x0]
    }
}

/// Mean over the `(2r+1)²` window around every pixel, with out-of-frame
/// samples replaced by the nearest edge pixel.
pub fn box_mean_clamped(data: &[f64], width: usize, height: usize, radius: usize) -> Vec<f64> {
    let padded = pad_replicate(data, width, height, radius);
    let pw = width + 2 * radius;
    let ph = height + 2 * radius;
    let table = IntegralImage::new(&padded, pw, ph);
    let side = 2 * radius + 1;
    let area = (side * side) as f64;
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            out.push(table.sum(x, y, x + side, y + side) / area);
        }
    }
    out
}

fn pad_replicate(data: &[f64], width: usize, height: usize, radius: usize) -> Vec<f64> {
    let pw = width + 2 * radius;
    let ph = height + 2 * radius;
    let mut padded = Vec::with_capacity(pw * ph);
    for py in 0..ph {
        let y = py.saturating_sub(radius).min(height - 1);
        for px in 0..pw {
            let x = px.saturating_sub(radius).min(width - 1);
            padded.push(data[y * width + x]);
        }
    }
    padded
}

/// Self-guided filter: `GF(I) = mean(α)·I + mean(β)` with
/// `α = σ²/(σ² + ε)` and `β = (1 − α)·μ` taken over each pixel's window.
pub fn guided_filter(frame: &GrayFrame, params: &FilterParams) -> Result<GrayFrame> {
    params.validate()?;
    let (w, h, r) = (frame.width(), frame.height(), params.radius);

    // Work relative to one pixel's value: the filter commutes with constant
    // shifts, and a flat frame then stays exactly flat.
    let reference = frame.data()[0];
    let centered: Vec<f64> = frame.data().iter().map(|v| v - reference).collect();

    let mean = box_mean_clamped(&centered, w, h, r);
    let squares: Vec<f64> = centered.iter().map(|v| v * v).collect();
    let mean_sq = box_mean_clamped(&squares, w, h, r);

    let mut alpha = Vec::with_capacity(w * h);
    let mut beta = Vec::with_capacity(w * h);
    for (&mu, &sq) in mean.iter().zip(&mean_sq) {
        let var = (sq - mu * mu).max(0.0);
        let a = var / (var + params.epsilon);
        alpha.push(a);
        beta.push((1.0 - a) * mu);
    }
    let alpha_bar = box_mean_clamped(&alpha, w, h, r);
    let beta_bar = box_mean_clamped(&beta, w, h, r);

    let out = centered
        .iter()
        .zip(alpha_bar.iter().zip(&beta_bar))
        .map(|(&v, (&a, &b))| (a * v + b + reference).clamp(0.0, 1.0))
        .collect();
    GrayFrame::new(w, h, out)
}

/// Keeps pixels at least `delta` times brighter than their smoothed value.
///
/// Pure black pixels are never kept: for them the test degenerates to
/// `0 >= 0` and carries no information.
pub fn binarize(frame: &GrayFrame, filtered: &GrayFrame, delta: f64) -> Result<BinaryMask> {
    filtered.same_dims(frame.width(), frame.height())?;
    if !(delta > 1.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "delta must be > 1, got {delta}"
        )));
    }
    let bits = frame
        .data()
        .iter()
        .zip(filtered.data())
        .map(|(&i, &gf)| i > 0.0 && i >= delta * gf)
        .collect();
    BinaryMask::new(frame.width(), frame.height(), bits)
}

/// Guided filter followed by binarization.
pub fn lane_mask(frame: &GrayFrame, params: &FilterParams) -> Result<BinaryMask> {
    let filtered = guided_filter(frame, params)?;
    binarize(frame, &filtered, params.delta)
}
