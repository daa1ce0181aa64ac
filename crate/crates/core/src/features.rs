//! Per-marker lane/road statistics and the 240-D frame descriptor.
//!
//! For each of the six non-center markers the block is
//! `[mean(lane), var(lane), mean(road), var(road), hist[36]]`, where lane
//! pixels are mask pixels near the modeled marker, road pixels are found by
//! stepping from each lane pixel down its intensity gradient, and the
//! histogram bins Sobel orientations at lane pixels in 10° steps.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::image::{BinaryMask, GrayFrame};
use crate::lanemodel::{LaneModel, MarkerIndex};

pub const BLOCK_DIM: usize = 40;
pub const FEATURE_DIM: usize = 6 * BLOCK_DIM;
pub const HIST_BINS: usize = 36;

/// Sorted, duplicate-free set of in-bounds pixel coordinates.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PixelSet(Vec<(usize, usize)>);

impl PixelSet {
    /// Sorts by `(y, x)` and drops duplicates.
    pub fn from_unsorted(mut pixels: Vec<(usize, usize)>) -> Self {
        pixels.sort_unstable_by_key(|&(x, y)| (y, x));
        pixels.dedup();
        Self(pixels)
    }

    pub fn as_slice(&self) -> &[(usize, usize)] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != FEATURE_DIM {
            return Err(Error::InvalidInput(format!(
                "feature vector has {} values, expected {FEATURE_DIM}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature value".into()));
        }
        Ok(Self(values))
    }

    pub fn zeros() -> Self {
        Self(vec![0.0; FEATURE_DIM])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.0[i * BLOCK_DIM..(i + 1) * BLOCK_DIM]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureConfig {
    pub band_halfwidth: f64,
    pub step: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            band_halfwidth: 6.0,
            step: 5,
        }
    }
}

/// 3×3 Sobel response `(g_x, g_y)` with edge-clamped sampling; `g_y` grows
/// downward.
pub fn sobel(frame: &GrayFrame, x: usize, y: usize) -> (f64, f64) {
    let (x, y) = (x as isize, y as isize);
    let p = |dx: isize, dy: isize| frame.get_clamped(x + dx, y + dy);
    let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
    let gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
    (gx, gy)
}

/// Orientation of `(gx, gy)` in degrees, in `[0, 360)`.
pub fn orientation_deg(gx: f64, gy: f64) -> f64 {
    let deg = gy.atan2(gx) * 180.0 / PI;
    let deg = if deg < 0.0 { deg + 360.0 } else { deg };
    if deg >= 360.0 {
        0.0
    } else {
        deg
    }
}

/// Mask pixels within `band_halfwidth` (horizontally) of marker `idx`,
/// restricted to the model's band.
pub fn extract_lane_pixels(
    mask: &BinaryMask,
    model: &LaneModel,
    idx: MarkerIndex,
    band_halfwidth: f64,
) -> PixelSet {
    let (w, h) = (mask.width(), mask.height());
    let y0 = model.horizon_y().ceil().max(0.0) as usize;
    let y1 = (model.bottom_y().floor() as usize).min(h.saturating_sub(1));
    let mut out = Vec::new();
    for y in y0..=y1 {
        let Ok(xm) = model.marker_position(idx, y as f64) else {
            continue;
        };
        let lo = (xm - band_halfwidth).ceil().max(0.0);
        let hi = (xm + band_halfwidth).floor().min(w as f64 - 1.0);
        if hi < lo {
            continue;
        }
        for x in lo as usize..=hi as usize {
            if mask.get(x, y) {
                out.push((x, y));
            }
        }
    }
    PixelSet::from_unsorted(out)
}

/// From each lane pixel, steps `step` pixels against the Sobel gradient
/// (toward darker road). Zero-gradient and off-frame targets are skipped.
pub fn extract_road_pixels(frame: &GrayFrame, lane: &PixelSet, step: usize) -> PixelSet {
    let (w, h) = (frame.width() as f64, frame.height() as f64);
    let step = step as f64;
    let mut out = Vec::new();
    for &(x, y) in lane.as_slice() {
        let (gx, gy) = sobel(frame, x, y);
        let norm = gx.hypot(gy);
        if norm == 0.0 {
            continue;
        }
        let tx = (x as f64 - step * gx / norm).round();
        let ty = (y as f64 - step * gy / norm).round();
        if tx < 0.0 || ty < 0.0 || tx >= w || ty >= h {
            continue;
        }
        out.push((tx as usize, ty as usize));
    }
    PixelSet::from_unsorted(out)
}

/// Population mean and variance of the frame over `pixels`; zeros when empty.
fn mean_var(frame: &GrayFrame, pixels: &PixelSet) -> (f64, f64) {
    if pixels.is_empty() {
        return (0.0, 0.0);
    }
    let n = pixels.len() as f64;
    let mean = pixels.as_slice().iter().map(|&(x, y)| frame.get(x, y)).sum::<f64>() / n;
    let var = pixels
        .as_slice()
        .iter()
        .map(|&(x, y)| (frame.get(x, y) - mean).powi(2))
        .sum::<f64>()
        / n;
    (mean, var)
}

pub fn marker_features(frame: &GrayFrame, lane: &PixelSet, road: &PixelSet) -> [f64; BLOCK_DIM] {
    let mut block = [0.0; BLOCK_DIM];
    if lane.is_empty() {
        return block;
    }
    let (lm, lv) = mean_var(frame, lane);
    let (rm, rv) = mean_var(frame, road);
    block[..4].copy_from_slice(&[lm, lv, rm, rv]);
    let hist = &mut block[4..];
    for &(x, y) in lane.as_slice() {
        let (gx, gy) = sobel(frame, x, y);
        let bin = ((orientation_deg(gx, gy) / 10.0) as usize).min(HIST_BINS - 1);
        hist[bin] += 1.0;
    }
    let n = lane.len() as f64;
    for v in hist.iter_mut() {
        *v /= n;
    }
    block
}

/// Concatenated blocks for markers 1, 2, 3, 6, 7, 8.
pub fn frame_features(
    frame: &GrayFrame,
    mask: &BinaryMask,
    model: &LaneModel,
    config: &FeatureConfig,
) -> Result<FeatureVector> {
    frame.same_dims(mask.width(), mask.height())?;
    let mut values = Vec::with_capacity(FEATURE_DIM);
    for idx in MarkerIndex::non_center() {
        let lane = extract_lane_pixels(mask, model, idx, config.band_halfwidth);
        let road = extract_road_pixels(frame, &lane, config.step);
        values.extend_from_slice(&marker_features(frame, &lane, &road));
    }
    FeatureVector::new(values)
}
