//! Vehicle proposals constrained by the lane model, and lane-count refinement
//! from where vehicles are seen.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::classifier::LabelVector;
use crate::error::{Error, Result};
use crate::image::GrayFrame;
use crate::lanemodel::{LaneModel, MarkerIndex};
use crate::preprocess::IntegralImage;

/// Pixel box with half-open extents `[x_min, x_max) × [y_min, y_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BoundingBox {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

impl BoundingBox {
    pub fn new(x_min: usize, y_min: usize, x_max: usize, y_max: usize) -> Result<Self> {
        if x_min >= x_max || y_min >= y_max {
            return Err(Error::InvalidInput(format!(
                "empty box [{x_min}, {y_min}, {x_max}, {y_max}]"
            )));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn width(&self) -> usize {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> usize {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    /// Midpoint of the lower edge.
    pub fn bottom_center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) as f64 / 2.0, self.y_max as f64)
    }

    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let ix = self.x_max.min(other.x_max).saturating_sub(self.x_min.max(other.x_min));
        let iy = self.y_max.min(other.y_max).saturating_sub(self.y_min.max(other.y_min));
        let inter = (ix * iy) as f64;
        inter / ((self.area() + other.area()) as f64 - inter)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub score: f64,
    pub lane_slot: MarkerIndex,
}

/// Contiguous marker indices `{5 − θ2, …, 5 + θ1 − θ2}` implied by a label.
pub fn lane_indices(theta: LabelVector) -> Result<Vec<MarkerIndex>> {
    let theta = LabelVector::new(theta.theta1, theta.theta2)?;
    let lo = 5 - theta.theta2;
    let hi = 5 + theta.theta1 - theta.theta2;
    (lo..=hi).map(|i| MarkerIndex::new(i as u8)).collect()
}

/// Marker-scale slot of lane region `r` (between markers `r` and `r + 1`).
///
/// Regions left of the host lane take their outer (left) marker, regions to
/// the right their outer (right) marker; the host lane maps to 4.
pub fn region_slot(region: usize) -> MarkerIndex {
    let slot = match region {
        1..=4 => region,
        5..=7 => region + 1,
        _ => panic!("lane region {region} outside [1, 7]"),
    };
    MarkerIndex::new(slot as u8).expect("slot in range")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProposalConfig {
    pub stride: usize,
    pub sizes: Vec<usize>,
    pub aspects: Vec<f64>,
    pub max_size: usize,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        Self {
            stride: 8,
            sizes: vec![24, 32, 48, 64, 96],
            aspects: vec![1.0 / 3.0, 0.5, 1.0, 2.0, 3.0],
            max_size: 96,
        }
    }
}

impl ProposalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0
            || self.sizes.is_empty()
            || self.sizes.contains(&0)
            || self.aspects.is_empty()
            || self.aspects.iter().any(|a| !(a.is_finite() && *a > 0.0))
        {
            return Err(Error::InvalidParameter(format!("bad proposal config {self:?}")));
        }
        Ok(())
    }
}

/// Every grid-aligned box (corners on multiples of `stride`) of height `s`
/// and width `round(s·a)` over the configured sizes and aspects, kept when
/// its aspect ratio lies in `[1/3, 3]`, it starts at or below `height / 3`,
/// and neither side exceeds `max_size`.
pub fn generate_boxes(width: usize, height: usize, config: &ProposalConfig) -> Vec<BoundingBox> {
    let mut shapes: Vec<(usize, usize)> = Vec::new();
    for &s in &config.sizes {
        for &a in &config.aspects {
            let w = (s as f64 * a).round() as usize;
            let ratio = w as f64 / s as f64;
            if w == 0 || w > config.max_size || s > config.max_size {
                continue;
            }
            if !(1.0 / 3.0..=3.0).contains(&ratio) || shapes.contains(&(w, s)) {
                continue;
            }
            shapes.push((w, s));
        }
    }
    let stride = config.stride.max(1);
    let y_start = height.div_ceil(3).div_ceil(stride) * stride;
    let mut boxes = Vec::new();
    for (w, h) in shapes {
        for y in (y_start..).step_by(stride).take_while(|y| y + h <= height) {
            for x in (0..).step_by(stride).take_while(|x| x + w <= width) {
                boxes.push(BoundingBox {
                    x_min: x,
                    y_min: y,
                    x_max: x + w,
                    y_max: y + h,
                });
            }
        }
    }
    boxes
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectConfig {
    pub t_lo: f64,
    pub t_hi: f64,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self { t_lo: 0.3, t_hi: 1.1 }
    }
}

/// Lane region and span under the lower-edge midpoint, if any.
fn lower_edge_region(b: &BoundingBox, model: &LaneModel) -> Option<(usize, f64)> {
    let (x, y) = b.bottom_center();
    model.lane_region(x, y)
}

/// Boxes whose lower edge is between `t_lo` and `t_hi` times the span of
/// the lane it stands in.
pub fn select_boxes(
    boxes: &[BoundingBox],
    model: &LaneModel,
    config: &SelectConfig,
) -> Vec<BoundingBox> {
    boxes
        .iter()
        .filter(|b| match lower_edge_region(b, model) {
            Some((_, span)) if span > 0.0 => {
                let ratio = b.width() as f64 / span;
                ratio >= config.t_lo && ratio <= config.t_hi
            }
            _ => false,
        })
        .copied()
        .collect()
}

/// Scores candidate boxes in one frame; higher means more vehicle-like.
pub trait Detector: Sync {
    fn score_boxes(&self, frame_idx: usize, frame: &GrayFrame, boxes: &[BoundingBox]) -> Vec<f64>;
}

/// Dark-blob scorer: how much darker and flatter the box is than the
/// darkest of the four road strips around it. Using the darkest
/// side means a box cut from part of a vehicle scores near zero, since
/// one of its strips lies on the rest of that vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastDetector {
    /// Strip thickness as a fraction of the box's shorter side.
    pub ring: f64,
}

impl Default for ContrastDetector {
    fn default() -> Self {
        Self { ring: 0.25 }
    }
}

impl ContrastDetector {
    pub const DEFAULT_THRESHOLD: f64 = 0.08;
}

impl Detector for ContrastDetector {
    fn score_boxes(&self, _frame_idx: usize, frame: &GrayFrame, boxes: &[BoundingBox]) -> Vec<f64> {
        let (w, h) = (frame.width(), frame.height());
        let sum = IntegralImage::new(frame.data(), w, h);
        let sq = IntegralImage::of_squares(frame.data(), w, h);
        let mean_of = |x0: usize, y0: usize, x1: usize, y1: usize| {
            (x1 > x0 && y1 > y0).then(|| sum.sum(x0, y0, x1, y1) / ((x1 - x0) * (y1 - y0)) as f64)
        };
        boxes
            .par_iter()
            .map(|b| {
                let n = b.area() as f64;
                let mean = sum.sum(b.x_min, b.y_min, b.x_max, b.y_max) / n;
                let var = (sq.sum(b.x_min, b.y_min, b.x_max, b.y_max) / n - mean * mean).max(0.0);
                let t = ((b.width().min(b.height()) as f64 * self.ring).round() as usize).max(2);
                // strips clipped by the frame border are skipped
                let sides = [
                    mean_of(b.x_min, b.y_min.saturating_sub(t), b.x_max, b.y_min),
                    mean_of(b.x_min, b.y_max, b.x_max, (b.y_max + t).min(h)),
                    mean_of(b.x_min.saturating_sub(t), b.y_min, b.x_min, b.y_max),
                    mean_of(b.x_max, b.y_min, (b.x_max + t).min(w), b.y_max),
                ];
                let Some(road) = sides.into_iter().flatten().reduce(f64::min) else {
                    return f64::NEG_INFINITY;
                };
                road - mean - var.sqrt()
            })
            .collect()
    }
}

/// Oracle scorer: 1 on known vehicle boxes of each frame, 0 elsewhere.
#[derive(Debug, Clone, Default)]
pub struct GroundTruthDetector {
    truth: HashMap<usize, Vec<BoundingBox>>,
}

impl GroundTruthDetector {
    pub fn new(truth: HashMap<usize, Vec<BoundingBox>>) -> Self {
        Self { truth }
    }
}

impl Detector for GroundTruthDetector {
    fn score_boxes(&self, frame_idx: usize, _frame: &GrayFrame, boxes: &[BoundingBox]) -> Vec<f64> {
        let truth = self.truth.get(&frame_idx).map(Vec::as_slice).unwrap_or(&[]);
        boxes
            .iter()
            .map(|b| if truth.contains(b) { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Greedy non-maximum suppression: keep the best box, drop everything
/// overlapping it by more than `iou`, repeat. Order: score, then box.
pub fn nms(mut scored: Vec<(BoundingBox, f64)>, iou: f64) -> Vec<(BoundingBox, f64)> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut kept: Vec<(BoundingBox, f64)> = Vec::new();
    for (b, s) in scored {
        if kept.iter().all(|(k, _)| k.iou(&b) <= iou) {
            kept.push((b, s));
        }
    }
    kept
}

/// Scores proposals, thresholds, suppresses overlaps at IoU 0.5 and tags
/// each survivor with the lane slot under its lower edge.
pub fn detect_vehicles(
    frame_idx: usize,
    frame: &GrayFrame,
    proposals: &[BoundingBox],
    model: &LaneModel,
    detector: &dyn Detector,
    threshold: f64,
) -> Vec<Detection> {
    let scores = detector.score_boxes(frame_idx, frame, proposals);
    let passing = proposals
        .iter()
        .zip(scores)
        .filter(|(_, s)| s.is_finite() && *s >= threshold)
        .map(|(b, s)| (*b, s))
        .collect();
    nms(passing, 0.5)
        .into_iter()
        .filter_map(|(bbox, score)| {
            lower_edge_region(&bbox, model).map(|(r, _)| Detection {
                bbox,
                score,
                lane_slot: region_slot(r),
            })
        })
        .collect()
}

/// Extends the lane count when vehicles are seen outside the lanes implied
/// by `theta_init`.
///
/// Only the outermost out-of-set slot on each side counts. A left extension
/// also moves the host lane index. θ1 is clamped to 6; a result outside the
/// supported label set leaves `theta_init` unchanged.
pub fn refine_theta1(theta_init: LabelVector, detections: &[Detection]) -> LabelVector {
    let Ok(lanes) = lane_indices(theta_init) else {
        return theta_init;
    };
    let lo = lanes[0].value() as u32;
    let hi = lanes[lanes.len() - 1].value() as u32;
    let slots = detections.iter().map(|d| d.lane_slot.value() as u32);
    let left = slots.clone().filter(|&i| (1..4).contains(&i) && i < lo).min();
    let right = slots.filter(|&i| i > 5 && i <= 8 && i > hi).max();
    let grow_left = left.map_or(0, |i| lo - i);
    let grow_right = right.map_or(0, |i| i - hi);
    if grow_left + grow_right == 0 {
        return theta_init;
    }
    let theta1 = (theta_init.theta1 + grow_left + grow_right).min(6);
    let theta2 = theta_init.theta2 + grow_left;
    LabelVector::new(theta1, theta2).unwrap_or(theta_init)
}

/// `frame_idx x_min y_min x_max y_max score lane_slot`, one line per detection.
pub fn format_detections(frame_idx: usize, detections: &[Detection]) -> String {
    let mut out = String::new();
    for d in detections {
        let b = d.bbox;
        let _ = writeln!(
            out,
            "{frame_idx} {} {} {} {} {} {}",
            b.x_min,
            b.y_min,
            b.x_max,
            b.y_max,
            d.score,
            d.lane_slot.value()
        );
    }
    out
}
