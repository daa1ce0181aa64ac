//! Deterministic synthetic road corpus.
//!
//! A flat, straight road seen by a forward camera: a lateral position `u`
//! (in lane widths, relative to the camera) lands on image column
//! `cx + u·s·(y − y_v)` at row `y`, where `y_v` is the horizon row. Markers
//! sit at `u = k − 4.5 − e` for marker index `k`, `e` being the camera's
//! offset from the host-lane center. Road edges are solid, the rest dashed.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::dataset::{frame_path, write_labels, write_split, ClipAnnotation, Split};
use crate::classifier::{LabelVector, SUPPORTED};
use crate::detection::{lane_indices, BoundingBox};
use crate::error::{Error, Result};
use crate::image::GrayFrame;
use crate::lanemodel::{LaneModel, LineFit, Offset, OffsetParams};

/// Depth scale: world distance is `DEPTH_SCALE / (y − y_v)`.
const DEPTH_SCALE: f64 = 1260.0;
const DASH_PERIOD: f64 = 8.0;
const DASH_DUTY: f64 = 0.4;
const MARKER_WIDTH: f64 = 0.03;
const SKY: f64 = 0.75;
/// Vehicle width as a fraction of its lane span.
const VEHICLE_FILL: f64 = 0.6;
const VEHICLE_SIZES: [usize; 5] = [24, 32, 48, 64, 96];
const GRID: usize = 8;
const GAIN_JITTER: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassMix {
    /// Classes cycle in order, so counts differ by at most one.
    Balanced,
    /// Drawn with weights shaped like a typical highway dataset, `[4,3]`
    /// most frequent.
    Skewed,
}

const SKEWED_WEIGHTS: [f64; 8] = [2.0, 3.0, 6.0, 1.5, 1.5, 3.0, 1.0, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub clips: usize,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub horizon: f64,
    /// Lane width in pixels on the bottom row.
    pub lane_px: f64,
    pub classes: Vec<LabelVector>,
    pub mix: ClassMix,
    /// Per-pixel Gaussian noise σ.
    pub noise: f64,
    /// Probability that a given lane holds a vehicle.
    pub occlusion_rate: f64,
    /// Erase the outermost marker on one side and park a vehicle in the
    /// lane it bounded.
    pub erase_outer: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            clips: 40,
            frames: 60,
            width: 480,
            height: 360,
            horizon: 150.0,
            lane_px: 200.0,
            classes: SUPPORTED.to_vec(),
            mix: ClassMix::Balanced,
            noise: 0.01,
            occlusion_rate: 0.3,
            erase_outer: false,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(format!("synth: {msg}")));
        if self.clips == 0 || self.frames == 0 {
            return bad("clips and frames must be positive");
        }
        if self.width < 64 || self.height < 64 {
            return bad("frame must be at least 64x64");
        }
        if !(self.horizon >= 0.0 && self.horizon < self.height as f64 * 0.75) {
            return bad("horizon must lie in the upper three quarters");
        }
        if !(self.lane_px > 0.0) {
            return bad("lane width must be positive");
        }
        if self.classes.is_empty() {
            return bad("no classes");
        }
        if !(self.noise >= 0.0 && self.noise < 0.5) {
            return bad("noise must be in [0, 0.5)");
        }
        if !(0.0..=1.0).contains(&self.occlusion_rate) {
            return bad("occlusion rate must be in [0, 1]");
        }
        Ok(())
    }

    /// Pixels per lane width per row below the horizon.
    pub fn scale(&self) -> f64 {
        self.lane_px / (self.height as f64 - self.horizon)
    }

    pub fn center_x(&self) -> f64 {
        (self.width as f64 - 1.0) / 2.0
    }

    /// Offsets every camera position shares: slot `i` sits `i` lane widths
    /// from its center marker.
    pub fn true_offsets(&self) -> OffsetParams {
        let s = self.scale();
        let off = |i: f64| Offset {
            m: i * s,
            k: -i * s * self.horizon,
        };
        let side = [off(1.0), off(2.0), off(3.0)];
        OffsetParams {
            left: side,
            right: side,
        }
    }

    /// Image line of lateral position `u`.
    pub fn line_at(&self, u: f64) -> LineFit {
        let s = self.scale();
        LineFit {
            a: u * s,
            b: self.center_x() - u * s * self.horizon,
        }
    }
}

/// One painted or erased marker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkerSpec {
    pub index: u8,
    pub line: LineFit,
    pub present: bool,
    pub solid: bool,
}

/// Everything needed to render one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipSpec {
    pub clip_id: String,
    pub label: LabelVector,
    /// Camera offset from the host-lane center, lane widths.
    pub lateral: f64,
    pub road: f64,
    pub paint: f64,
    pub vehicle: f64,
    pub dash_phase: f64,
    pub dash_speed: f64,
    pub markers: Vec<MarkerSpec>,
    /// Static vehicle boxes with their lane region (1–7).
    pub vehicles: Vec<(BoundingBox, usize)>,
    pub seed: u64,
}

impl ClipSpec {
    /// Ground-truth lane model of this clip.
    pub fn lane_model(&self, config: &SynthConfig, band_top: f64) -> Result<LaneModel> {
        let cl = config.line_at(-0.5 - self.lateral);
        let cr = config.line_at(0.5 - self.lateral);
        let h = config.height as f64;
        LaneModel::new(
            cl,
            cr,
            config.true_offsets(),
            config.horizon + band_top * (h - config.horizon),
            h,
        )
    }
}

fn clip_rng(seed: u64, clip: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(clip as u64 + 1);
    rng
}

fn class_sequence(config: &SynthConfig) -> Vec<LabelVector> {
    match config.mix {
        ClassMix::Balanced => (0..config.clips)
            .map(|i| config.classes[i % config.classes.len()])
            .collect(),
        ClassMix::Skewed => {
            let weights: Vec<f64> = config
                .classes
                .iter()
                .map(|c| SKEWED_WEIGHTS[c.class_id().index()])
                .collect();
            let dist = WeightedIndex::new(&weights).expect("weights are positive");
            let mut rng = clip_rng(config.seed, 0);
            (0..config.clips)
                .map(|_| config.classes[dist.sample(&mut rng)])
                .collect()
        }
    }
}

/// Lane regions (1–7) that are drivable under `label`.
fn road_regions(label: LabelVector) -> Vec<usize> {
    let lanes = lane_indices(label).expect("supported label");
    let first = lanes[0].value() as usize;
    let last = lanes[lanes.len() - 1].value() as usize;
    (first..last).collect()
}

/// A square vehicle box snapped to the proposal grid, standing in region
/// `region` with width near `VEHICLE_FILL` of the lane span.
fn place_vehicle(
    config: &SynthConfig,
    lateral: f64,
    region: usize,
    size: usize,
) -> Option<BoundingBox> {
    let s = config.scale();
    let span_rows = size as f64 / (VEHICLE_FILL * s);
    let y_max_target = config.horizon + span_rows;
    let y_min = ((y_max_target - size as f64) / GRID as f64).round() as usize * GRID;
    let y_max = y_min + size;
    if y_max > config.height || (y_min * 3) < config.height {
        return None;
    }
    let u_mid = region as f64 - 4.0 - lateral;
    let x_mid = config.line_at(u_mid).x_at(y_max as f64);
    let x_min = ((x_mid - size as f64 / 2.0) / GRID as f64).round();
    if x_min < 0.0 {
        return None;
    }
    let x_min = x_min as usize * GRID;
    let x_max = x_min + size;
    if x_max > config.width {
        return None;
    }
    // bottom-edge midpoint must stay inside the lane, and the width inside
    // the proposal span test
    let span = s * (y_max as f64 - config.horizon);
    let left = config.line_at(u_mid - 0.5).x_at(y_max as f64);
    let mid = (x_min + x_max) as f64 / 2.0;
    let ratio = size as f64 / span;
    if mid < left + 0.1 * span || mid > left + 0.9 * span || !(0.35..=1.0).contains(&ratio) {
        return None;
    }
    BoundingBox::new(x_min, y_min, x_max, y_max).ok()
}

/// Draws the per-clip parameters.
pub fn clip_specs(config: &SynthConfig) -> Result<Vec<ClipSpec>> {
    config.validate()?;
    let labels = class_sequence(config);
    Ok(labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| make_clip(config, i, label))
        .collect())
}

fn make_clip(config: &SynthConfig, i: usize, label: LabelVector) -> ClipSpec {
    let mut rng = clip_rng(config.seed, i + 1);
    let lateral = rng.random_range(-0.2..0.2);
    let road = rng.random_range(0.30..0.40);
    let paint = rng.random_range(0.85..0.95);
    let vehicle = rng.random_range(0.06..0.14);
    let dash_phase = rng.random_range(0.0..DASH_PERIOD);
    let dash_speed = rng.random_range(0.6..1.0);

    let lanes = lane_indices(label).expect("supported label");
    let (first, last) = (lanes[0].value(), lanes[lanes.len() - 1].value());
    let mut erased = None;
    let mut forced_region = None;
    if config.erase_outer {
        // never a host-lane marker: the lane fit depends on those
        let left_ok = first < 4;
        let right_ok = last > 5;
        let go_left = match (left_ok, right_ok) {
            (true, true) => Some(rng.random_bool(0.5)),
            (true, false) => Some(true),
            (false, true) => Some(false),
            (false, false) => None,
        };
        match go_left {
            Some(true) => {
                erased = Some(first);
                forced_region = Some(first as usize);
            }
            Some(false) => {
                erased = Some(last);
                forced_region = Some(last as usize - 1);
            }
            None => {}
        }
    }
    let markers = (1..=8u8)
        .map(|k| MarkerSpec {
            index: k,
            line: config.line_at(k as f64 - 4.5 - lateral),
            present: k >= first && k <= last && Some(k) != erased,
            solid: k == first || k == last,
        })
        .collect();

    let mut vehicles: Vec<(BoundingBox, usize)> = Vec::new();
    let mut regions = road_regions(label);
    if let Some(r) = forced_region {
        regions.retain(|&x| x != r);
        regions.insert(0, r);
    }
    for region in regions {
        let forced = Some(region) == forced_region;
        if !forced && !rng.random_bool(config.occlusion_rate) {
            continue;
        }
        let mut sizes = VEHICLE_SIZES.to_vec();
        if region == 4 && !forced {
            // a near car ahead would hide both host markers for the whole clip
            sizes.retain(|&s| s <= 32);
        }
        let mut start = rng.random_range(0..sizes.len());
        if forced {
            // largest first; outer lanes only fit small far-away boxes
            sizes.sort_unstable_by(|a, b| b.cmp(a));
            start = 0;
        }
        let placed = (0..sizes.len())
            .map(|k| sizes[(start + k) % sizes.len()])
            .filter_map(|size| place_vehicle(config, lateral, region, size))
            .find(|b| vehicles.iter().all(|(v, _)| v.iou(b) == 0.0));
        if let Some(b) = placed {
            vehicles.push((b, region));
        }
    }

    ClipSpec {
        clip_id: format!("clip_{i:03}"),
        label,
        lateral,
        road,
        paint,
        vehicle,
        dash_phase,
        dash_speed,
        markers,
        vehicles,
        seed: rng.random(),
    }
}

/// Overlap of the unit pixel `[x − 0.5, x + 0.5]` with `[lo, hi]`.
fn coverage(x: f64, lo: f64, hi: f64) -> f64 {
    ((x + 0.5).min(hi) - (x - 0.5).max(lo)).clamp(0.0, 1.0)
}

fn dash_on(y: f64, horizon: f64, phase: f64) -> bool {
    let z = DEPTH_SCALE / (y - horizon);
    ((z + phase) / DASH_PERIOD).rem_euclid(1.0) < DASH_DUTY
}

/// Renders frame `frame_idx` of a clip in `[0, 1]`, before quantization.
pub fn render_frame(config: &SynthConfig, clip: &ClipSpec, frame_idx: usize) -> GrayFrame {
    let (w, h) = (config.width, config.height);
    let mut rng = ChaCha8Rng::seed_from_u64(clip.seed);
    rng.set_stream(frame_idx as u64);
    let noise = Normal::new(0.0, config.noise.max(1e-12)).expect("finite sigma");
    let phase = clip.dash_phase + clip.dash_speed * frame_idx as f64;
    let s = config.scale();
    let present: Vec<&MarkerSpec> = clip.markers.iter().filter(|m| m.present).collect();
    let lanes = lane_indices(clip.label).expect("supported label");
    let edge_l = config.line_at(lanes[0].value() as f64 - 4.5 - clip.lateral);
    let edge_r = config.line_at(lanes[lanes.len() - 1].value() as f64 - 4.5 - clip.lateral);

    let mut data = vec![0.0; w * h];
    for y in 0..h {
        let yf = y as f64;
        let row = &mut data[y * w..(y + 1) * w];
        if yf <= config.horizon {
            row.fill(SKY);
            continue;
        }
        let half = 0.5 * MARKER_WIDTH * s * (yf - config.horizon);
        let dashed_on = dash_on(yf, config.horizon, phase);
        let (xl, xr) = (edge_l.x_at(yf), edge_r.x_at(yf));
        // gravel shoulder: same mean as the road, coarse texture that
        // shrinks toward the horizon
        let cell = (0.04 * s * (yf - config.horizon)).max(1.0);
        for (x, v) in row.iter_mut().enumerate() {
            let xf = x as f64;
            *v = if xf < xl - half || xf > xr + half {
                let cx = ((xf / cell).floor() as i64).wrapping_mul(73_856_093);
                let cy = ((yf / cell).floor() as i64).wrapping_mul(19_349_663);
                let hash = ((cx ^ cy ^ clip.seed as i64) as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                clip.road + 0.04 * ((hash >> 40) as f64 / (1u64 << 24) as f64 - 0.5)
            } else {
                clip.road
            };
        }
        for m in &present {
            if !m.solid && !dashed_on {
                continue;
            }
            let xc = m.line.x_at(yf);
            let (lo, hi) = (xc - half, xc + half);
            let x0 = (lo - 1.0).floor().max(0.0) as usize;
            let x1 = ((hi + 1.0).ceil() as usize).min(w - 1);
            for x in x0..=x1 {
                let c = coverage(x as f64, lo, hi);
                row[x] = row[x] * (1.0 - c) + clip.paint * c;
            }
        }
    }
    for (b, _) in &clip.vehicles {
        for y in b.y_min..b.y_max {
            for x in b.x_min..b.x_max {
                data[y * w + x] = clip.vehicle;
            }
        }
    }
    // exposure flicker
    let gain = rng.random_range(1.0 - GAIN_JITTER..1.0 + GAIN_JITTER);
    data.iter_mut().for_each(|v| *v *= gain);
    if config.noise > 0.0 {
        for v in data.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }
    for v in data.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    GrayFrame::new(w, h, data).expect("dimensions match")
}

/// Frame as stored on disk: quantized to 8 bits.
pub fn render_quantized(config: &SynthConfig, clip: &ClipSpec, frame_idx: usize) -> GrayFrame {
    let f = render_frame(config, clip, frame_idx);
    GrayFrame::from_u8(f.width(), f.height(), &f.to_u8()).expect("dimensions match")
}

/// Calibration annotations (`marker_index y x`, integers) from a centered
/// camera on a road with all eight markers.
pub fn calibration_annotations(config: &SynthConfig) -> String {
    let mut out = String::from("# marker_index y x\n");
    let h = config.height as f64;
    let top = config.horizon + 0.2 * (h - config.horizon);
    for k in 1..=8u8 {
        let line = config.line_at(k as f64 - 4.5);
        let mut y = top.ceil();
        while y < h {
            let _ = writeln!(out, "{k} {} {}", y as i64, line.x_at(y).round() as i64);
            y += 10.0;
        }
    }
    out
}

/// Clip-level split: within each class, alternate clips go to train and test.
pub fn split_clips(specs: &[ClipSpec]) -> Split {
    let mut split = Split::default();
    for class in SUPPORTED {
        for (n, spec) in specs.iter().filter(|s| s.label == class).enumerate() {
            if n % 2 == 0 {
                split.train.push(spec.clip_id.clone());
            } else {
                split.test.push(spec.clip_id.clone());
            }
        }
    }
    split.train.sort();
    split.test.sort();
    split
}

fn markers_text(clip: &ClipSpec) -> String {
    let mut out = String::from("# marker_index a b present solid  (x = a*y + b)\n");
    for m in &clip.markers {
        let _ = writeln!(
            out,
            "{} {} {} {} {}",
            m.index,
            m.line.a,
            m.line.b,
            u8::from(m.present),
            u8::from(m.solid)
        );
    }
    out
}

fn vehicles_text(config: &SynthConfig, clip: &ClipSpec) -> String {
    let mut out = String::from("# frame_idx x_min y_min x_max y_max lane_region\n");
    for f in 0..config.frames {
        for (b, r) in &clip.vehicles {
            let _ = writeln!(out, "{f} {} {} {} {} {r}", b.x_min, b.y_min, b.x_max, b.y_max);
        }
    }
    out
}

/// Writes the whole corpus under `root` and returns the clip specs.
pub fn synth_corpus(config: &SynthConfig, root: &Path) -> Result<Vec<ClipSpec>> {
    let specs = clip_specs(config)?;
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    specs.par_iter().try_for_each(|clip| -> Result<()> {
        let dir = root.join(&clip.clip_id);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for f in 0..config.frames {
            render_frame(config, clip, f).write_pgm(frame_path(&dir, f))?;
        }
        let write = |name: &str, text: String| {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        write("markers.txt", markers_text(clip))?;
        write("vehicles.txt", vehicles_text(config, clip))
    })?;
    let annotations: Vec<ClipAnnotation> = specs
        .iter()
        .map(|s| ClipAnnotation {
            clip_id: s.clip_id.clone(),
            theta: s.label,
        })
        .collect();
    write_labels(&annotations, root.join("labels.csv"))?;
    write_split(&split_clips(&specs), root.join("split.txt"))?;
    let cal = root.join("calibration.txt");
    fs::write(&cal, calibration_annotations(config)).map_err(|e| Error::io(&cal, e))?;
    Ok(specs)
}
