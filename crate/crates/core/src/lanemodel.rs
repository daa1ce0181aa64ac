//! Straight-road lane model.
//!
//! The two markers bounding the host lane are detected in the binarized
//! frame and fitted as lines `x = a·y + b`. Every other marker sits at a
//! fixed offset from its side's center marker, and that offset is itself
//! linear in the image row: `offset_i(y) = m_i·y + k_i`, slot `i = 1` being
//! the marker adjacent to the center. Marker indices run left to right:
//!
//! ```text
//!   1    2    3    4    5    6    7    8
//!  l_1  l_2  l_3  c_l  c_r  r_3  r_2  r_1
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result, Side};
use crate::image::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MarkerIndex(u8);

impl MarkerIndex {
    pub const LEFT_CENTER: MarkerIndex = MarkerIndex(4);
    pub const RIGHT_CENTER: MarkerIndex = MarkerIndex(5);

    pub fn new(value: u8) -> Result<Self> {
        if (1..=8).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::InvalidInput(format!(
                "marker index {value} outside [1, 8]"
            )))
        }
    }

    #[inline]
    pub fn value(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = MarkerIndex> {
        (1..=8).map(MarkerIndex)
    }

    /// The six markers that carry features: everything but the host lane's.
    pub fn non_center() -> [MarkerIndex; 6] {
        [1, 2, 3, 6, 7, 8].map(MarkerIndex)
    }

    /// Side and offset slot (1 = nearest the center) of a non-center marker.
    pub fn offset_slot(self) -> Option<(Side, usize)> {
        match self.0 {
            1..=3 => Some((Side::Left, 4 - self.0 as usize)),
            6..=8 => Some((Side::Right, self.0 as usize - 5)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Line parameterized as `x = a·y + b`; markers are near-vertical in the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub a: f64,
    pub b: f64,
}

impl LineFit {
    #[inline]
    pub fn x_at(&self, y: f64) -> f64 {
        self.a * y + self.b
    }
}

/// Linear offset `m·y + k` of one marker from its side's center marker.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Offset {
    pub m: f64,
    pub k: f64,
}

impl Offset {
    #[inline]
    pub fn at(&self, y: f64) -> f64 {
        self.m * y + self.k
    }
}

/// Offsets for the three outer markers on each side, slot 1 nearest the center.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OffsetParams {
    pub left: [Offset; 3],
    pub right: [Offset; 3],
}

impl OffsetParams {
    pub fn slot(&self, side: Side, slot: usize) -> Offset {
        match side {
            Side::Left => self.left[slot - 1],
            Side::Right => self.right[slot - 1],
        }
    }

    /// Key-value text form: `m_l_1=...`, `k_l_1=...`, ... `k_r_3=...`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (tag, side) in [("l", &self.left), ("r", &self.right)] {
            for (i, o) in side.iter().enumerate() {
                let _ = writeln!(out, "m_{tag}_{}={}", i + 1, o.m);
                let _ = writeln!(out, "k_{tag}_{}={}", i + 1, o.k);
            }
        }
        out
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut seen = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, n + 1, "expected key=value"))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::parse(origin, n + 1, format!("bad number {value:?}")))?;
            seen.insert(key.trim().to_string(), value);
        }
        let mut params = OffsetParams::default();
        for (tag, side) in [("l", &mut params.left), ("r", &mut params.right)] {
            for (i, o) in side.iter_mut().enumerate() {
                for (name, field) in [("m", &mut o.m), ("k", &mut o.k)] {
                    let key = format!("{name}_{tag}_{}", i + 1);
                    *field = seen
                        .remove(&key)
                        .ok_or_else(|| Error::parse(origin, 0, format!("missing key {key}")))?;
                }
            }
        }
        if let Some(key) = seen.keys().next() {
            return Err(Error::parse(origin, 0, format!("unknown key {key}")));
        }
        Ok(params)
    }

    /// Lowest row at which some offset with positive slope reaches zero.
    pub fn zero_row(&self) -> Option<f64> {
        self.left
            .iter()
            .chain(&self.right)
            .filter(|o| o.m > 0.0)
            .map(|o| -o.k / o.m)
            .filter(|y| y.is_finite())
            .reduce(f64::max)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Immutable eight-marker lane model valid on rows `[horizon_y, bottom_y]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneModel {
    cl: LineFit,
    cr: LineFit,
    offsets: OffsetParams,
    horizon_y: f64,
    bottom_y: f64,
}

impl LaneModel {
    pub fn new(
        cl: LineFit,
        cr: LineFit,
        offsets: OffsetParams,
        horizon_y: f64,
        bottom_y: f64,
    ) -> Result<Self> {
        let finite = [cl.a, cl.b, cr.a, cr.b, horizon_y, bottom_y]
            .into_iter()
            .chain(offsets.left.iter().chain(&offsets.right).flat_map(|o| [o.m, o.k]))
            .all(f64::is_finite);
        if !finite {
            return Err(Error::InvalidModel("non-finite parameter".into()));
        }
        if !(horizon_y < bottom_y) {
            return Err(Error::InvalidModel(format!(
                "empty band: horizon {horizon_y} >= bottom {bottom_y}"
            )));
        }
        let model = Self {
            cl,
            cr,
            offsets,
            horizon_y,
            bottom_y,
        };
        // Every marker and offset is linear in y, so checking both band ends
        // covers the whole band.
        for y in [horizon_y, bottom_y] {
            for side in [&offsets.left, &offsets.right] {
                if side[0].at(y) <= 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "nonpositive first offset at row {y}"
                    )));
                }
            }
            let xs = model.positions_at(y);
            if let Some(w) = xs.windows(2).position(|w| w[1] <= w[0]) {
                return Err(Error::InvalidModel(format!(
                    "markers {} and {} out of order at row {y}",
                    w + 1,
                    w + 2
                )));
            }
        }
        Ok(model)
    }

    pub fn cl(&self) -> LineFit {
        self.cl
    }

    pub fn cr(&self) -> LineFit {
        self.cr
    }

    pub fn offsets(&self) -> &OffsetParams {
        &self.offsets
    }

    pub fn horizon_y(&self) -> f64 {
        self.horizon_y
    }

    pub fn bottom_y(&self) -> f64 {
        self.bottom_y
    }

    #[inline]
    pub fn in_band(&self, y: f64) -> bool {
        y >= self.horizon_y && y <= self.bottom_y
    }

    pub fn marker_position(&self, idx: MarkerIndex, y: f64) -> Result<f64> {
        if !self.in_band(y) {
            return Err(Error::OutOfBand {
                y,
                top: self.horizon_y,
                bottom: self.bottom_y,
            });
        }
        Ok(self.position_unchecked(idx, y))
    }

    #[inline]
    fn position_unchecked(&self, idx: MarkerIndex, y: f64) -> f64 {
        match idx.offset_slot() {
            None if idx == MarkerIndex::LEFT_CENTER => self.cl.x_at(y),
            None => self.cr.x_at(y),
            Some((Side::Left, slot)) => self.cl.x_at(y) - self.offsets.slot(Side::Left, slot).at(y),
            Some((Side::Right, slot)) => {
                self.cr.x_at(y) + self.offsets.slot(Side::Right, slot).at(y)
            }
        }
    }

    /// All eight marker x-positions at row `y`, left to right. No band check.
    pub fn positions_at(&self, y: f64) -> [f64; 8] {
        let mut xs = [0.0; 8];
        for (slot, idx) in xs.iter_mut().zip(MarkerIndex::all()) {
            *slot = self.position_unchecked(idx, y);
        }
        xs
    }

    /// Lane region `r ∈ [1, 7]` (between markers `r` and `r + 1`) containing
    /// `x` on row `y`, or `None` outside the band or outside all seven lanes.
    pub fn lane_region(&self, x: f64, y: f64) -> Option<(usize, f64)> {
        if !self.in_band(y) {
            return None;
        }
        let xs = self.positions_at(y);
        xs.windows(2)
            .position(|w| x >= w[0] && x < w[1])
            .map(|i| (i + 1, xs[i + 1] - xs[i]))
    }
}

/// Trapezoidal search region, symmetric about `center_x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Roi {
    pub center_x: f64,
    pub top_y: f64,
    pub bottom_y: f64,
    pub top_halfwidth: f64,
    pub bottom_halfwidth: f64,
}

impl Roi {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        if y < self.top_y || y > self.bottom_y {
            return false;
        }
        let t = (y - self.top_y) / (self.bottom_y - self.top_y).max(f64::EPSILON);
        let half = self.top_halfwidth + t * (self.bottom_halfwidth - self.top_halfwidth);
        (x - self.center_x).abs() <= half
    }
}

/// Connected-component shape filters for center-marker candidates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkerFilter {
    pub min_area: usize,
    pub max_area: usize,
    /// Minimum major/minor axis ratio.
    pub min_elongation: f64,
    /// Maximum angle between the major axis and the vertical, degrees.
    pub max_tilt_deg: f64,
}

impl Default for MarkerFilter {
    fn default() -> Self {
        Self {
            min_area: 20,
            max_area: 2000,
            min_elongation: 3.0,
            max_tilt_deg: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentShape {
    pub area: usize,
    pub elongation: f64,
    pub tilt_deg: f64,
}

fn shape_of(pixels: &[(usize, usize)]) -> ComponentShape {
    let n = pixels.len() as f64;
    let (sx, sy) = pixels
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x as f64, b + y as f64));
    let (mx, my) = (sx / n, sy / n);
    let (mut cxx, mut cyy, mut cxy) = (0.0, 0.0, 0.0);
    for &(x, y) in pixels {
        let dx = x as f64 - mx;
        let dy = y as f64 - my;
        cxx += dx * dx;
        cyy += dy * dy;
        cxy += dx * dy;
    }
    // a pixel has extent; add the variance of a unit square to both axes
    cxx = cxx / n + 1.0 / 12.0;
    cyy = cyy / n + 1.0 / 12.0;
    cxy /= n;
    let tr = cxx + cyy;
    let disc = ((cxx - cyy).powi(2) + 4.0 * cxy * cxy).sqrt();
    let l1 = 0.5 * (tr + disc);
    let l2 = 0.5 * (tr - disc);
    let elongation = (l1 / l2.max(1e-12)).sqrt();
    // major-axis eigenvector
    let (vx, vy) = if cxy.abs() > 1e-12 {
        (l1 - cyy, cxy)
    } else if cxx >= cyy {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    let tilt_deg = vx.abs().atan2(vy.abs()).to_degrees();
    ComponentShape {
        area: pixels.len(),
        elongation,
        tilt_deg,
    }
}

/// 8-connected components of the mask pixels inside `keep`.
fn components(mask: &BinaryMask, keep: impl Fn(usize, usize) -> bool) -> Vec<Vec<(usize, usize)>> {
    let (w, h) = (mask.width(), mask.height());
    let mut label = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if label[y * w + x] || !mask.get(x, y) || !keep(x, y) {
                continue;
            }
            let mut comp = Vec::new();
            label[y * w + x] = true;
            stack.push((x, y));
            while let Some((cx, cy)) = stack.pop() {
                comp.push((cx, cy));
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let nx = cx as isize + dx;
                        let ny = cy as isize + dy;
                        if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                            continue;
                        }
                        let (nx, ny) = (nx as usize, ny as usize);
                        if !label[ny * w + nx] && mask.get(nx, ny) && keep(nx, ny) {
                            label[ny * w + nx] = true;
                            stack.push((nx, ny));
                        }
                    }
                }
            }
            comp.sort_unstable_by_key(|&(x, y)| (y, x));
            out.push(comp);
        }
    }
    out
}

/// Collects marker-like components inside the ROI, split at its midline.
pub fn detect_center_markers(
    mask: &BinaryMask,
    roi: &Roi,
    filter: &MarkerFilter,
) -> (Vec<Point>, Vec<Point>) {
    let mut left = Vec::new();
    let mut right = Vec::new();
    for comp in components(mask, |x, y| roi.contains(x as f64, y as f64)) {
        let shape = shape_of(&comp);
        if shape.area < filter.min_area
            || shape.area > filter.max_area
            || shape.elongation < filter.min_elongation
            || shape.tilt_deg > filter.max_tilt_deg
        {
            continue;
        }
        for (x, y) in comp {
            let p = Point::new(x as f64, y as f64);
            if p.x < roi.center_x {
                left.push(p);
            } else {
                right.push(p);
            }
        }
    }
    (left, right)
}

/// Ordinary least squares of x on y. Returns the fit and its residual RMS.
pub fn least_squares(points: &[Point]) -> Option<(LineFit, f64)> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let my = points.iter().map(|p| p.y).sum::<f64>() / n;
    let mx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let (mut syy, mut sxy) = (0.0, 0.0);
    for p in points {
        syy += (p.y - my).powi(2);
        sxy += (p.y - my) * (p.x - mx);
    }
    if syy <= 0.0 {
        return None;
    }
    let a = sxy / syy;
    let fit = LineFit { a, b: mx - a * my };
    Some((fit, residual_rms(&fit, points)))
}

fn residual_rms(fit: &LineFit, points: &[Point]) -> f64 {
    let ss: f64 = points.iter().map(|p| (p.x - fit.x_at(p.y)).powi(2)).sum();
    (ss / points.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    pub threshold: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            threshold: 2.0,
            iterations: 100,
            seed: 0x5eed,
        }
    }
}

/// RANSAC over two-point hypotheses, refit by least squares on the best
/// consensus set.
pub fn ransac_fit(points: &[Point], params: &RansacParams) -> Option<(LineFit, f64)> {
    let (first, _) = least_squares(points)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(usize, LineFit)> = None;
    for _ in 0..params.iterations {
        let i = rng.random_range(0..points.len());
        let j = rng.random_range(0..points.len());
        let (p, q) = (points[i], points[j]);
        if p.y == q.y {
            continue;
        }
        let a = (q.x - p.x) / (q.y - p.y);
        let cand = LineFit { a, b: p.x - a * p.y };
        let inliers = points
            .iter()
            .filter(|r| (r.x - cand.x_at(r.y)).abs() <= params.threshold)
            .count();
        if best.is_none_or(|(n, _)| inliers > n) {
            best = Some((inliers, cand));
        }
    }
    let model = best.map_or(first, |(_, l)| l);
    let inliers: Vec<Point> = points
        .iter()
        .filter(|r| (r.x - model.x_at(r.y)).abs() <= params.threshold)
        .copied()
        .collect();
    least_squares(&inliers).or(Some((first, residual_rms(&first, points))))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitMethod {
    LeastSquares,
    Ransac(RansacParams),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterFit {
    pub left: LineFit,
    pub right: LineFit,
    pub left_rms: f64,
    pub right_rms: f64,
}

pub fn fit_center_lines(left: &[Point], right: &[Point], method: &FitMethod) -> Result<CenterFit> {
    let fit = |pts: &[Point], side| {
        match method {
            FitMethod::LeastSquares => least_squares(pts),
            FitMethod::Ransac(p) => ransac_fit(pts, p),
        }
        .ok_or(Error::InsufficientPoints(side))
    };
    let (l, left_rms) = fit(left, Side::Left)?;
    let (r, right_rms) = fit(right, Side::Right)?;
    Ok(CenterFit {
        left: l,
        right: r,
        left_rms,
        right_rms,
    })
}

/// Fits each slot's offset `|x − x_center(y)|` against `y` by least squares.
pub fn calibrate_offsets(
    annotations: &[(MarkerIndex, Point)],
    cl: &LineFit,
    cr: &LineFit,
) -> Result<OffsetParams> {
    let mut params = OffsetParams::default();
    for side in [Side::Left, Side::Right] {
        for slot in 1..=3 {
            // observed offsets laid out as (x = offset, y = row) for the LS helper
            let samples: Vec<Point> = annotations
                .iter()
                .filter(|(idx, _)| idx.offset_slot() == Some((side, slot)))
                .map(|(_, p)| {
                    let center = match side {
                        Side::Left => cl.x_at(p.y),
                        Side::Right => cr.x_at(p.y),
                    };
                    Point::new((p.x - center).abs(), p.y)
                })
                .collect();
            let (fit, _) =
                least_squares(&samples).ok_or(Error::MissingAnnotations { side, slot })?;
            let offset = Offset { m: fit.a, k: fit.b };
            match side {
                Side::Left => params.left[slot - 1] = offset,
                Side::Right => params.right[slot - 1] = offset,
            }
        }
    }
    Ok(params)
}

/// Parses `marker_index y x` lines; `#` starts a comment.
pub fn parse_annotations(text: &str, origin: &str) -> Result<Vec<(MarkerIndex, Point)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::parse(origin, n + 1, "expected `marker_index y x`"));
        }
        let idx: u8 = fields[0]
            .parse()
            .map_err(|_| Error::parse(origin, n + 1, "bad marker index"))?;
        let idx = MarkerIndex::new(idx).map_err(|e| Error::parse(origin, n + 1, e.to_string()))?;
        let y: f64 = fields[1]
            .parse()
            .map_err(|_| Error::parse(origin, n + 1, "bad y"))?;
        let x: f64 = fields[2]
            .parse()
            .map_err(|_| Error::parse(origin, n + 1, "bad x"))?;
        out.push((idx, Point::new(x, y)));
    }
    Ok(out)
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<(MarkerIndex, Point)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text, &path.display().to_string())
}

/// Center lines fitted from the annotations of markers 4 and 5, then the
/// six offsets relative to them.
pub fn calibrate_from_annotations(annotations: &[(MarkerIndex, Point)]) -> Result<OffsetParams> {
    let pick = |want: MarkerIndex| -> Vec<Point> {
        annotations
            .iter()
            .filter(|(i, _)| *i == want)
            .map(|(_, p)| *p)
            .collect()
    };
    let fit = fit_center_lines(
        &pick(MarkerIndex::LEFT_CENTER),
        &pick(MarkerIndex::RIGHT_CENTER),
        &FitMethod::LeastSquares,
    )?;
    calibrate_offsets(annotations, &fit.left, &fit.right)
}

/// Settings for turning a binary mask into a [`LaneModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct LaneConfig {
    /// ROI top edge as a fraction of frame height.
    pub roi_top: f64,
    /// ROI half-widths at its top and bottom edges, as fractions of frame width.
    pub roi_top_halfwidth: f64,
    pub roi_bottom_halfwidth: f64,
    pub filter: MarkerFilter,
    pub fit: FitMethod,
    /// Band top, as a fraction of the distance from the vanishing row to the
    /// frame bottom.
    pub band_top: f64,
    /// Minimum vertical extent of each side's marker pixels, as a fraction
    /// of the ROI height. One short dash does not pin down a direction.
    pub min_row_span: f64,
}

impl Default for LaneConfig {
    fn default() -> Self {
        Self {
            roi_top: 0.5,
            roi_top_halfwidth: 0.06,
            roi_bottom_halfwidth: 0.42,
            filter: MarkerFilter::default(),
            fit: FitMethod::Ransac(RansacParams::default()),
            band_top: 0.12,
            min_row_span: 0.25,
        }
    }
}

impl LaneConfig {
    pub fn roi(&self, width: usize, height: usize) -> Roi {
        let w = width as f64;
        let h = height as f64;
        Roi {
            center_x: (w - 1.0) / 2.0,
            top_y: self.roi_top * h,
            bottom_y: h - 1.0,
            top_halfwidth: self.roi_top_halfwidth * w,
            bottom_halfwidth: self.roi_bottom_halfwidth * w,
        }
    }
}

/// Band from just below the center lines' intersection to the frame bottom.
pub fn band_for(cl: &LineFit, cr: &LineFit, height: usize, band_top: f64) -> Result<(f64, f64)> {
    let bottom = height as f64;
    let denom = cl.a - cr.a;
    let vanish = if denom.abs() < 1e-12 {
        0.0
    } else {
        ((cr.b - cl.b) / denom).max(0.0)
    };
    if !vanish.is_finite() || vanish >= bottom {
        return Err(Error::InvalidModel(format!(
            "center lines meet at row {vanish}, below the frame"
        )));
    }
    Ok((vanish + band_top * (bottom - vanish), bottom))
}

/// Detect → fit → combine with the calibrated offsets.
pub fn estimate_lane_model(
    mask: &BinaryMask,
    offsets: &OffsetParams,
    config: &LaneConfig,
) -> Result<LaneModel> {
    let roi = config.roi(mask.width(), mask.height());
    let (left, right) = detect_center_markers(mask, &roi, &config.filter);
    let need = config.min_row_span * (roi.bottom_y - roi.top_y);
    for (points, side) in [(&left, Side::Left), (&right, Side::Right)] {
        let (lo, hi) = points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.y), hi.max(p.y)));
        if points.is_empty() || hi - lo < need {
            return Err(Error::InsufficientPoints(side));
        }
    }
    let fit = fit_center_lines(&left, &right, &config.fit)?;
    let (mut top, bottom) = band_for(&fit.left, &fit.right, mask.height(), config.band_top)?;
    // the calibrated offsets vanish at the true horizon; a noisy fit must
    // not push the band above it
    if let Some(zero) = offsets.zero_row().filter(|z| *z < bottom) {
        top = top.max(zero + config.band_top * (bottom - zero));
    }
    LaneModel::new(fit.left, fit.right, *offsets, top, bottom)
}
