//! Annotated frames for visual inspection: marker lines, host lane, label,
//! detection boxes.

use crate::classifier::LabelVector;
use crate::detection::Detection;
use crate::image::{GrayFrame, RgbImage};
use crate::lanemodel::{LaneModel, MarkerIndex};

pub const CENTER_COLOR: [u8; 3] = [255, 220, 0];
pub const MARKER_COLOR: [u8; 3] = [0, 200, 255];
pub const BOX_COLOR: [u8; 3] = [255, 40, 40];
const HOST_TINT: [u8; 3] = [0, 255, 0];
const TEXT_COLOR: [u8; 3] = [255, 255, 255];
const TEXT_BG: [u8; 3] = [0, 0, 0];
const TEXT_SCALE: usize = 2;

/// 5×7 glyphs, one row per byte, high bit on the left.
fn glyph(c: char) -> [u8; 7] {
    match c {
        '0' => [0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e],
        '1' => [0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e],
        '2' => [0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f],
        '3' => [0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e],
        '4' => [0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02],
        '5' => [0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e],
        '6' => [0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e],
        '7' => [0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e],
        '9' => [0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c],
        '[' => [0x0e, 0x08, 0x08, 0x08, 0x08, 0x08, 0x0e],
        ']' => [0x0e, 0x02, 0x02, 0x02, 0x02, 0x02, 0x0e],
        ',' => [0x00, 0x00, 0x00, 0x00, 0x0c, 0x04, 0x08],
        '-' => [0x00, 0x00, 0x00, 0x1f, 0x00, 0x00, 0x00],
        _ => [0; 7],
    }
}

fn draw_text(img: &mut RgbImage, x0: usize, y0: usize, text: &str) {
    let advance = 6 * TEXT_SCALE;
    let (w, h) = (text.chars().count() * advance + TEXT_SCALE, 9 * TEXT_SCALE);
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            img.put_checked(x as isize, y as isize, TEXT_BG);
        }
    }
    for (i, c) in text.chars().enumerate() {
        for (row, bits) in glyph(c).iter().enumerate() {
            for col in 0..5 {
                if bits & (0x10 >> col) == 0 {
                    continue;
                }
                for dy in 0..TEXT_SCALE {
                    for dx in 0..TEXT_SCALE {
                        let x = x0 + TEXT_SCALE + i * advance + col * TEXT_SCALE + dx;
                        let y = y0 + TEXT_SCALE + row * TEXT_SCALE + dy;
                        img.put_checked(x as isize, y as isize, TEXT_COLOR);
                    }
                }
            }
        }
    }
}

fn blend(a: [u8; 3], b: [u8; 3], t: f64) -> [u8; 3] {
    std::array::from_fn(|i| (a[i] as f64 * (1.0 - t) + b[i] as f64 * t).round() as u8)
}

/// Rows of the model band that fall inside the image.
fn band_rows(model: &LaneModel, height: usize) -> std::ops::RangeInclusive<usize> {
    let top = model.horizon_y().ceil().max(0.0) as usize;
    let bottom = (model.bottom_y().floor() as usize).min(height.saturating_sub(1));
    top..=bottom
}

/// Samples the marker finely along y so steep and shallow lines both come
/// out connected; every pixel is the rounding of a point on the line.
fn draw_marker(img: &mut RgbImage, model: &LaneModel, idx: MarkerIndex, color: [u8; 3]) {
    let (top, bottom) = (model.horizon_y(), model.bottom_y());
    let slope = (model.positions_at(bottom)[idx.value() as usize - 1]
        - model.positions_at(top)[idx.value() as usize - 1])
        .abs()
        / (bottom - top);
    let steps = ((bottom - top) * slope.max(1.0) * 2.0).ceil().max(1.0) as usize;
    for s in 0..=steps {
        let y = top + (bottom - top) * s as f64 / steps as f64;
        let x = model.positions_at(y)[idx.value() as usize - 1];
        img.put_checked(x.round() as isize, y.round() as isize, color);
    }
}

fn draw_box(img: &mut RgbImage, d: &Detection) {
    let b = d.bbox;
    let (x0, y0, x1, y1) = (b.x_min as isize, b.y_min as isize, b.x_max as isize - 1, b.y_max as isize - 1);
    for x in x0..=x1 {
        img.put_checked(x, y0, BOX_COLOR);
        img.put_checked(x, y1, BOX_COLOR);
    }
    for y in y0..=y1 {
        img.put_checked(x0, y, BOX_COLOR);
        img.put_checked(x1, y, BOX_COLOR);
    }
}

/// Same dimensions as `frame`. `None` labels print as `[-,-]`.
pub fn render_overlay(
    frame: &GrayFrame,
    model: Option<&LaneModel>,
    theta: Option<LabelVector>,
    detections: &[Detection],
) -> RgbImage {
    let mut img = RgbImage::from_gray(frame);
    if let Some(model) = model {
        for y in band_rows(model, img.height()) {
            let (l, r) = (model.cl().x_at(y as f64), model.cr().x_at(y as f64));
            let (l, r) = (l.ceil().max(0.0) as usize, r.floor().min(img.width() as f64 - 1.0));
            if r < 0.0 {
                continue;
            }
            for x in l..=r as usize {
                let c = img.get(x, y);
                img.put(x, y, blend(c, HOST_TINT, 0.25));
            }
        }
        for idx in MarkerIndex::all() {
            let color = if idx.offset_slot().is_none() {
                CENTER_COLOR
            } else {
                MARKER_COLOR
            };
            draw_marker(&mut img, model, idx, color);
        }
    }
    for d in detections {
        draw_box(&mut img, d);
    }
    let label = theta.map_or("[-,-]".to_string(), |t| t.to_string());
    draw_text(&mut img, 4, 4, &label);
    img
}
