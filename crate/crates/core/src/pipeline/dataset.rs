//! On-disk corpus layout and the text formats exchanged between commands.
//!
//! ```text
//! root/labels.csv            clip_id,theta1,theta2
//! root/split.txt             train <clip_id>...   /   test <clip_id>...
//! root/<clip_id>/frame_00000.pgm ...
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::classifier::LabelVector;
use crate::error::{Error, Result};
use crate::features::{FeatureVector, FEATURE_DIM};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClipAnnotation {
    pub clip_id: String,
    pub theta: LabelVector,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// One output row: `None` means the frame could not be positioned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prediction {
    pub clip_id: String,
    pub frame_idx: usize,
    pub label: Option<LabelVector>,
}

/// One training row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub clip_id: String,
    pub frame_idx: usize,
    pub theta: LabelVector,
    pub feature: FeatureVector,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Non-empty, comment-stripped lines with 1-based numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(n, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((n + 1, line))
    })
}

fn parse_label(t1: &str, t2: &str, origin: &str, line: usize) -> Result<LabelVector> {
    let num = |s: &str| {
        s.trim()
            .parse::<u32>()
            .map_err(|_| Error::parse(origin, line, format!("bad label component {s:?}")))
    };
    LabelVector::new(num(t1)?, num(t2)?).map_err(|e| Error::parse(origin, line, e.to_string()))
}

pub fn frame_path(clip_dir: &Path, frame_idx: usize) -> PathBuf {
    clip_dir.join(format!("frame_{frame_idx:05}.pgm"))
}

/// Frame files of a clip directory, sorted by index.
pub fn list_frames(clip_dir: &Path) -> Result<Vec<(usize, PathBuf)>> {
    let entries = fs::read_dir(clip_dir).map_err(|e| Error::io(clip_dir, e))?;
    let mut frames = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(clip_dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        let idx = name
            .strip_prefix("frame_")
            .and_then(|s| s.strip_suffix(".pgm"))
            .and_then(|s| s.parse::<usize>().ok());
        if let Some(idx) = idx {
            frames.push((idx, entry.path()));
        }
    }
    frames.sort();
    Ok(frames)
}

pub fn parse_labels(text: &str, origin: &str) -> Result<BTreeMap<String, LabelVector>> {
    let mut out = BTreeMap::new();
    for (n, line) in content_lines(text) {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::parse(origin, n, "expected clip_id,theta1,theta2"));
        }
        if fields[0] == "clip_id" {
            continue;
        }
        let label = parse_label(fields[1], fields[2], origin, n)?;
        if out.insert(fields[0].to_string(), label).is_some() {
            return Err(Error::parse(origin, n, format!("duplicate clip {}", fields[0])));
        }
    }
    Ok(out)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<BTreeMap<String, LabelVector>> {
    let path = path.as_ref();
    parse_labels(&read(path)?, &path.display().to_string())
}

pub fn write_labels(labels: &[ClipAnnotation], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for a in labels {
        let _ = writeln!(out, "{},{},{}", a.clip_id, a.theta.theta1, a.theta.theta2);
    }
    write(path.as_ref(), &out)
}

pub fn read_split(path: impl AsRef<Path>) -> Result<Split> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    let mut split = Split::default();
    for (n, line) in content_lines(&read(path)?) {
        let mut fields = line.split_whitespace();
        let target = match fields.next() {
            Some("train") => &mut split.train,
            Some("test") => &mut split.test,
            _ => return Err(Error::parse(&origin, n, "expected `train ...` or `test ...`")),
        };
        target.extend(fields.map(str::to_string));
    }
    if let Some(c) = split.train.iter().find(|c| split.test.contains(c)) {
        return Err(Error::parse(&origin, 0, format!("clip {c} is in both partitions")));
    }
    Ok(split)
}

pub fn write_split(split: &Split, path: impl AsRef<Path>) -> Result<()> {
    let text = format!("train {}\ntest {}\n", split.train.join(" "), split.test.join(" "));
    write(path.as_ref(), &text)
}

pub fn format_predictions(predictions: &[Prediction]) -> String {
    let mut out = String::new();
    for p in predictions {
        let (a, b) = p.label.map_or((0, 0), |l| (l.theta1, l.theta2));
        let _ = writeln!(out, "{} {} {a} {b}", p.clip_id, p.frame_idx);
    }
    out
}

/// `clip_id frame_idx theta1 theta2`; `0 0` marks an unpositioned frame.
pub fn parse_predictions(text: &str, origin: &str) -> Result<Vec<Prediction>> {
    content_lines(text)
        .map(|(n, line)| {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return Err(Error::parse(origin, n, "expected clip_id frame_idx theta1 theta2"));
            }
            let frame_idx = f[1]
                .parse()
                .map_err(|_| Error::parse(origin, n, "bad frame index"))?;
            let label = if f[2] == "0" && f[3] == "0" {
                None
            } else {
                Some(parse_label(f[2], f[3], origin, n)?)
            };
            Ok(Prediction {
                clip_id: f[0].to_string(),
                frame_idx,
                label,
            })
        })
        .collect()
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>> {
    let path = path.as_ref();
    parse_predictions(&read(path)?, &path.display().to_string())
}

pub fn format_features(rows: &[FeatureRow]) -> String {
    let mut out = String::new();
    for r in rows {
        let _ = write!(
            out,
            "{} {} {} {}",
            r.clip_id, r.frame_idx, r.theta.theta1, r.theta.theta2
        );
        for v in r.feature.as_slice() {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    out
}

/// `clip_id frame_idx theta1 theta2 f1 … f240`.
pub fn parse_features(text: &str, origin: &str) -> Result<Vec<FeatureRow>> {
    content_lines(text)
        .map(|(n, line)| {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 + FEATURE_DIM {
                return Err(Error::parse(
                    origin,
                    n,
                    format!("expected {} fields, found {}", 4 + FEATURE_DIM, f.len()),
                ));
            }
            let frame_idx = f[1]
                .parse()
                .map_err(|_| Error::parse(origin, n, "bad frame index"))?;
            let theta = parse_label(f[2], f[3], origin, n)?;
            let values = f[4..]
                .iter()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| Error::parse(origin, n, format!("bad feature {t:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let feature =
                FeatureVector::new(values).map_err(|e| Error::parse(origin, n, e.to_string()))?;
            Ok(FeatureRow {
                clip_id: f[0].to_string(),
                frame_idx,
                theta,
                feature,
            })
        })
        .collect()
}

pub fn read_features(path: impl AsRef<Path>) -> Result<Vec<FeatureRow>> {
    let path = path.as_ref();
    parse_features(&read(path)?, &path.display().to_string())
}

pub fn write_features(rows: &[FeatureRow], path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &format_features(rows))
}
