//! Frame-level accuracy against clip labels.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::dataset::Prediction;
use crate::classifier::{LabelVector, NUM_CLASSES, SUPPORTED};
use crate::error::{Error, Result};

/// Confusion counts (rows: truth, columns: prediction) over positioned
/// frames, plus unpositioned frames per true class. Unpositioned frames
/// count as errors.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EvalReport {
    pub confusion: [[u64; NUM_CLASSES]; NUM_CLASSES],
    pub unpositioned: [u64; NUM_CLASSES],
}

impl EvalReport {
    /// All frames of true class `k`, positioned or not.
    pub fn class_frames(&self, k: usize) -> u64 {
        self.confusion[k].iter().sum::<u64>() + self.unpositioned[k]
    }

    pub fn total(&self) -> u64 {
        (0..NUM_CLASSES).map(|k| self.class_frames(k)).sum()
    }

    pub fn correct(&self) -> u64 {
        (0..NUM_CLASSES).map(|k| self.confusion[k][k]).sum()
    }

    /// `None` for classes without frames.
    pub fn per_class_accuracy(&self) -> [Option<f64>; NUM_CLASSES] {
        std::array::from_fn(|k| {
            let n = self.class_frames(k);
            (n > 0).then(|| self.confusion[k][k] as f64 / n as f64)
        })
    }

    pub fn overall(&self) -> f64 {
        let n = self.total();
        if n == 0 {
            0.0
        } else {
            self.correct() as f64 / n as f64
        }
    }

    /// Fraction of frames whose predicted θ1 matches the truth.
    pub fn theta1_accuracy(&self) -> f64 {
        let n = self.total();
        if n == 0 {
            return 0.0;
        }
        let mut hits = 0;
        for (t, row) in self.confusion.iter().enumerate() {
            for (p, &c) in row.iter().enumerate() {
                if SUPPORTED[t].theta1 == SUPPORTED[p].theta1 {
                    hits += c;
                }
            }
        }
        hits as f64 / n as f64
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "overall {:.4} ({}/{} frames)",
            self.overall(),
            self.correct(),
            self.total()
        );
        for (k, acc) in self.per_class_accuracy().iter().enumerate() {
            let acc = acc.map_or("-".to_string(), |a| format!("{a:.4}"));
            let _ = writeln!(
                out,
                "{:<6} {acc:>7}  frames {:>6}  unpositioned {}",
                SUPPORTED[k].to_string(),
                self.class_frames(k),
                self.unpositioned[k]
            );
        }
        out.push_str("confusion (rows = truth):\n      ");
        for l in SUPPORTED {
            let _ = write!(out, " {:>6}", l.to_string());
        }
        out.push('\n');
        for (k, row) in self.confusion.iter().enumerate() {
            let _ = write!(out, "{:<6}", SUPPORTED[k].to_string());
            for c in row {
                let _ = write!(out, " {c:>6}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn evaluate(
    predictions: &[Prediction],
    annotations: &BTreeMap<String, LabelVector>,
) -> Result<EvalReport> {
    let mut report = EvalReport::default();
    for p in predictions {
        let truth = annotations
            .get(&p.clip_id)
            .ok_or_else(|| Error::MissingAnnotation {
                clip_id: p.clip_id.clone(),
                frame_idx: p.frame_idx,
            })?
            .class_id()
            .index();
        match p.label {
            Some(l) => report.confusion[truth][l.class_id().index()] += 1,
            None => report.unpositioned[truth] += 1,
        }
    }
    Ok(report)
}
