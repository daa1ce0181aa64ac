//! Corpus-level drivers: feature extraction, training, prediction.
//!
//! Clips are independent and run in parallel; frames within a clip run in
//! order. Results come back in clip order, so output does not depend on
//! the thread count.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use super::dataset::{list_frames, FeatureRow, Prediction};
use super::process::{frame_front_end, process_clip, FrameResult, LaneTracker, ProcessConfig};
use crate::classifier::{
    train_forest, train_svm, Classifier, ForestConfig, LabelVector, SvmConfig,
};
use crate::detection::Detector;
use crate::error::{Error, Result};
use crate::image::GrayFrame;
use crate::lanemodel::OffsetParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Svm,
    Forest,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svm" => Ok(ModelKind::Svm),
            "forest" => Ok(ModelKind::Forest),
            _ => Err(Error::InvalidParameter(format!("unknown model kind {s:?}"))),
        }
    }
}

/// Lazily reads the frames of one clip directory, in index order.
pub fn clip_frames(dir: &Path) -> Result<impl Iterator<Item = Result<(usize, GrayFrame)>>> {
    let frames = list_frames(dir)?;
    if frames.is_empty() {
        return Err(Error::InvalidInput(format!("no frames in {}", dir.display())));
    }
    Ok(frames
        .into_iter()
        .map(|(idx, path)| GrayFrame::read_pgm(&path).map(|f| (idx, f))))
}

/// Feature rows for every frame of the given clips that yields a lane model.
pub fn extract_features(
    root: &Path,
    clips: &[String],
    labels: &BTreeMap<String, LabelVector>,
    offsets: &OffsetParams,
    config: &ProcessConfig,
) -> Result<Vec<FeatureRow>> {
    let per_clip: Vec<Vec<FeatureRow>> = clips
        .par_iter()
        .map(|clip| {
            let theta = *labels.get(clip).ok_or_else(|| Error::MissingAnnotation {
                clip_id: clip.clone(),
                frame_idx: 0,
            })?;
            let mut tracker = LaneTracker::default();
            let mut rows = Vec::new();
            for item in clip_frames(&root.join(clip))? {
                let (frame_idx, frame) = item?;
                if let Some((_, _, feature)) =
                    frame_front_end(&frame, offsets, config, &mut tracker)?
                {
                    rows.push(FeatureRow {
                        clip_id: clip.clone(),
                        frame_idx,
                        theta,
                        feature,
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(per_clip.into_iter().flatten().collect())
}

pub fn train(
    rows: &[FeatureRow],
    kind: ModelKind,
    svm: &SvmConfig,
    forest: &ForestConfig,
) -> Result<Classifier> {
    let xs: Vec<_> = rows.iter().map(|r| r.feature.clone()).collect();
    let ys: Vec<_> = rows.iter().map(|r| r.theta.class_id()).collect();
    Ok(match kind {
        ModelKind::Svm => Classifier::Svm(train_svm(&xs, &ys, svm)?),
        ModelKind::Forest => Classifier::Forest(train_forest(&xs, &ys, forest)?),
    })
}

/// Runs the closed loop on each clip directory `root/<clip>`.
pub fn predict_clips(
    root: &Path,
    clips: &[String],
    classifier: &Classifier,
    offsets: &OffsetParams,
    detector: Option<&dyn Detector>,
    config: &ProcessConfig,
) -> Result<Vec<(String, Vec<FrameResult>)>> {
    clips
        .par_iter()
        .map(|clip| {
            let frames = clip_frames(&root.join(clip))?;
            let results = process_clip(clip, frames, classifier, offsets, detector, config)?;
            Ok((clip.clone(), results))
        })
        .collect()
}

/// Flattens per-clip results into output rows with the configured label.
pub fn to_predictions(
    results: &[(String, Vec<FrameResult>)],
    config: &ProcessConfig,
) -> Vec<Prediction> {
    results
        .iter()
        .flat_map(|(clip, frames)| {
            frames.iter().map(move |f| Prediction {
                clip_id: clip.clone(),
                frame_idx: f.frame_idx,
                label: f.output(config),
            })
        })
        .collect()
}
