//! The per-frame closed loop for one clip.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classifier::{Classifier, ClassId, LabelVector, LikelihoodVector, NUM_CLASSES};
use crate::detection::{
    detect_vehicles, generate_boxes, refine_theta1, select_boxes, BoundingBox, ContrastDetector,
    Detection, Detector, ProposalConfig, SelectConfig,
};
use crate::error::Result;
use crate::features::{frame_features, FeatureConfig, FeatureVector};
use crate::image::GrayFrame;
use crate::lanemodel::{estimate_lane_model, LaneConfig, LaneModel, OffsetParams};
use crate::preprocess::{lane_mask, FilterParams};
use crate::smoothing::{SmoothingKernel, Smoother};

/// Where detection refinement sits relative to temporal smoothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefineOrder {
    /// Refine each frame's likelihood, then buffer it.
    BeforeSmoothing,
    /// Smooth raw likelihoods, then refine the smoothed label.
    AfterSmoothing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessConfig {
    pub filter: FilterParams,
    pub lane: LaneConfig,
    pub features: FeatureConfig,
    pub proposals: ProposalConfig,
    pub select: SelectConfig,
    pub detect_threshold: f64,
    pub detector_ring: f64,
    pub refine: bool,
    pub refine_order: RefineOrder,
    /// Weight kept by classes whose θ1 disagrees with a refined label.
    pub rho: f64,
    pub smooth: bool,
    pub kernel: SmoothingKernel,
    /// Frames a previous lane model may stand in after fit failures.
    pub fallback_frames: usize,
    /// Fraction of frames whose likelihood is replaced by a confident wrong
    /// answer; a robustness probe, 0 in normal use.
    pub corrupt_rate: f64,
    pub corrupt_seed: u64,
}

impl Default for ProcessConfig {
    fn default() -> Self {
        Self {
            filter: FilterParams::default(),
            lane: LaneConfig::default(),
            features: FeatureConfig::default(),
            proposals: ProposalConfig::default(),
            select: SelectConfig::default(),
            detect_threshold: ContrastDetector::DEFAULT_THRESHOLD,
            detector_ring: ContrastDetector::default().ring,
            refine: true,
            refine_order: RefineOrder::BeforeSmoothing,
            rho: 0.2,
            smooth: true,
            kernel: SmoothingKernel::default(),
            fallback_frames: 15,
            corrupt_rate: 0.0,
            corrupt_seed: 0,
        }
    }
}

/// Per-frame output. Labels are `None` for unpositioned frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub frame_idx: usize,
    pub raw: Option<LabelVector>,
    pub refined: Option<LabelVector>,
    pub smoothed: Option<LabelVector>,
    pub detections: Vec<Detection>,
    pub lane_model: Option<LaneModel>,
    /// The lane model came from an earlier frame.
    pub reused_model: bool,
}

impl FrameResult {
    /// The label the configured pipeline reports.
    pub fn output(&self, config: &ProcessConfig) -> Option<LabelVector> {
        if config.smooth {
            self.smoothed
        } else if config.refine {
            self.refined
        } else {
            self.raw
        }
    }
}

/// Lane model tracking with bounded reuse after failures.
#[derive(Debug, Clone, Default)]
pub struct LaneTracker {
    last: Option<LaneModel>,
    misses: usize,
}

impl LaneTracker {
    /// Model for this frame and whether it was reused.
    pub fn update(
        &mut self,
        fitted: Result<LaneModel>,
        fallback_frames: usize,
    ) -> Option<(LaneModel, bool)> {
        match fitted {
            Ok(model) => {
                self.last = Some(model.clone());
                self.misses = 0;
                Some((model, false))
            }
            Err(_) => {
                self.misses += 1;
                if self.misses <= fallback_frames {
                    self.last.clone().map(|m| (m, true))
                } else {
                    None
                }
            }
        }
    }
}

/// Binarize, fit the lane model (with fallback), and extract features.
pub fn frame_front_end(
    frame: &GrayFrame,
    offsets: &OffsetParams,
    config: &ProcessConfig,
    tracker: &mut LaneTracker,
) -> Result<Option<(LaneModel, bool, FeatureVector)>> {
    let mask = lane_mask(frame, &config.filter)?;
    let fitted = estimate_lane_model(&mask, offsets, &config.lane);
    let Some((model, reused)) = tracker.update(fitted, config.fallback_frames) else {
        return Ok(None);
    };
    let feature = frame_features(frame, &mask, &model, &config.features)?;
    Ok(Some((model, reused, feature)))
}

/// Moves the mass of `from` onto `to`, then scales every class whose θ1
/// differs from `to`'s by `rho`.
pub fn apply_refinement(
    likelihood: &LikelihoodVector,
    from: ClassId,
    to: ClassId,
    rho: f64,
) -> LikelihoodVector {
    let mut v = *likelihood.values();
    v[to.index()] += v[from.index()];
    v[from.index()] = 0.0;
    let theta1 = to.label().theta1;
    for (k, p) in v.iter_mut().enumerate() {
        if ClassId::new(k).expect("k < NUM_CLASSES").label().theta1 != theta1 {
            *p *= rho;
        }
    }
    LikelihoodVector::normalized(v)
}

/// Stable 64-bit FNV-1a, used to key per-clip random streams by name.
fn stream_key(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

fn corrupt(likelihood: &LikelihoodVector, rng: &mut ChaCha8Rng) -> LikelihoodVector {
    let top = likelihood.argmax().index();
    let pick = rng.random_range(0..NUM_CLASSES - 1);
    let wrong = if pick >= top { pick + 1 } else { pick };
    LikelihoodVector::one_hot(ClassId::new(wrong).expect("in range"))
}

/// Runs the closed loop over `frames` (in order) of clip `clip_id`.
pub fn process_clip(
    clip_id: &str,
    frames: impl IntoIterator<Item = Result<(usize, GrayFrame)>>,
    classifier: &Classifier,
    offsets: &OffsetParams,
    detector: Option<&dyn Detector>,
    config: &ProcessConfig,
) -> Result<Vec<FrameResult>> {
    config.filter.validate()?;
    config.proposals.validate()?;
    let contrast = ContrastDetector {
        ring: config.detector_ring,
    };
    let detector: &dyn Detector = detector.unwrap_or(&contrast);
    let mut tracker = LaneTracker::default();
    let mut smoother = Smoother::new(config.kernel.clone());
    let mut corrupt_rng = ChaCha8Rng::seed_from_u64(config.corrupt_seed);
    corrupt_rng.set_stream(stream_key(clip_id));
    let mut proposals: Option<((usize, usize), Vec<BoundingBox>)> = None;
    let mut out = Vec::new();

    for item in frames {
        let (frame_idx, frame) = item?;
        // drawn for every frame so the corruption pattern does not depend
        // on which frames get positioned
        let flip = config.corrupt_rate > 0.0 && corrupt_rng.random_bool(config.corrupt_rate);
        let Some((model, reused, feature)) =
            frame_front_end(&frame, offsets, config, &mut tracker)?
        else {
            out.push(FrameResult {
                frame_idx,
                raw: None,
                refined: None,
                smoothed: None,
                detections: Vec::new(),
                lane_model: None,
                reused_model: false,
            });
            continue;
        };
        let mut likelihood = classifier.predict_proba(&feature)?;
        if flip {
            likelihood = corrupt(&likelihood, &mut corrupt_rng);
        }
        let raw = likelihood.argmax().label();

        let detections = if config.refine {
            let dims = (frame.width(), frame.height());
            if proposals.as_ref().map(|(d, _)| *d) != Some(dims) {
                proposals = Some((dims, generate_boxes(dims.0, dims.1, &config.proposals)));
            }
            let all = &proposals.as_ref().expect("just set").1;
            let selected = select_boxes(all, &model, &config.select);
            detect_vehicles(
                frame_idx,
                &frame,
                &selected,
                &model,
                detector,
                config.detect_threshold,
            )
        } else {
            Vec::new()
        };

        let mut refined = raw;
        let smoothed;
        match (config.refine, config.refine_order) {
            (true, RefineOrder::BeforeSmoothing) => {
                refined = refine_theta1(raw, &detections);
                if refined != raw {
                    likelihood =
                        apply_refinement(&likelihood, raw.class_id(), refined.class_id(), config.rho);
                }
                smoothed = smoother.push(likelihood);
            }
            (true, RefineOrder::AfterSmoothing) => {
                refined = refine_theta1(raw, &detections);
                smoothed = refine_theta1(smoother.push(likelihood), &detections);
            }
            (false, _) => smoothed = smoother.push(likelihood),
        }

        out.push(FrameResult {
            frame_idx,
            raw: Some(raw),
            refined: Some(refined),
            smoothed: Some(smoothed),
            detections,
            lane_model: Some(model),
            reused_model: reused,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lanemodel::{LineFit, Offset};

    fn model() -> LaneModel {
        let off = |i: f64| Offset { m: 0.0, k: 10.0 * i };
        LaneModel::new(
            LineFit { a: 0.0, b: 40.0 },
            LineFit { a: 0.0, b: 50.0 },
            OffsetParams {
                left: [off(1.0), off(2.0), off(3.0)],
                right: [off(1.0), off(2.0), off(3.0)],
            },
            0.0,
            10.0,
        )
        .unwrap()
    }

    #[test]
    fn tracker_reuses_for_a_bounded_run() {
        let mut t = LaneTracker::default();
        let fail = || Err(crate::Error::InvalidModel("x".into()));
        assert!(t.update(fail(), 2).is_none());
        assert_eq!(t.update(Ok(model()), 2).map(|(_, r)| r), Some(false));
        assert_eq!(t.update(fail(), 2).map(|(_, r)| r), Some(true));
        assert_eq!(t.update(fail(), 2).map(|(_, r)| r), Some(true));
        assert!(t.update(fail(), 2).is_none());
        assert_eq!(t.update(Ok(model()), 2).map(|(_, r)| r), Some(false));
    }

    #[test]
    fn refinement_moves_the_argmax() {
        let mut v = [0.02; NUM_CLASSES];
        v[1] = 0.6; // [4,2]
        v[5] = 0.28; // [5,3]
        let l = LikelihoodVector::new(v).unwrap();
        let from = LabelVector::new(4, 2).unwrap().class_id();
        let to = LabelVector::new(5, 3).unwrap().class_id();
        let r = apply_refinement(&l, from, to, 0.2);
        assert_eq!(r.argmax(), to);
        assert_eq!(r.get(from), 0.0);
        let sum: f64 = r.values().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        // θ1 = 5 classes keep full weight relative to each other
        let c52 = LabelVector::new(5, 2).unwrap().class_id();
        assert!((r.get(c52) / r.get(to) - 0.02 / 0.88).abs() < 1e-12);
    }

    #[test]
    fn corruption_never_picks_the_current_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = LikelihoodVector::one_hot(ClassId::new(3).unwrap());
        for _ in 0..200 {
            assert_ne!(corrupt(&l, &mut rng).argmax().index(), 3);
        }
    }
}
