//! In-memory corpus helpers shared by the integration tests. Frames are
//! rendered exactly as `synth_corpus` stores them, without touching disk.

#![allow(dead_code)]

use std::collections::BTreeMap;

use lanewise::classifier::{Classifier, ForestConfig, LabelVector, SvmConfig};
use lanewise::pipeline::dataset::{FeatureRow, Prediction};
use lanewise::pipeline::process::{frame_front_end, LaneTracker};
use lanewise::pipeline::run::{to_predictions, train, ModelKind};
use lanewise::pipeline::synth::{clip_specs, render_quantized, split_clips, ClipSpec, SynthConfig};
use lanewise::pipeline::{evaluate, process_clip, EvalReport, FrameResult, ProcessConfig};

pub struct Corpus {
    pub config: SynthConfig,
    pub specs: Vec<ClipSpec>,
}

impl Corpus {
    pub fn new(config: SynthConfig) -> Self {
        let specs = clip_specs(&config).expect("valid synth config");
        Self { config, specs }
    }

    pub fn labels(&self) -> BTreeMap<String, LabelVector> {
        self.specs.iter().map(|s| (s.clip_id.clone(), s.label)).collect()
    }

    pub fn clips(&self, ids: &[String]) -> Vec<&ClipSpec> {
        ids.iter()
            .map(|id| self.specs.iter().find(|s| &s.clip_id == id).expect("known clip"))
            .collect()
    }

    pub fn train_test(&self) -> (Vec<&ClipSpec>, Vec<&ClipSpec>) {
        let split = split_clips(&self.specs);
        (self.clips(&split.train), self.clips(&split.test))
    }

    pub fn features(&self, clips: &[&ClipSpec], pc: &ProcessConfig) -> Vec<FeatureRow> {
        let offsets = self.config.true_offsets();
        let mut rows = Vec::new();
        for spec in clips {
            let mut tracker = LaneTracker::default();
            for f in 0..self.config.frames {
                let frame = render_quantized(&self.config, spec, f);
                if let Some((_, _, feature)) =
                    frame_front_end(&frame, &offsets, pc, &mut tracker).unwrap()
                {
                    rows.push(FeatureRow {
                        clip_id: spec.clip_id.clone(),
                        frame_idx: f,
                        theta: spec.label,
                        feature,
                    });
                }
            }
        }
        rows
    }

    pub fn train(&self, clips: &[&ClipSpec], kind: ModelKind, pc: &ProcessConfig) -> Classifier {
        let rows = self.features(clips, pc);
        train(&rows, kind, &SvmConfig::default(), &ForestConfig::default()).unwrap()
    }

    pub fn run(
        &self,
        clips: &[&ClipSpec],
        model: &Classifier,
        pc: &ProcessConfig,
    ) -> Vec<(String, Vec<FrameResult>)> {
        let offsets = self.config.true_offsets();
        clips
            .iter()
            .map(|spec| {
                let frames =
                    (0..self.config.frames).map(|f| Ok((f, render_quantized(&self.config, spec, f))));
                let res = process_clip(&spec.clip_id, frames, model, &offsets, None, pc).unwrap();
                (spec.clip_id.clone(), res)
            })
            .collect()
    }

    pub fn predictions(
        &self,
        clips: &[&ClipSpec],
        model: &Classifier,
        pc: &ProcessConfig,
    ) -> Vec<Prediction> {
        to_predictions(&self.run(clips, model, pc), pc)
    }

    pub fn report(&self, predictions: &[Prediction]) -> EvalReport {
        evaluate(predictions, &self.labels()).unwrap()
    }
}
