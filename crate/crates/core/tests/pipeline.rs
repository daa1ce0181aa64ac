mod common;

use std::sync::OnceLock;

use common::Corpus;
use lanewise::classifier::{Classifier, LabelVector};
use lanewise::image::GrayFrame;
use lanewise::pipeline::dataset::{format_predictions, read_labels, read_split};
use lanewise::pipeline::process::{frame_front_end, LaneTracker};
use lanewise::pipeline::run::{extract_features, predict_clips, to_predictions, train, ModelKind};
use lanewise::pipeline::synth::{render_quantized, synth_corpus, SynthConfig};
use lanewise::pipeline::{evaluate, process_clip, ProcessConfig};
use lanewise::smoothing::Smoother;

fn trained() -> &'static (Corpus, Classifier) {
    static SHARED: OnceLock<(Corpus, Classifier)> = OnceLock::new();
    SHARED.get_or_init(|| {
        let corpus = Corpus::new(SynthConfig::default());
        let (train_clips, _) = corpus.train_test();
        let model = corpus.train(&train_clips, ModelKind::Forest, &ProcessConfig::default());
        (corpus, model)
    })
}

#[test]
fn clean_clip_is_smoothed_to_its_label() {
    let (corpus, model) = trained();
    let (_, test) = corpus.train_test();
    let target = LabelVector::new(5, 3).unwrap();
    let clips: Vec<_> = test.into_iter().filter(|s| s.label == target).collect();
    assert!(!clips.is_empty());
    for (clip, frames) in corpus.run(&clips, model, &ProcessConfig::default()) {
        let hits = frames.iter().filter(|f| f.smoothed == Some(target)).count();
        assert!(
            hits as f64 >= 0.95 * frames.len() as f64,
            "{clip}: {hits}/{} frames smoothed to {target}",
            frames.len()
        );
    }
}

#[test]
fn smoothing_does_not_lose_to_single_frames_under_corruption() {
    let (corpus, model) = trained();
    let (_, test) = corpus.train_test();
    let noisy = ProcessConfig {
        corrupt_rate: 0.1,
        corrupt_seed: 10,
        ..ProcessConfig::default()
    };
    let smoothed = corpus.report(&corpus.predictions(&test, model, &noisy));
    let single = corpus.report(&corpus.predictions(
        &test,
        model,
        &ProcessConfig {
            smooth: false,
            ..noisy
        },
    ));
    assert!(
        smoothed.overall() >= single.overall(),
        "smoothed {} < unsmoothed {}",
        smoothed.overall(),
        single.overall()
    );
}

/// With refinement off the loop is open: no detections, refined = raw, and
/// the smoothed labels equal a fresh smoother fed the classifier's raw
/// likelihoods.
#[test]
fn refine_off_is_the_open_loop() {
    let (corpus, model) = trained();
    let (_, test) = corpus.train_test();
    let clips = &test[..3];
    let pc = ProcessConfig {
        refine: false,
        ..ProcessConfig::default()
    };
    let offsets = corpus.config.true_offsets();
    for ((_, frames), spec) in corpus.run(clips, model, &pc).iter().zip(clips) {
        let mut tracker = LaneTracker::default();
        let mut smoother = Smoother::new(pc.kernel.clone());
        for f in frames {
            assert!(f.detections.is_empty());
            assert_eq!(f.refined, f.raw);
            let frame = render_quantized(&corpus.config, spec, f.frame_idx);
            let expected = frame_front_end(&frame, &offsets, &pc, &mut tracker)
                .unwrap()
                .map(|(_, _, feature)| smoother.push(model.predict_proba(&feature).unwrap()));
            assert_eq!(f.smoothed, expected);
        }
    }
}

#[test]
fn frames_without_lanes_are_unpositioned() {
    let (corpus, model) = trained();
    let blank = GrayFrame::filled(corpus.config.width, corpus.config.height, 0.3).unwrap();
    let frames = (0..5).map(|i| Ok((i, blank.clone())));
    let out = process_clip(
        "blank",
        frames,
        model,
        &corpus.config.true_offsets(),
        None,
        &ProcessConfig::default(),
    )
    .unwrap();
    assert_eq!(out.len(), 5);
    let preds = to_predictions(&[("blank".to_string(), out)], &ProcessConfig::default());
    assert!(preds.iter().all(|p| p.label.is_none()));
    assert!(format_predictions(&preds).lines().all(|l| l.ends_with(" 0 0")));
    let labels = [("blank".to_string(), LabelVector::new(4, 2).unwrap())].into();
    let report = evaluate(&preds, &labels).unwrap();
    assert_eq!(report.unpositioned[1], 5);
    assert_eq!(report.overall(), 0.0);
}

/// A lane model carries over a short run of unusable frames.
#[test]
fn short_dropouts_reuse_the_last_lane_model() {
    let (corpus, model) = trained();
    let spec = &corpus.specs[0];
    let cfg = &corpus.config;
    let blank = GrayFrame::filled(cfg.width, cfg.height, 0.3).unwrap();
    let pc = ProcessConfig {
        fallback_frames: 2,
        ..ProcessConfig::default()
    };
    let frames = (0..6).map(|i| {
        let frame = if i == 0 { render_quantized(cfg, spec, 0) } else { blank.clone() };
        Ok((i, frame))
    });
    let out = process_clip(&spec.clip_id, frames, model, &cfg.true_offsets(), None, &pc).unwrap();
    let reused: Vec<_> = out.iter().map(|f| (f.raw.is_some(), f.reused_model)).collect();
    assert_eq!(
        reused,
        vec![(true, false), (true, true), (true, true), (false, false), (false, false), (false, false)]
    );
}

fn run_on_disk(root: &std::path::Path) -> String {
    let config = SynthConfig {
        clips: 16,
        frames: 12,
        seed: 21,
        ..SynthConfig::default()
    };
    synth_corpus(&config, root).unwrap();
    let labels = read_labels(root.join("labels.csv")).unwrap();
    let split = read_split(root.join("split.txt")).unwrap();
    let pc = ProcessConfig::default();
    let offsets = config.true_offsets();
    let rows = extract_features(root, &split.train, &labels, &offsets, &pc).unwrap();
    let model = train(&rows, ModelKind::Forest, &Default::default(), &Default::default()).unwrap();
    let results = predict_clips(root, &split.test, &model, &offsets, None, &pc).unwrap();
    format_predictions(&to_predictions(&results, &pc))
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let outputs: Vec<String> = [1, 3]
        .into_iter()
        .map(|threads| {
            let dir = tempfile::tempdir().unwrap();
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_on_disk(dir.path()))
        })
        .collect();
    assert!(!outputs[0].is_empty());
    assert_eq!(outputs[0], outputs[1]);
}
