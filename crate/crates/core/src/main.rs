use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use lanewise::classifier::{load_model, save_model, Classifier};
use lanewise::detection::format_detections;
use lanewise::image::GrayFrame;
use lanewise::lanemodel::{calibrate_from_annotations, load_annotations, OffsetParams};
use lanewise::pipeline::dataset::{
    format_predictions, frame_path, read_features, read_labels, read_predictions, read_split,
    write_features,
};
use lanewise::pipeline::overlay::render_overlay;
use lanewise::pipeline::run::{clip_frames, extract_features, train, to_predictions, ModelKind};
use lanewise::pipeline::synth::synth_corpus;
use lanewise::pipeline::{evaluate, process_clip, FrameResult, RunConfig};
use lanewise::{Error, Result};

#[derive(Parser)]
#[command(name = "lanewise", version, about = "Lane counting and host-lane positioning from road frames")]
struct Cli {
    /// `section.key=value` settings file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl From<Switch> for bool {
    fn from(s: Switch) -> bool {
        matches!(s, Switch::On)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Partition {
    Train,
    Test,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit marker offsets from annotated marker points.
    Calibrate {
        /// Lines of `marker_index y x`.
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute training features for the clips of a corpus.
    Extract {
        #[arg(long)]
        root: PathBuf,
        /// Defaults to `<root>/labels.csv`.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Defaults to `<root>/split.txt` when present.
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "train")]
        partition: Partition,
        #[arg(long)]
        offsets: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a classifier on extracted features.
    Train {
        #[arg(long)]
        model: String,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Position every frame of one or more clips.
    Predict {
        #[arg(long, required = true)]
        clip: Vec<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        offsets: Option<PathBuf>,
        #[arg(long, value_enum)]
        smooth: Option<Switch>,
        #[arg(long, value_enum)]
        refine: Option<Switch>,
        /// Write annotated PPM frames under `<dir>/<clip_id>/`.
        #[arg(long)]
        overlay: Option<PathBuf>,
        /// Write per-clip detections as `<dir>/<clip_id>.txt`.
        #[arg(long)]
        detections: Option<PathBuf>,
        /// Prediction file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predictions against clip labels.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        labels: PathBuf,
    },
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn offsets_for(flag: Option<PathBuf>, config: &RunConfig) -> Result<OffsetParams> {
    let path = flag.or_else(|| config.offsets.clone()).ok_or_else(|| {
        Error::Config("no lane offsets: pass --offsets or set lane.offsets".into())
    })?;
    OffsetParams::load(path)
}

fn clip_id(dir: &Path) -> Result<String> {
    dir.file_name()
        .and_then(|n| n.to_str())
        .map(str::to_string)
        .ok_or_else(|| Error::InvalidInput(format!("bad clip directory {}", dir.display())))
}

fn write_overlays(
    root: &Path,
    clip_dir: &Path,
    clip: &str,
    frames: &[FrameResult],
    config: &RunConfig,
) -> Result<()> {
    let out = root.join(clip);
    create_dir(&out)?;
    frames.par_iter().try_for_each(|f| {
        let frame = GrayFrame::read_pgm(frame_path(clip_dir, f.frame_idx))?;
        let img = render_overlay(
            &frame,
            f.lane_model.as_ref(),
            f.output(&config.process),
            &f.detections,
        );
        img.write_ppm(out.join(format!("frame_{:05}.ppm", f.frame_idx)))
    })
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Synth { out } => {
            synth_corpus(&config.synth, &out)?;
            eprintln!("wrote {} clips to {}", config.synth.clips, out.display());
        }
        Command::Calibrate { annotations, out } => {
            let offsets = calibrate_from_annotations(&load_annotations(annotations)?)?;
            offsets.save(&out)?;
        }
        Command::Extract {
            root,
            labels,
            split,
            partition,
            offsets,
            out,
        } => {
            let labels = read_labels(labels.unwrap_or_else(|| root.join("labels.csv")))?;
            let split_path = split.or_else(|| {
                let p = root.join("split.txt");
                p.exists().then_some(p)
            });
            let clips: Vec<String> = match (partition, split_path) {
                (Partition::All, _) => labels.keys().cloned().collect(),
                (_, None) => {
                    return Err(Error::Config("--partition needs a split file".into()));
                }
                (Partition::Train, Some(p)) => read_split(p)?.train,
                (Partition::Test, Some(p)) => read_split(p)?.test,
            };
            let offsets = offsets_for(offsets, &config)?;
            let rows = extract_features(&root, &clips, &labels, &offsets, &config.process)?;
            write_features(&rows, &out)?;
            eprintln!("{} feature rows from {} clips", rows.len(), clips.len());
        }
        Command::Train {
            model,
            features,
            out,
        } => {
            let kind: ModelKind = model.parse()?;
            let rows = read_features(features)?;
            let classifier = train(&rows, kind, &config.svm, &config.forest)?;
            save_model(&classifier, &out)?;
        }
        Command::Predict {
            clip,
            model,
            offsets,
            smooth,
            refine,
            overlay,
            detections,
            out,
        } => {
            if let Some(s) = smooth {
                config.process.smooth = s.into();
            }
            if let Some(r) = refine {
                config.process.refine = r.into();
            }
            let classifier: Classifier = load_model(model)?;
            let offsets = offsets_for(offsets, &config)?;
            let ids = clip.iter().map(|d| clip_id(d)).collect::<Result<Vec<_>>>()?;
            let mut seen = BTreeMap::new();
            for (id, dir) in ids.iter().zip(&clip) {
                if let Some(prev) = seen.insert(id, dir) {
                    return Err(Error::InvalidInput(format!(
                        "clip id {id} given twice ({} and {})",
                        prev.display(),
                        dir.display()
                    )));
                }
            }
            let results = clip
                .par_iter()
                .zip(&ids)
                .map(|(dir, id)| {
                    let frames = clip_frames(dir)?;
                    let res =
                        process_clip(id, frames, &classifier, &offsets, None, &config.process)?;
                    Ok((id.clone(), res))
                })
                .collect::<Result<Vec<_>>>()?;

            if let Some(root) = &overlay {
                for ((id, frames), dir) in results.iter().zip(&clip) {
                    write_overlays(root, dir, id, frames, &config)?;
                }
            }
            if let Some(root) = &detections {
                create_dir(root)?;
                for (id, frames) in &results {
                    let text: String = frames
                        .iter()
                        .map(|f| format_detections(f.frame_idx, &f.detections))
                        .collect();
                    write_text(&root.join(format!("{id}.txt")), &text)?;
                }
            }
            let text = format_predictions(&to_predictions(&results, &config.process));
            match out {
                Some(path) => write_text(&path, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Evaluate { pred, labels } => {
            let report = evaluate(&read_predictions(pred)?, &read_labels(labels)?)?;
            print!("{}", report.render());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("lanewise: {msg}");
            ExitCode::FAILURE
        }
    }
}
