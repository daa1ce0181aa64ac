//! Line-oriented run configuration: `section.key=value`, `#` comments.
//!
//! Every key is optional; missing keys keep their defaults. Unknown keys
//! and out-of-range values are errors.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::process::{ProcessConfig, RefineOrder};
use super::synth::{ClassMix, SynthConfig};
use crate::classifier::{ForestConfig, LabelVector, SvmConfig};
use crate::error::{Error, Result};
use crate::features::FEATURE_DIM;
use crate::lanemodel::{FitMethod, RansacParams};
use crate::smoothing::SmoothingKernel;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub process: ProcessConfig,
    pub svm: SvmConfig,
    pub forest: ForestConfig,
    pub synth: SynthConfig,
    /// Calibrated offsets file; `None` means the caller supplies offsets.
    pub offsets: Option<PathBuf>,
}

/// Values that only make sense together and are assembled after parsing.
struct Pending {
    ransac: RansacParams,
    use_ransac: bool,
    p: usize,
    rate: f64,
    initial: f64,
}

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {raw:?}")))
}

fn checked<T: FromStr + PartialOrd + Display + Copy>(key: &str, raw: &str, lo: T, hi: T) -> Result<T> {
    let v: T = value(key, raw)?;
    if v >= lo && v <= hi {
        Ok(v)
    } else {
        Err(Error::Config(format!("{key}: {v} outside [{lo}, {hi}]")))
    }
}

/// Finite and strictly positive.
fn positive(key: &str, raw: &str) -> Result<f64> {
    let v: f64 = value(key, raw)?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Config(format!("{key}: {v} must be positive and finite")))
    }
}

fn unit(key: &str, raw: &str) -> Result<f64> {
    checked(key, raw, 0.0, 1.0)
}

fn flag(key: &str, raw: &str) -> Result<bool> {
    match raw {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected on/off, found {raw:?}"))),
    }
}

/// `3/4` or a plain decimal.
fn ratio(key: &str, raw: &str) -> Result<f64> {
    let v = match raw.split_once('/') {
        Some((n, d)) => value::<f64>(key, n.trim())? / value::<f64>(key, d.trim())?,
        None => value(key, raw)?,
    };
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Config(format!("{key}: bad ratio {raw:?}")))
    }
}

fn list<T>(key: &str, raw: &str, item: impl Fn(&str, &str) -> Result<T>) -> Result<Vec<T>> {
    let items: Vec<T> = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| item(key, s))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::Config(format!("{key}: empty list")));
    }
    Ok(items)
}

/// Whitespace-separated `t1,t2` pairs.
fn classes(key: &str, raw: &str) -> Result<Vec<LabelVector>> {
    let out: Vec<LabelVector> = raw
        .split_whitespace()
        .map(|pair| {
            let (a, b) = pair
                .split_once(',')
                .ok_or_else(|| Error::Config(format!("{key}: expected t1,t2, found {pair:?}")))?;
            LabelVector::new(value(key, a)?, value(key, b)?)
                .map_err(|e| Error::Config(format!("{key}: {e}")))
        })
        .collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(Error::Config(format!("{key}: no classes")));
    }
    Ok(out)
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut config = Self::default();
        let mut pending = config.pending();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, val) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, n + 1, "expected section.key=value"))?;
            config
                .set(key.trim(), val.trim(), &mut pending)
                .map_err(|e| Error::parse(origin, n + 1, e.to_string()))?;
        }
        config.finish(pending).map_err(|e| Error::parse(origin, 0, e.to_string()))?;
        Ok(config)
    }

    fn pending(&self) -> Pending {
        let kernel = &self.process.kernel;
        let (ransac, use_ransac) = match self.process.lane.fit {
            FitMethod::Ransac(r) => (r, true),
            FitMethod::LeastSquares => (RansacParams::default(), false),
        };
        Pending {
            ransac,
            use_ransac,
            p: kernel.p(),
            rate: kernel.rate(),
            initial: kernel.initial_value(),
        }
    }

    fn set(&mut self, key: &str, raw: &str, pending: &mut Pending) -> Result<()> {
        let pc = &mut self.process;
        match key {
            "filter.radius" => pc.filter.radius = checked(key, raw, 1, 64)?,
            "filter.epsilon" => pc.filter.epsilon = positive(key, raw)?,
            "filter.delta" => pc.filter.delta = checked(key, raw, 1.0, 4.0)?,

            "lane.roi_top" => pc.lane.roi_top = unit(key, raw)?,
            "lane.roi_top_halfwidth" => pc.lane.roi_top_halfwidth = unit(key, raw)?,
            "lane.roi_bottom_halfwidth" => pc.lane.roi_bottom_halfwidth = unit(key, raw)?,
            "lane.band_top" => pc.lane.band_top = checked(key, raw, 0.0, 0.99)?,
            "lane.min_row_span" => pc.lane.min_row_span = unit(key, raw)?,
            "lane.marker_min_area" => pc.lane.filter.min_area = checked(key, raw, 1, usize::MAX)?,
            "lane.marker_max_area" => pc.lane.filter.max_area = checked(key, raw, 1, usize::MAX)?,
            "lane.marker_min_elongation" => {
                pc.lane.filter.min_elongation = checked(key, raw, 1.0, 1e6)?
            }
            "lane.marker_max_tilt" => pc.lane.filter.max_tilt_deg = checked(key, raw, 0.0, 90.0)?,
            "lane.fit" => {
                pending.use_ransac = match raw {
                    "ransac" => true,
                    "lsq" => false,
                    _ => return Err(Error::Config(format!("{key}: expected ransac or lsq"))),
                }
            }
            "lane.ransac_threshold" => pending.ransac.threshold = positive(key, raw)?,
            "lane.ransac_iterations" => {
                pending.ransac.iterations = checked(key, raw, 1, 1_000_000)?
            }
            "lane.ransac_seed" => pending.ransac.seed = value(key, raw)?,
            "lane.offsets" => self.offsets = Some(PathBuf::from(raw)),
            "lane.fallback_frames" => pc.fallback_frames = checked(key, raw, 0, 100_000)?,

            "features.band_halfwidth" => pc.features.band_halfwidth = positive(key, raw)?,
            "features.step" => pc.features.step = checked(key, raw, 1, 1000)?,

            "svm.c" => self.svm.c = positive(key, raw)?,
            "svm.epochs" => self.svm.epochs = checked(key, raw, 1, 100_000)?,
            "svm.seed" => self.svm.seed = value(key, raw)?,
            "svm.folds" => self.svm.folds = checked(key, raw, 2, 100)?,

            "forest.trees" => self.forest.trees = checked(key, raw, 1, 100_000)?,
            "forest.max_depth" => self.forest.max_depth = checked(key, raw, 1, 64)?,
            "forest.min_leaf" => self.forest.min_leaf = checked(key, raw, 1, usize::MAX)?,
            "forest.mtry" => self.forest.mtry = checked(key, raw, 1, FEATURE_DIM)?,
            "forest.seed" => self.forest.seed = value(key, raw)?,

            "smoothing.enabled" => pc.smooth = flag(key, raw)?,
            "smoothing.p" => pending.p = checked(key, raw, 0, 10_000)?,
            "smoothing.rate" => pending.rate = positive(key, raw)?,
            "smoothing.initial" => pending.initial = positive(key, raw)?,

            "detection.stride" => pc.proposals.stride = checked(key, raw, 1, 1024)?,
            "detection.sizes" => {
                pc.proposals.sizes = list(key, raw, |k, s| checked(k, s, 1, 4096))?
            }
            "detection.aspects" => pc.proposals.aspects = list(key, raw, ratio)?,
            "detection.max_size" => pc.proposals.max_size = checked(key, raw, 1, 4096)?,
            "detection.t_lo" => pc.select.t_lo = checked(key, raw, 0.0, 10.0)?,
            "detection.t_hi" => pc.select.t_hi = checked(key, raw, 0.0, 10.0)?,
            "detection.threshold" => pc.detect_threshold = value(key, raw)?,
            "detection.ring" => pc.detector_ring = checked(key, raw, 0.01, 2.0)?,

            "refine.enabled" => pc.refine = flag(key, raw)?,
            "refine.rho" => pc.rho = unit(key, raw)?,
            "refine.order" => {
                pc.refine_order = match raw {
                    "before" => RefineOrder::BeforeSmoothing,
                    "after" => RefineOrder::AfterSmoothing,
                    _ => return Err(Error::Config(format!("{key}: expected before or after"))),
                }
            }

            "eval.corrupt_rate" => pc.corrupt_rate = unit(key, raw)?,
            "eval.corrupt_seed" => pc.corrupt_seed = value(key, raw)?,

            "synth.clips" => self.synth.clips = checked(key, raw, 1, 100_000)?,
            "synth.frames" => self.synth.frames = checked(key, raw, 1, 1_000_000)?,
            "synth.width" => self.synth.width = checked(key, raw, 64, 8192)?,
            "synth.height" => self.synth.height = checked(key, raw, 64, 8192)?,
            "synth.horizon" => self.synth.horizon = checked(key, raw, 0.0, 8192.0)?,
            "synth.lane_px" => self.synth.lane_px = positive(key, raw)?,
            "synth.noise" => self.synth.noise = checked(key, raw, 0.0, 0.49)?,
            "synth.occlusion_rate" => self.synth.occlusion_rate = unit(key, raw)?,
            "synth.erase_outer" => self.synth.erase_outer = flag(key, raw)?,
            "synth.seed" => self.synth.seed = value(key, raw)?,
            "synth.classes" => self.synth.classes = classes(key, raw)?,
            "synth.mix" => {
                self.synth.mix = match raw {
                    "balanced" => ClassMix::Balanced,
                    "skewed" => ClassMix::Skewed,
                    _ => return Err(Error::Config(format!("{key}: expected balanced or skewed"))),
                }
            }
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Builds the composite values and runs cross-field checks.
    fn finish(&mut self, pending: Pending) -> Result<()> {
        let pc = &mut self.process;
        pc.lane.fit = if pending.use_ransac {
            FitMethod::Ransac(pending.ransac)
        } else {
            FitMethod::LeastSquares
        };
        pc.kernel = SmoothingKernel::new(pending.initial, pending.rate, pending.p)?;
        if pc.select.t_lo > pc.select.t_hi {
            return Err(Error::Config("detection.t_lo exceeds detection.t_hi".into()));
        }
        if pc.lane.filter.min_area > pc.lane.filter.max_area {
            return Err(Error::Config("lane.marker_min_area exceeds lane.marker_max_area".into()));
        }
        if !pc.detect_threshold.is_finite() {
            return Err(Error::Config("detection.threshold must be finite".into()));
        }
        pc.filter.validate()?;
        pc.proposals.validate()?;
        self.synth.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(RunConfig::parse("# nothing\n\n", "t").unwrap(), RunConfig::default());
    }

    #[test]
    fn keys_land_in_the_right_fields() {
        let text = "\
filter.radius = 3
smoothing.p=7   # shorter window
smoothing.rate=0.2
refine.enabled=off
refine.order=after
detection.aspects=1/3, 1, 3
lane.fit=lsq
lane.offsets=/tmp/off.txt
synth.classes=4,1 6,4
";
        let c = RunConfig::parse(text, "t").unwrap();
        assert_eq!(c.process.filter.radius, 3);
        assert_eq!(c.process.kernel.p(), 7);
        assert_eq!(c.process.kernel.rate(), 0.2);
        assert!(!c.process.refine);
        assert_eq!(c.process.refine_order, RefineOrder::AfterSmoothing);
        assert_eq!(c.process.proposals.aspects, vec![1.0 / 3.0, 1.0, 3.0]);
        assert_eq!(c.process.lane.fit, FitMethod::LeastSquares);
        assert_eq!(c.offsets, Some(PathBuf::from("/tmp/off.txt")));
        assert_eq!(
            c.synth.classes,
            vec![LabelVector::new(4, 1).unwrap(), LabelVector::new(6, 4).unwrap()]
        );
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        for bad in [
            "filter.radius=0",
            "filter.epsilon=-1",
            "filter.sigma=2",
            "refine.rho=1.5",
            "smoothing.enabled=maybe",
            "synth.classes=6,3",
            "detection.t_lo=1.2\ndetection.t_hi=1.0",
            "no equals sign",
        ] {
            let err = RunConfig::parse(bad, "cfg").unwrap_err();
            assert!(matches!(err, Error::Parse { .. }), "{bad}: {err}");
        }
    }

    #[test]
    fn error_names_the_line() {
        let err = RunConfig::parse("svm.c=1\n\nsvm.bogus=2\n", "cfg").unwrap_err();
        assert!(err.to_string().starts_with("cfg:3:"), "{err}");
    }
}
