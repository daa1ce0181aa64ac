//! One-vs-rest linear SVMs with Platt-calibrated outputs.
//!
//! Each binary problem minimizes `λ/2·|w|² + mean(hinge)` with
//! `λ = 1/(C·n)` by Pegasos-style stochastic subgradient steps on
//! standardized features (bias as a constant extra input), averaging the
//! iterates of the final epoch. Sigmoids are fitted per class on 5-fold
//! out-of-fold decision values; the deployed weights come from a fit on all
//! rows and are mapped back to raw feature space.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_training_set, ClassId, LikelihoodVector, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::features::{FeatureVector, FEATURE_DIM};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
    pub folds: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            epochs: 30,
            seed: 17,
            folds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvmModel {
    /// Per class: `FEATURE_DIM` weights.
    pub(super) weights: Vec<Vec<f64>>,
    pub(super) bias: Vec<f64>,
    /// Per class `(A, B)` for `p = 1 / (1 + exp(A·s + B))`. Classes absent
    /// from training carry `B = +inf`, i.e. zero probability.
    pub(super) calibration: Vec<(f64, f64)>,
}

impl LinearSvmModel {
    pub(super) fn from_parts(
        weights: Vec<Vec<f64>>,
        bias: Vec<f64>,
        calibration: Vec<(f64, f64)>,
    ) -> Result<Self> {
        if weights.len() != NUM_CLASSES
            || bias.len() != NUM_CLASSES
            || calibration.len() != NUM_CLASSES
            || weights.iter().any(|w| w.len() != FEATURE_DIM)
        {
            return Err(Error::InvalidInput("malformed SVM model shape".into()));
        }
        if weights.iter().flatten().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite SVM weight".into()));
        }
        Ok(Self {
            weights,
            bias,
            calibration,
        })
    }

    /// Uncalibrated score `w_k·x + b_k` for every class.
    pub fn decision_function(&self, feature: &FeatureVector) -> [f64; NUM_CLASSES] {
        let x = feature.as_slice();
        let mut out = [0.0; NUM_CLASSES];
        for (k, s) in out.iter_mut().enumerate() {
            *s = dot(&self.weights[k], x) + self.bias[k];
        }
        out
    }

    pub fn weights(&self, class: ClassId) -> &[f64] {
        &self.weights[class.index()]
    }

    pub fn predict_proba(&self, feature: &FeatureVector) -> Result<LikelihoodVector> {
        let scores = self.decision_function(feature);
        let mut p = [0.0; NUM_CLASSES];
        for k in 0..NUM_CLASSES {
            let (a, b) = self.calibration[k];
            p[k] = sigmoid_prob(a * scores[k] + b);
        }
        Ok(LikelihoodVector::normalized(p))
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `1 / (1 + exp(z))`, evaluated without overflow.
fn sigmoid_prob(z: f64) -> f64 {
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(features: &[FeatureVector]) -> Self {
        let n = features.len() as f64;
        let mut mean = vec![0.0; FEATURE_DIM];
        for f in features {
            for (m, v) in mean.iter_mut().zip(f.as_slice()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; FEATURE_DIM];
        for f in features {
            for ((s, v), m) in var.iter_mut().zip(f.as_slice()).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    /// Standardized row with a trailing constant 1 for the bias.
    fn transform(&self, f: &FeatureVector) -> Vec<f64> {
        let mut row: Vec<f64> = f
            .as_slice()
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect();
        row.push(1.0);
        row
    }
}

fn pegasos(rows: &[&[f64]], targets: &[f64], lambda: f64, epochs: usize, seed: u64) -> Vec<f64> {
    let dim = rows[0].len();
    let mut w = vec![0.0; dim];
    let mut avg = vec![0.0; dim];
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = 0usize;
    let epochs = epochs.max(1);
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let margin = targets[i] * dot(&w, rows[i]);
            let shrink = 1.0 - 1.0 / t as f64;
            w.iter_mut().for_each(|v| *v *= shrink);
            if margin < 1.0 {
                let g = eta * targets[i];
                for (v, x) in w.iter_mut().zip(rows[i]) {
                    *v += g * x;
                }
            }
            if epoch + 1 == epochs {
                for (a, v) in avg.iter_mut().zip(&w) {
                    *a += v;
                }
            }
        }
    }
    let n = rows.len() as f64;
    avg.iter_mut().for_each(|a| *a /= n);
    avg
}

fn stream_seed(seed: u64, class: usize, fold: usize) -> u64 {
    seed ^ ((class as u64 + 1) << 32) ^ ((fold as u64 + 1) << 48)
}

/// One-vs-rest weight vectors (standardized space, bias last) per class;
/// `None` for classes without positive rows.
fn fit_ovr(
    rows: &[&[f64]],
    labels: &[ClassId],
    config: &SvmConfig,
    fold: usize,
) -> Vec<Option<Vec<f64>>> {
    let lambda = 1.0 / (config.c * rows.len() as f64);
    (0..NUM_CLASSES)
        .map(|k| {
            if !labels.iter().any(|l| l.index() == k) {
                return None;
            }
            let targets: Vec<f64> = labels
                .iter()
                .map(|l| if l.index() == k { 1.0 } else { -1.0 })
                .collect();
            let seed = stream_seed(config.seed, k, fold);
            Some(pegasos(rows, &targets, lambda, config.epochs, seed))
        })
        .collect()
}

/// Weak Gaussian prior on the Platt slope. Without it, near-constant
/// out-of-fold scores let the slope chase fold-to-fold noise.
const PLATT_SLOPE_RIDGE: f64 = 0.1;

/// Platt's sigmoid fit (Newton's method with backtracking, regularized
/// targets), returning `(A, B)`.
pub(super) fn platt_fit(scores: &[f64], positive: &[bool]) -> (f64, f64) {
    let n_pos = positive.iter().filter(|&&p| p).count() as f64;
    let n_neg = positive.len() as f64 - n_pos;
    let hi = (n_pos + 1.0) / (n_pos + 2.0);
    let lo = 1.0 / (n_neg + 2.0);
    let targets: Vec<f64> = positive.iter().map(|&p| if p { hi } else { lo }).collect();

    let objective = |a: f64, b: f64| -> f64 {
        scores
            .iter()
            .zip(&targets)
            .map(|(s, t)| {
                let z = s * a + b;
                if z >= 0.0 {
                    t * z + (-z).exp().ln_1p()
                } else {
                    (t - 1.0) * z + z.exp().ln_1p()
                }
            })
            .sum::<f64>()
            + 0.5 * PLATT_SLOPE_RIDGE * a * a
    };

    let mut a = 0.0;
    let mut b = ((n_neg + 1.0) / (n_pos + 1.0)).ln();
    let mut fval = objective(a, b);
    for _ in 0..100 {
        let (mut h11, mut h22, mut h21) = (PLATT_SLOPE_RIDGE, 1e-12, 0.0);
        let (mut g1, mut g2) = (PLATT_SLOPE_RIDGE * a, 0.0);
        for (s, t) in scores.iter().zip(&targets) {
            let z = s * a + b;
            let (p, q) = if z >= 0.0 {
                let e = (-z).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = z.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += s * s * d2;
            h22 += d2;
            h21 += s * d2;
            let d1 = t - p;
            g1 += s * d1;
            g2 += d1;
        }
        if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < 1e-10 {
            break;
        }
    }
    (a, b)
}

pub fn train_svm(
    features: &[FeatureVector],
    labels: &[ClassId],
    config: &SvmConfig,
) -> Result<LinearSvmModel> {
    check_training_set(features, labels)?;
    if !(config.c > 0.0 && config.c.is_finite()) || config.epochs == 0 || config.folds < 2 {
        return Err(Error::InvalidParameter(format!("bad SVM config {config:?}")));
    }
    let std = Standardizer::fit(features);
    let rows: Vec<Vec<f64>> = features.iter().map(|f| std.transform(f)).collect();
    let n = rows.len();

    // out-of-fold decision values for calibration
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let folds = config.folds.min(n);
    let mut fold_of = vec![0usize; n];
    for (pos, &i) in perm.iter().enumerate() {
        fold_of[i] = pos % folds;
    }
    let mut oof = vec![[0.0; NUM_CLASSES]; n];
    for fold in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
        let held: Vec<usize> = (0..n).filter(|&i| fold_of[i] == fold).collect();
        if train.is_empty() || held.is_empty() {
            continue;
        }
        let tr_rows: Vec<&[f64]> = train.iter().map(|&i| rows[i].as_slice()).collect();
        let tr_labels: Vec<ClassId> = train.iter().map(|&i| labels[i]).collect();
        let ws = fit_ovr(&tr_rows, &tr_labels, config, fold);
        for &i in &held {
            for (k, w) in ws.iter().enumerate() {
                // a class missing from this fold's training rows scores as a
                // confident negative
                oof[i][k] = w.as_ref().map_or(-1.0, |w| dot(w, &rows[i]));
            }
        }
    }

    let all_rows: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let final_ws = fit_ovr(&all_rows, labels, config, folds);

    let mut weights = Vec::with_capacity(NUM_CLASSES);
    let mut bias = Vec::with_capacity(NUM_CLASSES);
    let mut calibration = Vec::with_capacity(NUM_CLASSES);
    for (k, w) in final_ws.into_iter().enumerate() {
        match w {
            Some(w) => {
                let raw: Vec<f64> = w[..FEATURE_DIM]
                    .iter()
                    .zip(&std.scale)
                    .map(|(v, s)| v / s)
                    .collect();
                let b = w[FEATURE_DIM] - dot(&raw, &std.mean);
                weights.push(raw);
                bias.push(b);
                let scores: Vec<f64> = oof.iter().map(|s| s[k]).collect();
                let positive: Vec<bool> = labels.iter().map(|l| l.index() == k).collect();
                calibration.push(platt_fit(&scores, &positive));
            }
            None => {
                weights.push(vec![0.0; FEATURE_DIM]);
                bias.push(0.0);
                calibration.push((0.0, f64::INFINITY));
            }
        }
    }
    LinearSvmModel::from_parts(weights, bias, calibration)
}
