//! Per-frame likelihood over the eight supported label vectors.

mod forest;
mod io;
mod svm;

pub use forest::{gini, train_forest, ForestConfig, ForestModel, Node, Tree};
pub use io::{load_model, save_model};
pub use svm::{train_svm, LinearSvmModel, SvmConfig};

use crate::error::{Error, Result};
use crate::features::FeatureVector;

pub const NUM_CLASSES: usize = 8;

/// `[θ1, θ2]`: lane count and host lane (leftmost lane = 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelVector {
    pub theta1: u32,
    pub theta2: u32,
}

/// The closed label set, in class-index order.
pub const SUPPORTED: [LabelVector; NUM_CLASSES] = [
    LabelVector::raw(4, 1),
    LabelVector::raw(4, 2),
    LabelVector::raw(4, 3),
    LabelVector::raw(4, 4),
    LabelVector::raw(5, 2),
    LabelVector::raw(5, 3),
    LabelVector::raw(5, 4),
    LabelVector::raw(6, 4),
];

impl LabelVector {
    const fn raw(theta1: u32, theta2: u32) -> Self {
        Self { theta1, theta2 }
    }

    /// Accepts only the eight supported configurations.
    pub fn new(theta1: u32, theta2: u32) -> Result<Self> {
        let label = Self::raw(theta1, theta2);
        if SUPPORTED.contains(&label) {
            Ok(label)
        } else {
            Err(Error::UnsupportedClass { theta1, theta2 })
        }
    }

    pub fn class_id(self) -> ClassId {
        ClassId(
            SUPPORTED
                .iter()
                .position(|l| *l == self)
                .expect("LabelVector is always supported") as u8,
        )
    }
}

impl std::fmt::Display for LabelVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{},{}]", self.theta1, self.theta2)
    }
}

/// Index into [`SUPPORTED`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassId(u8);

impl ClassId {
    pub fn new(index: usize) -> Result<Self> {
        if index < NUM_CLASSES {
            Ok(Self(index as u8))
        } else {
            Err(Error::InvalidInput(format!("class index {index} >= {NUM_CLASSES}")))
        }
    }

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn label(self) -> LabelVector {
        SUPPORTED[self.index()]
    }

    pub fn all() -> impl Iterator<Item = ClassId> {
        (0..NUM_CLASSES as u8).map(ClassId)
    }
}

/// Probability vector over [`SUPPORTED`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodVector([f64; NUM_CLASSES]);

impl LikelihoodVector {
    /// Validates simplex membership within `1e-9`.
    pub fn new(values: [f64; NUM_CLASSES]) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(format!(
                "likelihood has negative or non-finite entries: {values:?}"
            )));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("likelihood sums to {sum}")));
        }
        Ok(Self(values))
    }

    /// Scales nonnegative weights onto the simplex; all-zero input becomes
    /// uniform.
    pub fn normalized(mut values: [f64; NUM_CLASSES]) -> Self {
        for v in values.iter_mut() {
            if !v.is_finite() || *v < 0.0 {
                *v = 0.0;
            }
        }
        let sum: f64 = values.iter().sum();
        if sum > 0.0 {
            for v in values.iter_mut() {
                *v /= sum;
            }
        } else {
            values = [1.0 / NUM_CLASSES as f64; NUM_CLASSES];
        }
        Self(values)
    }

    pub fn one_hot(class: ClassId) -> Self {
        let mut v = [0.0; NUM_CLASSES];
        v[class.index()] = 1.0;
        Self(v)
    }

    pub fn values(&self) -> &[f64; NUM_CLASSES] {
        &self.0
    }

    pub fn get(&self, class: ClassId) -> f64 {
        self.0[class.index()]
    }

    /// Highest-probability class; ties go to the lowest index.
    pub fn argmax(&self) -> ClassId {
        let mut best = 0;
        for i in 1..NUM_CLASSES {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        ClassId(best as u8)
    }
}

/// A trained per-frame likelihood estimator.
#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    Svm(LinearSvmModel),
    Forest(ForestModel),
}

impl Classifier {
    pub fn kind(&self) -> &'static str {
        match self {
            Classifier::Svm(_) => "svm",
            Classifier::Forest(_) => "forest",
        }
    }

    pub fn predict_proba(&self, feature: &FeatureVector) -> Result<LikelihoodVector> {
        match self {
            Classifier::Svm(m) => m.predict_proba(feature),
            Classifier::Forest(m) => m.predict_proba(feature),
        }
    }
}

pub(crate) fn check_training_set(features: &[FeatureVector], labels: &[ClassId]) -> Result<()> {
    if features.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} feature rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let mut present = [false; NUM_CLASSES];
    for l in labels {
        present[l.index()] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::DegenerateData(
            "training data must contain at least two classes".into(),
        ));
    }
    Ok(())
}
