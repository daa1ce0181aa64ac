//! Temporal fusion of per-frame likelihoods.
//!
//! The last `p + 1` likelihood vectors are combined with exponentially
//! increasing weights `ψ(i) = (1 + rate)^(i − (p + 1))`, so the current frame
//! weighs exactly 1 and older frames fade slowly.

use std::collections::VecDeque;

use crate::classifier::{ClassId, LabelVector, LikelihoodVector, NUM_CLASSES};
use crate::error::{Error, Result};

/// Normalized kernel weights, oldest first; the last entry is exactly 1.
///
/// `initial_value` cancels in the normalization but is still validated.
pub fn kernel_weights(initial_value: f64, rate: f64, p: usize) -> Result<Vec<f64>> {
    if !(initial_value > 0.0 && initial_value.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "kernel initial value must be positive, got {initial_value}"
        )));
    }
    let base = 1.0 + rate;
    if !(rate > 0.0 && rate.is_finite() && base > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "kernel rate must be positive, got {rate}"
        )));
    }
    let mut weights = vec![1.0; p + 1];
    for i in (0..p).rev() {
        weights[i] = weights[i + 1] / base;
    }
    if !weights[0].is_normal() {
        return Err(Error::InvalidParameter(format!(
            "kernel weights underflow for rate {rate} and p {p}"
        )));
    }
    Ok(weights)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingKernel {
    initial_value: f64,
    rate: f64,
    weights: Vec<f64>,
}

impl SmoothingKernel {
    pub fn new(initial_value: f64, rate: f64, p: usize) -> Result<Self> {
        Ok(Self {
            initial_value,
            rate,
            weights: kernel_weights(initial_value, rate, p)?,
        })
    }

    pub fn p(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn initial_value(&self) -> f64 {
        self.initial_value
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// The newest `n` weights, for a buffer still warming up.
    pub fn tail(&self, n: usize) -> &[f64] {
        &self.weights[self.weights.len() - n.min(self.weights.len())..]
    }
}

impl Default for SmoothingKernel {
    fn default() -> Self {
        Self::new(1.0, 0.1, 15).expect("default kernel is valid")
    }
}

/// Ring of the most recent likelihood vectors, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodBuffer {
    capacity: usize,
    frames: VecDeque<LikelihoodVector>,
}

impl LikelihoodBuffer {
    /// Holds up to `p + 1` frames.
    pub fn new(p: usize) -> Self {
        Self {
            capacity: p + 1,
            frames: VecDeque::with_capacity(p + 1),
        }
    }

    pub fn push(&mut self, likelihood: LikelihoodVector) {
        if self.frames.len() == self.capacity {
            self.frames.pop_front();
        }
        self.frames.push_back(likelihood);
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn clear(&mut self) {
        self.frames.clear();
    }

    pub fn iter(&self) -> impl Iterator<Item = &LikelihoodVector> {
        self.frames.iter()
    }
}

fn fuse<'a>(weights: &[f64], rows: impl Iterator<Item = &'a [f64; NUM_CLASSES]>) -> [f64; NUM_CLASSES] {
    let mut fused = [0.0; NUM_CLASSES];
    for (w, row) in weights.iter().zip(rows) {
        for (f, v) in fused.iter_mut().zip(row) {
            *f += w * v;
        }
    }
    fused
}

fn argmax_with_prior(scores: &[f64; NUM_CLASSES], previous: Option<ClassId>) -> ClassId {
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if let Some(prev) = previous {
        if scores[prev.index()] == best {
            return prev;
        }
    }
    ClassId::all()
        .find(|c| scores[c.index()] == best)
        .expect("fused scores are finite")
}

/// Weighted sum of the buffered likelihoods and its argmax. Ties go to
/// `previous` when it is among the maxima, else to the lowest class index.
pub fn smooth_decide(
    buffer: &LikelihoodBuffer,
    kernel: &SmoothingKernel,
    previous: Option<ClassId>,
) -> Result<(LabelVector, [f64; NUM_CLASSES])> {
    if buffer.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    if buffer.len() > kernel.weights.len() {
        return Err(Error::InvalidParameter(format!(
            "buffer holds {} frames but the kernel only {}",
            buffer.len(),
            kernel.weights.len()
        )));
    }
    let fused = fuse(kernel.tail(buffer.len()), buffer.iter().map(|l| l.values()));
    Ok((argmax_with_prior(&fused, previous).label(), fused))
}

/// Per-stream smoothing state: buffer plus the last emitted decision.
#[derive(Debug, Clone)]
pub struct Smoother {
    kernel: SmoothingKernel,
    buffer: LikelihoodBuffer,
    previous: Option<ClassId>,
}

impl Smoother {
    pub fn new(kernel: SmoothingKernel) -> Self {
        let buffer = LikelihoodBuffer::new(kernel.p());
        Self {
            kernel,
            buffer,
            previous: None,
        }
    }

    pub fn push(&mut self, likelihood: LikelihoodVector) -> LabelVector {
        self.buffer.push(likelihood);
        let (label, _) = smooth_decide(&self.buffer, &self.kernel, self.previous)
            .expect("buffer is nonempty and sized to the kernel");
        self.previous = Some(label.class_id());
        label
    }

    pub fn reset(&mut self) {
        self.buffer.clear();
        self.previous = None;
    }
}
