//! Minimal learning core: embeddings, linear heads, softmax/cross-entropy and
//! an adaptive-moment optimizer.

mod encoder;
mod optim;
mod tensor;
mod vocab;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use encoder::{pair_features, pair_features_backward, EncoderParams};
pub use optim::OptState;
pub use tensor::{axpy, dot, Mat};
pub use vocab::{Vocab, PAD, PAD_TOKEN, UNK, UNK_TOKEN};

/// Flat views over every trainable tensor of a model.
///
/// The optimizer, gradient buffers and finite-difference checks all walk
/// parameters through this trait, so the order of the returned slices must
/// be stable.
pub trait Params {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// `self *= factor`, used to average accumulated gradients.
    fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

/// Affine map `W·x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    pub weight: Mat,
    pub bias: Vec<f64>,
}

impl LinearHead {
    pub fn new<R: Rng>(out_dim: usize, in_dim: usize, rng: &mut R) -> Self {
        LinearHead {
            weight: Mat::glorot(out_dim, in_dim, rng),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        LinearHead {
            weight: Mat::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.weight.matvec(x);
        for (yi, bi) in y.iter_mut().zip(&self.bias) {
            *yi += bi;
        }
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &[f64], d_out: &[f64], grad: &mut LinearHead) -> Vec<f64> {
        grad.weight.add_outer(d_out, x);
        axpy(1.0, d_out, &mut grad.bias);
        self.weight.matvec_t(d_out)
    }
}

pub fn logsumexp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy of `logits` against class `gold`; returns the loss and
/// `dL/dlogits`.
pub fn cross_entropy(logits: &[f64], gold: usize) -> (f64, Vec<f64>) {
    let lse = logsumexp(logits);
    let loss = lse - logits[gold];
    let mut grad = softmax(logits);
    grad[gold] -= 1.0;
    (loss, grad)
}
