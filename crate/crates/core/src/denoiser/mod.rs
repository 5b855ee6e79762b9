//! The denoising model interface and its back ends.

mod bigram;
mod replay;

pub use bigram::{BigramModel, ExactPosteriorDenoiser, PROB_FLOOR};
pub use replay::{quantize_level, ReplayStore};

use crate::error::{Error, Result};
use crate::numeric::{CatDist, NORM_TOL};

/// Per-position log-distributions over the vocabulary, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserOutput {
    vocab_size: usize,
    log_probs: Vec<f64>,
}

impl DenoiserOutput {
    /// Builds an output from row-major log-probabilities, checking that each
    /// row is normalized.
    pub fn new(vocab_size: usize, log_probs: Vec<f64>) -> Result<Self> {
        if vocab_size == 0 || log_probs.len() % vocab_size != 0 {
            return Err(Error::invalid("denoiser", "ragged denoiser output"));
        }
        let out = Self {
            vocab_size,
            log_probs,
        };
        for j in 0..out.len() {
            let z = crate::numeric::log_sum_exp(out.position(j));
            if !(z.abs() < NORM_TOL) {
                return Err(Error::invalid(
                    "denoiser",
                    format!("position {j} not normalized (log-sum-exp = {z})"),
                ));
            }
        }
        Ok(out)
    }

    pub(crate) fn from_rows_unchecked(vocab_size: usize, log_probs: Vec<f64>) -> Self {
        Self {
            vocab_size,
            log_probs,
        }
    }

    pub fn uniform(len: usize, vocab_size: usize) -> Self {
        Self {
            vocab_size,
            log_probs: vec![-(vocab_size as f64).ln(); len * vocab_size],
        }
    }

    pub fn len(&self) -> usize {
        self.log_probs.len() / self.vocab_size
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn position(&self, j: usize) -> &[f64] {
        &self.log_probs[j * self.vocab_size..(j + 1) * self.vocab_size]
    }

    pub fn log_prob(&self, j: usize, v: usize) -> f64 {
        self.log_probs[j * self.vocab_size + v]
    }

    pub fn dist(&self, j: usize) -> CatDist {
        CatDist::from_log_probs(self.position(j).to_vec())
            .expect("rows are normalized on construction")
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.log_probs.chunks(self.vocab_size)
    }
}

/// A model `w(z_t, t)` mapping a noisy sequence to per-position
/// distributions over clean tokens.
pub trait Denoiser: Send + Sync {
    fn vocab_size(&self) -> usize;

    fn denoise(&self, ids: &[usize], t: f64) -> Result<DenoiserOutput>;
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn denoise(&self, ids: &[usize], t: f64) -> Result<DenoiserOutput> {
        (**self).denoise(ids, t)
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn denoise(&self, ids: &[usize], t: f64) -> Result<DenoiserOutput> {
        (**self).denoise(ids, t)
    }
}

/// Predicts the uniform distribution at every position.
#[derive(Debug, Clone, Copy)]
pub struct UniformDenoiser {
    pub vocab_size: usize,
}

impl Denoiser for UniformDenoiser {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn denoise(&self, ids: &[usize], _t: f64) -> Result<DenoiserOutput> {
        Ok(DenoiserOutput::uniform(ids.len(), self.vocab_size))
    }
}
