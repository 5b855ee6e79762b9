//! Synthetic stand-in for a trained CTC encoder.
//!
//! Every reference token emits `frames_per_token` token frames followed by
//! one blank-dominated separator frame. For each token a confuser is drawn
//! uniformly from the other labels, and with probability `noise` the
//! confuser takes the dominant share of the token frames. On every token
//! frame the dominant label gets `kappa * (1 - blank_mass)`, the other one
//! `(1 - kappa) * (1 - blank_mass)` and the blank `blank_mass`, with the
//! confidence `kappa` drawn per token from `[0.55, 0.95)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::CtcPosterior;
use crate::error::{Error, Result};

/// Probability mass spread over all columns of every frame.
const LEAK: f64 = 1e-4;
const SEPARATOR_BLANK: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub frames_per_token: usize,
    /// Symbol error rate of the greedy output.
    pub noise: f64,
    pub blank_mass: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            frames_per_token: 2,
            noise: 0.15,
            blank_mass: 0.2,
        }
    }
}

pub fn simulate_channel<R: Rng + ?Sized>(
    reference: &[usize],
    vocab_size: usize,
    params: ChannelParams,
    rng: &mut R,
) -> Result<CtcPosterior> {
    if reference.is_empty() {
        return Err(Error::invalid("ctc", "channel needs a non-empty reference"));
    }
    if !(0.0..1.0).contains(&params.noise) || !(0.0..1.0).contains(&params.blank_mass) {
        return Err(Error::invalid("ctc", "noise and blank_mass must lie in [0, 1)"));
    }
    if params.frames_per_token == 0 || vocab_size < 2 {
        return Err(Error::invalid("ctc", "need frames_per_token >= 1 and |V| >= 2"));
    }
    crate::vocab::check_ids(reference, vocab_size)?;
    let width = vocab_size + 1;
    let blank = vocab_size;
    let b = params.blank_mass;
    let mut rows = Vec::with_capacity(reference.len() * (params.frames_per_token + 1));
    for &token in reference {
        let mut confuser = rng.gen_range(0..vocab_size - 1);
        if confuser >= token {
            confuser += 1;
        }
        let flipped = rng.gen::<f64>() < params.noise;
        let kappa = rng.gen_range(0.55..0.95);
        let (winner, loser) = if flipped { (confuser, token) } else { (token, confuser) };
        for _ in 0..params.frames_per_token {
            let mut row = vec![LEAK; width];
            row[winner] += kappa * (1.0 - b);
            row[loser] += (1.0 - kappa) * (1.0 - b);
            row[blank] += b;
            rows.push(row);
        }
        let mut sep = vec![LEAK + (1.0 - SEPARATOR_BLANK) / vocab_size as f64; width];
        sep[blank] = LEAK + SEPARATOR_BLANK;
        rows.push(sep);
    }
    CtcPosterior::from_probs(&rows)
}
