//! Joint CTC and uniform-state diffusion decoding.
//!
//! The greedy CTC output is taken as the state at noise level `t_start`.
//! Each of the `L` steps combines, per position `i`, the blank-free CTC
//! distribution at the first frame `tau[i]` of that token with the
//! denoiser's distribution given the current state, and draws the next
//! state from the softmax of the combination. The last step takes the
//! per-position argmax unless [`FinalRule::Sample`] is selected. The length
//! of the greedy output never changes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ctc::{greedy_collapse, CtcPosterior};
use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::numeric::{argmax, normalize_log, sample_log_weights, weighted};
use crate::rescore::RescoreWeights;
use crate::seed::derived_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalRule {
    #[default]
    Argmax,
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointConfig {
    pub t_start: f64,
    pub steps: usize,
    /// `lambda_prior` is ignored.
    pub weights: RescoreWeights,
    pub seed: u64,
    pub final_rule: FinalRule,
}

impl Default for JointConfig {
    fn default() -> Self {
        Self {
            t_start: 0.3,
            steps: 16,
            weights: RescoreWeights::default(),
            seed: 0,
            final_rule: FinalRule::Argmax,
        }
    }
}

impl JointConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_start > 0.0 && self.t_start <= 1.0) {
            return Err(Error::invalid("joint", format!("t_start = {} outside (0, 1]", self.t_start)));
        }
        if self.steps < 1 {
            return Err(Error::invalid("joint", "L must be at least 1"));
        }
        self.weights.validate()
    }
}

/// Noise levels at which the denoiser is queried:
/// `t_l = t_start * (L - l + 1) / L` for `l = 1..=L`, so the state after
/// the last step sits at `t = 0`.
pub fn noise_grid(t_start: f64, steps: usize) -> Vec<f64> {
    (0..steps)
        .map(|l| t_start * (steps - l) as f64 / steps as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeState {
    pub z: Vec<usize>,
    /// Completed steps.
    pub step: usize,
    /// Noise level of `z`.
    pub t: f64,
    pub tau: Vec<usize>,
}

/// `S_i(v) = l_ctc * log P_ctc(v | frame tau[i]) + l_difflm * log P(v | z, t)`
/// for every position `i` and label `v`. The denoiser is not queried when
/// `lambda_difflm` is zero.
pub fn combined_position_scores(
    p: &CtcPosterior,
    tau: &[usize],
    z: &[usize],
    t: f64,
    d: &dyn Denoiser,
    w: &RescoreWeights,
) -> Result<Vec<Vec<f64>>> {
    if z.len() != tau.len() || z.is_empty() {
        return Err(Error::invalid(
            "joint",
            format!("state length {} does not match alignment length {}", z.len(), tau.len()),
        ));
    }
    if d.vocab_size() != p.vocab_size() {
        return Err(Error::VocabMismatch {
            expected: p.vocab_size(),
            found: d.vocab_size(),
        });
    }
    let lm = if w.lambda_difflm == 0.0 {
        None
    } else {
        Some(d.denoise(z, t)?)
    };
    tau.iter()
        .enumerate()
        .map(|(i, &frame)| {
            let ctc = p.renorm_nonblank(frame)?;
            Ok(ctc
                .log_probs()
                .iter()
                .enumerate()
                .map(|(v, &lp)| {
                    let lm_term = lm.as_ref().map_or(0.0, |o| weighted(w.lambda_difflm, o.log_prob(i, v)));
                    weighted(w.lambda_ctc, lp) + lm_term
                })
                .collect())
        })
        .collect()
}

/// Per-position `softmax(S_i)`, as log-probabilities.
pub fn softmax_rows(scores: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    scores
        .iter()
        .map(|row| {
            let mut r = row.clone();
            let z = normalize_log(&mut r);
            if !z.is_finite() {
                return Err(Error::invalid("joint", "combined scores have no finite entry"));
            }
            Ok(r)
        })
        .collect()
}

/// Draws the next state: independent samples from `softmax(S_i)` on
/// intermediate steps, the argmax (or a sample, per `rule`) on the last.
pub fn denoise_step<R: Rng + ?Sized>(
    state: &DecodeState,
    scores: &[Vec<f64>],
    next_t: f64,
    rng: &mut R,
    is_final: bool,
    rule: FinalRule,
) -> Result<DecodeState> {
    if scores.len() != state.z.len() {
        return Err(Error::invalid("joint", "scores do not match the state length"));
    }
    let probs = softmax_rows(scores)?;
    let z = probs
        .iter()
        .map(|row| {
            if is_final && rule == FinalRule::Argmax {
                argmax(row)
            } else {
                sample_log_weights(row, rng)
            }
        })
        .collect();
    Ok(DecodeState {
        z,
        step: state.step + 1,
        t: next_t,
        tau: state.tau.clone(),
    })
}

/// One recorded denoising step: the level the denoiser was queried at and
/// the state drawn from it.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub step: usize,
    pub t: f64,
    pub z: Vec<usize>,
}

pub fn joint_decode(p: &CtcPosterior, cfg: &JointConfig, d: &dyn Denoiser) -> Result<Vec<usize>> {
    joint_decode_traced(p, cfg, d, None)
}

/// [`joint_decode`] that optionally records every intermediate state.
pub fn joint_decode_traced(
    p: &CtcPosterior,
    cfg: &JointConfig,
    d: &dyn Denoiser,
    mut trace: Option<&mut Vec<TraceStep>>,
) -> Result<Vec<usize>> {
    cfg.validate()?;
    let greedy = greedy_collapse(p);
    if greedy.tokens.is_empty() {
        return Ok(Vec::new());
    }
    let grid = noise_grid(cfg.t_start, cfg.steps);
    let mut state = DecodeState {
        z: greedy.tokens,
        step: 0,
        t: cfg.t_start,
        tau: greedy.tau,
    };
    for (l, &t) in grid.iter().enumerate() {
        let scores = combined_position_scores(p, &state.tau, &state.z, t, d, &cfg.weights)?;
        let next_t = grid.get(l + 1).copied().unwrap_or(0.0);
        let mut rng = derived_rng(cfg.seed, &[l as u64]);
        let is_final = l + 1 == grid.len();
        state = denoise_step(&state, &scores, next_t, &mut rng, is_final, cfg.final_rule)?;
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(TraceStep { step: l + 1, t, z: state.z.clone() });
        }
    }
    Ok(state.z)
}
