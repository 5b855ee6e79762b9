//! Hypothesis scoring with diffusion language models and the linear
//! combination used to rerank n-best lists.

mod estimators;
mod exact;

pub use estimators::{draw_coupled_masks, masked_estimate, mdlm_score, score, usdm_score, Estimate};
pub use exact::exact_expected_score;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::ctc::{LabelPrior, NBestList};
use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::numeric::weighted;
use crate::schedule::{DiffusionKind, NoiseSchedule};
use crate::seed::derive_seed;

/// Interpolation weights of the combined score
/// `l_ctc * ctc + l_difflm * s_difflm - l_prior * prior`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescoreWeights {
    pub lambda_ctc: f64,
    pub lambda_difflm: f64,
    pub lambda_prior: f64,
}

impl Default for RescoreWeights {
    fn default() -> Self {
        Self {
            lambda_ctc: 1.0,
            lambda_difflm: 0.3,
            lambda_prior: 0.0,
        }
    }
}

impl RescoreWeights {
    pub fn ctc_only() -> Self {
        Self {
            lambda_ctc: 1.0,
            lambda_difflm: 0.0,
            lambda_prior: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.lambda_ctc, self.lambda_difflm, self.lambda_prior]
            .iter()
            .all(|x| x.is_finite())
        {
            Ok(())
        } else {
            Err(Error::invalid("rescorer", "weights must be finite"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Schedule-weighted masked log-likelihood, normalized by length.
    SeqNorm,
    /// Each sample normalized by its own mask count.
    SampleMask,
    /// Masked predictions pooled over all samples.
    GlobalMask,
    /// Pairs of complementary masks.
    Coupled,
    /// Uniform-state corruption; every position contributes.
    Usdm,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] = [
        EstimatorKind::SeqNorm,
        EstimatorKind::SampleMask,
        EstimatorKind::GlobalMask,
        EstimatorKind::Coupled,
        EstimatorKind::Usdm,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::SeqNorm => "seq_norm",
            EstimatorKind::SampleMask => "sample_mask",
            EstimatorKind::GlobalMask => "global_mask",
            EstimatorKind::Coupled => "coupled",
            EstimatorKind::Usdm => "usdm",
        }
    }

    /// Corruption process whose denoiser this estimator queries.
    pub fn diffusion(&self) -> DiffusionKind {
        match self {
            EstimatorKind::Usdm => DiffusionKind::Usdm,
            _ => DiffusionKind::Mdlm,
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid("rescorer", format!("unknown estimator {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    /// Monte-Carlo sample count `K` (mask pairs for the coupled estimator).
    pub samples: usize,
    pub t_fixed: f64,
    pub seed: u64,
    /// Reuse one sample stream for every hypothesis of a list.
    pub share_masks: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            kind: EstimatorKind::SampleMask,
            samples: 16,
            t_fixed: 0.5,
            seed: 0,
            share_masks: false,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples < 1 {
            return Err(Error::invalid("rescorer", "K must be at least 1"));
        }
        if !(self.t_fixed > 0.0 && self.t_fixed < 1.0) {
            return Err(Error::invalid("rescorer", format!("t_fixed = {} outside (0, 1)", self.t_fixed)));
        }
        Ok(())
    }
}

/// `l_ctc * ctc_lp + l_difflm * s_difflm - l_prior * prior_lp`; an
/// inadmissible (`-inf`) CTC score stays `-inf`.
pub fn combine_scores(ctc_lp: f64, s_difflm: f64, prior_lp: f64, w: &RescoreWeights) -> f64 {
    if ctc_lp == f64::NEG_INFINITY && w.lambda_ctc != 0.0 {
        return f64::NEG_INFINITY;
    }
    weighted(w.lambda_ctc, ctc_lp) + weighted(w.lambda_difflm, s_difflm) - weighted(w.lambda_prior, prior_lp)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RescoredEntry {
    pub hyp: Vec<usize>,
    pub ctc_logprob: f64,
    pub s_difflm: f64,
    pub combined: f64,
    /// Zero-based position in the input list.
    pub original_rank: usize,
}

/// Scores every hypothesis and re-sorts by the combined score, breaking ties
/// by original rank. Hypothesis `r` draws its samples from a seed derived
/// from `(cfg.seed, r)`. Empty hypotheses get a language-model score of
/// `-inf`.
pub fn rescore_nbest(
    list: &NBestList,
    cfg: &EstimatorConfig,
    w: &RescoreWeights,
    d: &dyn Denoiser,
    prior: &LabelPrior,
    sched: NoiseSchedule,
) -> Result<Vec<RescoredEntry>> {
    cfg.validate()?;
    w.validate()?;
    if list.is_empty() {
        return Err(Error::invalid("rescorer", "empty n-best list"));
    }
    let mut out = list
        .entries()
        .iter()
        .enumerate()
        .map(|(rank, e)| {
            let s_difflm = if e.hyp.is_empty() {
                f64::NEG_INFINITY
            } else {
                let seed = if cfg.share_masks {
                    cfg.seed
                } else {
                    derive_seed(cfg.seed, &[rank as u64])
                };
                score(&e.hyp, &EstimatorConfig { seed, ..*cfg }, d, sched)?.score
            };
            let prior_lp = prior.sequence_log_prob(&e.hyp);
            Ok(RescoredEntry {
                hyp: e.hyp.clone(),
                ctc_logprob: e.ctc_logprob,
                s_difflm,
                combined: combine_scores(e.ctc_logprob, s_difflm, prior_lp, w),
                original_rank: rank,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| {
        b.combined
            .partial_cmp(&a.combined)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.original_rank.cmp(&b.original_rank))
    });
    Ok(out)
}

/// Rescored n-best lines: the n-best format with `<s_difflm> <combined>`
/// appended, ranks renumbered in the new order.
pub fn format_rescored(utt_id: &str, entries: &[RescoredEntry]) -> String {
    let mut out = String::new();
    for (rank, e) in entries.iter().enumerate() {
        let _ = write!(out, "{utt_id} {} {}", rank + 1, e.ctc_logprob);
        for id in &e.hyp {
            let _ = write!(out, " {id}");
        }
        let _ = writeln!(out, " {} {}", e.s_difflm, e.combined);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctc::NBestEntry;
    use crate::denoiser::UniformDenoiser;
    use crate::numeric::CatDist;

    #[test]
    fn combine_examples() {
        let w = RescoreWeights::ctc_only();
        assert_eq!(combine_scores(-3.5, -1.0, -2.0, &w), -3.5);
        let w = RescoreWeights { lambda_ctc: 1.0, lambda_difflm: 0.3, lambda_prior: 0.5 };
        let got = combine_scores(-3.5, -2.0, -4.0, &w);
        assert!((got - (-3.5 - 0.6 + 2.0)).abs() < 1e-12);
        assert_eq!(combine_scores(f64::NEG_INFINITY, -2.0, -4.0, &w), f64::NEG_INFINITY);
        assert_eq!(RescoreWeights::default().lambda_difflm, 0.3);
    }

    #[test]
    fn config_validation() {
        let ok = EstimatorConfig::default();
        assert!(ok.validate().is_ok());
        assert!(EstimatorConfig { samples: 0, ..ok }.validate().is_err());
        assert!(EstimatorConfig { t_fixed: 1.0, ..ok }.validate().is_err());
        assert!(EstimatorConfig { t_fixed: 0.0, ..ok }.validate().is_err());
        assert_eq!("coupled".parse::<EstimatorKind>().unwrap(), EstimatorKind::Coupled);
        assert!("bogus".parse::<EstimatorKind>().is_err());
    }

    fn list() -> NBestList {
        NBestList::new(vec![
            NBestEntry { hyp: vec![0, 1], ctc_logprob: -1.0 },
            NBestEntry { hyp: vec![1], ctc_logprob: -1.5 },
            NBestEntry { hyp: vec![], ctc_logprob: -2.0 },
            NBestEntry { hyp: vec![1, 1, 0], ctc_logprob: -2.5 },
        ])
        .unwrap()
    }

    #[test]
    fn ctc_only_weights_preserve_order() {
        let prior = LabelPrior { dist: CatDist::from_probs(&[0.9, 0.1]).unwrap() };
        let d = UniformDenoiser { vocab_size: 2 };
        let out = rescore_nbest(
            &list(),
            &EstimatorConfig::default(),
            &RescoreWeights::ctc_only(),
            &d,
            &prior,
            NoiseSchedule::Linear,
        )
        .unwrap();
        let ranks: Vec<usize> = out.iter().map(|e| e.original_rank).collect();
        assert_eq!(ranks, vec![0, 1, 2, 3]);
        assert_eq!(out[2].s_difflm, f64::NEG_INFINITY);
        assert_eq!(out[2].combined, -2.0);
    }

    #[test]
    fn prior_penalizes_by_length() {
        // uniform denoiser: every s_difflm = ln(1/2); subtracting a prior
        // favors hypotheses with more low-prior tokens
        let prior = LabelPrior { dist: CatDist::from_probs(&[0.5, 0.5]).unwrap() };
        let d = UniformDenoiser { vocab_size: 2 };
        let w = RescoreWeights { lambda_ctc: 1.0, lambda_difflm: 0.0, lambda_prior: 1.0 };
        let out = rescore_nbest(&list(), &EstimatorConfig::default(), &w, &d, &prior, NoiseSchedule::Linear)
            .unwrap();
        // combined = ctc + len * ln 2
        let ranks: Vec<usize> = out.iter().map(|e| e.original_rank).collect();
        assert_eq!(ranks, vec![0, 3, 1, 2]);
    }

    #[test]
    fn rescored_format() {
        let e = RescoredEntry { hyp: vec![3, 1], ctc_logprob: -1.5, s_difflm: -0.25, combined: -1.575, original_rank: 0 };
        assert_eq!(format_rescored("u1", &[e]), "u1 1 -1.5 3 1 -0.25 -1.575\n");
    }
}
