//! Monte-Carlo estimators of the diffusion language model score.
//!
//! Sample `k` of a hypothesis draws from the generator derived from
//! `(cfg.seed, k)`, so each sample is reproducible in isolation.

use rand::Rng;

use super::{EstimatorConfig, EstimatorKind};
use crate::denoiser::{Denoiser, DenoiserOutput};
use crate::error::{Error, Result};
use crate::numeric::mean_var;
use crate::schedule::{apply_mask, usdm_corrupt, NoiseSchedule};
use crate::seed::derived_rng;

/// A Monte-Carlo score with its estimated standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub score: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Dispatches on `cfg.kind`.
pub fn score(hyp: &[usize], cfg: &EstimatorConfig, d: &dyn Denoiser, sched: NoiseSchedule) -> Result<Estimate> {
    match cfg.kind {
        EstimatorKind::Usdm => usdm_score(hyp, cfg, d, sched),
        _ => mdlm_score(hyp, cfg, d, sched),
    }
}

fn check_inputs(hyp: &[usize], cfg: &EstimatorConfig, d: &dyn Denoiser) -> Result<()> {
    cfg.validate()?;
    if hyp.is_empty() {
        return Err(Error::invalid("rescorer", "cannot score an empty hypothesis"));
    }
    crate::vocab::check_ids(hyp, d.vocab_size())
}

/// Bernoulli(`p`) mask over `len` positions, redrawn until non-empty.
pub(crate) fn draw_nonempty_mask<R: Rng + ?Sized>(len: usize, p: f64, rng: &mut R) -> Vec<bool> {
    loop {
        let mask: Vec<bool> = (0..len).map(|_| rng.gen::<f64>() < p).collect();
        if mask.iter().any(|&m| m) {
            return mask;
        }
    }
}

/// A Bernoulli(`p`) mask and its complement.
pub fn draw_coupled_masks<R: Rng + ?Sized>(len: usize, p: f64, rng: &mut R) -> (Vec<bool>, Vec<bool>) {
    let first: Vec<bool> = (0..len).map(|_| rng.gen::<f64>() < p).collect();
    let second = first.iter().map(|m| !m).collect();
    (first, second)
}

/// Sum of `log P(hyp_j | z)` over masked positions and the mask count.
/// An empty mask contributes `(0, 0)` without querying the denoiser.
pub(crate) fn masked_log_likelihood(
    hyp: &[usize],
    mask: &[bool],
    t: f64,
    d: &dyn Denoiser,
) -> Result<(f64, usize)> {
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Ok((0.0, 0));
    }
    let z = apply_mask(hyp, mask, d.vocab_size());
    let out = d.denoise(&z, t)?;
    Ok((masked_sum(&out, hyp, mask), count))
}

fn masked_sum(out: &DenoiserOutput, hyp: &[usize], mask: &[bool]) -> f64 {
    hyp.iter()
        .zip(mask)
        .enumerate()
        .filter(|(_, (_, &m))| m)
        .map(|(j, (&v, _))| out.log_prob(j, v))
        .sum()
}

fn mean_estimate(stats: &[f64]) -> Estimate {
    let (mean, var) = mean_var(stats);
    Estimate {
        score: mean,
        std_error: (var / stats.len() as f64).sqrt(),
        samples: stats.len(),
    }
}

/// Ratio estimator `sum(a) / sum(b)` with a delta-method standard error.
fn ratio_estimate(num: &[f64], den: &[f64]) -> Estimate {
    let k = num.len() as f64;
    let ratio = num.iter().sum::<f64>() / den.iter().sum::<f64>();
    let residuals: Vec<f64> = num.iter().zip(den).map(|(a, b)| a - ratio * b).collect();
    let (_, var) = mean_var(&residuals);
    let mean_den = den.iter().sum::<f64>() / k;
    Estimate {
        score: ratio,
        std_error: (var / k).sqrt() / mean_den,
        samples: num.len(),
    }
}

/// Masked diffusion score of `hyp` under the estimator selected by
/// `cfg.kind` (any kind but `usdm`). Masks are drawn at `cfg.t_fixed`;
/// empty masks are redrawn except for the coupled estimator, where the
/// empty half of a pair contributes nothing.
pub fn mdlm_score(hyp: &[usize], cfg: &EstimatorConfig, d: &dyn Denoiser, sched: NoiseSchedule) -> Result<Estimate> {
    check_inputs(hyp, cfg, d)?;
    let t = cfg.t_fixed;
    let p_mask = 1.0 - sched.alpha(t)?;
    let len = hyp.len() as f64;
    let k = cfg.samples;

    match cfg.kind {
        EstimatorKind::Usdm => Err(Error::invalid("rescorer", "usdm is not a masked estimator")),
        EstimatorKind::Coupled => {
            let mut stats = Vec::with_capacity(k);
            for i in 0..k {
                let mut rng = derived_rng(cfg.seed, &[i as u64]);
                let (first, second) = draw_coupled_masks(hyp.len(), p_mask, &mut rng);
                debug_assert!(first.iter().zip(&second).all(|(a, b)| a != b));
                let (a, _) = masked_log_likelihood(hyp, &first, t, d)?;
                let (b, _) = masked_log_likelihood(hyp, &second, t, d)?;
                stats.push((a + b) / len);
            }
            Ok(mean_estimate(&stats))
        }
        kind => {
            let masks: Vec<Vec<bool>> = (0..k)
                .map(|i| draw_nonempty_mask(hyp.len(), p_mask, &mut derived_rng(cfg.seed, &[i as u64])))
                .collect();
            masked_estimate(hyp, kind, &masks, t, d, sched)
        }
    }
}

/// `seq_norm`, `sample_mask` or `global_mask` evaluated on the given
/// masks instead of random ones. Every mask must be non-empty.
pub fn masked_estimate(
    hyp: &[usize],
    kind: EstimatorKind,
    masks: &[Vec<bool>],
    t: f64,
    d: &dyn Denoiser,
    sched: NoiseSchedule,
) -> Result<Estimate> {
    if masks.is_empty() {
        return Err(Error::invalid("rescorer", "no masks given"));
    }
    let len = hyp.len() as f64;
    let mut sums = Vec::with_capacity(masks.len());
    let mut counts = Vec::with_capacity(masks.len());
    for mask in masks {
        if mask.len() != hyp.len() {
            return Err(Error::invalid("rescorer", "mask length differs from hypothesis length"));
        }
        let (sum, count) = masked_log_likelihood(hyp, mask, t, d)?;
        if count == 0 {
            return Err(Error::invalid("rescorer", "empty mask"));
        }
        sums.push(sum);
        counts.push(count as f64);
    }
    match kind {
        EstimatorKind::SeqNorm => {
            let weight = sched.mdlm_weight(t)?;
            let stats: Vec<f64> = sums.iter().map(|s| -weight * s / len).collect();
            Ok(mean_estimate(&stats))
        }
        EstimatorKind::SampleMask => {
            let stats: Vec<f64> = sums.iter().zip(&counts).map(|(s, c)| s / c).collect();
            Ok(mean_estimate(&stats))
        }
        EstimatorKind::GlobalMask => Ok(ratio_estimate(&sums, &counts)),
        other => Err(Error::invalid("rescorer", format!("{} is not a per-mask estimator", other.name()))),
    }
}

/// Uniform-state score: corrupt at `cfg.t_fixed`, then average
/// `log P(hyp_j | z)` over every position.
pub fn usdm_score(hyp: &[usize], cfg: &EstimatorConfig, d: &dyn Denoiser, sched: NoiseSchedule) -> Result<Estimate> {
    check_inputs(hyp, cfg, d)?;
    if cfg.kind != EstimatorKind::Usdm {
        return Err(Error::invalid("rescorer", "usdm_score requires the usdm estimator kind"));
    }
    let t = cfg.t_fixed;
    let len = hyp.len() as f64;
    let mut stats = Vec::with_capacity(cfg.samples);
    for i in 0..cfg.samples {
        let mut rng = derived_rng(cfg.seed, &[i as u64]);
        let z = usdm_corrupt(hyp, t, d.vocab_size(), sched, &mut rng)?;
        let out = d.denoise(&z.ids, t)?;
        let total: f64 = hyp.iter().enumerate().map(|(j, &v)| out.log_prob(j, v)).sum();
        stats.push(total / len);
    }
    Ok(mean_estimate(&stats))
}
