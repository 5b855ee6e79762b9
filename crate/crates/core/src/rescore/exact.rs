//! Brute-force expectations of the Monte-Carlo estimators, used as test
//! oracles. Masked kinds enumerate all `2^S` mask patterns; the uniform
//! kind enumerates all `|V|^S` noisy sequences.

use super::estimators::masked_log_likelihood;
use super::EstimatorKind;
use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;

pub const MAX_MASKED_LEN: usize = 12;
pub const MAX_USDM_LEN: usize = 6;
pub const MAX_USDM_VOCAB: usize = 6;

/// The large-`K` limit of the estimator `kind` at noise level `t`.
///
/// For every kind except `global_mask` this is the expectation of the
/// per-sample statistic; `global_mask` pools counts across samples and
/// converges to the ratio of the expected masked log-likelihood sum to the
/// expected mask count. Masked kinds other than `coupled` condition on a
/// non-empty mask, matching the redraw rule of the sampler.
pub fn exact_expected_score(
    hyp: &[usize],
    kind: EstimatorKind,
    t: f64,
    d: &dyn Denoiser,
    sched: NoiseSchedule,
) -> Result<f64> {
    if hyp.is_empty() {
        return Err(Error::invalid("rescorer", "cannot score an empty hypothesis"));
    }
    crate::vocab::check_ids(hyp, d.vocab_size())?;
    let len = hyp.len();
    let alpha = sched.alpha(t)?;
    if kind == EstimatorKind::Usdm {
        return exact_usdm(hyp, t, alpha, d);
    }
    if len > MAX_MASKED_LEN {
        return Err(Error::EnumerationTooLarge(format!(
            "2^{len} mask patterns (limit 2^{MAX_MASKED_LEN})"
        )));
    }
    let p = 1.0 - alpha;
    let patterns = 1usize << len;
    let mut sums = Vec::with_capacity(patterns);
    let mut weights = Vec::with_capacity(patterns);
    for bits in 0..patterns {
        let mask: Vec<bool> = (0..len).map(|j| bits >> j & 1 == 1).collect();
        let count = bits.count_ones() as i32;
        weights.push(p.powi(count) * (1.0 - p).powi(len as i32 - count));
        sums.push(masked_log_likelihood(hyp, &mask, t, d)?);
    }
    let n = len as f64;
    if kind == EstimatorKind::Coupled {
        let full = patterns - 1;
        return Ok((0..patterns)
            .map(|b| weights[b] * (sums[b].0 + sums[full ^ b].0) / n)
            .sum());
    }
    let nonempty = 1.0 - weights[0];
    let expect = |f: &dyn Fn(f64, usize) -> f64| -> f64 {
        (1..patterns)
            .map(|b| weights[b] * f(sums[b].0, sums[b].1))
            .sum::<f64>()
            / nonempty
    };
    Ok(match kind {
        EstimatorKind::SeqNorm => {
            let w = sched.mdlm_weight(t)?;
            expect(&|s, _| -w * s / n)
        }
        EstimatorKind::SampleMask => expect(&|s, c| s / c as f64),
        EstimatorKind::GlobalMask => expect(&|s, _| s) / expect(&|_, c| c as f64),
        EstimatorKind::Coupled | EstimatorKind::Usdm => unreachable!(),
    })
}

fn exact_usdm(hyp: &[usize], t: f64, alpha: f64, d: &dyn Denoiser) -> Result<f64> {
    let v = d.vocab_size();
    let len = hyp.len();
    if len > MAX_USDM_LEN || v > MAX_USDM_VOCAB {
        return Err(Error::EnumerationTooLarge(format!(
            "{v}^{len} noisy sequences (limits: length {MAX_USDM_LEN}, vocabulary {MAX_USDM_VOCAB})"
        )));
    }
    let miss = (1.0 - alpha) / v as f64;
    let hit = alpha + miss;
    let total = v.pow(len as u32);
    let mut z = vec![0usize; len];
    let mut expectation = 0.0;
    for code in 0..total {
        let mut c = code;
        for slot in z.iter_mut() {
            *slot = c % v;
            c /= v;
        }
        let weight: f64 = z
            .iter()
            .zip(hyp)
            .map(|(a, b)| if a == b { hit } else { miss })
            .product();
        if weight == 0.0 {
            continue;
        }
        let out = d.denoise(&z, t)?;
        let stat: f64 = hyp.iter().enumerate().map(|(j, &w)| out.log_prob(j, w)).sum::<f64>() / len as f64;
        expectation += weight * stat;
    }
    Ok(expectation)
}
