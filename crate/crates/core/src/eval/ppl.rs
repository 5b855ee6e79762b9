//! Perplexity upper bounds from Monte-Carlo estimates of the negative ELBO.
//!
//! Masked kind: with the linear schedule, integrating the continuous-time
//! bound over `t` leaves a uniform draw of the mask size `k` in `1..=S`
//! followed by a uniform subset of that size, with per-sample statistic
//! `(S / k) * sum_{j in M} -log P(x_j | z_M)`. The denoiser is queried at
//! `t = k / S`.
//!
//! Uniform-state kind: a discrete-time bound on the grid `t_i = i / N`.
//! Step 1 contributes the reconstruction term `-log P(x | z_{t_1})`; step
//! `i > 1` contributes the per-position KL between the true reverse
//! posterior `q(z_{t_{i-1}} | z_{t_i}, x)` and the model transition
//! `sum_w P(w | z_{t_i}) q(z_{t_{i-1}} | z_{t_i}, w)`. The terminal prior
//! term vanishes because `q(z_1 | x)` is uniform. One uniformly chosen step,
//! scaled by `N`, is evaluated per sample.

use rand::seq::index::sample as sample_indices;
use rand::Rng;

use crate::denoiser::{BigramModel, Denoiser};
use crate::error::{Error, Result};
use crate::numeric::{log_sum_exp, mean_var};
use crate::schedule::{usdm_corrupt, usdm_posterior, DiffusionKind, NoiseSchedule};
use crate::seed::derived_rng;
use crate::vocab::mask_id;

pub const DEFAULT_USDM_GRID: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PplEstimate {
    pub ppl: f64,
    /// Bound on the negative log-likelihood per token (nats).
    pub nll_per_token: f64,
    /// Standard error of `nll_per_token`.
    pub std_error: f64,
    pub tokens: usize,
}

/// Exact per-token perplexity of `corpus` under a bigram chain.
pub fn bigram_perplexity(model: &BigramModel, corpus: &[Vec<usize>]) -> Result<f64> {
    let tokens: usize = corpus.iter().map(Vec::len).sum();
    if tokens == 0 {
        return Err(Error::invalid("eval", "empty corpus"));
    }
    let ll: f64 = corpus.iter().map(|s| model.sequence_log_prob(s)).sum();
    Ok((-ll / tokens as f64).exp())
}

/// Monte-Carlo upper bound on the per-token perplexity of `corpus` with
/// `samples` draws per sentence. Sentence `i`, sample `k` uses the seed
/// derived from `(seed, i, k)`.
pub fn ppl_upper_bound(
    corpus: &[Vec<usize>],
    d: &dyn Denoiser,
    sched: NoiseSchedule,
    kind: DiffusionKind,
    samples: usize,
    grid: usize,
    seed: u64,
) -> Result<PplEstimate> {
    if samples < 1 {
        return Err(Error::invalid("eval", "K must be at least 1"));
    }
    let tokens: usize = corpus.iter().map(Vec::len).sum();
    if tokens == 0 {
        return Err(Error::invalid("eval", "empty corpus"));
    }
    if kind == DiffusionKind::Usdm && grid < 1 {
        return Err(Error::invalid("eval", "grid must have at least one step"));
    }
    let mut total = 0.0;
    let mut variance = 0.0;
    for (i, sentence) in corpus.iter().enumerate() {
        if sentence.is_empty() {
            continue;
        }
        crate::vocab::check_ids(sentence, d.vocab_size())?;
        let stats = (0..samples)
            .map(|k| {
                let mut rng = derived_rng(seed, &[i as u64, k as u64]);
                match kind {
                    DiffusionKind::Mdlm => mdlm_sample(sentence, d, &mut rng),
                    DiffusionKind::Usdm => usdm_sample(sentence, d, sched, grid, &mut rng),
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        let (mean, var) = mean_var(&stats);
        total += mean;
        variance += var / samples as f64;
    }
    let n = tokens as f64;
    let nll_per_token = total / n;
    Ok(PplEstimate {
        ppl: nll_per_token.exp(),
        nll_per_token,
        std_error: variance.sqrt() / n,
        tokens,
    })
}

fn mdlm_sample<R: Rng + ?Sized>(x: &[usize], d: &dyn Denoiser, rng: &mut R) -> Result<f64> {
    let len = x.len();
    let k = rng.gen_range(1..=len);
    let mut z = x.to_vec();
    let masked = sample_indices(rng, len, k).into_vec();
    for &j in &masked {
        z[j] = mask_id(d.vocab_size());
    }
    let out = d.denoise(&z, k as f64 / len as f64)?;
    let nll: f64 = masked.iter().map(|&j| -out.log_prob(j, x[j])).sum();
    Ok(len as f64 / k as f64 * nll)
}

fn usdm_sample<R: Rng + ?Sized>(
    x: &[usize],
    d: &dyn Denoiser,
    sched: NoiseSchedule,
    grid: usize,
    rng: &mut R,
) -> Result<f64> {
    let v = d.vocab_size();
    let step = rng.gen_range(1..=grid);
    let t = step as f64 / grid as f64;
    let z = usdm_corrupt(x, t, v, sched, rng)?.ids;
    let out = d.denoise(&z, t)?;
    let term = if step == 1 {
        x.iter().enumerate().map(|(j, &w)| -out.log_prob(j, w)).sum()
    } else {
        let s = (step - 1) as f64 / grid as f64;
        let mut kl = 0.0;
        for (j, (&zt, &w)) in z.iter().zip(x).enumerate() {
            kl += transition_kl(zt, w, s, t, out.position(j), v, sched)?;
        }
        kl
    };
    Ok(grid as f64 * term)
}

/// `KL(q(z_s | z_t, w) || sum_u P(u) q(z_s | z_t, u))` for one position.
fn transition_kl(
    z_t: usize,
    w: usize,
    s: f64,
    t: f64,
    model: &[f64],
    v: usize,
    sched: NoiseSchedule,
) -> Result<f64> {
    let truth = usdm_posterior(z_t, w, s, t, v, sched)?;
    let mut mixture = vec![Vec::with_capacity(v); v];
    for (u, &lp_u) in model.iter().enumerate() {
        let post = usdm_posterior(z_t, u, s, t, v, sched)?;
        for (zs, m) in mixture.iter_mut().enumerate() {
            m.push(lp_u + post.log_prob(zs));
        }
    }
    Ok((0..v)
        .map(|zs| {
            let lq = truth.log_prob(zs);
            if lq == f64::NEG_INFINITY {
                0.0
            } else {
                lq.exp() * (lq - log_sum_exp(&mixture[zs]))
            }
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{ExactPosteriorDenoiser, UniformDenoiser};
    use crate::seed::rng_from_seed;

    const SCHED: NoiseSchedule = NoiseSchedule::Linear;

    #[test]
    fn uniform_denoiser_masked_bound_is_vocab_size() {
        let corpus = vec![vec![0, 1, 2, 3], vec![4, 4], vec![1, 0, 2, 2, 3, 1, 4]];
        let d = UniformDenoiser { vocab_size: 5 };
        let est = ppl_upper_bound(&corpus, &d, SCHED, DiffusionKind::Mdlm, 7, 0, 3).unwrap();
        assert!((est.ppl - 5.0).abs() < 1e-9);
        assert!(est.std_error < 1e-12);
    }

    #[test]
    fn deterministic_sentence_has_unit_perplexity() {
        let sentence = vec![2, 0, 3, 1];
        let model = BigramModel::fit(&vec![sentence.clone(); 10], 4, 1e-12).unwrap();
        let d = ExactPosteriorDenoiser::new(model, DiffusionKind::Mdlm, SCHED);
        let est = ppl_upper_bound(&[sentence], &d, SCHED, DiffusionKind::Mdlm, 64, 0, 1).unwrap();
        assert!((est.ppl - 1.0).abs() < 1e-6, "{}", est.ppl);
    }

    #[test]
    fn bounds_are_above_the_true_perplexity() {
        let mut rng = rng_from_seed(8);
        let train: Vec<Vec<usize>> = (0..200).map(|_| (0..6).map(|_| rng.gen_range(0..4)).collect()).collect();
        let model = BigramModel::fit(&train, 4, 0.5).unwrap();
        let heldout: Vec<Vec<usize>> = (0..40).map(|_| model.sample(5, &mut rng)).collect();
        let exact = bigram_perplexity(&model, &heldout).unwrap().ln();
        for kind in [DiffusionKind::Mdlm, DiffusionKind::Usdm] {
            let d = ExactPosteriorDenoiser::new(model.clone(), kind, SCHED);
            let est = ppl_upper_bound(&heldout, &d, SCHED, kind, 64, 8, 2).unwrap();
            assert!(est.nll_per_token - exact > -3.0 * est.std_error, "{kind:?}: {} vs {exact}", est.nll_per_token);
        }
    }

    #[test]
    fn kl_vanishes_for_a_confident_correct_model() {
        let v = 3;
        let mut model = vec![f64::NEG_INFINITY; v];
        model[1] = 0.0;
        let kl = transition_kl(2, 1, 0.3, 0.6, &model, v, SCHED).unwrap();
        assert!(kl.abs() < 1e-12);
        let uniform = vec![-(3f64).ln(); v];
        assert!(transition_kl(2, 1, 0.3, 0.6, &uniform, v, SCHED).unwrap() > 0.0);
    }

    #[test]
    fn error_paths() {
        let d = UniformDenoiser { vocab_size: 3 };
        assert!(ppl_upper_bound(&[], &d, SCHED, DiffusionKind::Mdlm, 4, 0, 0).is_err());
        assert!(ppl_upper_bound(&[vec![]], &d, SCHED, DiffusionKind::Mdlm, 4, 0, 0).is_err());
        assert!(ppl_upper_bound(&[vec![0]], &d, SCHED, DiffusionKind::Mdlm, 0, 0, 0).is_err());
        assert!(ppl_upper_bound(&[vec![0]], &d, SCHED, DiffusionKind::Usdm, 4, 0, 0).is_err());
    }
}
