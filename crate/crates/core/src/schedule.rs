//! Noise schedules, forward corruption processes and their closed-form
//! reverse posteriors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::CatDist;
use crate::vocab::mask_id;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSchedule {
    /// `alpha(t) = 1 - t`.
    #[default]
    Linear,
}

impl NoiseSchedule {
    /// Probability that a token survives corruption at level `t`.
    pub fn alpha(&self, t: f64) -> Result<f64> {
        check_level(t)?;
        Ok(match self {
            NoiseSchedule::Linear => 1.0 - t,
        })
    }

    pub fn alpha_prime(&self, t: f64) -> Result<f64> {
        check_level(t)?;
        Ok(match self {
            NoiseSchedule::Linear => -1.0,
        })
    }

    /// The continuous-time MDLM weight `alpha'(t) / (1 - alpha(t))`.
    pub fn mdlm_weight(&self, t: f64) -> Result<f64> {
        let a = self.alpha(t)?;
        Ok(self.alpha_prime(t)? / (1.0 - a))
    }
}

pub(crate) fn check_level(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::LevelOutOfRange(t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionKind {
    Mdlm,
    Usdm,
}

/// A corrupted sequence at noise level `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisySeq {
    pub ids: Vec<usize>,
    pub t: f64,
    /// Masked positions in increasing order; always empty for USDM.
    pub masked: Vec<usize>,
}

/// Replaces each position by the mask with probability `1 - alpha(t)`.
pub fn mdlm_corrupt<R: Rng + ?Sized>(
    clean: &[usize],
    t: f64,
    vocab_size: usize,
    sched: NoiseSchedule,
    rng: &mut R,
) -> Result<NoisySeq> {
    let keep = sched.alpha(t)?;
    let mask = mask_id(vocab_size);
    let mut ids = clean.to_vec();
    let mut masked = Vec::new();
    for (j, id) in ids.iter_mut().enumerate() {
        if rng.gen::<f64>() >= keep {
            *id = mask;
            masked.push(j);
        }
    }
    Ok(NoisySeq { ids, t, masked })
}

/// Masks exactly the positions flagged in `mask`.
pub fn apply_mask(clean: &[usize], mask: &[bool], vocab_size: usize) -> Vec<usize> {
    clean
        .iter()
        .zip(mask)
        .map(|(&id, &m)| if m { mask_id(vocab_size) } else { id })
        .collect()
}

/// Keeps each position with probability `alpha(t)`, otherwise redraws it
/// uniformly from the vocabulary (possibly drawing the clean token again).
pub fn usdm_corrupt<R: Rng + ?Sized>(
    clean: &[usize],
    t: f64,
    vocab_size: usize,
    sched: NoiseSchedule,
    rng: &mut R,
) -> Result<NoisySeq> {
    let keep = sched.alpha(t)?;
    let ids = clean
        .iter()
        .map(|&id| {
            if rng.gen::<f64>() < keep {
                id
            } else {
                rng.gen_range(0..vocab_size)
            }
        })
        .collect();
    Ok(NoisySeq {
        ids,
        t,
        masked: Vec::new(),
    })
}

fn check_pair(s: f64, t: f64) -> Result<()> {
    check_level(s)?;
    check_level(t)?;
    if s >= t {
        return Err(Error::NonIncreasingLevels { s, t });
    }
    Ok(())
}

/// Marginal `q(z_t | w)` of the masked process over `V ∪ {mask}`; the mask
/// state occupies the last slot (index `vocab_size`).
pub fn mdlm_marginal(w: usize, t: f64, vocab_size: usize, sched: NoiseSchedule) -> Result<CatDist> {
    let a = sched.alpha(t)?;
    let mut p = vec![0.0; vocab_size + 1];
    p[w] += a;
    p[vocab_size] += 1.0 - a;
    CatDist::from_probs(&p)
}

/// Reverse posterior `q(z_s | z_t, w)` of the masked process over
/// `V ∪ {mask}` (mask in the last slot). `z_t` is either an ordinary id or
/// the mask id.
pub fn mdlm_posterior(
    z_t: usize,
    w: usize,
    s: f64,
    t: f64,
    vocab_size: usize,
    sched: NoiseSchedule,
) -> Result<CatDist> {
    check_pair(s, t)?;
    let n = vocab_size + 1;
    if z_t != mask_id(vocab_size) {
        if z_t >= vocab_size {
            return Err(Error::IdOutOfRange { id: z_t, size: vocab_size });
        }
        return Ok(CatDist::point_mass(n, z_t));
    }
    let (a_s, a_t) = (sched.alpha(s)?, sched.alpha(t)?);
    let mut p = vec![0.0; n];
    p[vocab_size] = (1.0 - a_s) / (1.0 - a_t);
    p[w] += (a_s - a_t) / (1.0 - a_t);
    CatDist::from_probs(&p)
}

/// Marginal `q(z_t | w) = alpha_t 1_w + (1 - alpha_t) / |V|` of the
/// uniform-state process.
pub fn usdm_marginal(w: usize, t: f64, vocab_size: usize, sched: NoiseSchedule) -> Result<CatDist> {
    let a = sched.alpha(t)?;
    usdm_kernel(w, a, vocab_size)
}

fn usdm_kernel(from: usize, keep: f64, vocab_size: usize) -> Result<CatDist> {
    let base = (1.0 - keep) / vocab_size as f64;
    let mut p = vec![base; vocab_size];
    p[from] += keep;
    CatDist::from_probs(&p)
}

/// Reverse posterior `q(z_s | z_t, w)` of the uniform-state process,
/// proportional to `q(z_t | z_s) q(z_s | w)` where the first factor uses the
/// conditional survival probability `alpha_t / alpha_s`.
pub fn usdm_posterior(
    z_t: usize,
    w: usize,
    s: f64,
    t: f64,
    vocab_size: usize,
    sched: NoiseSchedule,
) -> Result<CatDist> {
    check_pair(s, t)?;
    for id in [z_t, w] {
        if id >= vocab_size {
            return Err(Error::IdOutOfRange { id, size: vocab_size });
        }
    }
    let (a_s, a_t) = (sched.alpha(s)?, sched.alpha(t)?);
    let a_ts = a_t / a_s;
    let n = vocab_size as f64;
    let prior = usdm_kernel(w, a_s, vocab_size)?;
    let weights: Vec<f64> = (0..vocab_size)
        .map(|z_s| {
            let forward = a_ts * f64::from(u8::from(z_s == z_t)) + (1.0 - a_ts) / n;
            forward.ln() + prior.log_prob(z_s)
        })
        .collect();
    CatDist::normalized(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::log_sum_exp;
    use crate::seed::rng_from_seed;

    const S: NoiseSchedule = NoiseSchedule::Linear;

    #[test]
    fn linear_alpha_endpoints() {
        assert_eq!(S.alpha(0.0).unwrap(), 1.0);
        assert_eq!(S.alpha(1.0).unwrap(), 0.0);
        assert_eq!(S.alpha(0.5).unwrap(), 0.5);
        assert!(S.alpha(1.5).is_err());
        assert!(S.alpha(-0.1).is_err());
        assert!(S.alpha_prime(0.3).unwrap() <= 0.0);
        assert_eq!(S.mdlm_weight(0.5).unwrap(), -2.0);
    }

    #[test]
    fn mdlm_corrupt_endpoints() {
        let mut rng = rng_from_seed(1);
        let w = vec![0, 1, 2, 1];
        let z = mdlm_corrupt(&w, 0.0, 3, S, &mut rng).unwrap();
        assert_eq!(z.ids, w);
        assert!(z.masked.is_empty());
        let z = mdlm_corrupt(&w, 1.0, 3, S, &mut rng).unwrap();
        assert!(z.ids.iter().all(|&id| id == mask_id(3)));
        assert_eq!(z.masked, vec![0, 1, 2, 3]);
    }

    #[test]
    fn mdlm_corrupt_mask_rate_concentrates() {
        let mut rng = rng_from_seed(2);
        let w = vec![0; 10_000];
        let z = mdlm_corrupt(&w, 0.5, 2, S, &mut rng).unwrap();
        let frac = z.masked.len() as f64 / 10_000.0;
        assert!((0.48..=0.52).contains(&frac), "{frac}");
        for (j, &id) in z.ids.iter().enumerate() {
            assert_eq!(id == mask_id(2), z.masked.binary_search(&j).is_ok());
        }
    }

    #[test]
    fn usdm_corrupt_is_uniform_at_t1() {
        let mut rng = rng_from_seed(3);
        let z = usdm_corrupt(&vec![0; 40_000], 1.0, 4, S, &mut rng).unwrap();
        for v in 0..4 {
            let f = z.ids.iter().filter(|&&x| x == v).count() as f64 / 40_000.0;
            assert!((f - 0.25).abs() < 0.01, "{v}: {f}");
        }
        let z = usdm_corrupt(&[1, 2, 3], 0.0, 4, S, &mut rng).unwrap();
        assert_eq!(z.ids, vec![1, 2, 3]);
    }

    #[test]
    fn usdm_corrupt_keep_rate() {
        // P(unchanged) = alpha + (1 - alpha) / |V| = 0.5 + 0.25
        let mut rng = rng_from_seed(4);
        let z = usdm_corrupt(&vec![1; 40_000], 0.5, 2, S, &mut rng).unwrap();
        let f = z.ids.iter().filter(|&&x| x == 1).count() as f64 / 40_000.0;
        assert!((f - 0.75).abs() < 0.01, "{f}");
    }

    #[test]
    fn mdlm_posterior_cases() {
        let v = 3;
        let p = mdlm_posterior(1, 1, 0.2, 0.6, v, S).unwrap();
        assert_eq!(p, CatDist::point_mass(v + 1, 1));
        // alpha_s = 0.6, alpha_t = 0.2
        let p = mdlm_posterior(mask_id(v), 2, 0.4, 0.8, v, S).unwrap();
        assert!((p.prob(v) - 0.5).abs() < 1e-12);
        assert!((p.prob(2) - 0.5).abs() < 1e-12);
        assert_eq!(p.prob(0), 0.0);
        let p = mdlm_posterior(mask_id(v), 2, 0.8 - 1e-9, 0.8, v, S).unwrap();
        assert!(p.prob(v) > 1.0 - 1e-8);
        assert!(matches!(
            mdlm_posterior(mask_id(v), 2, 0.5, 0.5, v, S),
            Err(Error::NonIncreasingLevels { .. })
        ));
    }

    /// Brute-force Bayes: enumerate z_s, multiply both forward factors,
    /// normalize.
    fn usdm_posterior_oracle(z_t: usize, w: usize, a_s: f64, a_t: f64, v: usize) -> Vec<f64> {
        let n = v as f64;
        let joint: Vec<f64> = (0..v)
            .map(|z_s| {
                let q_s = if z_s == w { a_s } else { 0.0 } + (1.0 - a_s) / n;
                let r = a_t / a_s;
                let q_t = if z_t == z_s { r } else { 0.0 } + (1.0 - r) / n;
                q_s * q_t
            })
            .collect();
        let z: f64 = joint.iter().sum();
        joint.into_iter().map(|x| x / z).collect()
    }

    #[test]
    fn usdm_posterior_matches_bayes_oracle() {
        // alpha_s = 0.8, alpha_t = 0.4
        let p = usdm_posterior(0, 0, 0.2, 0.6, 2, S).unwrap();
        let oracle = usdm_posterior_oracle(0, 0, 0.8, 0.4, 2);
        for v in 0..2 {
            assert!((p.prob(v) - oracle[v]).abs() < 1e-12);
        }
        // hand value: r = 0.5; z_s = w: 0.9 * 0.75, other: 0.1 * 0.25
        assert!((p.prob(0) - 0.675 / 0.7).abs() < 1e-12);
    }

    #[test]
    fn usdm_posterior_limits() {
        let p = usdm_posterior(2, 1, 0.0, 0.7, 4, S).unwrap();
        assert!((p.prob(1) - 1.0).abs() < 1e-12);
        let t = 0.4;
        let p = usdm_posterior(3, 3, t - 1e-6, t, 5, S).unwrap();
        let oracle = usdm_posterior_oracle(3, 3, 1.0 - (t - 1e-6), 1.0 - t, 5);
        assert!((p.prob(3) - oracle[3]).abs() < 1e-9);
        assert!(p.prob(3) > 1.0 - 1e-5);
    }

    #[test]
    fn posteriors_are_normalized() {
        for s10 in 0..9 {
            for t10 in (s10 + 1)..10 {
                let (s, t) = (s10 as f64 / 10.0, t10 as f64 / 10.0);
                let p = usdm_posterior(1, 2, s, t, 4, S).unwrap();
                assert!(log_sum_exp(p.log_probs()).abs() < 1e-9);
                let p = mdlm_posterior(mask_id(4), 2, s, t, 4, S).unwrap();
                assert!(log_sum_exp(p.log_probs()).abs() < 1e-9);
            }
        }
    }
}
