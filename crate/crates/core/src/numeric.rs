//! Log-domain helpers and the categorical distribution type.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking that a log-distribution is normalized.
pub const NORM_TOL: f64 = 1e-9;

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = xs.iter().map(|x| (x - max).exp()).sum();
    max + sum.ln()
}

/// `log(exp(a) + exp(b))`.
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `weight * value` with the convention that a zero weight silences the
/// term even when the value is infinite.
pub fn weighted(weight: f64, value: f64) -> f64 {
    if weight == 0.0 {
        0.0
    } else {
        weight * value
    }
}

/// Subtracts the log-normalizer in place and returns it.
pub fn normalize_log(xs: &mut [f64]) -> f64 {
    let z = log_sum_exp(xs);
    if z.is_finite() {
        for x in xs.iter_mut() {
            *x -= z;
        }
    }
    z
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Sample mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// A categorical distribution stored as log-probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatDist {
    log_probs: Vec<f64>,
}

impl CatDist {
    /// Wraps log-probabilities that must already be normalized.
    pub fn from_log_probs(log_probs: Vec<f64>) -> Result<Self> {
        let z = log_sum_exp(&log_probs);
        if log_probs.is_empty() || !(z.abs() < NORM_TOL) || log_probs.iter().any(|x| x.is_nan()) {
            return Err(Error::invalid(
                "numeric",
                format!("distribution not normalized (log-sum-exp = {z})"),
            ));
        }
        Ok(Self { log_probs })
    }

    /// Normalizes arbitrary finite-mass log-weights.
    pub fn normalized(mut log_weights: Vec<f64>) -> Result<Self> {
        let z = normalize_log(&mut log_weights);
        if !z.is_finite() || log_weights.iter().any(|x| x.is_nan()) {
            return Err(Error::invalid(
                "numeric",
                "cannot normalize a distribution with zero or infinite mass",
            ));
        }
        Ok(Self {
            log_probs: log_weights,
        })
    }

    pub fn from_probs(probs: &[f64]) -> Result<Self> {
        Self::normalized(probs.iter().map(|p| p.ln()).collect())
    }

    pub fn uniform(n: usize) -> Self {
        let lp = -(n as f64).ln();
        Self {
            log_probs: vec![lp; n],
        }
    }

    pub fn point_mass(n: usize, at: usize) -> Self {
        let mut log_probs = vec![f64::NEG_INFINITY; n];
        log_probs[at] = 0.0;
        Self { log_probs }
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn log_prob(&self, i: usize) -> f64 {
        self.log_probs[i]
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.log_probs[i].exp()
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|x| x.exp()).collect()
    }

    pub fn into_log_probs(self) -> Vec<f64> {
        self.log_probs
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.log_probs)
    }

    /// Draws an index by inverse-CDF sampling with a single uniform.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_log_weights(&self.log_probs, rng)
    }
}

/// Samples an index proportional to `exp(log_weights)`.
pub fn sample_log_weights<R: rand::Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> usize {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            last = i;
            if u < *w {
                return i;
            }
            u -= w;
        }
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_handles_infinities() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[0.5f64.ln(), 0.25f64.ln(), f64::NEG_INFINITY]);
        assert!((v - 0.75f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn log_add_matches_lse() {
        let (a, b) = (-1.3, -0.2);
        assert!((log_add(a, b) - log_sum_exp(&[a, b])).abs() < 1e-15);
        assert_eq!(log_add(f64::NEG_INFINITY, b), b);
    }

    #[test]
    fn cat_dist_rejects_unnormalized() {
        assert!(CatDist::from_log_probs(vec![0.0, 0.0]).is_err());
        assert!(CatDist::from_log_probs(vec![]).is_err());
        let d = CatDist::from_probs(&[2.0, 2.0]).unwrap();
        assert!((d.prob(0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn weighted_zero_silences_infinity() {
        assert_eq!(weighted(0.0, f64::NEG_INFINITY), 0.0);
        assert_eq!(weighted(2.0, -1.0), -2.0);
    }
}
