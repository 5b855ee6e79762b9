//! The acoustic side: framewise posteriors, greedy decoding, exact
//! alignment-sum scoring, n-best extraction, label priors and a synthetic
//! channel.

mod beam;
mod channel;
mod format;
mod forward;
mod greedy;
mod prior;

pub use beam::{prefix_beam_nbest, NBestEntry, NBestList};
pub use channel::{simulate_channel, ChannelParams};
pub use format::{
    format_nbest, format_posterior, parse_nbest, parse_nbest_with_trailing, parse_posterior,
    read_posterior, write_posterior,
};
pub use forward::ctc_forward_score;
pub use greedy::{greedy_collapse, AlignedGreedy};
pub use prior::{estimate_prior, LabelPrior};

use crate::error::{Error, Result};
use crate::numeric::{log_sum_exp, normalize_log, CatDist, NORM_TOL};

/// A `T x (|V| + 1)` matrix of framewise log-probabilities. The blank
/// occupies the last column.
#[derive(Debug, Clone, PartialEq)]
pub struct CtcPosterior {
    frames: usize,
    width: usize,
    log_probs: Vec<f64>,
}

impl CtcPosterior {
    /// Wraps row-major log-probabilities; every row must be normalized.
    pub fn new(width: usize, log_probs: Vec<f64>) -> Result<Self> {
        if width < 3 {
            return Err(Error::invalid("ctc", "posterior needs at least two labels plus blank"));
        }
        if log_probs.is_empty() || log_probs.len() % width != 0 {
            return Err(Error::invalid("ctc", "posterior must have T >= 1 full rows"));
        }
        let p = Self {
            frames: log_probs.len() / width,
            width,
            log_probs,
        };
        for t in 0..p.frames {
            let row = p.frame(t);
            let z = log_sum_exp(row);
            if !(z.abs() < NORM_TOL) || row.iter().any(|x| x.is_nan() || *x > 0.0) {
                return Err(Error::invalid(
                    "ctc",
                    format!("frame {t} is not a normalized log-distribution (log-sum-exp = {z})"),
                ));
            }
        }
        Ok(p)
    }

    /// Builds a posterior from unnormalized non-negative rows.
    pub fn from_probs(rows: &[Vec<f64>]) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows.len() * width);
        for row in rows {
            if row.len() != width {
                return Err(Error::invalid("ctc", "ragged posterior rows"));
            }
            let mut lp: Vec<f64> = row.iter().map(|p| p.ln()).collect();
            normalize_log(&mut lp);
            flat.extend(lp);
        }
        Self::new(width, flat)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Number of ordinary labels `|V|`.
    pub fn vocab_size(&self) -> usize {
        self.width - 1
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn blank(&self) -> usize {
        self.width - 1
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.log_probs[t * self.width..(t + 1) * self.width]
    }

    pub fn log_prob(&self, t: usize, label: usize) -> f64 {
        self.log_probs[t * self.width + label]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.log_probs.chunks(self.width)
    }

    /// Drops the blank column of `frame` and renormalizes over `V`.
    pub fn renorm_nonblank(&self, frame: usize) -> Result<CatDist> {
        if frame >= self.frames {
            return Err(Error::invalid(
                "ctc",
                format!("frame {frame} out of range for T = {}", self.frames),
            ));
        }
        CatDist::normalized(self.frame(frame)[..self.blank()].to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renorm_nonblank_examples() {
        let p = CtcPosterior::from_probs(&[vec![0.5, 0.25, 0.25]]).unwrap();
        let d = p.renorm_nonblank(0).unwrap();
        assert!((d.prob(0) - 2.0 / 3.0).abs() < 1e-12);
        assert!((d.prob(1) - 1.0 / 3.0).abs() < 1e-12);
        assert!(p.renorm_nonblank(1).is_err());

        let p = CtcPosterior::from_probs(&[vec![0.7, 0.3, 0.0]]).unwrap();
        let d = p.renorm_nonblank(0).unwrap();
        assert!((d.prob(0) - 0.7).abs() < 1e-12);

        let p = CtcPosterior::from_probs(&[vec![1.0; 4]]).unwrap();
        let d = p.renorm_nonblank(0).unwrap();
        for v in 0..3 {
            assert!((d.prob(v) - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_unnormalized_rows() {
        assert!(CtcPosterior::new(3, vec![0.0, 0.0, 0.0]).is_err());
        assert!(CtcPosterior::new(3, vec![]).is_err());
        assert!(CtcPosterior::new(3, vec![-1.0; 4]).is_err());
    }
}
