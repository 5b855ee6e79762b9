use super::CtcPosterior;
use crate::error::{Error, Result};
use crate::numeric::{log_sum_exp, CatDist};

/// Time-averaged label prior over `V` (blank excluded).
#[derive(Debug, Clone, PartialEq)]
pub struct LabelPrior {
    pub dist: CatDist,
}

impl LabelPrior {
    /// Sum of per-token log-priors over a hypothesis.
    pub fn sequence_log_prob(&self, hyp: &[usize]) -> f64 {
        hyp.iter().map(|&v| self.dist.log_prob(v)).sum()
    }
}

/// Averages the framewise distributions over every frame of every
/// utterance, drops the blank and renormalizes.
pub fn estimate_prior(posteriors: &[CtcPosterior]) -> Result<LabelPrior> {
    let first = posteriors
        .first()
        .ok_or_else(|| Error::invalid("ctc", "prior estimation needs at least one posterior"))?;
    let width = first.width();
    if posteriors.iter().any(|p| p.width() != width) {
        return Err(Error::invalid("ctc", "posteriors disagree on vocabulary size"));
    }
    // log of the per-column probability sums
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); width - 1];
    for p in posteriors {
        for row in p.rows() {
            for (col, &lp) in columns.iter_mut().zip(&row[..width - 1]) {
                col.push(lp);
            }
        }
    }
    let sums: Vec<f64> = columns.iter().map(|c| log_sum_exp(c)).collect();
    Ok(LabelPrior {
        dist: CatDist::normalized(sums)?,
    })
}
