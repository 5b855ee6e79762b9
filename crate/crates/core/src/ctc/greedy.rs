use super::CtcPosterior;
use crate::numeric::argmax;

/// Collapsed greedy output together with the first frame of each token.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AlignedGreedy {
    pub tokens: Vec<usize>,
    pub tau: Vec<usize>,
}

/// Per-frame argmax, merge repeats, drop blanks. `tau[i]` is the first frame
/// of the run that produced token `i`.
pub fn greedy_collapse(p: &CtcPosterior) -> AlignedGreedy {
    let blank = p.blank();
    let mut out = AlignedGreedy::default();
    let mut prev = blank;
    for (t, row) in p.rows().enumerate() {
        let best = argmax(row);
        if best != blank && best != prev {
            out.tokens.push(best);
            out.tau.push(t);
        }
        prev = best;
    }
    out
}
