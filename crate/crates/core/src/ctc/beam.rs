use std::cmp::Ordering;
use std::collections::BTreeMap;

use super::{ctc_forward_score, CtcPosterior};
use crate::error::{Error, Result};
use crate::numeric::log_add;

#[derive(Debug, Clone, PartialEq)]
pub struct NBestEntry {
    pub hyp: Vec<usize>,
    pub ctc_logprob: f64,
}

/// Hypotheses ranked by descending CTC log-probability.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NBestList {
    entries: Vec<NBestEntry>,
}

/// Descending score, then ascending token ids.
pub(crate) fn rank_order(a: &NBestEntry, b: &NBestEntry) -> Ordering {
    b.ctc_logprob
        .partial_cmp(&a.ctc_logprob)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.hyp.cmp(&b.hyp))
}

impl NBestList {
    /// Validates that entries are sorted, distinct and finite.
    pub fn new(entries: Vec<NBestEntry>) -> Result<Self> {
        if let Some(e) = entries.iter().find(|e| !e.ctc_logprob.is_finite()) {
            return Err(Error::invalid(
                "ctc",
                format!("n-best score {} is not finite", e.ctc_logprob),
            ));
        }
        if entries.windows(2).any(|w| w[0].ctc_logprob < w[1].ctc_logprob) {
            return Err(Error::invalid("ctc", "n-best entries are not sorted"));
        }
        let mut seen: Vec<&Vec<usize>> = entries.iter().map(|e| &e.hyp).collect();
        seen.sort();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("ctc", "n-best hypotheses are not distinct"));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[NBestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn best(&self) -> Option<&NBestEntry> {
        self.entries.first()
    }
}

#[derive(Debug, Clone, Copy)]
struct PrefixScore {
    blank: f64,
    non_blank: f64,
}

impl PrefixScore {
    const ZERO: Self = Self {
        blank: f64::NEG_INFINITY,
        non_blank: f64::NEG_INFINITY,
    };

    fn total(&self) -> f64 {
        log_add(self.blank, self.non_blank)
    }
}

/// CTC prefix beam search keeping `beam` prefixes per frame. Survivors are
/// rescored with the exact forward algorithm and the best `n` returned.
pub fn prefix_beam_nbest(p: &CtcPosterior, beam: usize, n: usize) -> Result<NBestList> {
    if n == 0 || beam < n {
        return Err(Error::invalid("ctc", format!("need beam >= n >= 1 (beam = {beam}, n = {n})")));
    }
    let blank = p.blank();
    let mut beams: BTreeMap<Vec<usize>, PrefixScore> = BTreeMap::new();
    beams.insert(
        Vec::new(),
        PrefixScore {
            blank: 0.0,
            non_blank: f64::NEG_INFINITY,
        },
    );

    for t in 0..p.frames() {
        let frame = p.frame(t);
        let mut next: BTreeMap<Vec<usize>, PrefixScore> = BTreeMap::new();
        for (prefix, score) in &beams {
            let total = score.total();
            let stay = next.entry(prefix.clone()).or_insert(PrefixScore::ZERO);
            stay.blank = log_add(stay.blank, total + frame[blank]);
            let last = prefix.last().copied();
            for (c, &lp) in frame[..blank].iter().enumerate() {
                if lp == f64::NEG_INFINITY {
                    continue;
                }
                let mut extended = prefix.clone();
                extended.push(c);
                if Some(c) == last {
                    let stay = next.get_mut(prefix).expect("inserted above");
                    stay.non_blank = log_add(stay.non_blank, score.non_blank + lp);
                    let ext = next.entry(extended).or_insert(PrefixScore::ZERO);
                    ext.non_blank = log_add(ext.non_blank, score.blank + lp);
                } else {
                    let ext = next.entry(extended).or_insert(PrefixScore::ZERO);
                    ext.non_blank = log_add(ext.non_blank, total + lp);
                }
            }
        }
        let mut ranked: Vec<(Vec<usize>, PrefixScore)> = next
            .into_iter()
            .filter(|(_, s)| s.total() > f64::NEG_INFINITY)
            .collect();
        ranked.sort_by(|a, b| {
            b.1.total()
                .partial_cmp(&a.1.total())
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        });
        ranked.truncate(beam);
        beams = ranked.into_iter().collect();
    }

    let mut entries: Vec<NBestEntry> = beams
        .into_keys()
        .map(|hyp| {
            let ctc_logprob = ctc_forward_score(p, &hyp);
            NBestEntry { hyp, ctc_logprob }
        })
        .filter(|e| e.ctc_logprob.is_finite())
        .collect();
    entries.sort_by(rank_order);
    entries.truncate(n);
    NBestList::new(entries)
}
