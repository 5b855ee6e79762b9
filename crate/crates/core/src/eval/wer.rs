use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalPair {
    pub utt_id: String,
    pub reference: Vec<usize>,
    pub hypothesis: Vec<usize>,
}

/// Levenshtein distance (substitutions, insertions and deletions all cost 1).
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=hypothesis.len()).collect();
    let mut cur = vec![0; hypothesis.len() + 1];
    for (i, r) in reference.iter().enumerate() {
        cur[0] = i + 1;
        for (j, h) in hypothesis.iter().enumerate() {
            let sub = prev[j] + usize::from(r != h);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[hypothesis.len()]
}

/// Corpus-level WER in percent: total edits over total reference tokens.
pub fn wer(pairs: &[EvalPair]) -> Result<f64> {
    let words: usize = pairs.iter().map(|p| p.reference.len()).sum();
    if words == 0 {
        return Err(Error::invalid("eval", "WER needs at least one non-empty reference"));
    }
    if let Some(p) = pairs.iter().find(|p| p.utt_id.is_empty()) {
        return Err(Error::invalid("eval", format!("empty utterance id for reference {:?}", p.reference)));
    }
    let edits: usize = pairs
        .iter()
        .map(|p| edit_distance(&p.reference, &p.hypothesis))
        .sum();
    Ok(100.0 * edits as f64 / words as f64)
}
