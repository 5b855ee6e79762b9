//! Text formats for posteriors and n-best lists.
//!
//! Posterior: header `CTC-POST 1 <T> <|V|+1> <blank_id>` followed by `T`
//! lines of `|V|+1` log-probabilities. N-best: one line per hypothesis,
//! `<utt_id> <rank> <ctc_logprob> <token ids...>`, ranks starting at 1.

use std::fmt::Write as _;
use std::path::Path;

use super::{CtcPosterior, NBestEntry, NBestList};
use crate::error::{Error, Result};

const MAGIC: &str = "CTC-POST";

pub fn format_posterior(p: &CtcPosterior) -> String {
    let mut out = format!("{MAGIC} 1 {} {} {}\n", p.frames(), p.width(), p.blank());
    for row in p.rows() {
        let cols: Vec<String> = row.iter().map(f64::to_string).collect();
        out.push_str(&cols.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_posterior(text: &str, name: &str) -> Result<CtcPosterior> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::format(name, 1, "missing header"))?
        .split_whitespace()
        .collect();
    let (frames, width, blank) = match header.as_slice() {
        [MAGIC, "1", t, w, b] => {
            let num = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| Error::format(name, 1, format!("bad header field {s:?}")))
            };
            (num(t)?, num(w)?, num(b)?)
        }
        _ => return Err(Error::format(name, 1, format!("expected '{MAGIC} 1 <T> <|V|+1> <blank_id>'"))),
    };
    if blank + 1 != width {
        return Err(Error::format(name, 1, "the blank must occupy the last column"));
    }
    let mut flat = Vec::with_capacity(frames * width);
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::format(name, i + 2, "bad log-probability"))?;
        if row.len() != width {
            return Err(Error::format(name, i + 2, format!("expected {width} columns, found {}", row.len())));
        }
        flat.extend(row);
        rows += 1;
    }
    if rows != frames {
        return Err(Error::format(name, 1, format!("header says {frames} frames, found {rows}")));
    }
    CtcPosterior::new(width, flat)
}

pub fn write_posterior(p: &CtcPosterior, path: &Path) -> Result<()> {
    std::fs::write(path, format_posterior(p)).map_err(|e| Error::io(path, e))
}

pub fn read_posterior(path: &Path) -> Result<CtcPosterior> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_posterior(&text, &path.display().to_string())
}

fn join_ids(ids: &[usize]) -> String {
    let parts: Vec<String> = ids.iter().map(usize::to_string).collect();
    parts.join(" ")
}

pub fn format_nbest(utt_id: &str, list: &NBestList) -> String {
    let mut out = String::new();
    for (rank, e) in list.entries().iter().enumerate() {
        let mut line = format!("{utt_id} {} {}", rank + 1, e.ctc_logprob);
        if !e.hyp.is_empty() {
            let _ = write!(line, " {}", join_ids(&e.hyp));
        }
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Parses one utterance's n-best lines, returning the utterance id and the
/// list. `trailing` columns at the end of each line (e.g. appended scores)
/// are returned separately.
pub fn parse_nbest_with_trailing(
    text: &str,
    name: &str,
    trailing: usize,
) -> Result<(String, NBestList, Vec<Vec<f64>>)> {
    let mut utt = None;
    let mut entries = Vec::new();
    let mut extra = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 3 + trailing {
            return Err(Error::format(name, no, "too few columns"));
        }
        match &utt {
            None => utt = Some(fields[0].to_string()),
            Some(u) if u != fields[0] => {
                return Err(Error::format(name, no, "mixed utterance ids in one n-best file"))
            }
            Some(_) => {}
        }
        let rank: usize = fields[1]
            .parse()
            .map_err(|_| Error::format(name, no, "bad rank"))?;
        if rank != entries.len() + 1 {
            return Err(Error::format(name, no, "ranks must be consecutive from 1"));
        }
        let ctc_logprob: f64 = fields[2]
            .parse()
            .map_err(|_| Error::format(name, no, "bad score"))?;
        let split = fields.len() - trailing;
        let hyp = fields[3..split]
            .iter()
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::format(name, no, "bad token id"))?;
        let tail = fields[split..]
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::format(name, no, "bad trailing score"))?;
        entries.push(NBestEntry { hyp, ctc_logprob });
        extra.push(tail);
    }
    let utt = utt.ok_or_else(|| Error::format(name, 1, "empty n-best file"))?;
    Ok((utt, NBestList::new(entries)?, extra))
}

pub fn parse_nbest(text: &str, name: &str) -> Result<(String, NBestList)> {
    parse_nbest_with_trailing(text, name, 0).map(|(u, l, _)| (u, l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn posterior_text_round_trip(rows in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 4), 1..6)) {
            let p = CtcPosterior::from_probs(&rows).unwrap();
            let back = parse_posterior(&format_posterior(&p), "mem").unwrap();
            prop_assert_eq!(back, p);
        }
    }

    #[test]
    fn nbest_round_trip_with_empty_hypothesis() {
        let list = NBestList::new(vec![
            NBestEntry { hyp: vec![2, 0], ctc_logprob: -0.5 },
            NBestEntry { hyp: vec![], ctc_logprob: -3.25 },
        ])
        .unwrap();
        let text = format_nbest("utt0007", &list);
        assert_eq!(text, "utt0007 1 -0.5 2 0\nutt0007 2 -3.25\n");
        let (utt, back) = parse_nbest(&text, "mem").unwrap();
        assert_eq!(utt, "utt0007");
        assert_eq!(back, list);
    }

    #[test]
    fn posterior_header_is_checked() {
        assert!(parse_posterior("CTC-POST 1 1 3 0\n-1 -1 -1\n", "mem").is_err());
        assert!(parse_posterior("CTC-POST 1 2 3 2\n-1.0986122886681098 -1.0986122886681098 -1.0986122886681098\n", "mem").is_err());
    }
}
