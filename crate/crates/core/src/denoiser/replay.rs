//! Replay back end: serves per-position log-distributions recorded from an
//! external model.
//!
//! File layout:
//!
//! ```text
//! DIFFLM-REPLAY 1 <|V|>
//! KEY <t> <id id ...>
//! <|V| log-probabilities for position 0>
//! ...
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{Denoiser, DenoiserOutput};
use crate::error::{Error, Result};
use crate::numeric::log_sum_exp;

const MAGIC: &str = "DIFFLM-REPLAY";
const RENORM_TOL: f64 = 1e-6;

/// Noise levels are keyed at four decimal places.
pub fn quantize_level(t: f64) -> i64 {
    (t * 10_000.0).round() as i64
}

#[derive(Debug, Clone, Default)]
pub struct ReplayStore {
    vocab_size: usize,
    entries: HashMap<(Vec<usize>, i64), Vec<f64>>,
}

impl ReplayStore {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            entries: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Records rows for `(ids, t)`; rows must have `|V|` columns.
    pub fn insert(&mut self, ids: Vec<usize>, t: f64, rows: &[Vec<f64>]) -> Result<()> {
        if rows.len() != ids.len() {
            return Err(Error::invalid("denoiser", "one replay row per position required"));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != self.vocab_size) {
            return Err(Error::VocabMismatch {
                expected: self.vocab_size,
                found: r.len(),
            });
        }
        self.entries.insert((ids, quantize_level(t)), rows.concat());
        Ok(())
    }

    pub fn parse(text: &str, name: &str, expected_vocab: Option<usize>) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::format(name, 1, "missing header"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let vocab_size = match fields.as_slice() {
            [MAGIC, "1", v] => v
                .parse::<usize>()
                .map_err(|_| Error::format(name, 1, "bad vocabulary size"))?,
            _ => return Err(Error::format(name, 1, format!("expected '{MAGIC} 1 <|V|>'"))),
        };
        if let Some(expected) = expected_vocab {
            if expected != vocab_size {
                return Err(Error::VocabMismatch {
                    expected,
                    found: vocab_size,
                });
            }
        }
        let mut store = Self::new(vocab_size);
        let mut pending: Option<(Vec<usize>, f64, Vec<Vec<f64>>, usize)> = None;
        for (no, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("KEY") {
                if let Some((ids, t, rows, at)) = pending.take() {
                    if rows.len() != ids.len() {
                        return Err(Error::format(name, at, "record has too few rows"));
                    }
                    store.insert(ids, t, &rows)?;
                }
                let mut it = rest.split_whitespace();
                let t: f64 = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::format(name, no, "bad noise level"))?;
                let ids = it
                    .map(str::parse)
                    .collect::<std::result::Result<Vec<usize>, _>>()
                    .map_err(|_| Error::format(name, no, "bad token id"))?;
                pending = Some((ids, t, Vec::new(), no));
                continue;
            }
            let Some((ids, _, rows, _)) = pending.as_mut() else {
                return Err(Error::format(name, no, "row outside a KEY record"));
            };
            let row = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|_| Error::format(name, no, "bad log-probability"))?;
            if row.len() != vocab_size {
                return Err(Error::VocabMismatch {
                    expected: vocab_size,
                    found: row.len(),
                });
            }
            if rows.len() == ids.len() {
                return Err(Error::format(name, no, "record has too many rows"));
            }
            rows.push(row);
        }
        if let Some((ids, t, rows, at)) = pending {
            if rows.len() != ids.len() {
                return Err(Error::format(name, at, "record has too few rows"));
            }
            store.insert(ids, t, &rows)?;
        }
        Ok(store)
    }

    pub fn load(path: &Path, expected_vocab: Option<usize>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string(), expected_vocab)
    }

    /// Serializes entries in a stable order.
    pub fn to_text(&self) -> String {
        let mut keys: Vec<&(Vec<usize>, i64)> = self.entries.keys().collect();
        keys.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        let mut out = format!("{MAGIC} 1 {}\n", self.vocab_size);
        for key in keys {
            let ids: Vec<String> = key.0.iter().map(usize::to_string).collect();
            let _ = writeln!(out, "KEY {:.4} {}", key.1 as f64 / 10_000.0, ids.join(" "));
            for row in self.entries[key].chunks(self.vocab_size) {
                let cols: Vec<String> = row.iter().map(f64::to_string).collect();
                out.push_str(&cols.join(" "));
                out.push('\n');
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Returns the stored rows and whether any row had to be renormalized.
    pub fn lookup(&self, ids: &[usize], t: f64) -> Result<(DenoiserOutput, bool)> {
        let rows = self
            .entries
            .get(&(ids.to_vec(), quantize_level(t)))
            .ok_or_else(|| Error::NoReplayEntry {
                t: format!("{t:.4}"),
                ids: ids.to_vec(),
            })?;
        let mut out = rows.clone();
        let mut renormalized = false;
        for row in out.chunks_mut(self.vocab_size) {
            let z = log_sum_exp(row);
            if !z.is_finite() {
                return Err(Error::invalid("denoiser", "replay row has no probability mass"));
            }
            if z.abs() > RENORM_TOL {
                renormalized = true;
                for x in row.iter_mut() {
                    *x -= z;
                }
            }
        }
        Ok((DenoiserOutput::new(self.vocab_size, out)?, renormalized))
    }
}

impl Denoiser for ReplayStore {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn denoise(&self, ids: &[usize], t: f64) -> Result<DenoiserOutput> {
        let (out, renormalized) = self.lookup(ids, t)?;
        if renormalized {
            log::warn!("replay entry for t = {t:.4} renormalized (drift > {RENORM_TOL})");
        }
        Ok(out)
    }
}
