//! Word-level vocabulary with reserved unknown, mask and blank symbols.
//!
//! Ordinary tokens occupy ids `0..size`. The unknown token is an ordinary
//! member of the vocabulary. The CTC blank takes id `size` (the last column
//! of a framewise posterior) and the diffusion mask takes id `size + 1`;
//! neither is ever a corruption target.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";

/// Id of the CTC blank for a vocabulary of `size` ordinary tokens.
pub const fn blank_id(size: usize) -> usize {
    size
}

/// Id of the diffusion mask for a vocabulary of `size` ordinary tokens.
pub const fn mask_id(size: usize) -> usize {
    size + 1
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    unk_id: usize,
}

/// Contents of the JSON sidecar written next to `vocab.txt`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabSidecar {
    pub size: usize,
    pub unk_id: usize,
    pub mask_id: usize,
    pub blank_id: usize,
}

/// A sequence of ordinary token ids.
pub type TokenSeq = Vec<usize>;

impl Vocabulary {
    /// Collects every whitespace token occurring at least `min_count` times,
    /// ordered by descending frequency with lexicographic tie-breaking, and
    /// appends `<unk>`.
    pub fn build<S: AsRef<str>>(corpus: &[S], min_count: usize) -> Result<Self> {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut any = false;
        for line in corpus {
            for word in line.as_ref().split_whitespace() {
                any = true;
                *counts.entry(word).or_default() += 1;
            }
        }
        if !any {
            return Err(Error::EmptyCorpus);
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(w, c)| c >= min_count && w != UNK)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut tokens: Vec<String> = kept.into_iter().map(|(w, _)| w.to_string()).collect();
        tokens.push(UNK.to_string());
        Self::from_tokens(tokens)
    }

    /// Builds a vocabulary from an explicit token list. `<unk>` is appended
    /// when absent.
    pub fn from_tokens(mut tokens: Vec<String>) -> Result<Self> {
        if !tokens.iter().any(|t| t == UNK) {
            tokens.push(UNK.to_string());
        }
        if tokens.len() < 2 {
            return Err(Error::invalid("vocab", "vocabulary needs at least two tokens"));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::invalid("vocab", format!("invalid token {t:?}")));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::invalid("vocab", format!("duplicate token {t:?}")));
            }
        }
        let unk_id = index[UNK];
        Ok(Self {
            tokens,
            index,
            unk_id,
        })
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn unk_id(&self) -> usize {
        self.unk_id
    }

    pub fn mask_id(&self) -> usize {
        mask_id(self.size())
    }

    pub fn blank_id(&self) -> usize {
        blank_id(self.size())
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Result<&str> {
        self.tokens
            .get(id)
            .map(String::as_str)
            .ok_or(Error::IdOutOfRange {
                id,
                size: self.size(),
            })
    }

    pub fn encode(&self, text: &str) -> TokenSeq {
        text.split_whitespace()
            .map(|w| self.id(w).unwrap_or(self.unk_id))
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Result<String> {
        let words = ids
            .iter()
            .map(|&id| self.token(id))
            .collect::<Result<Vec<_>>>()?;
        Ok(words.join(" "))
    }

    pub fn sidecar(&self) -> VocabSidecar {
        VocabSidecar {
            size: self.size(),
            unk_id: self.unk_id,
            mask_id: self.mask_id(),
            blank_id: self.blank_id(),
        }
    }

    /// Serialized `vocab.txt` contents: one token per line.
    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    /// Hex SHA-256 of [`Self::to_text`].
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Writes `vocab.txt` and `vocab.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let txt = dir.join("vocab.txt");
        fs::write(&txt, self.to_text()).map_err(|e| Error::io(&txt, e))?;
        let json = dir.join("vocab.json");
        let body = serde_json::to_string_pretty(&self.sidecar())
            .map_err(|e| Error::Json { path: json.clone(), source: e })?;
        fs::write(&json, body + "\n").map_err(|e| Error::io(&json, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let txt = dir.join("vocab.txt");
        let text = fs::read_to_string(&txt).map_err(|e| Error::io(&txt, e))?;
        let vocab = Self::from_tokens(text.lines().map(str::to_string).collect())?;
        let json = dir.join("vocab.json");
        let body = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
        let sidecar: VocabSidecar =
            serde_json::from_str(&body).map_err(|e| Error::Json { path: json.clone(), source: e })?;
        if sidecar != vocab.sidecar() {
            return Err(Error::invalid(
                "vocab",
                format!("sidecar {} disagrees with vocab.txt", json.display()),
            ));
        }
        Ok(vocab)
    }
}

pub(crate) fn check_ids(ids: &[usize], size: usize) -> Result<()> {
    match ids.iter().find(|&&id| id >= size) {
        Some(&id) => Err(Error::IdOutOfRange { id, size }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &Vocabulary) -> Vec<&str> {
        v.tokens().iter().map(String::as_str).collect()
    }

    #[test]
    fn build_counts_and_appends_unk() {
        let v = Vocabulary::build(&["a b", "a c"], 1).unwrap();
        assert_eq!(names(&v), ["a", "b", "c", UNK]);
        assert_eq!(v.size(), 4);
    }

    #[test]
    fn build_applies_threshold() {
        let v = Vocabulary::build(&["a a a"], 2).unwrap();
        assert_eq!(names(&v), ["a", UNK]);
    }

    #[test]
    fn build_orders_by_frequency_then_lexicographic() {
        let v = Vocabulary::build(&["x y", "x z", "x y"], 2).unwrap();
        assert_eq!(names(&v), ["x", "y", UNK]);
        assert_eq!(v.encode("z"), vec![v.unk_id()]);
        let tie = Vocabulary::build(&["b a", "c"], 1).unwrap();
        assert_eq!(names(&tie), ["a", "b", "c", UNK]);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let err = Vocabulary::build(&["", "   "], 1).unwrap_err();
        assert!(err.to_string().contains("empty corpus"));
        assert!(Vocabulary::build::<&str>(&[], 1).is_err());
    }

    #[test]
    fn encode_decode() {
        let v = Vocabulary::build(&["a b c"], 1).unwrap();
        let (a, b) = (v.id("a").unwrap(), v.id("b").unwrap());
        assert_eq!(v.encode("a b"), vec![a, b]);
        assert!(v.encode("").is_empty());
        assert_eq!(v.encode("a q"), vec![a, v.unk_id()]);
        assert_eq!(v.decode(&[a, b]).unwrap(), "a b");
        assert_eq!(v.decode(&[]).unwrap(), "");
        assert_eq!(v.decode(&[v.unk_id()]).unwrap(), "<unk>");
        assert!(matches!(v.decode(&[99]), Err(Error::IdOutOfRange { id: 99, .. })));
    }

    #[test]
    fn reserved_ids_are_outside_the_vocabulary() {
        let v = Vocabulary::build(&["a b"], 1).unwrap();
        assert!(v.blank_id() >= v.size());
        assert!(v.mask_id() >= v.size());
        assert_ne!(v.blank_id(), v.mask_id());
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let v = Vocabulary::build(&["the cat sat", "the dog"], 1).unwrap();
        v.save(dir.path()).unwrap();
        assert_eq!(Vocabulary::load(dir.path()).unwrap(), v);
    }
}
