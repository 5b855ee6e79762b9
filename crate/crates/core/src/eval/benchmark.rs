//! Synthetic benchmark: a bigram model fitted on a corpus, sentences
//! sampled from it, and CTC posteriors produced by the synthetic channel.
//!
//! Directory layout: `refs.txt` (`<utt_id> <ids...>`), `heldout.txt` (ids
//! per line), `posteriors/<utt>.post`, `nbest/<utt>.nbest`, `vocab.txt`,
//! `vocab.json`, `bigram.json` and `manifest.json`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ctc::{
    format_nbest, parse_nbest, prefix_beam_nbest, read_posterior, simulate_channel,
    write_posterior, ChannelParams, CtcPosterior, NBestList,
};
use crate::denoiser::BigramModel;
use crate::error::{Error, Result};
use crate::seed::derived_rng;
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkParams {
    pub sentences: usize,
    pub heldout_sentences: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub channel: ChannelParams,
    /// Word types of the synthetic training corpus (used when no corpus is
    /// supplied).
    pub synthetic_words: usize,
    /// Successors per word in the synthetic corpus.
    pub branching: usize,
    pub corpus_lines: usize,
    pub min_count: usize,
    pub smoothing: f64,
}

impl Default for BenchmarkParams {
    fn default() -> Self {
        Self {
            sentences: 500,
            heldout_sentences: 100,
            min_len: 6,
            max_len: 14,
            channel: ChannelParams::default(),
            synthetic_words: 40,
            branching: 3,
            corpus_lines: 2_000,
            min_count: 1,
            smoothing: 0.01,
        }
    }
}

impl BenchmarkParams {
    fn validate(&self) -> Result<()> {
        if self.sentences == 0 || self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::invalid("eval", "need sentences >= 1 and 1 <= min_len <= max_len"));
        }
        if self.branching == 0 || self.synthetic_words < 2 {
            return Err(Error::invalid("eval", "need branching >= 1 and at least two synthetic words"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub reference: Vec<usize>,
    pub posterior: CtcPosterior,
    pub nbest: Option<NBestList>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub seed: u64,
    pub params: BenchmarkParams,
    pub corpus: String,
    pub vocab_size: usize,
    pub vocab_hash: String,
    pub utterances: Vec<String>,
    pub nbest_beam: Option<usize>,
    pub nbest_n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub vocab: Vocabulary,
    pub model: BigramModel,
    pub utterances: Vec<Utterance>,
    pub heldout: Vec<Vec<usize>>,
    pub manifest: Manifest,
}

/// Lines from a random sparse Markov chain over words `w00, w01, ...`.
pub fn synthetic_corpus<R: Rng + ?Sized>(
    words: usize,
    branching: usize,
    lines: usize,
    min_len: usize,
    max_len: usize,
    rng: &mut R,
) -> Vec<String> {
    let branching = branching.min(words);
    let name = |i: usize| format!("w{i:02}");
    let successors: Vec<Vec<(usize, f64)>> = (0..words)
        .map(|_| {
            rand::seq::index::sample(rng, words, branching)
                .into_iter()
                .map(|s| (s, rng.gen_range(0.2..1.0)))
                .collect()
        })
        .collect();
    (0..lines)
        .map(|_| {
            let len = rng.gen_range(min_len..=max_len);
            let mut cur = rng.gen_range(0..words);
            let mut out = vec![name(cur)];
            for _ in 1..len {
                let succ = &successors[cur];
                let total: f64 = succ.iter().map(|s| s.1).sum();
                let mut u = rng.gen::<f64>() * total;
                cur = succ.last().expect("branching >= 1").0;
                for &(s, w) in succ {
                    if u < w {
                        cur = s;
                        break;
                    }
                    u -= w;
                }
                out.push(name(cur));
            }
            out.join(" ")
        })
        .collect()
}

fn utt_name(i: usize) -> String {
    format!("utt{i:04}")
}

/// Builds a benchmark from `corpus` (or a synthetic corpus when `None`).
/// Every random stage draws from a seed derived from `seed`.
pub fn generate_benchmark(corpus: Option<&[String]>, params: &BenchmarkParams, seed: u64) -> Result<Benchmark> {
    params.validate()?;
    let (lines, corpus_label) = match corpus {
        Some(lines) => (lines.to_vec(), "external".to_string()),
        None => {
            let mut rng = derived_rng(seed, &[0]);
            let lines = synthetic_corpus(
                params.synthetic_words,
                params.branching,
                params.corpus_lines,
                params.min_len,
                params.max_len,
                &mut rng,
            );
            (lines, "synthetic".to_string())
        }
    };
    let vocab = Vocabulary::build(&lines, params.min_count)?;
    let encoded: Vec<Vec<usize>> = lines.iter().map(|l| vocab.encode(l)).collect();
    let model = BigramModel::fit(&encoded, vocab.size(), params.smoothing)?;

    let sample_sentence = |path: &[u64]| {
        let mut rng = derived_rng(seed, path);
        let len = rng.gen_range(params.min_len..=params.max_len);
        model.sample(len, &mut rng)
    };
    let utterances = (0..params.sentences)
        .map(|i| {
            let reference = sample_sentence(&[1, i as u64]);
            let mut rng = derived_rng(seed, &[2, i as u64]);
            let posterior = simulate_channel(&reference, vocab.size(), params.channel, &mut rng)?;
            Ok(Utterance {
                id: utt_name(i),
                reference,
                posterior,
                nbest: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let heldout = (0..params.heldout_sentences)
        .map(|i| sample_sentence(&[3, i as u64]))
        .collect();
    let manifest = Manifest {
        format_version: 1,
        seed,
        params: params.clone(),
        corpus: corpus_label,
        vocab_size: vocab.size(),
        vocab_hash: vocab.content_hash(),
        utterances: utterances.iter().map(|u| u.id.clone()).collect(),
        nbest_beam: None,
        nbest_n: None,
    };
    Ok(Benchmark {
        vocab,
        model,
        utterances,
        heldout,
        manifest,
    })
}

fn ids_line(ids: &[usize]) -> String {
    let parts: Vec<String> = ids.iter().map(usize::to_string).collect();
    parts.join(" ")
}

fn parse_ids(s: &str, name: &str, line: usize) -> Result<Vec<usize>> {
    s.split_whitespace()
        .map(|x| x.parse::<usize>().map_err(|_| Error::format(name, line, "bad token id")))
        .collect()
}

/// Parses `<utt_id> <ids...>` lines (references and decode outputs).
pub fn parse_id_lines(text: &str, name: &str) -> Result<Vec<(String, Vec<usize>)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let mut it = l.splitn(2, char::is_whitespace);
            let utt = it.next().unwrap_or_default().to_string();
            let ids = parse_ids(it.next().unwrap_or(""), name, i + 1)?;
            Ok((utt, ids))
        })
        .collect()
}

pub fn format_id_lines<'a>(rows: impl IntoIterator<Item = (&'a str, &'a [usize])>) -> String {
    let mut out = String::new();
    for (utt, ids) in rows {
        if ids.is_empty() {
            let _ = writeln!(out, "{utt}");
        } else {
            let _ = writeln!(out, "{utt} {}", ids_line(ids));
        }
    }
    out
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let body = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    write(path, body + "\n")
}

impl Benchmark {
    /// Extracts an n-best list for every utterance.
    pub fn compute_nbest(&mut self, beam: usize, n: usize) -> Result<()> {
        let lists = self
            .utterances
            .par_iter()
            .map(|u| prefix_beam_nbest(&u.posterior, beam, n))
            .collect::<Result<Vec<_>>>()?;
        for (u, list) in self.utterances.iter_mut().zip(lists) {
            u.nbest = Some(list);
        }
        self.manifest.nbest_beam = Some(beam);
        self.manifest.nbest_n = Some(n);
        Ok(())
    }

    pub fn references(&self) -> Vec<(String, Vec<usize>)> {
        self.utterances
            .iter()
            .map(|u| (u.id.clone(), u.reference.clone()))
            .collect()
    }

    pub fn posteriors(&self) -> Vec<CtcPosterior> {
        self.utterances.iter().map(|u| u.posterior.clone()).collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        for sub in ["posteriors", "nbest"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        self.vocab.save(dir)?;
        json(&dir.join("bigram.json"), &self.model)?;
        json(&dir.join("manifest.json"), &self.manifest)?;
        write(
            &dir.join("refs.txt"),
            format_id_lines(self.utterances.iter().map(|u| (u.id.as_str(), u.reference.as_slice()))),
        )?;
        let mut heldout = String::new();
        for s in &self.heldout {
            heldout.push_str(&ids_line(s));
            heldout.push('\n');
        }
        write(&dir.join("heldout.txt"), heldout)?;
        for u in &self.utterances {
            write_posterior(&u.posterior, &dir.join("posteriors").join(format!("{}.post", u.id)))?;
            if let Some(list) = &u.nbest {
                write(&dir.join("nbest").join(format!("{}.nbest", u.id)), format_nbest(&u.id, list))?;
            }
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join("manifest.json");
        let manifest: Manifest = serde_json::from_str(&read(&manifest_path)?).map_err(|e| Error::Json {
            path: manifest_path.clone(),
            source: e,
        })?;
        let vocab = Vocabulary::load(dir)?;
        if vocab.content_hash() != manifest.vocab_hash {
            return Err(Error::invalid("eval", "vocabulary hash does not match the manifest"));
        }
        let bigram_path = dir.join("bigram.json");
        let model: BigramModel = serde_json::from_str(&read(&bigram_path)?).map_err(|e| Error::Json {
            path: bigram_path.clone(),
            source: e,
        })?;
        let refs_path = dir.join("refs.txt");
        let refs = parse_id_lines(&read(&refs_path)?, &refs_path.display().to_string())?;
        if refs.iter().map(|r| &r.0).ne(manifest.utterances.iter()) {
            return Err(Error::invalid("eval", "refs.txt does not match the manifest utterance list"));
        }
        let heldout_path = dir.join("heldout.txt");
        let heldout = read(&heldout_path)?
            .lines()
            .enumerate()
            .map(|(i, l)| parse_ids(l, &heldout_path.display().to_string(), i + 1))
            .collect::<Result<Vec<_>>>()?;
        let utterances = refs
            .into_iter()
            .map(|(id, reference)| {
                let posterior = read_posterior(&dir.join("posteriors").join(format!("{id}.post")))?;
                if posterior.vocab_size() != vocab.size() {
                    return Err(Error::VocabMismatch { expected: vocab.size(), found: posterior.vocab_size() });
                }
                let nbest_path = dir.join("nbest").join(format!("{id}.nbest"));
                let nbest = if nbest_path.exists() {
                    let (utt, list) = parse_nbest(&read(&nbest_path)?, &nbest_path.display().to_string())?;
                    if utt != id {
                        return Err(Error::invalid("eval", format!("{} holds utterance {utt}", nbest_path.display())));
                    }
                    Some(list)
                } else {
                    None
                };
                Ok(Utterance { id, reference, posterior, nbest })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            vocab,
            model,
            utterances,
            heldout,
            manifest,
        })
    }
}
