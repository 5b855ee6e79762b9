use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Denoiser, DenoiserOutput};
use crate::error::{Error, Result};
use crate::numeric::{sample_log_weights, CatDist};
use crate::schedule::{check_level, DiffusionKind, NoiseSchedule};
use crate::vocab::mask_id;

/// Smallest probability any initial or transition entry may take.
pub const PROB_FLOOR: f64 = 1e-10;

/// A first-order Markov chain over the vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "BigramRepr", into = "BigramRepr")]
pub struct BigramModel {
    vocab_size: usize,
    log_initial: Vec<f64>,
    /// Row-major, `log_transition[u * V + v] = log P(v | u)`.
    log_transition: Vec<f64>,
    initial: Vec<f64>,
    transition: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BigramRepr {
    vocab_size: usize,
    log_initial: Vec<f64>,
    log_transition: Vec<Vec<f64>>,
}

impl From<BigramRepr> for BigramModel {
    fn from(r: BigramRepr) -> Self {
        Self::from_log_parts(r.vocab_size, r.log_initial, r.log_transition.concat())
    }
}

impl From<BigramModel> for BigramRepr {
    fn from(m: BigramModel) -> Self {
        BigramRepr {
            vocab_size: m.vocab_size,
            log_transition: m
                .log_transition
                .chunks(m.vocab_size)
                .map(<[f64]>::to_vec)
                .collect(),
            log_initial: m.log_initial,
        }
    }
}

fn floored(mut p: Vec<f64>) -> Vec<f64> {
    let total: f64 = p.iter().sum();
    let scale = 1.0 - p.len() as f64 * PROB_FLOOR;
    for x in p.iter_mut() {
        *x = PROB_FLOOR + scale * *x / total;
    }
    p
}

impl BigramModel {
    fn from_log_parts(vocab_size: usize, log_initial: Vec<f64>, log_transition: Vec<f64>) -> Self {
        let initial = log_initial.iter().map(|x| x.exp()).collect();
        let transition = log_transition.iter().map(|x| x.exp()).collect();
        Self {
            vocab_size,
            log_initial,
            log_transition,
            initial,
            transition,
        }
    }

    /// Builds a chain from probability tables. Rows are normalized and
    /// floored at [`PROB_FLOOR`].
    pub fn from_probs(initial: &[f64], transition: &[Vec<f64>]) -> Result<Self> {
        let v = initial.len();
        if v < 2 || transition.len() != v || transition.iter().any(|r| r.len() != v) {
            return Err(Error::invalid("denoiser", "bigram tables must be V and V x V"));
        }
        let bad = |xs: &[f64]| xs.iter().any(|x| !x.is_finite() || *x < 0.0) || xs.iter().sum::<f64>() <= 0.0;
        if bad(initial) || transition.iter().any(|r| bad(r)) {
            return Err(Error::invalid("denoiser", "bigram tables need non-negative finite rows with mass"));
        }
        let log_initial = floored(initial.to_vec()).iter().map(|p| p.ln()).collect();
        let log_transition = transition
            .iter()
            .flat_map(|r| floored(r.clone()))
            .map(f64::ln)
            .collect();
        Ok(Self::from_log_parts(v, log_initial, log_transition))
    }

    /// Add-`smoothing` maximum-likelihood estimate from encoded sentences.
    pub fn fit(corpus: &[Vec<usize>], vocab_size: usize, smoothing: f64) -> Result<Self> {
        if !(smoothing > 0.0) {
            return Err(Error::invalid("denoiser", "smoothing must be positive"));
        }
        if corpus.iter().all(Vec::is_empty) {
            return Err(Error::invalid("denoiser", "empty corpus"));
        }
        let mut initial = vec![smoothing; vocab_size];
        let mut transition = vec![vec![smoothing; vocab_size]; vocab_size];
        for seq in corpus {
            crate::vocab::check_ids(seq, vocab_size)?;
            if let Some(&first) = seq.first() {
                initial[first] += 1.0;
            }
            for pair in seq.windows(2) {
                transition[pair[0]][pair[1]] += 1.0;
            }
        }
        Self::from_probs(&initial, &transition)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn initial(&self) -> CatDist {
        CatDist::from_log_probs(self.log_initial.clone()).expect("normalized on construction")
    }

    pub fn transition_row(&self, from: usize) -> &[f64] {
        &self.log_transition[from * self.vocab_size..(from + 1) * self.vocab_size]
    }

    pub fn log_transition(&self, from: usize, to: usize) -> f64 {
        self.log_transition[from * self.vocab_size + to]
    }

    pub fn log_initial(&self, v: usize) -> f64 {
        self.log_initial[v]
    }

    /// Joint log-probability of a sentence (empty sentences have log 0).
    pub fn sequence_log_prob(&self, seq: &[usize]) -> f64 {
        match seq.first() {
            None => 0.0,
            Some(&first) => {
                self.log_initial[first]
                    + seq
                        .windows(2)
                        .map(|p| self.log_transition(p[0], p[1]))
                        .sum::<f64>()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Vec<usize> {
        let mut out = Vec::with_capacity(len);
        for j in 0..len {
            let next = if j == 0 {
                sample_log_weights(&self.log_initial, rng)
            } else {
                sample_log_weights(self.transition_row(out[j - 1]), rng)
            };
            out.push(next);
        }
        out
    }

    /// Exact posterior marginals `P(w_j | z)` under this chain as prior and
    /// the corruption channel of `kind` at level `t` as emission model.
    pub fn posterior_marginals(
        &self,
        ids: &[usize],
        t: f64,
        kind: DiffusionKind,
        sched: NoiseSchedule,
    ) -> Result<DenoiserOutput> {
        let emissions = self.emissions(ids, t, kind, sched)?;
        self.forward_backward(&emissions)
    }

    fn emissions(
        &self,
        ids: &[usize],
        t: f64,
        kind: DiffusionKind,
        sched: NoiseSchedule,
    ) -> Result<Vec<Emission>> {
        check_level(t)?;
        let v = self.vocab_size;
        let keep = sched.alpha(t)?;
        ids.iter()
            .enumerate()
            .map(|(j, &id)| match kind {
                DiffusionKind::Mdlm if id == mask_id(v) => Ok(Emission::Flat),
                DiffusionKind::Usdm if id == mask_id(v) => Err(Error::MaskInUniformState(j)),
                _ if id >= v => Err(Error::IdOutOfRange { id, size: v }),
                DiffusionKind::Mdlm => Ok(Emission::Delta(id)),
                DiffusionKind::Usdm => Ok(Emission::Spike {
                    at: id,
                    hit: keep + (1.0 - keep) / v as f64,
                    miss: (1.0 - keep) / v as f64,
                }),
            })
            .collect()
    }

    /// Scaled forward-backward in the probability domain; each message is
    /// renormalized so the scale factors cancel in the marginals.
    fn forward_backward(&self, emissions: &[Emission]) -> Result<DenoiserOutput> {
        let v = self.vocab_size;
        let n = emissions.len();
        let tr = &self.transition;
        let mut fwd = vec![0.0; n * v];
        let mut bwd = vec![1.0; n * v];

        for j in 0..n {
            let (done, rest) = fwd.split_at_mut(j * v);
            let cur = &mut rest[..v];
            if j == 0 {
                cur.copy_from_slice(&self.initial);
            } else {
                let prev = &done[(j - 1) * v..];
                match emissions[j] {
                    Emission::Delta(w) => {
                        cur[w] = (0..v).map(|u| prev[u] * tr[u * v + w]).sum();
                    }
                    _ => {
                        for (u, &pu) in prev.iter().enumerate() {
                            if pu == 0.0 {
                                continue;
                            }
                            let row = &tr[u * v..(u + 1) * v];
                            for (c, &p) in cur.iter_mut().zip(row) {
                                *c += pu * p;
                            }
                        }
                    }
                }
            }
            emissions[j].apply(cur);
            normalize(cur, j)?;
        }

        for j in (0..n.saturating_sub(1)).rev() {
            let (head, tail) = bwd.split_at_mut((j + 1) * v);
            let cur = &mut head[j * v..];
            let next = &tail[..v];
            match emissions[j + 1] {
                Emission::Delta(w) => {
                    for (u, c) in cur.iter_mut().enumerate() {
                        *c = tr[u * v + w] * next[w];
                    }
                }
                e => {
                    let mut weighted = next.to_vec();
                    e.apply(&mut weighted);
                    for (u, c) in cur.iter_mut().enumerate() {
                        let row = &tr[u * v..(u + 1) * v];
                        *c = row.iter().zip(&weighted).map(|(a, b)| a * b).sum();
                    }
                }
            }
            normalize(cur, j)?;
        }

        let mut out = Vec::with_capacity(n * v);
        for j in 0..n {
            let mut post: Vec<f64> = fwd[j * v..(j + 1) * v]
                .iter()
                .zip(&bwd[j * v..(j + 1) * v])
                .map(|(a, b)| a * b)
                .collect();
            normalize(&mut post, j)?;
            out.extend(post.into_iter().map(f64::ln));
        }
        Ok(DenoiserOutput::from_rows_unchecked(v, out))
    }
}

fn normalize(xs: &mut [f64], j: usize) -> Result<()> {
    let total: f64 = xs.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::invalid(
            "denoiser",
            format!("observation at position {j} has zero probability under the model"),
        ));
    }
    for x in xs.iter_mut() {
        *x /= total;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
enum Emission {
    /// Masked position: every clean token explains it equally.
    Flat,
    /// Observed clean token.
    Delta(usize),
    /// Uniform-state channel: `hit` at the observed token, `miss` elsewhere.
    Spike { at: usize, hit: f64, miss: f64 },
}

impl Emission {
    fn apply(&self, xs: &mut [f64]) {
        match *self {
            Emission::Flat => {}
            Emission::Delta(w) => {
                for (i, x) in xs.iter_mut().enumerate() {
                    if i != w {
                        *x = 0.0;
                    }
                }
            }
            Emission::Spike { at, hit, miss } => {
                for (i, x) in xs.iter_mut().enumerate() {
                    *x *= if i == at { hit } else { miss };
                }
            }
        }
    }
}

/// Exact Bayesian denoiser under a bigram prior.
#[derive(Debug, Clone)]
pub struct ExactPosteriorDenoiser {
    pub model: BigramModel,
    pub kind: DiffusionKind,
    pub sched: NoiseSchedule,
}

impl ExactPosteriorDenoiser {
    pub fn new(model: BigramModel, kind: DiffusionKind, sched: NoiseSchedule) -> Self {
        Self { model, kind, sched }
    }
}

impl Denoiser for ExactPosteriorDenoiser {
    fn vocab_size(&self) -> usize {
        self.model.vocab_size()
    }

    fn denoise(&self, ids: &[usize], t: f64) -> Result<DenoiserOutput> {
        self.model.posterior_marginals(ids, t, self.kind, self.sched)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::log_sum_exp;
    use crate::seed::rng_from_seed;
    use crate::vocab::mask_id;

    const SCHED: NoiseSchedule = NoiseSchedule::Linear;

    #[test]
    fn fit_deterministic_chain() {
        let corpus = vec![vec![0, 1]; 50];
        let m = BigramModel::fit(&corpus, 3, 1e-9).unwrap();
        assert!(m.log_transition(0, 1).exp() > 1.0 - 1e-6);
        assert!(m.log_initial(0).exp() > 1.0 - 1e-6);
    }

    #[test]
    fn fit_add_one_formula() {
        // row of token 0: counts {1: 2}, |V| = 3, smoothing 1
        let corpus = vec![vec![0, 1], vec![0, 1]];
        let m = BigramModel::fit(&corpus, 3, 1.0).unwrap();
        assert!((m.log_transition(0, 2).exp() - 1.0 / (2.0 + 3.0)).abs() < 1e-9);
        assert!((m.log_transition(0, 1).exp() - 3.0 / 5.0).abs() < 1e-9);
    }

    #[test]
    fn fit_uniform_random_corpus() {
        let mut rng = rng_from_seed(11);
        let corpus: Vec<Vec<usize>> = (0..2_000)
            .map(|_| (0..20).map(|_| rng.gen_range(0..2)).collect())
            .collect();
        let m = BigramModel::fit(&corpus, 2, 1.0).unwrap();
        for u in 0..2 {
            for v in 0..2 {
                assert!((m.log_transition(u, v).exp() - 0.5).abs() < 0.02);
            }
        }
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(BigramModel::fit(&[], 3, 1.0).is_err());
        assert!(BigramModel::fit(&[vec![]], 3, 1.0).is_err());
        assert!(BigramModel::fit(&[vec![0]], 3, 0.0).is_err());
        assert!(BigramModel::fit(&[vec![7]], 3, 1.0).is_err());
    }

    #[test]
    fn rows_are_normalized_and_floored() {
        let m = BigramModel::fit(&[vec![0, 1, 2]], 4, 1e-30).unwrap();
        assert!(log_sum_exp(&m.log_initial).abs() < 1e-9);
        for u in 0..4 {
            let row = m.transition_row(u);
            assert!(log_sum_exp(row).abs() < 1e-9);
            assert!(row.iter().all(|lp| lp.exp() >= PROB_FLOOR * (1.0 - 1e-9)));
        }
    }

    #[test]
    fn mdlm_without_masks_returns_point_masses() {
        let m = BigramModel::fit(&[vec![0, 1, 2, 0]], 3, 0.5).unwrap();
        let out = m.posterior_marginals(&[2, 0, 1], 0.5, DiffusionKind::Mdlm, SCHED).unwrap();
        for (j, &w) in [2, 0, 1].iter().enumerate() {
            assert_eq!(out.dist(j), CatDist::point_mass(3, w));
        }
    }

    #[test]
    fn mdlm_all_masked_recovers_deterministic_sentence() {
        let m = BigramModel::fit(&vec![vec![2, 0, 1, 3]; 10], 4, 1e-12).unwrap();
        let ids = vec![mask_id(4); 4];
        let out = m.posterior_marginals(&ids, 1.0, DiffusionKind::Mdlm, SCHED).unwrap();
        for (j, &w) in [2, 0, 1, 3].iter().enumerate() {
            assert!(out.log_prob(j, w).exp() > 1.0 - 1e-8);
        }
    }

    #[test]
    fn usdm_rejects_mask() {
        let m = BigramModel::fit(&[vec![0, 1]], 2, 1.0).unwrap();
        let err = m
            .posterior_marginals(&[0, mask_id(2)], 0.5, DiffusionKind::Usdm, SCHED)
            .unwrap_err();
        assert!(matches!(err, Error::MaskInUniformState(1)));
    }

    #[test]
    fn serde_round_trip() {
        let m = BigramModel::fit(&[vec![0, 1, 1, 2]], 3, 0.1).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: BigramModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
