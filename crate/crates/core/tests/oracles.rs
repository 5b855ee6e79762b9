//! Library components checked against independent brute-force oracles.

use proptest::prelude::*;
use rand::Rng;

use difflm::ctc::{greedy_collapse, CtcPosterior};
use difflm::denoiser::{BigramModel, Denoiser, ExactPosteriorDenoiser};
use difflm::eval::{edit_distance, wer, EvalPair};
use difflm::schedule::{mdlm_corrupt, DiffusionKind, NoiseSchedule};
use difflm::seed::{rng_from_seed, SeededRng};
use difflm::vocab::{mask_id, Vocabulary};

const SCHED: NoiseSchedule = NoiseSchedule::Linear;

fn random_bigram(v: usize, floor: f64, rng: &mut SeededRng) -> BigramModel {
    let mut row = || -> Vec<f64> {
        let w: Vec<f64> = (0..v).map(|_| rng.gen::<f64>() + floor).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|x| x / z).collect()
    };
    let initial = row();
    let transition: Vec<Vec<f64>> = (0..v).map(|_| row()).collect();
    BigramModel::from_probs(&initial, &transition).unwrap()
}

fn chain_prob(model: &BigramModel, x: &[usize]) -> f64 {
    model.sequence_log_prob(x).exp()
}

/// `q(z_j | x_j)` of the forward process at one position.
fn emission(kind: DiffusionKind, z: usize, x: usize, t: f64, v: usize) -> f64 {
    let a = 1.0 - t;
    match kind {
        DiffusionKind::Mdlm if z == mask_id(v) => 1.0 - a,
        DiffusionKind::Mdlm => {
            if z == x {
                a
            } else {
                0.0
            }
        }
        DiffusionKind::Usdm => (1.0 - a) / v as f64 + if z == x { a } else { 0.0 },
    }
}

fn all_sequences(v: usize, len: usize) -> Vec<Vec<usize>> {
    (0..v.pow(len as u32))
        .map(|mut code| {
            (0..len)
                .map(|_| {
                    let c = code % v;
                    code /= v;
                    c
                })
                .collect()
        })
        .collect()
}

/// Per-position posterior over clean tokens by enumerating every clean
/// sequence.
fn bayes_marginals(model: &BigramModel, kind: DiffusionKind, z: &[usize], t: f64) -> Vec<Vec<f64>> {
    let v = model.vocab_size();
    let mut acc = vec![vec![0.0; v]; z.len()];
    for x in all_sequences(v, z.len()) {
        let w = chain_prob(model, &x) * z.iter().zip(&x).map(|(&zj, &xj)| emission(kind, zj, xj, t, v)).product::<f64>();
        for (j, &xj) in x.iter().enumerate() {
            acc[j][xj] += w;
        }
    }
    for row in &mut acc {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= s);
    }
    acc
}

fn random_noisy(kind: DiffusionKind, v: usize, len: usize, rng: &mut SeededRng) -> Vec<usize> {
    (0..len)
        .map(|_| match kind {
            DiffusionKind::Mdlm if rng.gen_bool(0.5) => mask_id(v),
            _ => rng.gen_range(0..v),
        })
        .collect()
}

#[test]
fn exact_denoiser_matches_bayes_enumeration() {
    let mut rng = rng_from_seed(11);
    let mut worst = 0.0f64;
    for _ in 0..60 {
        let v = rng.gen_range(2..=5);
        let len = rng.gen_range(1..=4);
        let model = random_bigram(v, 0.01, &mut rng);
        for kind in [DiffusionKind::Mdlm, DiffusionKind::Usdm] {
            let d = ExactPosteriorDenoiser::new(model.clone(), kind, SCHED);
            for t in [0.1, 0.5, 0.9] {
                let z = random_noisy(kind, v, len, &mut rng);
                let out = d.denoise(&z, t).unwrap();
                let oracle = bayes_marginals(&model, kind, &z, t);
                for (j, row) in oracle.iter().enumerate() {
                    for (w, p) in row.iter().enumerate() {
                        worst = worst.max((out.log_prob(j, w).exp() - p).abs());
                    }
                }
            }
        }
    }
    assert!(worst < 1e-9, "max deviation {worst:e}");
}

#[test]
fn usdm_corrupted_positions_keep_uncertainty() {
    let mut rng = rng_from_seed(12);
    for _ in 0..50 {
        let v = rng.gen_range(2..=6);
        let model = random_bigram(v, 0.05, &mut rng);
        let d = ExactPosteriorDenoiser::new(model, DiffusionKind::Usdm, SCHED);
        let z: Vec<usize> = (0..rng.gen_range(1..=8)).map(|_| rng.gen_range(0..v)).collect();
        let t = rng.gen_range(0.05..1.0);
        let out = d.denoise(&z, t).unwrap();
        for j in 0..z.len() {
            let max = (0..v).map(|w| out.log_prob(j, w).exp()).fold(0.0, f64::max);
            assert!(max < 1.0, "position {j} collapsed at t = {t}");
        }
    }
}

/// Revealing the true value of a masked neighbour can lower the posterior of
/// the true token at a position (when the true sequence takes an unlikely
/// transition), so pointwise monotonicity does not hold for a bigram chain.
/// The denoiser must still follow the oracle exactly after every reveal.
#[test]
fn unmasking_a_neighbour_follows_the_oracle() {
    let mut rng = rng_from_seed(13);
    let (mut checked, mut lowered) = (0, 0);
    for _ in 0..400 {
        let v = rng.gen_range(2..=4);
        let len = rng.gen_range(2..=5);
        let model = random_bigram(v, 0.05, &mut rng);
        let d = ExactPosteriorDenoiser::new(model.clone(), DiffusionKind::Mdlm, SCHED);
        let x = model.sample(len, &mut rng);
        let mut z: Vec<usize> = x.iter().map(|&w| if rng.gen_bool(0.6) { mask_id(v) } else { w }).collect();
        let masked: Vec<usize> = (0..len).filter(|&j| z[j] == mask_id(v)).collect();
        if masked.len() < 2 {
            continue;
        }
        let target = masked[rng.gen_range(0..masked.len())];
        let Some(&reveal) = masked.iter().find(|&&j| j + 1 == target || target + 1 == j) else {
            continue;
        };
        let t = rng.gen_range(0.1..0.9);
        let before = d.denoise(&z, t).unwrap().log_prob(target, x[target]).exp();
        z[reveal] = x[reveal];
        let after = d.denoise(&z, t).unwrap().log_prob(target, x[target]).exp();
        let oracle = bayes_marginals(&model, DiffusionKind::Mdlm, &z, t)[target][x[target]];
        assert!((after - oracle).abs() < 1e-9);
        assert!(after > 0.0 && before > 0.0);
        checked += 1;
        lowered += usize::from(after < before - 1e-12);
    }
    eprintln!("{lowered} of {checked} reveals lowered the true-token posterior");
    assert!(checked > 50);
}

#[test]
fn revealing_the_true_neighbour_helps_on_average() {
    let mut rng = rng_from_seed(14);
    let (mut gain, mut cases) = (0.0, 0);
    for _ in 0..300 {
        let v = rng.gen_range(2..=4);
        let model = random_bigram(v, 0.05, &mut rng);
        let x = model.sample(3, &mut rng);
        let z = vec![mask_id(v); 3];
        let before = bayes_marginals(&model, DiffusionKind::Mdlm, &z, 0.5)[1][x[1]];
        let mut z2 = z.clone();
        z2[0] = x[0];
        let after = bayes_marginals(&model, DiffusionKind::Mdlm, &z2, 0.5)[1][x[1]];
        gain += after.ln() - before.ln();
        cases += 1;
    }
    // Expected log-gain is a mutual information, hence non-negative.
    assert!(gain / cases as f64 >= 0.0);
}

fn chi_square_upper_0001(df: usize) -> f64 {
    // Wilson-Hilferty approximation of the 0.999 quantile.
    let z = 3.090_232;
    let k = df as f64;
    k * (1.0 - 2.0 / (9.0 * k) + z * (2.0 / (9.0 * k)).sqrt()).powi(3)
}

#[test]
fn mask_indicators_are_independent_bernoullis() {
    let mut rng = rng_from_seed(15);
    let (len, v, t, n) = (3, 5, 0.35, 10_000);
    let clean = vec![0, 1, 2];
    let mut counts = vec![0usize; 1 << len];
    for _ in 0..n {
        let z = mdlm_corrupt(&clean, t, v, SCHED, &mut rng).unwrap();
        let code = z.ids.iter().enumerate().fold(0, |acc, (j, &id)| acc | (usize::from(id == mask_id(v)) << j));
        counts[code] += 1;
    }
    let chi: f64 = counts
        .iter()
        .enumerate()
        .map(|(code, &c)| {
            let k = code.count_ones() as i32;
            let expected = n as f64 * t.powi(k) * (1.0 - t).powi(len as i32 - k);
            (c as f64 - expected).powi(2) / expected
        })
        .sum();
    assert!(chi < chi_square_upper_0001(counts.len() - 1), "chi-square {chi}");
}

fn brute_edit(a: &[usize], b: &[usize]) -> usize {
    match (a.split_first(), b.split_first()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => {
            let sub = brute_edit(ra, rb) + usize::from(x != y);
            sub.min(brute_edit(ra, b) + 1).min(brute_edit(a, rb) + 1)
        }
    }
}

fn brute_edit_memo(a: &[usize], b: &[usize]) -> usize {
    // Full table, filled from the end; independent of the library's
    // rolling two-row version.
    let mut table = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in (0..=a.len()).rev() {
        for j in (0..=b.len()).rev() {
            table[i][j] = if i == a.len() {
                b.len() - j
            } else if j == b.len() {
                a.len() - i
            } else {
                (table[i + 1][j + 1] + usize::from(a[i] != b[j]))
                    .min(table[i + 1][j] + 1)
                    .min(table[i][j + 1] + 1)
            };
        }
    }
    table[0][0]
}

#[test]
fn wer_matches_brute_force() {
    let mut rng = rng_from_seed(16);
    let mut pairs = Vec::new();
    let mut edits = 0;
    for i in 0..1000 {
        let v = rng.gen_range(1..=5);
        let r: Vec<usize> = (0..rng.gen_range(0..=12)).map(|_| rng.gen_range(0..v)).collect();
        let h: Vec<usize> = (0..rng.gen_range(0..=12)).map(|_| rng.gen_range(0..v)).collect();
        let e = brute_edit_memo(&r, &h);
        if r.len() + h.len() <= 12 {
            assert_eq!(e, brute_edit(&r, &h));
        }
        assert_eq!(edit_distance(&r, &h), e);
        edits += e;
        pairs.push(EvalPair {
            utt_id: format!("u{i}"),
            reference: r,
            hypothesis: h,
        });
    }
    let words: usize = pairs.iter().map(|p| p.reference.len()).sum();
    assert_eq!(wer(&pairs).unwrap(), 100.0 * edits as f64 / words as f64);
}

#[test]
fn greedy_tokens_are_frame_argmaxes() {
    let mut rng = rng_from_seed(17);
    for _ in 0..500 {
        let v = rng.gen_range(2..=6);
        let rows: Vec<Vec<f64>> = (0..rng.gen_range(1..=20))
            .map(|_| {
                let w: Vec<f64> = (0..=v).map(|_| rng.gen::<f64>().powi(3) + 1e-3).collect();
                let s: f64 = w.iter().sum();
                w.into_iter().map(|x| x / s).collect()
            })
            .collect();
        let p = CtcPosterior::from_probs(&rows).unwrap();
        let g = greedy_collapse(&p);
        assert_eq!(g.tokens.len(), g.tau.len());
        for (tok, &frame) in g.tokens.iter().zip(&g.tau) {
            assert_eq!(p.renorm_nonblank(frame).unwrap().argmax(), *tok);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn vocab_round_trip(lines in prop::collection::vec(prop::collection::vec("[a-e]{1,3}", 1..8), 1..10)) {
        let corpus: Vec<String> = lines.iter().map(|w| w.join("  ")).collect();
        let vocab = Vocabulary::build(&corpus, 1).unwrap();
        prop_assert_eq!(&vocab, &Vocabulary::build(&corpus, 1).unwrap());
        for (line, words) in corpus.iter().zip(&lines) {
            prop_assert_eq!(vocab.decode(&vocab.encode(line)).unwrap(), words.join(" "));
        }
    }
}
