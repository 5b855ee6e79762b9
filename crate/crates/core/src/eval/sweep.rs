//! Parameter sweeps over the benchmark: rescoring across `K` and weights,
//! joint decoding across `(t_start, L)` and weights, each averaged over
//! seeds.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::benchmark::Benchmark;
use super::report::ResultRow;
use super::wer::{wer, EvalPair};
use crate::ctc::{greedy_collapse, CtcPosterior, LabelPrior};
use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::joint::{joint_decode, FinalRule, JointConfig};
use crate::numeric::mean_var;
use crate::rescore::{rescore_nbest, EstimatorConfig, EstimatorKind, RescoreWeights};
use crate::schedule::NoiseSchedule;
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    Rescore,
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub mode: SweepMode,
    pub estimator: EstimatorKind,
    pub t_fixed: f64,
    /// Rescoring grid over `K`.
    pub k_values: Vec<usize>,
    /// Joint grid over `(t_start, L)`.
    pub joint_points: Vec<(f64, usize)>,
    pub weights: Vec<RescoreWeights>,
    pub final_rule: FinalRule,
    pub seeds: Vec<u64>,
    /// Report measured wall time; otherwise the column is zero so reports
    /// stay byte-identical across runs.
    pub record_timing: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            mode: SweepMode::Rescore,
            estimator: EstimatorKind::SampleMask,
            t_fixed: 0.5,
            k_values: vec![1, 2, 16, 32, 64, 128, 256],
            joint_points: [1, 8, 12, 16, 32, 48, 64].iter().map(|&l| (0.3, l)).collect(),
            weights: vec![RescoreWeights::default()],
            final_rule: FinalRule::Argmax,
            seeds: vec![0, 1, 2, 3, 4],
            record_timing: false,
        }
    }
}

/// Everything a sweep reads. Rescoring uses `mdlm` or `usdm` according to
/// the estimator; joint decoding uses `usdm`.
pub struct SweepInputs<'a> {
    pub bench: &'a Benchmark,
    pub mdlm: &'a dyn Denoiser,
    pub usdm: &'a dyn Denoiser,
    pub prior: &'a LabelPrior,
    pub sched: NoiseSchedule,
}

fn fmt_f(x: f64) -> String {
    format!("{x}")
}

fn weights_tag(w: &RescoreWeights) -> String {
    format!(
        "lctc={} ldiff={} lprior={}",
        fmt_f(w.lambda_ctc),
        fmt_f(w.lambda_difflm),
        fmt_f(w.lambda_prior)
    )
}

/// Top hypothesis of every n-best list.
pub fn ctc_top1(bench: &Benchmark) -> Result<Vec<Vec<usize>>> {
    bench
        .utterances
        .iter()
        .map(|u| {
            let list = u
                .nbest
                .as_ref()
                .ok_or_else(|| Error::invalid("eval", format!("no n-best list for {}", u.id)))?;
            Ok(list.best().map(|e| e.hyp.clone()).unwrap_or_default())
        })
        .collect()
}

pub fn greedy_hypotheses(posteriors: &[CtcPosterior]) -> Vec<Vec<usize>> {
    posteriors.iter().map(|p| greedy_collapse(p).tokens).collect()
}

/// Best rescored hypothesis per utterance. Utterance `i` uses the seed
/// derived from `(cfg.seed, i)`.
pub fn rescore_corpus(
    bench: &Benchmark,
    cfg: &EstimatorConfig,
    w: &RescoreWeights,
    d: &dyn Denoiser,
    prior: &LabelPrior,
    sched: NoiseSchedule,
) -> Result<Vec<Vec<usize>>> {
    bench
        .utterances
        .par_iter()
        .enumerate()
        .map(|(i, u)| {
            let list = u
                .nbest
                .as_ref()
                .ok_or_else(|| Error::invalid("eval", format!("no n-best list for {}", u.id)))?;
            let utt_cfg = EstimatorConfig {
                seed: derive_seed(cfg.seed, &[i as u64]),
                ..*cfg
            };
            let ranked = rescore_nbest(list, &utt_cfg, w, d, prior, sched)?;
            Ok(ranked.into_iter().next().map(|e| e.hyp).unwrap_or_default())
        })
        .collect()
}

/// Joint decoding of every posterior; utterance `i` uses the seed derived
/// from `(cfg.seed, i)`.
pub fn joint_corpus(posteriors: &[CtcPosterior], cfg: &JointConfig, d: &dyn Denoiser) -> Result<Vec<Vec<usize>>> {
    posteriors
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let utt_cfg = JointConfig {
                seed: derive_seed(cfg.seed, &[i as u64]),
                ..*cfg
            };
            joint_decode(p, &utt_cfg, d)
        })
        .collect()
}

pub(crate) fn corpus_wer(bench: &Benchmark, hyps: Vec<Vec<usize>>) -> Result<f64> {
    let pairs: Vec<EvalPair> = bench
        .utterances
        .iter()
        .zip(hyps)
        .map(|(u, h)| EvalPair {
            utt_id: u.id.clone(),
            reference: u.reference.clone(),
            hypothesis: h,
        })
        .collect();
    wer(&pairs)
}

enum Point {
    Rescore(EstimatorConfig, RescoreWeights),
    Joint(JointConfig),
}

impl Point {
    fn fingerprint(&self) -> String {
        match self {
            Point::Rescore(c, w) => format!(
                "rescore est={} K={} t={} {}",
                c.kind.name(),
                c.samples,
                fmt_f(c.t_fixed),
                weights_tag(w)
            ),
            Point::Joint(c) => format!(
                "joint t_start={} L={} final={} {}",
                fmt_f(c.t_start),
                c.steps,
                match c.final_rule {
                    FinalRule::Argmax => "argmax",
                    FinalRule::Sample => "sample",
                },
                weights_tag(&c.weights)
            ),
        }
    }
}

fn grid(spec: &SweepSpec) -> Result<Vec<Point>> {
    if spec.seeds.is_empty() || spec.weights.is_empty() {
        return Err(Error::invalid("eval", "sweep needs at least one seed and one weight setting"));
    }
    let points: Vec<Point> = match spec.mode {
        SweepMode::Rescore => spec
            .weights
            .iter()
            .flat_map(|w| {
                spec.k_values.iter().map(move |&k| {
                    let cfg = EstimatorConfig {
                        kind: spec.estimator,
                        samples: k,
                        t_fixed: spec.t_fixed,
                        seed: 0,
                        share_masks: false,
                    };
                    Point::Rescore(cfg, *w)
                })
            })
            .collect(),
        SweepMode::Joint => spec
            .weights
            .iter()
            .flat_map(|w| {
                spec.joint_points.iter().map(move |&(t_start, steps)| {
                    Point::Joint(JointConfig {
                        t_start,
                        steps,
                        weights: *w,
                        seed: 0,
                        final_rule: spec.final_rule,
                    })
                })
            })
            .collect(),
    };
    if points.is_empty() {
        return Err(Error::invalid("eval", "empty sweep grid"));
    }
    Ok(points)
}

/// One row per grid point in grid order (weights outermost), WER mean and
/// sample standard deviation over `spec.seeds`.
pub fn run_sweep(spec: &SweepSpec, inputs: &SweepInputs<'_>) -> Result<Vec<ResultRow>> {
    let points = grid(spec)?;
    let posteriors = inputs.bench.posteriors();
    points
        .iter()
        .map(|point| {
            let started = Instant::now();
            let wers = spec
                .seeds
                .iter()
                .map(|&seed| {
                    let hyps = match point {
                        Point::Rescore(cfg, w) => {
                            let d = match cfg.kind {
                                EstimatorKind::Usdm => inputs.usdm,
                                _ => inputs.mdlm,
                            };
                            let cfg = EstimatorConfig { seed, ..*cfg };
                            rescore_corpus(inputs.bench, &cfg, w, d, inputs.prior, inputs.sched)?
                        }
                        Point::Joint(cfg) => joint_corpus(&posteriors, &JointConfig { seed, ..*cfg }, inputs.usdm)?,
                    };
                    corpus_wer(inputs.bench, hyps)
                })
                .collect::<Result<Vec<f64>>>()?;
            let (mean, var) = mean_var(&wers);
            let row = ResultRow {
                config: point.fingerprint(),
                wer: mean,
                stddev: var.max(0.0).sqrt(),
                wall_time_s: if spec.record_timing {
                    started.elapsed().as_secs_f64()
                } else {
                    0.0
                },
            };
            log::info!("{} wer={:.3} sd={:.3}", row.config, row.wer, row.stddev);
            Ok(row)
        })
        .collect()
}

/// Single-row WER of fixed hypotheses (baselines such as CTC top-1).
pub fn baseline_row(bench: &Benchmark, config: &str, hyps: Vec<Vec<usize>>) -> Result<ResultRow> {
    Ok(ResultRow {
        config: config.to_string(),
        wer: corpus_wer(bench, hyps)?,
        stddev: 0.0,
        wall_time_s: 0.0,
    })
}
