//! Runs one resolved [`RunConfig`]. Every command writes its outputs once,
//! after all utterances are processed, and echoes the resolved config as
//! `<command>.config.json` next to them.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use difflm::ctc::{estimate_prior, ChannelParams, LabelPrior};
use difflm::denoiser::{Denoiser, ExactPosteriorDenoiser, ReplayStore, UniformDenoiser};
use difflm::eval::{
    baseline_row, bigram_perplexity, ctc_top1, emit_report, format_id_lines, generate_benchmark,
    greedy_hypotheses, parse_id_lines, ppl_upper_bound, run_sweep, Benchmark, BenchmarkParams,
    ResultRow, SweepInputs, SweepMode, SweepSpec,
};
use difflm::joint::{joint_decode_traced, JointConfig, TraceStep};
use difflm::rescore::{format_rescored, rescore_nbest, EstimatorConfig, RescoreWeights};
use difflm::schedule::{DiffusionKind, NoiseSchedule};
use difflm::seed::derive_seed;

use crate::config::{Command, DenoiserChoice, RunConfig};

const SCHED: NoiseSchedule = NoiseSchedule::Linear;

/// Runs `cfg` inside a pool of `params.workers` threads (0 = one per core).
pub fn dispatch(cfg: &RunConfig) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.params.workers)
        .build()
        .context("cli: cannot start worker pool")?;
    pool.install(|| match cfg.command {
        Command::GenData => gen_data(cfg),
        Command::Nbest => nbest(cfg),
        Command::Rescore => rescore(cfg),
        Command::Joint => joint(cfg),
        Command::Eval => eval(cfg),
        Command::Sweep => sweep(cfg),
        Command::Ppl => ppl(cfg),
    })
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, body).with_context(|| format!("cli: cannot write {}", path.display()))
}

fn output_dir(cfg: &RunConfig) -> Result<&PathBuf> {
    let dir = cfg.path("output")?;
    fs::create_dir_all(dir).with_context(|| format!("cli: cannot create {}", dir.display()))?;
    Ok(dir)
}

fn echo_config(cfg: &RunConfig, dir: &Path) -> Result<()> {
    write(&dir.join(format!("{}.config.json", cfg.command)), cfg.to_json())
}

fn load_bench(cfg: &RunConfig) -> Result<Benchmark> {
    Ok(Benchmark::load(cfg.path("data")?)?)
}

fn weights(cfg: &RunConfig) -> RescoreWeights {
    RescoreWeights {
        lambda_ctc: cfg.params.lambda_ctc,
        lambda_difflm: cfg.params.lambda_difflm,
        lambda_prior: cfg.params.lambda_prior,
    }
}

fn denoiser(cfg: &RunConfig, bench: &Benchmark, kind: DiffusionKind) -> Result<Box<dyn Denoiser>> {
    Ok(match cfg.params.denoiser {
        DenoiserChoice::Exact => Box::new(ExactPosteriorDenoiser::new(bench.model.clone(), kind, SCHED)),
        DenoiserChoice::Uniform => Box::new(UniformDenoiser {
            vocab_size: bench.vocab.size(),
        }),
        DenoiserChoice::Replay => Box::new(ReplayStore::load(cfg.path("replay")?, Some(bench.vocab.size()))?),
    })
}

fn prior(bench: &Benchmark) -> Result<LabelPrior> {
    Ok(estimate_prior(&bench.posteriors())?)
}

fn gen_data(cfg: &RunConfig) -> Result<()> {
    let p = &cfg.params;
    let params = BenchmarkParams {
        sentences: p.sentences,
        heldout_sentences: p.heldout,
        min_len: p.min_len,
        max_len: p.max_len,
        channel: ChannelParams {
            frames_per_token: p.frames_per_token,
            noise: p.noise,
            blank_mass: p.blank_mass,
        },
        synthetic_words: p.synthetic_words,
        branching: p.branching,
        corpus_lines: p.corpus_lines,
        min_count: p.min_count,
        smoothing: p.smoothing,
    };
    let corpus = match &cfg.paths.corpus {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("cli: cannot read {}", path.display()))?;
            Some(text.lines().filter(|l| !l.trim().is_empty()).map(str::to_string).collect::<Vec<_>>())
        }
        None => None,
    };
    let bench = generate_benchmark(corpus.as_deref(), &params, p.seed)?;
    let dir = output_dir(cfg)?;
    bench.save(dir)?;
    log::info!("wrote {} utterances to {}", bench.utterances.len(), dir.display());
    echo_config(cfg, dir)
}

fn nbest(cfg: &RunConfig) -> Result<()> {
    let mut bench = load_bench(cfg)?;
    bench.compute_nbest(cfg.params.beam, cfg.params.n)?;
    let dir = cfg.path("data")?;
    bench.save(dir)?;
    echo_config(cfg, dir)
}

fn rescore(cfg: &RunConfig) -> Result<()> {
    let bench = load_bench(cfg)?;
    let est = EstimatorConfig {
        kind: cfg.params.estimator,
        samples: cfg.params.k,
        t_fixed: cfg.params.t_fixed,
        seed: cfg.params.seed,
        share_masks: false,
    };
    let w = weights(cfg);
    let d = denoiser(cfg, &bench, est.kind.diffusion())?;
    let prior = prior(&bench)?;
    let ranked = bench
        .utterances
        .par_iter()
        .enumerate()
        .map(|(i, u)| {
            let list = u
                .nbest
                .as_ref()
                .with_context(|| format!("rescorer: no n-best list for {} (run nbest first)", u.id))?;
            let utt_cfg = EstimatorConfig {
                seed: derive_seed(est.seed, &[i as u64]),
                ..est
            };
            Ok(rescore_nbest(list, &utt_cfg, &w, d.as_ref(), &prior, SCHED)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let dir = output_dir(cfg)?;
    let rescored_dir = dir.join("rescored");
    fs::create_dir_all(&rescored_dir).with_context(|| format!("cli: cannot create {}", rescored_dir.display()))?;
    for (u, entries) in bench.utterances.iter().zip(&ranked) {
        write(&rescored_dir.join(format!("{}.nbest", u.id)), format_rescored(&u.id, entries))?;
    }
    let best: Vec<Vec<usize>> = ranked.iter().map(|r| r.first().map(|e| e.hyp.clone()).unwrap_or_default()).collect();
    write(
        &dir.join("hyps.txt"),
        format_id_lines(bench.utterances.iter().zip(&best).map(|(u, h)| (u.id.as_str(), h.as_slice()))),
    )?;
    echo_config(cfg, dir)
}

fn joint(cfg: &RunConfig) -> Result<()> {
    let bench = load_bench(cfg)?;
    let jc = JointConfig {
        t_start: cfg.params.t_start,
        steps: cfg.params.l,
        weights: weights(cfg),
        seed: cfg.params.seed,
        final_rule: cfg.params.final_rule,
    };
    let d = denoiser(cfg, &bench, DiffusionKind::Usdm)?;
    let trace = cfg.params.trace;
    let decoded = bench
        .utterances
        .par_iter()
        .enumerate()
        .map(|(i, u)| {
            let utt_cfg = JointConfig {
                seed: derive_seed(jc.seed, &[i as u64]),
                ..jc
            };
            let mut steps = Vec::new();
            let hyp = joint_decode_traced(&u.posterior, &utt_cfg, d.as_ref(), trace.then_some(&mut steps))?;
            Ok((hyp, steps))
        })
        .collect::<Result<Vec<(Vec<usize>, Vec<TraceStep>)>>>()?;
    let dir = output_dir(cfg)?;
    write(
        &dir.join("hyps.txt"),
        format_id_lines(bench.utterances.iter().zip(&decoded).map(|(u, (h, _))| (u.id.as_str(), h.as_slice()))),
    )?;
    if trace {
        let mut out = String::new();
        for (u, (_, steps)) in bench.utterances.iter().zip(&decoded) {
            for s in steps {
                let _ = write!(out, "{} {} {}", u.id, s.step, s.t);
                for id in &s.z {
                    let _ = write!(out, " {id}");
                }
                out.push('\n');
            }
        }
        write(&dir.join("trace.txt"), out)?;
    }
    echo_config(cfg, dir)
}

/// Row label for a hypothesis file: its parent directory and file name, so
/// labels do not depend on where the run directory lives.
fn hyps_label(path: &Path) -> String {
    let file = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    let label = match path.parent().and_then(Path::file_name) {
        Some(parent) => format!("{}/{file}", parent.to_string_lossy()),
        None => file,
    };
    label.replace([',', '\n', '\r'], "_")
}

fn eval(cfg: &RunConfig) -> Result<()> {
    let bench = load_bench(cfg)?;
    let mut rows: Vec<ResultRow> = vec![baseline_row(&bench, "ctc_greedy", greedy_hypotheses(&bench.posteriors()))?];
    if bench.utterances.iter().all(|u| u.nbest.is_some()) {
        rows.push(baseline_row(&bench, "ctc_top1", ctc_top1(&bench)?)?);
    }
    for path in &cfg.paths.hyps {
        let text = fs::read_to_string(path).with_context(|| format!("eval: cannot read {}", path.display()))?;
        let parsed = parse_id_lines(&text, &path.display().to_string())?;
        let ids: Vec<&str> = parsed.iter().map(|(u, _)| u.as_str()).collect();
        if ids != bench.manifest.utterances {
            bail!("eval: {} does not list the benchmark utterances in order", path.display());
        }
        rows.push(baseline_row(&bench, &hyps_label(path), parsed.into_iter().map(|(_, h)| h).collect())?);
    }
    let dir = output_dir(cfg)?;
    emit_report(&rows, &dir.join("report.csv"))?;
    echo_config(cfg, dir)
}

fn sweep(cfg: &RunConfig) -> Result<()> {
    let p = &cfg.params;
    let bench = load_bench(cfg)?;
    let lambdas = if p.lambda_difflm_grid.is_empty() {
        vec![p.lambda_difflm]
    } else {
        p.lambda_difflm_grid.clone()
    };
    let spec = SweepSpec {
        mode: p.sweep_mode,
        estimator: p.estimator,
        t_fixed: p.t_fixed,
        k_values: p.k_grid.clone(),
        joint_points: p
            .t_start_grid
            .iter()
            .flat_map(|&t| p.l_grid.iter().map(move |&l| (t, l)))
            .collect(),
        weights: lambdas
            .into_iter()
            .map(|l| RescoreWeights {
                lambda_difflm: l,
                ..weights(cfg)
            })
            .collect(),
        final_rule: p.final_rule,
        seeds: p.seeds.iter().map(|&s| derive_seed(p.seed, &[s])).collect(),
        record_timing: p.record_timing,
    };
    let needs_mdlm = spec.mode == SweepMode::Rescore && spec.estimator.diffusion() == DiffusionKind::Mdlm;
    let mdlm = if needs_mdlm {
        denoiser(cfg, &bench, DiffusionKind::Mdlm)?
    } else {
        Box::new(UniformDenoiser { vocab_size: bench.vocab.size() })
    };
    let usdm = denoiser(cfg, &bench, DiffusionKind::Usdm)?;
    let prior = prior(&bench)?;
    let inputs = SweepInputs {
        bench: &bench,
        mdlm: mdlm.as_ref(),
        usdm: usdm.as_ref(),
        prior: &prior,
        sched: SCHED,
    };
    let rows = run_sweep(&spec, &inputs)?;
    let dir = output_dir(cfg)?;
    emit_report(&rows, &dir.join("sweep.csv"))?;
    echo_config(cfg, dir)
}

#[derive(Serialize)]
struct PplReport {
    split: &'static str,
    kind: DiffusionKind,
    samples: usize,
    ppl_upper_bound: f64,
    nll_per_token: f64,
    std_error: f64,
    tokens: usize,
    bigram_ppl: f64,
}

fn ppl(cfg: &RunConfig) -> Result<()> {
    let bench = load_bench(cfg)?;
    if bench.heldout.is_empty() {
        bail!("eval: benchmark has no held-out sentences");
    }
    let kind = cfg.params.ppl_kind;
    let d = denoiser(cfg, &bench, kind)?;
    let est = ppl_upper_bound(&bench.heldout, d.as_ref(), SCHED, kind, cfg.params.k, cfg.params.ppl_grid, cfg.params.seed)?;
    let report = PplReport {
        split: "heldout",
        kind,
        samples: cfg.params.k,
        ppl_upper_bound: est.ppl,
        nll_per_token: est.nll_per_token,
        std_error: est.std_error,
        tokens: est.tokens,
        bigram_ppl: bigram_perplexity(&bench.model, &bench.heldout)?,
    };
    let dir = output_dir(cfg)?;
    write(&dir.join("ppl.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    echo_config(cfg, dir)
}
