//! Run configuration: a JSON document `{command, paths, params}` plus
//! `--key value` overrides. Every key is checked against the known set so a
//! typo fails loudly instead of silently falling back to a default.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use difflm::joint::FinalRule;
use difflm::rescore::EstimatorKind;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown key: {0}")]
    UnknownKey(String),
    #[error("config: missing required path {path:?} for command {command}")]
    MissingPath { command: Command, path: &'static str },
    #[error("config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    GenData,
    Nbest,
    Rescore,
    Joint,
    Eval,
    Sweep,
    Ppl,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::GenData,
        Command::Nbest,
        Command::Rescore,
        Command::Joint,
        Command::Eval,
        Command::Sweep,
        Command::Ppl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::Nbest => "nbest",
            Command::Rescore => "rescore",
            Command::Joint => "joint",
            Command::Eval => "eval",
            Command::Sweep => "sweep",
            Command::Ppl => "ppl",
        }
    }

    /// Paths that must be set for this command.
    pub fn required_paths(self) -> &'static [&'static str] {
        match self {
            Command::GenData => &["output"],
            Command::Nbest => &["data"],
            Command::Rescore | Command::Joint | Command::Eval | Command::Sweep | Command::Ppl => &["data", "output"],
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown command {s:?}")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Benchmark directory.
    pub data: Option<PathBuf>,
    /// Output directory (gen-data: the benchmark directory itself).
    pub output: Option<PathBuf>,
    /// Plain-text training corpus for gen-data; synthetic when absent.
    pub corpus: Option<PathBuf>,
    /// Denoiser replay file, used when `denoiser` is "replay".
    pub replay: Option<PathBuf>,
    /// Hypothesis files scored by eval.
    pub hyps: Vec<PathBuf>,
}

const PATH_KEYS: [&str; 5] = ["data", "output", "corpus", "replay", "hyps"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenoiserChoice {
    /// Exact Bayesian posterior of the benchmark's bigram model.
    Exact,
    Uniform,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub seed: u64,
    pub workers: usize,
    pub trace: bool,
    pub denoiser: DenoiserChoice,

    // gen-data
    pub sentences: usize,
    pub heldout: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub noise: f64,
    pub frames_per_token: usize,
    pub blank_mass: f64,
    pub synthetic_words: usize,
    pub branching: usize,
    pub corpus_lines: usize,
    pub min_count: usize,
    pub smoothing: f64,

    // nbest
    pub beam: usize,
    pub n: usize,

    // rescore
    pub estimator: EstimatorKind,
    #[serde(rename = "K")]
    pub k: usize,
    pub t_fixed: f64,
    pub lambda_ctc: f64,
    pub lambda_difflm: f64,
    pub lambda_prior: f64,

    // joint
    pub t_start: f64,
    #[serde(rename = "L")]
    pub l: usize,
    pub final_rule: FinalRule,

    // sweep
    pub sweep_mode: difflm::eval::SweepMode,
    pub k_grid: Vec<usize>,
    pub t_start_grid: Vec<f64>,
    pub l_grid: Vec<usize>,
    pub lambda_difflm_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub record_timing: bool,

    // ppl
    pub ppl_kind: difflm::schedule::DiffusionKind,
    pub ppl_grid: usize,
}

impl Default for Params {
    fn default() -> Self {
        let bench = difflm::eval::BenchmarkParams::default();
        let sweep = difflm::eval::SweepSpec::default();
        let est = difflm::rescore::EstimatorConfig::default();
        let joint = difflm::joint::JointConfig::default();
        Self {
            seed: 0,
            workers: 0,
            trace: false,
            denoiser: DenoiserChoice::Exact,
            sentences: bench.sentences,
            heldout: bench.heldout_sentences,
            min_len: bench.min_len,
            max_len: bench.max_len,
            noise: bench.channel.noise,
            frames_per_token: bench.channel.frames_per_token,
            blank_mass: bench.channel.blank_mass,
            synthetic_words: bench.synthetic_words,
            branching: bench.branching,
            corpus_lines: bench.corpus_lines,
            min_count: bench.min_count,
            smoothing: bench.smoothing,
            beam: 16,
            n: 16,
            estimator: est.kind,
            k: est.samples,
            t_fixed: est.t_fixed,
            lambda_ctc: joint.weights.lambda_ctc,
            lambda_difflm: joint.weights.lambda_difflm,
            lambda_prior: joint.weights.lambda_prior,
            t_start: joint.t_start,
            l: joint.steps,
            final_rule: joint.final_rule,
            sweep_mode: sweep.mode,
            k_grid: sweep.k_values,
            t_start_grid: vec![0.3],
            l_grid: vec![1, 8, 12, 16, 32, 48, 64],
            lambda_difflm_grid: Vec::new(),
            seeds: sweep.seeds,
            record_timing: false,
            ppl_kind: difflm::schedule::DiffusionKind::Mdlm,
            ppl_grid: difflm::eval::DEFAULT_USDM_GRID,
        }
    }
}

fn param_keys() -> Vec<String> {
    match serde_json::to_value(Params::default()) {
        Ok(Value::Object(m)) => m.keys().cloned().collect(),
        _ => unreachable!("Params serializes to an object"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub paths: Paths,
    pub params: Params,
}

impl RunConfig {
    pub fn path(&self, key: &'static str) -> Result<&PathBuf, ConfigError> {
        let p = match key {
            "data" => self.paths.data.as_ref(),
            "output" => self.paths.output.as_ref(),
            "corpus" => self.paths.corpus.as_ref(),
            "replay" => self.paths.replay.as_ref(),
            _ => None,
        };
        p.ok_or(ConfigError::MissingPath { command: self.command, path: key })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

/// Value of a command-line override: JSON when it parses (numbers, bools,
/// arrays), otherwise a plain string.
fn flag_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn flag_key(flag: &str) -> Result<String, ConfigError> {
    let key = flag
        .strip_prefix("--")
        .ok_or_else(|| ConfigError::Invalid(format!("expected --key, got {flag:?}")))?;
    Ok(key.replace('-', "_"))
}

fn check_keys(map: &Map<String, Value>, known: &[String]) -> Result<(), ConfigError> {
    match map.keys().find(|k| !known.contains(k)) {
        Some(k) => Err(ConfigError::UnknownKey(k.clone())),
        None => Ok(()),
    }
}

/// Resolves a config document and `--key value` overrides. `command` (from
/// the command line) wins over the document's own `command` field.
pub fn parse_config(document: Option<&str>, command: Option<Command>, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let doc: Value = match document {
        Some(text) => serde_json::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?,
        None => Value::Object(Map::new()),
    };
    let Value::Object(mut root) = doc else {
        return Err(ConfigError::Invalid("config document must be a JSON object".into()));
    };
    check_keys(&root, &["command".into(), "paths".into(), "params".into()])?;
    let mut paths = match root.remove("paths") {
        Some(Value::Object(m)) => m,
        None => Map::new(),
        Some(_) => return Err(ConfigError::Invalid("paths must be an object".into())),
    };
    let mut params = match root.remove("params") {
        Some(Value::Object(m)) => m,
        None => Map::new(),
        Some(_) => return Err(ConfigError::Invalid("params must be an object".into())),
    };
    let path_keys: Vec<String> = PATH_KEYS.iter().map(|s| s.to_string()).collect();
    let param_keys = param_keys();
    check_keys(&paths, &path_keys)?;
    check_keys(&params, &param_keys)?;

    if overrides.len() % 2 != 0 {
        return Err(ConfigError::Invalid(format!("override {:?} has no value", overrides.last().unwrap())));
    }
    for pair in overrides.chunks(2) {
        let key = flag_key(&pair[0])?;
        if key == "hyps" {
            let list = paths.entry("hyps").or_insert_with(|| Value::Array(Vec::new()));
            if let Value::Array(a) = list {
                a.push(Value::String(pair[1].clone()));
            }
        } else if path_keys.contains(&key) {
            paths.insert(key, Value::String(pair[1].clone()));
        } else if param_keys.contains(&key) {
            params.insert(key, flag_value(&pair[1]));
        } else {
            return Err(ConfigError::UnknownKey(key));
        }
    }

    let command = match (command, root.remove("command")) {
        (Some(c), _) => c,
        (None, Some(Value::String(s))) => s.parse()?,
        (None, Some(_)) => return Err(ConfigError::Invalid("command must be a string".into())),
        (None, None) => return Err(ConfigError::Invalid("no command given".into())),
    };
    let paths: Paths = serde_json::from_value(Value::Object(paths)).map_err(|e| ConfigError::Invalid(format!("paths: {e}")))?;
    let params: Params =
        serde_json::from_value(Value::Object(params)).map_err(|e| ConfigError::Invalid(format!("params: {e}")))?;
    let cfg = RunConfig { command, paths, params };
    for key in command.required_paths() {
        cfg.path(key)?;
    }
    Ok(cfg)
}
