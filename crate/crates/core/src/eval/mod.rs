//! Evaluation: word error rate, perplexity bounds, synthetic benchmarks,
//! parameter sweeps and CSV reports.

mod benchmark;
mod ppl;
mod report;
mod sweep;
mod wer;

pub use benchmark::{
    format_id_lines, generate_benchmark, parse_id_lines, synthetic_corpus, Benchmark,
    BenchmarkParams, Manifest, Utterance,
};
pub use ppl::{bigram_perplexity, ppl_upper_bound, PplEstimate, DEFAULT_USDM_GRID};
pub use report::{emit_report, format_report, parse_report, ResultRow, REPORT_HEADER};
pub use sweep::{
    baseline_row, ctc_top1, greedy_hypotheses, joint_corpus, rescore_corpus, run_sweep, SweepInputs, SweepMode,
    SweepSpec,
};
pub use wer::{edit_distance, wer, EvalPair};
