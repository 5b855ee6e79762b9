use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use difflm_cli::{dispatch, parse_config, Command};

/// Diffusion language model rescoring and joint CTC decoding.
///
/// Any parameter or path can be overridden after the command, for example
/// `difflm rescore --config run.json --K 256 --lambda-difflm 0.5`.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// gen-data, nbest, rescore, joint, eval, sweep or ppl.
    command: String,
    /// JSON config with `command`, `paths` and `params` objects.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `--key value` overrides.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    overrides: Vec<String>,
}

fn run(args: Args) -> anyhow::Result<()> {
    let command: Command = args.command.parse()?;
    let document = match &args.config {
        Some(path) => Some(
            std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cli: cannot read {}: {e}", path.display()))?,
        ),
        None => None,
    };
    let cfg = parse_config(document.as_deref(), Some(command), &args.overrides)?;
    dispatch(&cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
