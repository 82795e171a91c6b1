//! `attriweight`: staged pipeline driver. Each subcommand reads the artifacts
//! of earlier stages from `<outdir>/<stage>/` and writes its own outputs,
//! the resolved config and a manifest to `<outdir>/<command>/`.

mod commands;
mod config;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::config::{Overrides, RunConfig};
use crate::error::{CliError, CliResult};
use crate::run::Run;

#[derive(Parser)]
#[command(name = "attriweight", version, about = "Parameter-group-weighted gradient data attribution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// INI config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, `section.key=value`; repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads for subset retraining, sweep cells and scoring.
    #[arg(long)]
    jobs: Option<usize>,
    /// Global seed (the `seed` key).
    #[arg(long)]
    seed: Option<u64>,
    /// Output root (the `outdir` key).
    #[arg(long)]
    outdir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the benchmark dataset, splits and label corruption.
    GenData(Common),
    /// Train the benchmark model.
    Train(Common),
    /// Extract projected per-group gradient features of the training set.
    Extract(Common),
    /// Attribution scores of the evaluation queries.
    Attribute(Common),
    /// Learn group weights from the weight-learning queries.
    LearnWeights(Common),
    /// Grid over k and lambda_reg, selected by LDS on weight-learning queries.
    Sweep(Common),
    /// LDS of unweighted (and learned-weight) scores; writes the ground truth.
    EvalLds(Common),
    /// Mislabel-detection AUC of self-influence.
    EvalMislabel(Common),
    /// Tail-patch log-probability change from the top proponents.
    EvalTailpatch(Common),
    /// Two-factor Recall@k experiment.
    EvalRecall(Common),
    /// LDS of each group's contribution alone.
    PerGroupLds(Common),
    /// Weight recovery on synthetic oracle contributions.
    OracleCheck(Common),
    /// Weights learned from noise-perturbed contributions, scored on clean queries.
    NoiseSweep(Common),
    /// Cosine between weights learned from TracIn and TRAK contributions.
    WeightCosine(Common),
}

type Handler = fn(&mut Run) -> CliResult<()>;

impl Command {
    fn parts(&self) -> (&'static str, &Common, Handler) {
        match self {
            Command::GenData(c) => ("gen-data", c, commands::gen_data),
            Command::Train(c) => ("train", c, commands::train),
            Command::Extract(c) => ("extract", c, commands::extract),
            Command::Attribute(c) => ("attribute", c, commands::attribute),
            Command::LearnWeights(c) => ("learn-weights", c, commands::learn),
            Command::Sweep(c) => ("sweep", c, commands::sweep_cmd),
            Command::EvalLds(c) => ("eval-lds", c, commands::eval_lds),
            Command::EvalMislabel(c) => ("eval-mislabel", c, commands::eval_mislabel),
            Command::EvalTailpatch(c) => ("eval-tailpatch", c, commands::eval_tailpatch),
            Command::EvalRecall(c) => ("eval-recall", c, commands::eval_recall),
            Command::PerGroupLds(c) => ("per-group-lds", c, commands::per_group),
            Command::OracleCheck(c) => ("oracle-check", c, commands::oracle_check),
            Command::NoiseSweep(c) => ("noise-sweep", c, commands::noise),
            Command::WeightCosine(c) => ("weight-cosine", c, commands::cosine),
        }
    }
}

fn execute(command: &Command) -> CliResult<PathBuf> {
    let (name, common, handler) = command.parts();
    if let Some(n) = common.jobs {
        if n == 0 {
            return Err(CliError::config("bad_value", "--jobs must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config("jobs", e.to_string()))?;
    }
    let cfg = RunConfig::resolve(&Overrides {
        config: common.config.as_deref(),
        set: &common.set,
        seed: common.seed,
        outdir: common.outdir.as_deref(),
    })?;
    let mut run = Run::new(cfg, name)?;
    handler(&mut run)?;
    run.finish()
}

fn main() -> ExitCode {
    let keys = config::keys_help();
    let cmd = Cli::command().mut_subcommands(|s| s.after_help(keys.clone()));
    let cli = match Cli::from_arg_matches(&cmd.get_matches()) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match execute(&cli.command) {
        Ok(dir) => {
            println!("outputs: {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {}", e.tag(), e.to_string().replace('\n', " "));
            ExitCode::from(e.exit_code())
        }
    }
}
