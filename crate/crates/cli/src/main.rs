//! `repgeo`: property tests, layer sweeps, synthetic tables, diagnostics and
//! theory checks for token representation matrices.

mod commands;
mod failure;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::failure::{usage, CmdResult, Failure};

#[derive(Parser, Debug)]
#[command(
    name = "repgeo",
    version,
    about = "Average-vs-principal-component geometry of token representations"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Master seed (overrides `seed` in the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON report path [default: <command>.json]. CSV tables are written
    /// next to it.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON config file; flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "REPGEO_JOBS")]
    pub jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Batch property test on a representation bundle.
    Property(commands::property::PropertyArgs),
    /// Property at every layer of the toy model or of per-layer bundles.
    LayerSweep(commands::layers::SweepArgs),
    /// Each token taken from a random layer in a range.
    MixLayers(commands::layers::MixArgs),
    /// Last-layer tokens shuffled across sequences.
    Shuffle(commands::layers::ShuffleArgs),
    /// Property tests on matrices from per-dimension normal priors.
    SynthTable4(commands::synth::Table4Args),
    /// Fit a per-dimension normal model to a bundle and test samples from it.
    FitAndSynth(commands::synth::FitArgs),
    /// Per-dimension moments, Q-Q data and feature-covariance spread.
    Diagnostics(commands::diagnostics::DiagnosticsArgs),
    /// Covariance-entry moments, row-sum bounds and spectrum checks.
    TheoryCheck(commands::theory::TheoryArgs),
    /// Property tests on i.i.d. uniform matrices.
    BaselineRandom(commands::synth::BaselineArgs),
    /// Property tests on sentences built from a word-vector file.
    WordvecProperty(commands::wordvec::WordvecArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Property(_) => "property",
            Command::LayerSweep(_) => "layer-sweep",
            Command::MixLayers(_) => "mix-layers",
            Command::Shuffle(_) => "shuffle",
            Command::SynthTable4(_) => "synth-table4",
            Command::FitAndSynth(_) => "fit-and-synth",
            Command::Diagnostics(_) => "diagnostics",
            Command::TheoryCheck(_) => "theory-check",
            Command::BaselineRandom(_) => "baseline-random",
            Command::WordvecProperty(_) => "wordvec-property",
        }
    }
}

fn dispatch(command: &Command, common: &Common) -> CmdResult<report::Report> {
    use commands::*;
    match command {
        Command::Property(a) => property::run(a, common),
        Command::LayerSweep(a) => layers::sweep(a, common),
        Command::MixLayers(a) => layers::mix(a, common),
        Command::Shuffle(a) => layers::shuffle(a, common),
        Command::SynthTable4(a) => synth::table4(a, common),
        Command::FitAndSynth(a) => synth::fit(a, common),
        Command::Diagnostics(a) => diagnostics::run(a, common),
        Command::TheoryCheck(a) => theory::run(a, common),
        Command::BaselineRandom(a) => synth::baseline(a, common),
        Command::WordvecProperty(a) => wordvec::run(a, common),
    }
}

fn execute(cli: Cli) -> CmdResult<()> {
    let start = Instant::now();
    let jobs = match cli.common.jobs {
        Some(0) => return Err(usage("--jobs must be at least 1")),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::Data(e.into()))?;
    let name = cli.command.name();
    let report = pool.install(|| dispatch(&cli.command, &cli.common))?;
    let out = cli
        .common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{name}.json")));
    let written = report.write(&out)?;
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    eprintln!("elapsed {:.2}s", start.elapsed().as_secs_f64());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
