use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cyclealign::config::{parse_config, RunConfig};
use cyclealign::runner;

/// Correspondence learning between control domains from unpaired
/// trajectories, with zero-fine-tuning policy transfer.
#[derive(Parser)]
#[command(name = "cyclealign", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Run configuration file (`section.key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set align.seed=9`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (overrides run.out_dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Collect unpaired trajectory datasets for both domains.
    Collect(CommonArgs),
    /// Pretrain and freeze the domain-Y forward dynamics model.
    TrainForward(CommonArgs),
    /// Train the alignment model with the alternating schedule.
    TrainAlign(CommonArgs),
    /// Evaluate transfer and state estimation into report files.
    Eval(CommonArgs),
    /// Emit summary tables and SVG plots for a finished run.
    Report(CommonArgs),
}

fn load(args: &CommonArgs) -> cyclealign::Result<RunConfig> {
    let mut cfg = parse_config(&args.config, &args.set)?;
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("CYCLEALIGN_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }

    let cli = Cli::parse();
    let (args, run): (&CommonArgs, fn(&RunConfig) -> cyclealign::Result<()>) = match &cli.command {
        Command::Collect(a) => (a, runner::cmd_collect),
        Command::TrainForward(a) => (a, runner::cmd_train_forward),
        Command::TrainAlign(a) => (a, runner::cmd_train_align),
        Command::Eval(a) => (a, runner::cmd_eval),
        Command::Report(a) => (a, runner::cmd_report),
    };

    let cfg = match load(args) {
        Ok(cfg) => cfg,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(1);
        }
    };
    match run(&cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(runner::exit_code_for(&err) as u8)
        }
    }
}
