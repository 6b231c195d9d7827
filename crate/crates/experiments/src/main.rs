use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use damsim_experiments::{run, ExpError, ExperimentConfig, ExperimentKind};

#[derive(Parser)]
#[command(name = "damsim", about = "Direct antenna modulation experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// OFF-state ringdown traces and damped-sinusoid fit.
    Ringdown(RunArgs),
    /// Single phase transitions with rise times.
    Transition(RunArgs),
    /// Rise time against the DC hold level.
    VdcSweep(RunArgs),
    /// PRBS QPSK constellations and EVM table.
    PrbsEvm(RunArgs),
    /// Equivalent-LTI antenna grid with the DC-DAM trajectory.
    LtiGrid(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output` entry.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

fn execute(kind: ExperimentKind, args: &RunArgs) -> Result<(), ExpError> {
    let (cfg, text) = ExperimentConfig::load(&args.config)?;
    if cfg.kind != kind {
        return Err(ExpError::Config(format!("config describes a {} run, not {kind}", cfg.kind)));
    }
    let out = match (&args.out, &cfg.output) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => cfg.base_dir.join(p),
        (None, None) => return Err(ExpError::Config("no output directory given".into())),
    };
    let report = run(&cfg, &text, &out, args.seed)?;
    let mut stdout = std::io::stdout().lock();
    report.write(&mut stdout).map_err(|e| ExpError::io(&out, e))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::Ringdown(a) => (ExperimentKind::Ringdown, a),
        Command::Transition(a) => (ExperimentKind::SingleTransition, a),
        Command::VdcSweep(a) => (ExperimentKind::VdcSweep, a),
        Command::PrbsEvm(a) => (ExperimentKind::PrbsEvm, a),
        Command::LtiGrid(a) => (ExperimentKind::LtiGrid, a),
    };
    match execute(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
