//! Configuration-driven experiment runners that write plot-ready CSV files.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod config;
pub mod error;
pub mod fit;
pub mod grid;
pub mod prbs;
pub mod report;
pub mod ringdown;
pub mod transition;

use std::path::Path;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{ExpError, Result};
pub use report::RunReport;

/// Seed used when neither the command line nor the config gives one.
pub const DEFAULT_SEED: u64 = 1;

/// Run `cfg` into `out_dir`, writing the CSV outputs and `report.txt`.
///
/// `config_text` is the document `cfg` was parsed from; it enters the input digest.
pub fn run(cfg: &ExperimentConfig, config_text: &str, out_dir: &Path, seed: Option<u64>) -> Result<RunReport> {
    let seed = seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    let mut netlists = vec![cfg.netlist_text(&cfg.netlist)?];
    if let Some(off) = &cfg.off_netlist {
        netlists.push(cfg.netlist_text(off)?);
    }
    let digest = report::input_digest(config_text, &netlists, seed);
    let mut out = report::OutputDir::create(out_dir)?;
    let metrics = match cfg.kind {
        ExperimentKind::Ringdown => ringdown::run_ringdown(cfg, &mut out)?,
        ExperimentKind::SingleTransition => transition::run_single_transition(cfg, &mut out)?,
        ExperimentKind::VdcSweep => transition::run_vdc_sweep(cfg, &mut out)?,
        ExperimentKind::PrbsEvm => prbs::run_prbs_evm(cfg, seed, &mut out)?,
        ExperimentKind::LtiGrid => grid::run_lti_grid(cfg, seed, &mut out)?,
    };
    out.finish(cfg.kind, digest, metrics)
}
