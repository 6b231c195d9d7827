//! Experiment configuration documents.

use std::fmt;
use std::path::{Path, PathBuf};

use damsim_core::modulator::{TransmitterMode, MAXIMAL_TAPS_8};
use damsim_core::netlist::Netlist;
use damsim_core::presets;
use damsim_core::units::{parse_quantity, Unit};
use serde::Deserialize;

use crate::error::{ExpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Ringdown,
    SingleTransition,
    VdcSweep,
    PrbsEvm,
    LtiGrid,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Ringdown => "ringdown",
            ExperimentKind::SingleTransition => "single-transition",
            ExperimentKind::VdcSweep => "vdc-sweep",
            ExperimentKind::PrbsEvm => "prbs-evm",
            ExperimentKind::LtiGrid => "lti-grid",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Transmitter family named in a config; DC-DAM is expanded over `vdc_ratios`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    Lti,
    OcDam,
    DcDam,
}

impl ModeName {
    pub fn name(self) -> &'static str {
        match self {
            ModeName::Lti => "lti",
            ModeName::OcDam => "oc-dam",
            ModeName::DcDam => "dc-dam",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrbsSpec {
    #[serde(default = "default_register_bits")]
    pub register_bits: u32,
    #[serde(default = "default_taps")]
    pub taps: Vec<u32>,
    #[serde(default = "default_prbs_seed")]
    pub seed: u32,
    #[serde(default = "default_bits")]
    pub bits: usize,
}

fn default_register_bits() -> u32 {
    8
}
fn default_taps() -> Vec<u32> {
    MAXIMAL_TAPS_8.to_vec()
}
fn default_prbs_seed() -> u32 {
    1
}
fn default_bits() -> usize {
    256
}

impl Default for PrbsSpec {
    fn default() -> Self {
        PrbsSpec { register_bits: 8, taps: default_taps(), seed: 1, bits: 256 }
    }
}

/// One experiment. Physical values are unit-suffixed strings; fields a kind
/// does not use are ignored by its runner.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Built-in preset name or a netlist file relative to the config.
    pub netlist: String,
    /// OFF-state netlist for the ringdown.
    pub off_netlist: Option<String>,
    /// Frequency, or `"resonant"` for the ON-state zero-reactance frequency
    /// nearest the netlist's own source frequency.
    pub carrier: Option<String>,
    /// Resistance, or `"matched"` for `Re Z_in` at the carrier.
    pub source_resistance: Option<String>,
    pub amplitude: Option<String>,
    #[serde(default = "default_source")]
    pub source: String,
    #[serde(default = "default_rf_switch")]
    pub rf_switch: String,
    pub dc_switch: Option<String>,
    pub dc_source: Option<String>,
    #[serde(default = "default_samples_per_cycle")]
    pub samples_per_cycle: u32,
    #[serde(default = "default_parasitic_scale")]
    pub parasitic_scale: f64,
    #[serde(default)]
    pub modes: Vec<ModeName>,
    #[serde(default)]
    pub vdc_ratios: Vec<f64>,
    #[serde(default)]
    pub cycles_per_symbol: Vec<u32>,
    #[serde(default)]
    pub transitions: Vec<String>,
    #[serde(default)]
    pub prbs: PrbsSpec,
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub xi: Vec<f64>,
    #[serde(default)]
    pub chi: Vec<f64>,
    /// Radiation efficiency of the reference antenna; defaults to `1 − r_on/R_a`.
    pub efficiency: Option<f64>,
    #[serde(default = "default_off_cycles")]
    pub off_cycles: u32,
    #[serde(default = "default_fit_skip_cycles")]
    pub fit_skip_cycles: u32,
    /// Cycles simulated after a single transition.
    #[serde(default = "default_settle_cycles")]
    pub settle_cycles: u32,
    pub output: Option<String>,
    pub seed: Option<u64>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_source() -> String {
    "vcw".into()
}
fn default_rf_switch() -> String {
    "S1".into()
}
fn default_samples_per_cycle() -> u32 {
    32
}
fn default_parasitic_scale() -> f64 {
    1.0
}
fn default_off_cycles() -> u32 {
    20
}
fn default_fit_skip_cycles() -> u32 {
    5
}
fn default_settle_cycles() -> u32 {
    60
}

/// Resolved carrier setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CarrierSpec {
    Netlist,
    Resonant,
    Fixed(f64),
}

/// Resolved source-resistance setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResistanceSpec {
    Netlist,
    Matched,
    Fixed(f64),
}

fn config_err(msg: impl Into<String>) -> ExpError {
    ExpError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<ExperimentConfig> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(ExperimentConfig, String)> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok((ExperimentConfig::from_toml(&text, base)?, text))
    }

    pub fn validate(&self) -> Result<()> {
        self.netlist_text(&self.netlist)?;
        if let Some(off) = &self.off_netlist {
            self.netlist_text(off)?;
        }
        self.carrier_spec()?;
        self.resistance_spec()?;
        self.amplitude()?;
        if self.samples_per_cycle < 8 {
            return Err(config_err("samples_per_cycle must be at least 8"));
        }
        if !(self.parasitic_scale > 0.0 && self.parasitic_scale.is_finite()) {
            return Err(config_err("parasitic_scale must be positive"));
        }
        if self.vdc_ratios.iter().any(|v| !v.is_finite()) {
            return Err(config_err("vdc_ratios must be finite"));
        }
        self.transition_angles()?;
        let need = |ok: bool, what: &str| if ok { Ok(()) } else { Err(config_err(format!("{what} must be non-empty for {}", self.kind))) };
        match self.kind {
            ExperimentKind::Ringdown => {
                if self.off_cycles == 0 || self.fit_skip_cycles >= self.off_cycles {
                    return Err(config_err("off_cycles must exceed fit_skip_cycles"));
                }
            }
            ExperimentKind::SingleTransition => {
                need(!self.modes.is_empty(), "modes")?;
                need(!self.transitions.is_empty(), "transitions")?;
                if self.modes.contains(&ModeName::DcDam) {
                    need(!self.vdc_ratios.is_empty(), "vdc_ratios")?;
                }
            }
            ExperimentKind::VdcSweep => {
                need(!self.vdc_ratios.is_empty(), "vdc_ratios")?;
                need(!self.transitions.is_empty(), "transitions")?;
            }
            ExperimentKind::PrbsEvm => {
                need(!self.modes.is_empty(), "modes")?;
                need(!self.cycles_per_symbol.is_empty(), "cycles_per_symbol")?;
                if self.modes.contains(&ModeName::DcDam) {
                    need(!self.vdc_ratios.is_empty(), "vdc_ratios")?;
                }
            }
            ExperimentKind::LtiGrid => {
                need(!self.xi.is_empty(), "xi")?;
                need(!self.chi.is_empty(), "chi")?;
                need(!self.vdc_ratios.is_empty(), "vdc_ratios")?;
                if self.cycles_per_symbol.len() != 1 {
                    return Err(config_err("lti-grid takes exactly one cycles_per_symbol value"));
                }
                if let Some(eta) = self.efficiency {
                    if !(eta > 0.0 && eta <= 1.0) {
                        return Err(config_err("efficiency must lie in (0, 1]"));
                    }
                }
            }
        }
        if self.cycles_per_symbol.contains(&0) {
            return Err(config_err("cycles_per_symbol entries must be positive"));
        }
        let dam = matches!(self.kind, ExperimentKind::VdcSweep) || self.modes.contains(&ModeName::DcDam) || self.kind == ExperimentKind::LtiGrid;
        if dam && (self.dc_switch.is_none() || self.dc_source.is_none()) {
            return Err(config_err("DC-DAM runs need dc_switch and dc_source"));
        }
        Ok(())
    }

    /// Netlist source text for a preset name or a file path.
    pub fn netlist_text(&self, reference: &str) -> Result<String> {
        match reference {
            "reference_dam" => Ok(presets::REFERENCE_DAM.to_string()),
            "reference_off" => Ok(presets::REFERENCE_OFF.to_string()),
            "reference_dcdam" => Ok(presets::REFERENCE_DCDAM.to_string()),
            path => {
                let p = self.base_dir.join(path);
                std::fs::read_to_string(&p).map_err(|e| config_err(format!("netlist {}: {e}", p.display())))
            }
        }
    }

    pub fn load_netlist(&self, reference: &str) -> Result<Netlist> {
        Ok(Netlist::from_toml(&self.netlist_text(reference)?)?)
    }

    pub fn carrier_spec(&self) -> Result<CarrierSpec> {
        Ok(match self.carrier.as_deref() {
            None => CarrierSpec::Netlist,
            Some("resonant") => CarrierSpec::Resonant,
            Some(s) => CarrierSpec::Fixed(positive(parse_quantity(s, Unit::Hertz)?, "carrier")?),
        })
    }

    pub fn resistance_spec(&self) -> Result<ResistanceSpec> {
        Ok(match self.source_resistance.as_deref() {
            None => ResistanceSpec::Netlist,
            Some("matched") => ResistanceSpec::Matched,
            Some(s) => ResistanceSpec::Fixed(positive(parse_quantity(s, Unit::Ohm)?, "source_resistance")?),
        })
    }

    pub fn amplitude(&self) -> Result<Option<f64>> {
        self.amplitude
            .as_deref()
            .map(|s| positive(parse_quantity(s, Unit::Volt)?, "amplitude"))
            .transpose()
    }

    /// Phase transitions in radians.
    pub fn transition_angles(&self) -> Result<Vec<f64>> {
        self.transitions
            .iter()
            .map(|s| {
                let a = parse_quantity(s, Unit::Radian)?;
                let quarter = a / std::f64::consts::FRAC_PI_2;
                if (quarter - quarter.round()).abs() > 1e-9 || !(1.0..=3.0).contains(&quarter.round()) {
                    return Err(config_err(format!("transition '{s}' is not 90, 180 or 270 degrees")));
                }
                Ok(a)
            })
            .collect()
    }

    /// Every transmitter mode in run order; DC-DAM entries carry their ratio.
    pub fn expanded_modes(&self) -> Vec<(ModeName, Option<f64>)> {
        let mut out = Vec::new();
        for &m in &self.modes {
            if m == ModeName::DcDam {
                out.extend(self.vdc_ratios.iter().map(|&r| (m, Some(r))));
            } else {
                out.push((m, None));
            }
        }
        out
    }
}

fn positive(v: f64, what: &str) -> Result<f64> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(config_err(format!("{what} must be positive")))
    }
}

/// Transmitter mode for a named family, with `v_dc` in volts for DC-DAM.
pub fn transmitter_mode(name: ModeName, v_dc: Option<f64>) -> TransmitterMode {
    match name {
        ModeName::Lti => TransmitterMode::Lti,
        ModeName::OcDam => TransmitterMode::OcDam,
        ModeName::DcDam => TransmitterMode::DcDam { v_dc: v_dc.unwrap_or(0.0) },
    }
}

/// Run label such as `dc-dam-1.00`.
pub fn mode_label(name: ModeName, ratio: Option<f64>) -> String {
    match ratio {
        Some(r) => format!("{}-{r:.2}", name.name()),
        None => name.name().to_string(),
    }
}
