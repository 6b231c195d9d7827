use thiserror::Error;

/// Failures raised by the simulator and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("degenerate topology ({reason}): {elements:?}")]
    Topology { reason: String, elements: Vec<String> },
    #[error("nodes not connected to ground: {0:?}")]
    Connectivity(Vec<String>),
    #[error("ill-conditioned system: {0}")]
    Conditioning(String),
    #[error("schedule error: {0}")]
    Schedule(String),
    #[error("probe '{probe}' unavailable in segment starting at {segment_start} s")]
    Probe { probe: String, segment_start: f64 },
    #[error("phasor has zero amplitude; no peaks exist")]
    NoPeak,
    #[error("consistency error: {0}")]
    Consistency(String),
    #[error("pole of multiplicity > 1 near {0}")]
    UnsupportedMultiplicity(String),
    #[error("pole set is not closed under conjugation: {0}")]
    Symmetry(String),
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("LFSR seed must be nonzero")]
    DegenerateSeed,
    #[error("bit sequence length {0} is odd")]
    Length(usize),
    #[error("scheduling error: {0}")]
    Scheduling(String),
    #[error("cutoff {cutoff} Hz is not below the carrier {carrier} Hz")]
    Aliasing { cutoff: f64, carrier: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("envelope never held 95% of steady state (max fraction {max_fraction:.4})")]
    Timeout { max_fraction: f64 },
    #[error("reference power must be positive")]
    Reference,
    #[error("scaled efficiency {0} exceeds 1")]
    UnphysicalEfficiency(f64),
    #[error("reflection pole: Z = -Z0 at {0} rad/s")]
    Pole(f64),
    #[error("1 - Gamma vanishes at {0} rad/s")]
    Division(f64),
    #[error("frequency {0} rad/s lacks a central-difference stencil on the grid")]
    Stencil(f64),
    #[error("waveform band exceeds transfer grid: {0}")]
    Coverage(String),
}

impl Error {
    /// True for errors caused by malformed or inconsistent inputs.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse(_)
                | Error::Validation(_)
                | Error::Topology { .. }
                | Error::Connectivity(_)
                | Error::Schedule(_)
                | Error::Probe { .. }
                | Error::DegenerateSeed
                | Error::Length(_)
                | Error::Aliasing { .. }
                | Error::UnphysicalEfficiency(_)
                | Error::Stencil(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
