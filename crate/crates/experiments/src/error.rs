use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExpError {
    #[error(transparent)]
    Core(#[from] damsim_core::Error),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("damped-sinusoid fit failed (relative residual {residual:.3e})")]
    Fit { residual: f64 },
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub type Result<T> = std::result::Result<T, ExpError>;

impl ExpError {
    /// Process exit code: 2 for invalid inputs, 3 for numerical or output failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExpError::Core(e) if e.is_validation() => 2,
            ExpError::Config(_) => 2,
            _ => 3,
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> ExpError {
        ExpError::Io { path: path.display().to_string(), source }
    }
}
