use std::path::PathBuf;

use raymimo::beams::BeamError;
use raymimo::dataset::DatasetError;
use raymimo::estimation::EstimationError;
use raymimo::synthesis::SynthesisError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("{0}")]
    Dataset(#[from] DatasetError),
    #[error("{error}{}", hint.as_deref().map(|h| format!("\nhint: {h}")).unwrap_or_default())]
    Synthesis {
        error: String,
        hint: Option<String>,
        code: &'static str,
    },
    #[error(transparent)]
    Beams(#[from] BeamError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error("validation failed: {0} error(s)")]
    Validation(usize),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// Process exit status for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Config { .. } => 3,
            CliError::Dataset(DatasetError::Synthesis { .. }) => 5,
            CliError::Dataset(_) => 4,
            CliError::Synthesis { .. } => 5,
            CliError::Beams(BeamError::Synthesis(_)) => 5,
            CliError::Beams(_) => 6,
            CliError::Estimation(_) => 7,
            CliError::Validation(_) => 8,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io_error",
            CliError::Config { .. } => "config_error",
            CliError::Dataset(e) => e.code(),
            CliError::Synthesis { code, .. } => code,
            CliError::Beams(e) => e.code(),
            CliError::Estimation(e) => e.code(),
            CliError::Validation(_) => "validation_failed",
        }
    }
}

pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}

/// Adds a remediation hint where the fix is known.
pub fn synthesis(error: impl std::fmt::Display, source: &SynthesisError) -> CliError {
    let hint = match source {
        SynthesisError::MissingAnchor { .. } => Some(
            "spherical synthesis needs interaction points on every ray; set synthesis.anchor_distance \
             and rerun `generate`, or select --regime planar"
                .to_string(),
        ),
        SynthesisError::MissingDelay { .. } => {
            Some("wideband synthesis needs path delays; set synthesis.subcarriers = 1 or supply delays".to_string())
        }
        SynthesisError::DegenerateGeometry { .. } => {
            Some("an interaction point coincides with an array element; move the anchors".to_string())
        }
        _ => None,
    };
    CliError::Synthesis {
        error: error.to_string(),
        hint,
        code: source.code(),
    }
}

/// Routes synthesis failures out of dataset errors so they get hints.
pub fn from_dataset(e: DatasetError) -> CliError {
    match &e {
        DatasetError::Synthesis { source, .. } => {
            let source = source.clone();
            synthesis(e, &source)
        }
        _ => CliError::Dataset(e),
    }
}
