//! Versioned text formats for every file the tools read or write.
//!
//! JSON documents carry a `format` tag and an integer `version`; readers
//! reject any other version. Traces are JSON lines with a header record.
//! Measurement samples are plain CSV.

mod documents;
mod report;
mod samples;
mod trace;

pub use documents::{
    parse_jobs_file, parse_model_file, parse_plan_file, FitDiagnostics, FittedModel, JobsFile, ModelFile, PlanFile,
    JOBS_FORMAT, MODEL_FORMAT, PLAN_FORMAT,
};
pub use report::{parse_report, RunReport, REPORT_FORMAT};
pub use samples::{parse_loss_points, parse_speed_samples, write_loss_points, write_speed_samples};
pub use trace::{load_trace, parse_trace, save_trace, write_trace, TRACE_FORMAT};

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Version written by, and the only version accepted by, this build.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported {format} version {found}, this build reads version {expected}")]
    Version { format: &'static str, found: u32, expected: u32 },
    #[error("expected a {expected} file, found format tag {found:?}")]
    WrongFormat { expected: &'static str, found: String },
}

impl FormatError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        FormatError::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn json(line_offset: usize, err: serde_json::Error) -> Self {
        FormatError::Parse { line: line_offset + err.line().max(1), message: err.to_string() }
    }
}

#[derive(Deserialize)]
struct Envelope {
    format: String,
    version: u32,
}

/// Checks the `format` tag and version of a JSON record before decoding it
/// in full. `line` is the 1-based line the record starts on.
pub(crate) fn decode_versioned<T: DeserializeOwned>(
    text: &str,
    format: &'static str,
    line: usize,
) -> Result<T, FormatError> {
    let envelope: Envelope = serde_json::from_str(text).map_err(|e| FormatError::json(line - 1, e))?;
    if envelope.format != format {
        return Err(FormatError::WrongFormat { expected: format, found: envelope.format });
    }
    if envelope.version != FORMAT_VERSION {
        return Err(FormatError::Version { format, found: envelope.version, expected: FORMAT_VERSION });
    }
    serde_json::from_str(text).map_err(|e| FormatError::json(line - 1, e))
}

/// Pretty JSON with a trailing newline.
pub fn to_json_document<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("documents serialize");
    text.push('\n');
    text
}

pub fn read_file(path: &Path) -> Result<String, FormatError> {
    std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), FormatError> {
    std::fs::write(path, contents).map_err(|e| FormatError::io(path, e))
}
