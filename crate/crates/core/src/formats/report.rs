use serde::{Deserialize, Serialize};

use super::{decode_versioned, FormatError, FORMAT_VERSION};
use crate::experiment::RunResult;

pub const REPORT_FORMAT: &str = "ringsched-report";

/// Output of one `simulate` invocation: one entry per strategy, scenario and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format: String,
    pub version: u32,
    pub tool_version: String,
    pub runs: Vec<RunResult>,
}

impl RunReport {
    pub fn new(runs: Vec<RunResult>) -> Self {
        Self {
            format: REPORT_FORMAT.into(),
            version: FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            runs,
        }
    }
}

pub fn parse_report(text: &str) -> Result<RunReport, FormatError> {
    decode_versioned(text, REPORT_FORMAT, 1)
}
