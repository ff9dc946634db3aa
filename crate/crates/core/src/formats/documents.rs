use serde::{Deserialize, Serialize};

use super::{decode_versioned, FormatError, FORMAT_VERSION};
use crate::allocator::{AllocationPlan, ClusterConfig, JobState, Placement};
use crate::costmodel::ResourceModel;
use crate::fitting::LossCurveModel;

pub const MODEL_FORMAT: &str = "ringsched-model";
pub const JOBS_FORMAT: &str = "ringsched-jobs";
pub const PLAN_FORMAT: &str = "ringsched-plan";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedModel {
    Loss { model: LossCurveModel },
    Resource { model: ResourceModel },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Loss-space SSE for loss curves, relative epoch-time SSE for resource models.
    pub sse: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub fit: FittedModel,
    pub diagnostics: FitDiagnostics,
}

impl ModelFile {
    pub fn new(fit: FittedModel, diagnostics: FitDiagnostics) -> Self {
        Self { format: MODEL_FORMAT.into(), version: FORMAT_VERSION, fit, diagnostics }
    }
}

/// Input to the allocator: the jobs competing for one scheduling interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobsFile {
    pub format: String,
    pub version: u32,
    pub jobs: Vec<JobState>,
}

impl JobsFile {
    pub fn new(jobs: Vec<JobState>) -> Self {
        Self { format: JOBS_FORMAT.into(), version: FORMAT_VERSION, jobs }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub format: String,
    pub version: u32,
    pub algorithm: String,
    pub capacity: u32,
    pub plan: AllocationPlan,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<ClusterConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placement: Option<Placement>,
}

impl PlanFile {
    pub fn new(algorithm: &str, capacity: u32, plan: AllocationPlan) -> Self {
        Self {
            format: PLAN_FORMAT.into(),
            version: FORMAT_VERSION,
            algorithm: algorithm.into(),
            capacity,
            plan,
            cluster: None,
            placement: None,
        }
    }
}

pub fn parse_model_file(text: &str) -> Result<ModelFile, FormatError> {
    decode_versioned(text, MODEL_FORMAT, 1)
}

pub fn parse_jobs_file(text: &str) -> Result<JobsFile, FormatError> {
    let file: JobsFile = decode_versioned(text, JOBS_FORMAT, 1)?;
    let mut seen = std::collections::BTreeSet::new();
    for job in &file.jobs {
        if !seen.insert(job.job_id) {
            return Err(FormatError::Parse { line: 1, message: format!("duplicate job id {}", job.job_id) });
        }
    }
    Ok(file)
}

pub fn parse_plan_file(text: &str) -> Result<PlanFile, FormatError> {
    decode_versioned(text, PLAN_FORMAT, 1)
}
