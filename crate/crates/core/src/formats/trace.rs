use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{decode_versioned, read_file, FormatError, FORMAT_VERSION};
use crate::workload::{Workload, WorkloadJob, WorkloadSpec};

pub const TRACE_FORMAT: &str = "ringsched-trace";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    /// Number of job records that follow.
    jobs: usize,
    seed: Option<u64>,
    spec: Option<WorkloadSpec>,
}

/// Writes the header line followed by one JSON record per job.
pub fn write_trace<W: Write>(mut out: W, workload: &Workload) -> std::io::Result<()> {
    let header = Header {
        format: TRACE_FORMAT.to_string(),
        version: FORMAT_VERSION,
        jobs: workload.jobs.len(),
        seed: workload.spec.as_ref().map(|s| s.rng_seed),
        spec: workload.spec.clone(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for job in &workload.jobs {
        serde_json::to_writer(&mut out, job)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn save_trace(path: &Path, workload: &Workload) -> Result<(), FormatError> {
    let file = std::fs::File::create(path).map_err(|e| FormatError::io(path, e))?;
    write_trace(std::io::BufWriter::new(file), workload).map_err(|e| FormatError::io(path, e))
}

pub fn load_trace(path: &Path) -> Result<Workload, FormatError> {
    parse_trace(&read_file(path)?)
}

pub fn parse_trace(text: &str) -> Result<Workload, FormatError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let Some((_, first)) = lines.next() else {
        return Err(FormatError::Parse { line: 1, message: "missing trace header".into() });
    };
    let header: Header = decode_versioned(first, TRACE_FORMAT, 1)?;

    let mut jobs = Vec::with_capacity(header.jobs.min(1 << 16));
    let mut last_line = 1;
    for (line, record) in lines {
        last_line = line;
        if jobs.len() == header.jobs {
            if record.trim().is_empty() {
                continue;
            }
            return Err(FormatError::Parse {
                line,
                message: format!("header declares {} jobs but more records follow", header.jobs),
            });
        }
        let job: WorkloadJob = serde_json::from_str(record).map_err(|e| FormatError::json(line - 1, e))?;
        if !job.arrival.is_finite() || job.arrival < 0.0 {
            return Err(FormatError::Parse { line, message: format!("invalid arrival time {}", job.arrival) });
        }
        if let Some(prev) = jobs.last().map(|j: &WorkloadJob| j.arrival) {
            if job.arrival < prev {
                return Err(FormatError::Parse {
                    line,
                    message: format!("arrival {} precedes the previous arrival {prev}", job.arrival),
                });
            }
        }
        if let Err(e) = job.profile.validate() {
            return Err(FormatError::Parse { line, message: format!("job {}: {e}", job.id) });
        }
        if !(job.true_epochs.is_finite() && job.true_epochs > 0.0) {
            return Err(FormatError::Parse { line, message: format!("invalid true_epochs {}", job.true_epochs) });
        }
        jobs.push(job);
    }
    if jobs.len() < header.jobs {
        return Err(FormatError::Parse {
            line: last_line + 1,
            message: format!("truncated trace: header declares {} jobs, found {}", header.jobs, jobs.len()),
        });
    }
    Ok(Workload { spec: header.spec, jobs })
}
