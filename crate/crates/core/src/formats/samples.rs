use serde::{Deserialize, Serialize};

use super::FormatError;
use crate::fitting::{LossPoint, SpeedSample};

#[derive(Serialize, Deserialize)]
struct SpeedRow {
    workers: u32,
    epochs_per_second: f64,
}

#[derive(Serialize, Deserialize)]
struct LossRow {
    step: u64,
    loss: f64,
}

fn read_rows<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<(usize, T)>, FormatError> {
    let parse_err = |e: csv::Error| {
        let line = e.position().map(|p| p.line() as usize).unwrap_or(1);
        FormatError::Parse { line, message: e.to_string() }
    };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(parse_err)?.clone();
    let mut record = csv::StringRecord::new();
    let mut rows = Vec::new();
    while reader.read_record(&mut record).map_err(parse_err)? {
        let line = record.position().map(|p| p.line() as usize).unwrap_or(rows.len() + 2);
        let row = record
            .deserialize(Some(&headers))
            .map_err(|e| FormatError::Parse { line, message: e.to_string() })?;
        rows.push((line, row));
    }
    Ok(rows)
}

/// Reads `workers,epochs_per_second` CSV.
pub fn parse_speed_samples(text: &str) -> Result<Vec<SpeedSample>, FormatError> {
    read_rows::<SpeedRow>(text)?
        .into_iter()
        .map(|(line, row)| {
            if row.workers == 0 || !(row.epochs_per_second.is_finite() && row.epochs_per_second > 0.0) {
                return Err(FormatError::Parse {
                    line,
                    message: format!("need workers >= 1 and a positive speed, got {} / {}", row.workers, row.epochs_per_second),
                });
            }
            Ok(SpeedSample { w: row.workers, speed: row.epochs_per_second })
        })
        .collect()
}

/// Reads `step,loss` CSV.
pub fn parse_loss_points(text: &str) -> Result<Vec<LossPoint>, FormatError> {
    read_rows::<LossRow>(text)?
        .into_iter()
        .map(|(line, row)| {
            if !row.loss.is_finite() {
                return Err(FormatError::Parse { line, message: format!("loss {} is not finite", row.loss) });
            }
            Ok(LossPoint { k: row.step, l: row.loss })
        })
        .collect()
}

pub fn write_speed_samples(samples: &[SpeedSample]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in samples {
        w.serialize(SpeedRow { workers: s.w, epochs_per_second: s.speed }).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

pub fn write_loss_points(points: &[LossPoint]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in points {
        w.serialize(LossRow { step: p.k, loss: p.l }).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}
