//! Study orchestration: input files, the two analyses, simulation and reports.

pub mod demographics;
pub mod report;
pub mod simulate;
pub mod stimuli;
pub mod study1;
pub mod study2;

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use thiserror::Error;

use crate::measurement::MeasurementError;
use crate::protocol::ProtocolError;
use crate::rating::RatingError;
use crate::scale::ScaleError;
use crate::stats::{Frame, StatsError, Term};

pub use demographics::{Demographics, FilterReport, Gender, Race, RawDemographics};
pub use report::{emit_reports, ModelReport, ReportBundle, ReportFormat};
pub use simulate::{simulate_study, SimulationConfig};
pub use stimuli::{Device, ImageStimulus};
pub use study1::{run_study1, Study1Config, Study1Inputs};
pub use study2::{run_study2, Study2Config, Study2Inputs};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{file} header is {found:?}, expected {expected:?}")]
    Header { file: &'static str, expected: String, found: String },
    #[error("{file}: duplicate id {id:?}")]
    Duplicate { file: &'static str, id: String },
    #[error("{file} line {line}: {detail}")]
    Invalid { file: &'static str, line: usize, detail: String },
    #[error("no scale with id {0:?}")]
    MissingScale(String),
    #[error("no planted model for scale {0:?}")]
    MissingPlanted(String),
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Scale(#[from] ScaleError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Rating(#[from] RatingError),
}

pub fn open(path: &Path) -> Result<File, PipelineError> {
    File::open(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into())
}

/// Adds a categorical column and its term when it has at least two levels.
/// The preferred reference is used when present, otherwise the first level
/// in lexicographic order. Returns a note when the term had to change.
pub(crate) fn add_categorical(
    frame: Frame,
    terms: &mut Vec<Term>,
    name: &str,
    values: Vec<String>,
    reference: &str,
) -> Result<(Frame, Option<String>), StatsError> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in &values {
        *counts.entry(v.as_str()).or_default() += 1;
    }
    if counts.len() < 2 {
        let note = format!("{name}: single level {:?}, term omitted", counts.keys().next().copied().unwrap_or(""));
        return Ok((frame, Some(note)));
    }
    let note = (!counts.contains_key(reference)).then(|| {
        format!("{name}: reference {reference:?} absent, using {:?}", counts.keys().next().copied().unwrap_or(""))
    });
    terms.push(if note.is_some() { Term::categorical(name) } else { Term::categorical_ref(name, reference) });
    Ok((frame.with_categorical(name, values)?, note))
}
