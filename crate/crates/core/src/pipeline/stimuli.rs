//! Study-2 image stimuli with their precomputed face-region color.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::color::LabColor;

pub const STIMULI_HEADER: [&str; 7] = ["image_id", "subject_id", "device", "L", "a", "b", "file"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Device {
    B,
    D,
    E,
}

crate::text_enum!(Device { B => "B", D => "D", E => "E" });

impl Device {
    pub const ALL: [Device; 3] = [Device::B, Device::D, Device::E];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageStimulus {
    pub image_id: String,
    pub subject_id: String,
    pub device: Device,
    pub image_region_lab: LabColor,
    pub file: String,
}

#[derive(Debug, Deserialize)]
struct StimulusRow {
    image_id: String,
    subject_id: String,
    device: String,
    #[serde(rename = "L")]
    l: f64,
    a: f64,
    b: f64,
    file: String,
}

pub fn read_stimuli(reader: impl Read) -> Result<Vec<ImageStimulus>, PipelineError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != STIMULI_HEADER {
        return Err(PipelineError::Header {
            file: "stimuli",
            expected: STIMULI_HEADER.join(","),
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize().enumerate() {
        let row: StimulusRow = row?;
        let line = i + 2;
        let device =
            row.device.parse().map_err(|e: String| PipelineError::Invalid { file: "stimuli", line, detail: e })?;
        let lab = LabColor::new(row.l, row.a, row.b).validate().map_err(|e| PipelineError::Invalid {
            file: "stimuli",
            line,
            detail: e.to_string(),
        })?;
        if !seen.insert(row.image_id.clone()) {
            return Err(PipelineError::Duplicate { file: "stimuli", id: row.image_id });
        }
        out.push(ImageStimulus {
            image_id: row.image_id,
            subject_id: row.subject_id,
            device,
            image_region_lab: lab,
            file: row.file,
        });
    }
    Ok(out)
}

pub fn write_stimuli(writer: impl Write, rows: &[ImageStimulus]) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(STIMULI_HEADER)?;
    for s in rows {
        let c = s.image_region_lab;
        w.write_record([
            s.image_id.clone(),
            s.subject_id.clone(),
            s.device.to_string(),
            c.l.to_string(),
            c.a.to_string(),
            c.b.to_string(),
            s.file.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Images grouped by subject, in file order.
pub fn images_by_subject(stimuli: &[ImageStimulus]) -> BTreeMap<String, Vec<(Device, String)>> {
    let mut map: BTreeMap<String, Vec<(Device, String)>> = BTreeMap::new();
    for s in stimuli {
        map.entry(s.subject_id.clone()).or_default().push((s.device, s.image_id.clone()));
    }
    map
}
