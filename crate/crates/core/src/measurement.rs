//! Colorimeter readings: ingestion, bilateral averaging and the expected
//! minimum rating error derived from left/right disagreement.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color::{delta_e, srgb_to_lab, ColorError, LabColor, PolarTone, RgbColor};

pub const MEASUREMENT_HEADER: [&str; 7] = ["subject_id", "site", "side", "space", "c1", "c2", "c3"];

#[derive(Debug, Error)]
pub enum MeasurementError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: sRGB channel {value} outside [0, 255]")]
    ChannelRange { line: u64, value: String },
    #[error("line {line}: invalid CIELAB value: {source}")]
    InvalidLab { line: u64, source: ColorError },
    #[error("line {line}: duplicate reading for ({subject_id}, {site}, {side})")]
    Duplicate { line: u64, subject_id: String, site: Site, side: Side },
    #[error("subject {subject_id} has no {side} {site} reading")]
    MissingSide { subject_id: String, site: Site, side: Side },
    #[error("no subject has a complete bilateral {0} pair")]
    NoCompletePairs(Site),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Site {
    Hand,
    Face,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

crate::text_enum!(Site { Hand => "hand", Face => "face" });
crate::text_enum!(Side { Left => "left", Right => "right" });

/// The color as the instrument reported it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "space", rename_all = "lowercase")]
pub enum ColorReading {
    Srgb(RgbColor),
    Lab(LabColor),
}

impl ColorReading {
    pub fn lab(self) -> LabColor {
        match self {
            ColorReading::Srgb(c) => srgb_to_lab(c),
            ColorReading::Lab(c) => c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub subject_id: String,
    pub site: Site,
    pub side: Side,
    pub reading: ColorReading,
    /// Optional trailing `captured_at` column, kept verbatim.
    pub captured_at: Option<String>,
}

impl MeasurementRecord {
    pub fn lab(&self) -> LabColor {
        self.reading.lab()
    }
}

/// Per-subject bilateral averages. A site is `None` when either side is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectTone {
    pub subject_id: String,
    pub face: Option<LabColor>,
    pub hand: Option<LabColor>,
    pub face_polar: Option<PolarTone>,
    pub hand_polar: Option<PolarTone>,
}

impl SubjectTone {
    pub fn site(&self, site: Site) -> Option<LabColor> {
        match site {
            Site::Hand => self.hand,
            Site::Face => self.face,
        }
    }

    pub fn site_polar(&self, site: Site) -> Option<PolarTone> {
        match site {
            Site::Hand => self.hand_polar,
            Site::Face => self.face_polar,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncompletePair {
    pub subject_id: String,
    pub site: Site,
    pub missing: Side,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BilateralSummary {
    pub tones: Vec<SubjectTone>,
    pub incomplete: Vec<IncompletePair>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinErrorSummary {
    pub site: Site,
    pub delta_e_min: f64,
    pub per_subject: Vec<(String, f64)>,
    /// Subjects without both sides at this site.
    pub excluded: Vec<String>,
}

impl MinErrorSummary {
    pub fn n_pairs(&self) -> usize {
        self.per_subject.len()
    }
}

pub fn ingest_measurements_path(path: impl AsRef<Path>) -> Result<Vec<MeasurementRecord>, MeasurementError> {
    ingest_measurements(std::fs::File::open(path)?)
}

/// Parses the measurement CSV (`subject_id,site,side,space,c1,c2,c3`
/// with an optional `captured_at` column).
pub fn ingest_measurements(reader: impl Read) -> Result<Vec<MeasurementRecord>, MeasurementError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let prefix: Vec<&str> = headers.iter().take(MEASUREMENT_HEADER.len()).collect();
    if prefix != MEASUREMENT_HEADER {
        return Err(MeasurementError::Malformed {
            line: 1,
            message: format!("expected header {}", MEASUREMENT_HEADER.join(",")),
        });
    }
    let captured_col = headers.iter().position(|h| h == "captured_at");

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let malformed = |message: String| MeasurementError::Malformed { line, message };
        if row.len() < MEASUREMENT_HEADER.len() {
            return Err(malformed(format!("expected {} fields, found {}", MEASUREMENT_HEADER.len(), row.len())));
        }
        let subject_id = row[0].to_string();
        if subject_id.is_empty() {
            return Err(malformed("empty subject_id".into()));
        }
        let site: Site = row[1].parse().map_err(malformed)?;
        let side: Side = row[2].parse().map_err(malformed)?;
        let reading = match row[3].to_ascii_lowercase().as_str() {
            "srgb" => {
                let mut ch = [0u8; 3];
                for (k, field) in row.iter().skip(4).take(3).enumerate() {
                    let v: i64 =
                        field.parse().map_err(|_| malformed(format!("channel {field:?} is not an integer")))?;
                    ch[k] = u8::try_from(v)
                        .map_err(|_| MeasurementError::ChannelRange { line, value: field.to_string() })?;
                }
                ColorReading::Srgb(RgbColor::new(ch[0], ch[1], ch[2]))
            }
            "lab" => {
                let mut v = [0.0; 3];
                for (k, field) in row.iter().skip(4).take(3).enumerate() {
                    v[k] = field.parse().map_err(|_| malformed(format!("component {field:?} is not a number")))?;
                }
                let lab = LabColor::new(v[0], v[1], v[2])
                    .validate()
                    .map_err(|source| MeasurementError::InvalidLab { line, source })?;
                ColorReading::Lab(lab)
            }
            other => return Err(malformed(format!("unknown color space {other:?}"))),
        };
        if !seen.insert((subject_id.clone(), site, side)) {
            return Err(MeasurementError::Duplicate { line, subject_id, site, side });
        }
        let captured_at = captured_col.and_then(|i| row.get(i)).filter(|s| !s.is_empty()).map(str::to_string);
        out.push(MeasurementRecord { subject_id, site, side, reading, captured_at });
    }
    Ok(out)
}

/// Writes records in the ingestion format. Lab values use shortest
/// round-trip formatting so re-ingestion is lossless.
pub fn write_measurements(writer: impl Write, records: &[MeasurementRecord]) -> Result<(), MeasurementError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(MEASUREMENT_HEADER)?;
    for r in records {
        let (space, c) = match r.reading {
            ColorReading::Srgb(c) => ("srgb", [c.r.to_string(), c.g.to_string(), c.b.to_string()]),
            ColorReading::Lab(c) => ("lab", [c.l.to_string(), c.a.to_string(), c.b.to_string()]),
        };
        w.write_record([r.subject_id.as_str(), &r.site.to_string(), &r.side.to_string(), space, &c[0], &c[1], &c[2]])?;
    }
    w.flush()?;
    Ok(())
}

type SidePair = [Option<LabColor>; 2];

fn side_index(side: Side) -> usize {
    match side {
        Side::Left => 0,
        Side::Right => 1,
    }
}

fn group_by_subject(records: &[MeasurementRecord]) -> BTreeMap<&str, BTreeMap<Site, SidePair>> {
    let mut map: BTreeMap<&str, BTreeMap<Site, SidePair>> = BTreeMap::new();
    for r in records {
        map.entry(r.subject_id.as_str()).or_default().entry(r.site).or_default()[side_index(r.side)] = Some(r.lab());
    }
    map
}

/// Averages left and right readings per site in CIELAB.
pub fn average_bilateral(records: &[MeasurementRecord]) -> BilateralSummary {
    let mut summary = BilateralSummary::default();
    for (subject, sites) in group_by_subject(records) {
        let mut site_mean = |site: Site| -> Option<LabColor> {
            match sites.get(&site) {
                Some([Some(l), Some(r)]) => LabColor::mean([l, r]),
                Some([l, _]) => {
                    let missing = if l.is_some() { Side::Right } else { Side::Left };
                    summary.incomplete.push(IncompletePair { subject_id: subject.to_string(), site, missing });
                    None
                }
                None => None,
            }
        };
        let hand = site_mean(Site::Hand);
        let face = site_mean(Site::Face);
        summary.tones.push(SubjectTone {
            subject_id: subject.to_string(),
            face,
            hand,
            face_polar: face.map(PolarTone::from_lab),
            hand_polar: hand.map(PolarTone::from_lab),
        });
    }
    summary
}

/// ΔE between the right and left readings of one subject at one site.
pub fn bilateral_delta_e(records: &[MeasurementRecord], subject_id: &str, site: Site) -> Result<f64, MeasurementError> {
    let find = |side: Side| {
        records
            .iter()
            .find(|r| r.subject_id == subject_id && r.site == site && r.side == side)
            .map(MeasurementRecord::lab)
            .ok_or_else(|| MeasurementError::MissingSide { subject_id: subject_id.to_string(), site, side })
    };
    Ok(delta_e(find(Side::Right)?, find(Side::Left)?))
}

/// Mean bilateral ΔE over subjects with both sides measured at `site`.
pub fn expected_min_error(records: &[MeasurementRecord], site: Site) -> Result<MinErrorSummary, MeasurementError> {
    let mut per_subject = Vec::new();
    let mut excluded = Vec::new();
    for (subject, sites) in group_by_subject(records) {
        match sites.get(&site) {
            Some([Some(l), Some(r)]) => per_subject.push((subject.to_string(), delta_e(*r, *l))),
            Some(_) => excluded.push(subject.to_string()),
            None => {}
        }
    }
    if per_subject.is_empty() {
        return Err(MeasurementError::NoCompletePairs(site));
    }
    let delta_e_min = per_subject.iter().map(|(_, d)| d).sum::<f64>() / per_subject.len() as f64;
    Ok(MinErrorSummary { site, delta_e_min, per_subject, excluded })
}
