//! Participant demographics and the fixed race/ethnicity mapping.

use std::collections::HashSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::PipelineError;

pub const DEMOGRAPHICS_HEADER: [&str; 6] = ["person_id", "race", "ethnicity", "gender", "age_bin", "location"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Race {
    Asian,
    Black,
    Hispanic,
    White,
    Other,
}

crate::text_enum!(Race {
    Asian => "Asian",
    Black => "Black",
    Hispanic => "Hispanic",
    White => "White",
    Other => "Other",
});

impl Race {
    pub const ALL: [Race; 5] = [Race::Asian, Race::Black, Race::Hispanic, Race::White, Race::Other];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    Female,
    Male,
    Unspecified,
}

crate::text_enum!(Gender { Female => "Female", Male => "Male", Unspecified => "Unspecified" });

/// Self-reported race answers and the category each maps to. Matching is
/// case-insensitive on the trimmed answer; anything unlisted is `Other`.
pub const RACE_TABLE: [(&str, Race); 9] = [
    ("asian", Race::Asian),
    ("black", Race::Black),
    ("black or african american", Race::Black),
    ("african american", Race::Black),
    ("white", Race::White),
    ("caucasian", Race::White),
    ("hispanic", Race::Hispanic),
    ("latino", Race::Hispanic),
    ("hispanic or latino", Race::Hispanic),
];

/// Ethnicity answers that override race with `Hispanic`.
pub const HISPANIC_ETHNICITY: [&str; 4] = ["hispanic", "latino", "hispanic or latino", "yes"];

pub fn map_race(race: &str, ethnicity: &str) -> Race {
    let eth = ethnicity.trim();
    if HISPANIC_ETHNICITY.iter().any(|h| eth.eq_ignore_ascii_case(h)) {
        return Race::Hispanic;
    }
    let race = race.trim();
    RACE_TABLE.iter().find(|(answer, _)| race.eq_ignore_ascii_case(answer)).map_or(Race::Other, |(_, r)| *r)
}

pub fn map_gender(gender: &str) -> Gender {
    match gender.trim().to_ascii_lowercase().as_str() {
        "female" | "f" | "woman" => Gender::Female,
        "male" | "m" | "man" => Gender::Male,
        _ => Gender::Unspecified,
    }
}

/// One row of the demographics file as written.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDemographics {
    pub person_id: String,
    pub race: String,
    pub ethnicity: String,
    pub gender: String,
    pub age_bin: String,
    pub location: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demographics {
    pub person_id: String,
    pub race: Race,
    pub gender: Gender,
    pub age_bin: String,
    pub location: String,
}

impl From<&RawDemographics> for Demographics {
    fn from(r: &RawDemographics) -> Self {
        Demographics {
            person_id: r.person_id.clone(),
            race: map_race(&r.race, &r.ethnicity),
            gender: map_gender(&r.gender),
            age_bin: r.age_bin.clone(),
            location: r.location.clone(),
        }
    }
}

pub fn read_demographics(reader: impl Read) -> Result<Vec<RawDemographics>, PipelineError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != DEMOGRAPHICS_HEADER {
        return Err(PipelineError::Header {
            file: "demographics",
            expected: DEMOGRAPHICS_HEADER.join(","),
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: RawDemographics = row?;
        if !seen.insert(row.person_id.clone()) {
            return Err(PipelineError::Duplicate { file: "demographics", id: row.person_id });
        }
        out.push(row);
    }
    Ok(out)
}

pub fn write_demographics(writer: impl Write, rows: &[RawDemographics]) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(DEMOGRAPHICS_HEADER)?;
    for r in rows {
        w.write_record([&r.person_id, &r.race, &r.ethnicity, &r.gender, &r.age_bin, &r.location])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemographicExclusion {
    RaceOther,
    GenderUnspecified,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub n_input: usize,
    pub n_kept: usize,
    pub removed: Vec<(String, DemographicExclusion)>,
}

impl FilterReport {
    pub fn removed_count(&self) -> usize {
        self.removed.len()
    }
}

/// Drops participants whose race maps to `Other` or whose gender is unspecified.
pub fn filter_participants(rows: &[RawDemographics]) -> (Vec<Demographics>, FilterReport) {
    let mut kept = Vec::new();
    let mut report = FilterReport { n_input: rows.len(), ..Default::default() };
    for raw in rows {
        let d = Demographics::from(raw);
        if d.race == Race::Other {
            report.removed.push((d.person_id, DemographicExclusion::RaceOther));
        } else if d.gender == Gender::Unspecified {
            report.removed.push((d.person_id, DemographicExclusion::GenderUnspecified));
        } else {
            kept.push(d);
        }
    }
    report.n_kept = kept.len();
    (kept, report)
}
