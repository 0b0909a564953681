//! Image-rating study: raters score photographs of calibrated subjects.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::demographics::{filter_participants, read_demographics, Demographics, RawDemographics};
use super::report::{AccuracyTable, ExclusionSummary, ModelReport, ReportBundle, LIGHTNESS};
use super::stimuli::{read_stimuli, Device, ImageStimulus};
use super::study1::tones_at;
use super::{add_categorical, open, PipelineError};
use crate::color::{LabColor, PolarTone};
use crate::measurement::{ingest_measurements, MeasurementRecord, Site};
use crate::protocol::{ratings_of, read_store, RatingRecord, TaskKind};
use crate::rating::{exclusion_filter, icc_two_way, swatch_accuracy, ExclusionConfig, ExclusionReason, IccResult};
use crate::scale::{Scale, ScaleKind};
use crate::stats::{lmm_fit, DesignSpec, Frame, Term};

pub const RESPONSE: &str = "response";
pub const GROUP: &str = "subject";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Study2Config {
    /// Which measured subject tone the image ratings are compared with.
    pub site: Site,
    pub subject_race_reference: String,
    pub rater_race_reference: String,
    pub gender_reference: String,
    pub device_reference: String,
    pub exclusion: ExclusionConfig,
    /// Run the exclusion filter before modeling. It is idempotent, so
    /// pre-filtered stores pass through unchanged.
    pub apply_exclusion: bool,
    pub min_ratings: usize,
}

impl Default for Study2Config {
    fn default() -> Self {
        Self {
            site: Site::Face,
            subject_race_reference: "Black".into(),
            rater_race_reference: "Black".into(),
            gender_reference: "Female".into(),
            device_reference: "B".into(),
            exclusion: ExclusionConfig::default(),
            apply_exclusion: true,
            min_ratings: 10,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Study2Inputs {
    pub stimuli: Vec<ImageStimulus>,
    /// Calibrated readings of the photographed subjects.
    pub measurements: Vec<MeasurementRecord>,
    /// Subjects and raters.
    pub demographics: Vec<RawDemographics>,
    pub ratings: Vec<RatingRecord>,
    pub scales: Vec<Scale>,
}

impl Study2Inputs {
    pub fn load(
        stimuli: &Path,
        measurements: &Path,
        demographics: &Path,
        ratings: &Path,
        scales: Vec<Scale>,
    ) -> Result<Self, PipelineError> {
        Ok(Self {
            stimuli: read_stimuli(open(stimuli)?)?,
            measurements: ingest_measurements(open(measurements)?)?,
            demographics: read_demographics(open(demographics)?)?,
            ratings: ratings_of(&read_store(open(ratings)?)?),
            scales,
        })
    }
}

struct Joined<'a> {
    record: &'a RatingRecord,
    image: &'a ImageStimulus,
    tone: PolarTone,
    subject: &'a Demographics,
    rater: &'a Demographics,
}

fn image_rating_design(
    rows: &[Joined],
    config: &Study2Config,
    notes: &mut Vec<String>,
) -> Result<DesignSpec, PipelineError> {
    let col = |f: fn(&Joined) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let strings = |f: fn(&Joined) -> String| rows.iter().map(f).collect::<Vec<String>>();
    let mut frame = Frame::new()
        .with_numeric(RESPONSE, col(|j| f64::from(j.record.response.index().unwrap_or(0))))?
        .with_numeric(LIGHTNESS, col(|j| j.tone.l))?
        .with_numeric("hue", col(|j| j.tone.hue_deg))?
        .with_numeric("chromaticity", col(|j| j.tone.chroma))?
        .with_categorical(GROUP, strings(|j| j.image.subject_id.clone()))?;
    let mut terms = vec![Term::continuous(LIGHTNESS), Term::continuous("hue"), Term::continuous("chromaticity")];
    let categorical: [(&str, Vec<String>, &str); 5] = [
        ("subject_race", strings(|j| j.subject.race.to_string()), &config.subject_race_reference),
        ("subject_gender", strings(|j| j.subject.gender.to_string()), &config.gender_reference),
        ("device", strings(|j| j.image.device.to_string()), &config.device_reference),
        ("rater_race", strings(|j| j.rater.race.to_string()), &config.rater_race_reference),
        ("rater_gender", strings(|j| j.rater.gender.to_string()), &config.gender_reference),
    ];
    for (name, values, reference) in categorical {
        let (f, note) = add_categorical(frame, &mut terms, name, values, reference)?;
        frame = f;
        notes.extend(note);
    }
    Ok(DesignSpec::new(RESPONSE, terms, frame))
}

/// Targets × rater-slots table for one device: each subject's ratings of
/// that device's images in rater-id order, truncated to the smallest count.
pub fn device_table(rows: &[(&str, &str, f64)]) -> Vec<Vec<f64>> {
    let mut per_subject: BTreeMap<&str, Vec<(&str, f64)>> = BTreeMap::new();
    for &(subject, rater, v) in rows {
        per_subject.entry(subject).or_default().push((rater, v));
    }
    let k = per_subject.values().map(Vec::len).min().unwrap_or(0);
    per_subject
        .into_values()
        .map(|mut v| {
            v.sort_by(|a, b| a.0.cmp(b.0));
            v.into_iter().take(k).map(|(_, x)| x).collect()
        })
        .collect()
}

/// Fits the mixed model of every scale with a random intercept per subject,
/// then per-device ICC and pooled swatch accuracy.
pub fn run_study2(inputs: &Study2Inputs, config: &Study2Config) -> Result<ReportBundle, PipelineError> {
    let mut bundle = ReportBundle::default();
    let outcome = if config.apply_exclusion {
        exclusion_filter(&inputs.ratings, &config.exclusion)?
    } else {
        crate::rating::ExclusionOutcome { kept: inputs.ratings.clone(), excluded: Vec::new() }
    };
    let attentional_records =
        outcome.excluded.iter().filter(|e| matches!(e.reason, ExclusionReason::Attentional { .. })).count();
    bundle.exclusions = Some(ExclusionSummary {
        n_ratings: inputs.ratings.len(),
        n_kept: outcome.kept.len(),
        attentional_raters: outcome.excluded_raters(),
        attentional_records,
        outlier_records: outcome.excluded.len() - attentional_records,
    });

    let (people, filter) = filter_participants(&inputs.demographics);
    let people: HashMap<&str, &Demographics> = people.iter().map(|d| (d.person_id.as_str(), d)).collect();
    let tones = tones_at(&inputs.measurements, config.site, &mut bundle.notes);
    let images: HashMap<&str, &ImageStimulus> = inputs.stimuli.iter().map(|s| (s.image_id.as_str(), s)).collect();

    let mut by_scale: BTreeMap<&str, Vec<Joined>> = BTreeMap::new();
    let mut problems: BTreeMap<&'static str, usize> = BTreeMap::new();
    for r in outcome.kept.iter().filter(|r| r.task == TaskKind::Image && r.response.index().is_some()) {
        let Some(image) = images.get(r.stimulus_id.as_str()) else {
            *problems.entry("unknown image").or_default() += 1;
            continue;
        };
        let Some(tone) = tones.get(&image.subject_id) else {
            *problems.entry("subject without tone").or_default() += 1;
            continue;
        };
        let Some(subject) = people.get(image.subject_id.as_str()) else {
            *problems.entry("subject excluded or without demographics").or_default() += 1;
            continue;
        };
        let Some(rater) = people.get(r.rater_id.as_str()) else {
            *problems.entry("rater excluded or without demographics").or_default() += 1;
            continue;
        };
        by_scale.entry(&r.scale_id).or_default().push(Joined { record: r, image, tone: *tone, subject, rater });
    }
    for (what, n) in problems {
        bundle.notes.push(format!("{n} image ratings dropped: {what}"));
    }

    for (scale_id, rows) in by_scale {
        if rows.len() < config.min_ratings {
            bundle.notes.push(format!("{scale_id}: {} joined image ratings, model skipped", rows.len()));
            continue;
        }
        let mut notes = Vec::new();
        let spec = image_rating_design(&rows, config, &mut notes)?;
        bundle.notes.extend(notes.into_iter().map(|n| format!("{scale_id}: {n}")));
        match lmm_fit(&spec, GROUP) {
            Ok(m) => {
                for d in &m.diagnostics {
                    bundle.notes.push(format!("{scale_id}: mixed model diagnostic {d:?}"));
                }
                bundle.table3.push(ModelReport::from_mixed(scale_id, m));
            }
            Err(e) => bundle.notes.push(format!("{scale_id}: model failed: {e}")),
        }

        for device in Device::ALL {
            let cells: Vec<(&str, &str, f64)> = rows
                .iter()
                .filter(|j| j.image.device == device)
                .map(|j| {
                    let v = f64::from(j.record.response.index().unwrap_or(0));
                    (j.image.subject_id.as_str(), j.record.rater_id.as_str(), v)
                })
                .collect();
            if cells.is_empty() {
                continue;
            }
            match icc_two_way(&device_table(&cells)) {
                Ok(values) => bundle.table2.push(IccResult { scale_id: scale_id.to_string(), device, values }),
                Err(e) => bundle.notes.push(format!("{scale_id} device {device}: ICC skipped: {e}")),
            }
        }

        match inputs.scales.iter().find(|s| s.scale_id == scale_id && s.kind == ScaleKind::Palette) {
            Some(scale) => {
                let labs: HashMap<String, LabColor> =
                    rows.iter().map(|j| (j.image.image_id.clone(), j.tone.to_lab())).collect();
                bundle.accuracy.push(AccuracyTable {
                    scale_id: scale_id.to_string(),
                    background: None,
                    rows: swatch_accuracy(rows.iter().map(|j| j.record), &labs, scale)?,
                });
            }
            None => bundle.notes.push(format!("{scale_id}: no palette definition, accuracy skipped")),
        }
    }
    bundle.filter = Some(filter);
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn device_table_truncates_to_common_count() {
        let rows = [("S1", "r2", 3.0), ("S1", "r1", 2.0), ("S1", "r3", 9.0), ("S2", "r5", 7.0), ("S2", "r4", 6.0)];
        assert_eq!(device_table(&rows), vec![vec![2.0, 3.0], vec![6.0, 7.0]]);
    }
}
