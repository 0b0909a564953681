//! Self-rating study: each volunteer rates their own skin on every scale.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::demographics::{filter_participants, read_demographics, Demographics, RawDemographics};
use super::report::{AccuracyTable, ModelReport, PreferenceReport, ReportBundle, UtilizationReport, LIGHTNESS};
use super::{add_categorical, open, PipelineError};
use crate::color::{LabColor, PolarTone};
use crate::measurement::{average_bilateral, ingest_measurements, MeasurementRecord, Site};
use crate::protocol::{ratings_of, read_store, Background, RatingRecord, TaskKind};
use crate::rating::{preference_summary, scale_utilization, swatch_accuracy};
use crate::scale::{Scale, ScaleKind};
use crate::stats::{logistic_fit, stepwise_bic, DesignSpec, Frame, Term};

pub const RESPONSE: &str = "response";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Study1Config {
    /// Which measured tone the self-ratings are compared with.
    pub site: Site,
    pub race_reference: String,
    pub gender_reference: String,
    pub background_reference: String,
    pub location_reference: String,
    pub n_bins: usize,
    /// Scale whose preference share is reported.
    pub preference_focus: String,
    /// Smallest number of joined ratings worth modeling.
    pub min_ratings: usize,
}

impl Default for Study1Config {
    fn default() -> Self {
        Self {
            site: Site::Hand,
            race_reference: "White".into(),
            gender_reference: "Female".into(),
            background_reference: "gray".into(),
            location_reference: "MD".into(),
            n_bins: 8,
            preference_focus: "cst".into(),
            min_ratings: 10,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Study1Inputs {
    pub measurements: Vec<MeasurementRecord>,
    pub demographics: Vec<RawDemographics>,
    pub ratings: Vec<RatingRecord>,
    pub scales: Vec<Scale>,
}

impl Study1Inputs {
    pub fn load(
        measurements: &Path,
        demographics: &Path,
        ratings: &Path,
        scales: Vec<Scale>,
    ) -> Result<Self, PipelineError> {
        Ok(Self {
            measurements: ingest_measurements(open(measurements)?)?,
            demographics: read_demographics(open(demographics)?)?,
            ratings: ratings_of(&read_store(open(ratings)?)?),
            scales,
        })
    }
}

pub(crate) fn tones_at(
    records: &[MeasurementRecord],
    site: Site,
    notes: &mut Vec<String>,
) -> HashMap<String, PolarTone> {
    let summary = average_bilateral(records);
    let incomplete = summary.incomplete.iter().filter(|p| p.site == site).count();
    if incomplete > 0 {
        notes.push(format!("{incomplete} subjects lack a complete bilateral {site} pair"));
    }
    summary.tones.iter().filter_map(|t| t.site_polar(site).map(|p| (t.subject_id.clone(), p))).collect()
}

struct Joined<'a> {
    record: &'a RatingRecord,
    person: &'a Demographics,
    tone: PolarTone,
}

fn self_rating_design(
    rows: &[Joined],
    config: &Study1Config,
    notes: &mut Vec<String>,
) -> Result<DesignSpec, PipelineError> {
    let col = |f: fn(&Joined) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let mut frame = Frame::new()
        .with_numeric(RESPONSE, col(|j| f64::from(j.record.response.index().unwrap_or(0))))?
        .with_numeric(LIGHTNESS, col(|j| j.tone.l))?
        .with_numeric("hue", col(|j| j.tone.hue_deg))?
        .with_numeric("chromaticity", col(|j| j.tone.chroma))?;
    let mut terms = vec![Term::continuous(LIGHTNESS), Term::continuous("hue"), Term::continuous("chromaticity")];
    let mut categorical: Vec<(&str, Vec<String>, &str)> = vec![
        ("race", rows.iter().map(|j| j.person.race.to_string()).collect(), &config.race_reference),
        ("gender", rows.iter().map(|j| j.person.gender.to_string()).collect(), &config.gender_reference),
    ];
    if rows.iter().all(|j| j.record.background.is_some()) {
        categorical.push((
            "background",
            rows.iter().filter_map(|j| j.record.background).map(|b| b.to_string()).collect(),
            &config.background_reference,
        ));
    }
    categorical.push((
        "location",
        rows.iter().map(|j| j.person.location.clone()).collect(),
        &config.location_reference,
    ));
    for (name, values, reference) in categorical {
        let (f, note) = add_categorical(frame, &mut terms, name, values, reference)?;
        frame = f;
        notes.extend(note);
    }
    Ok(DesignSpec::new(RESPONSE, terms, frame))
}

/// Fits the self-rating model of every scale with stepwise BIC selection
/// and adds accuracy, utilization and preference summaries.
pub fn run_study1(inputs: &Study1Inputs, config: &Study1Config) -> Result<ReportBundle, PipelineError> {
    let mut bundle = ReportBundle::default();
    let (people, filter) = filter_participants(&inputs.demographics);
    let people: HashMap<&str, &Demographics> = people.iter().map(|d| (d.person_id.as_str(), d)).collect();
    let tones = tones_at(&inputs.measurements, config.site, &mut bundle.notes);
    let labs: HashMap<String, LabColor> = tones.iter().map(|(k, t)| (k.clone(), t.to_lab())).collect();

    let mut by_scale: BTreeMap<&str, Vec<Joined>> = BTreeMap::new();
    let (mut ineligible, mut unjoined) = (0usize, BTreeMap::<&str, usize>::new());
    for r in inputs.ratings.iter().filter(|r| r.task == TaskKind::SelfRating && r.response.index().is_some()) {
        let Some(person) = people.get(r.rater_id.as_str()) else {
            ineligible += 1;
            continue;
        };
        let Some(tone) = tones.get(&r.rater_id) else {
            *unjoined.entry(r.rater_id.as_str()).or_default() += 1;
            continue;
        };
        by_scale.entry(&r.scale_id).or_default().push(Joined { record: r, person, tone: *tone });
    }
    if ineligible > 0 {
        bundle.notes.push(format!("{ineligible} self-ratings from excluded or unknown raters dropped"));
    }
    if !unjoined.is_empty() {
        let ids: Vec<&str> = unjoined.keys().copied().collect();
        bundle.notes.push(format!("no {} tone for raters {}", config.site, ids.join(", ")));
    }

    let order: Vec<&str> = inputs.scales.iter().map(|s| s.scale_id.as_str()).chain(by_scale.keys().copied()).fold(
        Vec::new(),
        |mut v, id| {
            if !v.contains(&id) {
                v.push(id);
            }
            v
        },
    );
    for scale_id in order {
        let rows = by_scale.remove(scale_id).unwrap_or_default();
        if rows.len() < config.min_ratings {
            bundle.notes.push(format!("{scale_id}: {} joined self-ratings, model skipped", rows.len()));
            continue;
        }
        let mut notes = Vec::new();
        let spec = self_rating_design(&rows, config, &mut notes)?;
        bundle.notes.extend(notes.into_iter().map(|n| format!("{scale_id}: {n}")));
        match stepwise_bic(&spec) {
            Ok(sel) => bundle.table1.push(ModelReport::from_stepwise(scale_id, sel)),
            Err(e) => bundle.notes.push(format!("{scale_id}: model failed: {e}")),
        }

        let Some(scale) = inputs.scales.iter().find(|s| s.scale_id == scale_id) else {
            bundle.notes.push(format!("{scale_id}: no scale definition, accuracy skipped"));
            continue;
        };
        let records: Vec<&RatingRecord> = rows.iter().map(|j| j.record).collect();
        if scale.kind == ScaleKind::Palette {
            let mut groups: Vec<Option<Background>> = vec![None];
            groups.extend([Background::White, Background::Gray].map(Some));
            for background in groups {
                let subset = records.iter().copied().filter(|r| background.is_none() || r.background == background);
                bundle.accuracy.push(AccuracyTable {
                    scale_id: scale_id.to_string(),
                    background,
                    rows: swatch_accuracy(subset, &labs, scale)?,
                });
            }
        }
        match scale_utilization(records.iter().copied(), &labs, scale.len(), config.n_bins) {
            Ok(u) => bundle.utilization.push(UtilizationReport {
                scale_id: scale_id.to_string(),
                k: scale.len(),
                utilization: u,
            }),
            Err(e) => bundle.notes.push(format!("{scale_id}: utilization skipped: {e}")),
        }
    }

    let preferences: Vec<&RatingRecord> = inputs
        .ratings
        .iter()
        .filter(|r| {
            r.task == TaskKind::Preference && people.contains_key(r.rater_id.as_str()) && labs.contains_key(&r.rater_id)
        })
        .collect();
    if !preferences.is_empty() {
        let races = people.iter().map(|(id, d)| (id.to_string(), d.race)).collect();
        match preference_summary(preferences, &races, &labs, &config.preference_focus) {
            Ok(summary) => {
                let fit = logistic_fit(&summary.design)
                    .map_err(|e| bundle.notes.push(format!("preference model failed: {e}")))
                    .ok();
                bundle.preference =
                    Some(PreferenceReport { focal_scale: summary.focal_scale, cells: summary.cells, fit });
            }
            Err(e) => bundle.notes.push(format!("preference summary failed: {e}")),
        }
    }
    bundle.filter = Some(filter);
    Ok(bundle)
}
