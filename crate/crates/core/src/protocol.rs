//! Rating protocol shared by the survey service and the analyses: rating
//! records, randomized session plans and the append-only JSONL store.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::stimuli::Device;

pub const PROMPT_SELF_PALETTE: &str =
    "Using the scale below, select the number corresponding to the color that you think best matches your skin tone.";
pub const PROMPT_SELF_TEXT: &str = "Which of the following descriptions best matches your skin type?";
pub const PROMPT_IMAGE: &str =
    "Which item in the scale corresponds best to the complexion of the individual pictured below?";
pub const PROMPT_ATTENTIONAL: &str = "Select the number on the scale that matches the color swatch shown.";
pub const PROMPT_PREFERENCE: &str = "Which scale had a better match to your skin tone?";

/// Scale id recorded on preference tasks.
pub const PREFERENCE_SCALE_ID: &str = "preference";
/// Stimulus id recorded on self-rating tasks.
pub const SELF_STIMULUS: &str = "self";
pub const ATTENTIONAL_CHECKS: usize = 2;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("store line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("unknown study {0}")]
    UnknownStudy(u8),
    #[error("missing assets: {0}")]
    MissingAssets(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Background {
    White,
    Gray,
}

crate::text_enum!(Background { White => "white", Gray => "gray" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    #[serde(rename = "self")]
    SelfRating,
    Image,
    Preference,
    Attentional,
}

crate::text_enum!(TaskKind {
    SelfRating => "self",
    Image => "image",
    Preference => "preference",
    Attentional => "attentional",
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Study {
    One,
    Two,
}

impl TryFrom<u8> for Study {
    type Error = ProtocolError;

    fn try_from(v: u8) -> Result<Self, ProtocolError> {
        match v {
            1 => Ok(Study::One),
            2 => Ok(Study::Two),
            other => Err(ProtocolError::UnknownStudy(other)),
        }
    }
}

impl From<Study> for u8 {
    fn from(s: Study) -> u8 {
        match s {
            Study::One => 1,
            Study::Two => 2,
        }
    }
}

/// A scale position or, for preference tasks, the id of the preferred scale.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Response {
    Index(u32),
    Choice(String),
}

impl Response {
    pub fn index(&self) -> Option<u32> {
        match self {
            Response::Index(i) => Some(*i),
            Response::Choice(_) => None,
        }
    }

    pub fn choice(&self) -> Option<&str> {
        match self {
            Response::Index(_) => None,
            Response::Choice(c) => Some(c),
        }
    }
}

impl fmt::Display for Response {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Response::Index(i) => write!(f, "{i}"),
            Response::Choice(c) => f.write_str(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub rater_id: String,
    pub session_id: String,
    pub task_id: String,
    pub scale_id: String,
    pub task: TaskKind,
    /// Image id for image tasks, the true swatch index for attentional
    /// checks, `self` for self-ratings and the offered scale ids for
    /// preference tasks.
    pub stimulus_id: String,
    pub response: Response,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<Background>,
    pub presentation_order: u32,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

impl RatingRecord {
    /// Whose measured tone this response is judged against.
    pub fn target_id(&self) -> &str {
        match self.task {
            TaskKind::SelfRating | TaskKind::Preference => &self.rater_id,
            TaskKind::Image | TaskKind::Attentional => &self.stimulus_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ResponseOptions {
    /// Integer responses 1..=max.
    Range {
        max: u32,
    },
    Choice {
        choices: Vec<String>,
    },
}

impl ResponseOptions {
    pub fn accepts(&self, response: &Response) -> bool {
        match (self, response) {
            (ResponseOptions::Range { max }, Response::Index(i)) => (1..=*max).contains(i),
            (ResponseOptions::Choice { choices }, Response::Choice(c)) => choices.contains(c),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedTask {
    pub task_id: String,
    pub kind: TaskKind,
    pub scale_id: String,
    pub stimulus_id: String,
    pub options: ResponseOptions,
}

impl PlannedTask {
    pub fn prompt(&self, palette: bool) -> &'static str {
        match self.kind {
            TaskKind::SelfRating if palette => PROMPT_SELF_PALETTE,
            TaskKind::SelfRating => PROMPT_SELF_TEXT,
            TaskKind::Image => PROMPT_IMAGE,
            TaskKind::Attentional => PROMPT_ATTENTIONAL,
            TaskKind::Preference => PROMPT_PREFERENCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub session_id: String,
    pub rater_id: String,
    pub study: Study,
    pub background: Background,
    pub scale_order: Vec<String>,
    pub tasks: Vec<PlannedTask>,
    pub seed: u64,
}

impl SessionPlan {
    pub fn task(&self, task_id: &str) -> Option<(usize, &PlannedTask)> {
        self.tasks.iter().enumerate().find(|(_, t)| t.task_id == task_id)
    }

    /// Builds the record for answering task `position`.
    pub fn record(&self, position: usize, response: Response, timestamp: u64) -> RatingRecord {
        let t = &self.tasks[position];
        let palette = matches!(t.kind, TaskKind::Image | TaskKind::Attentional | TaskKind::Preference)
            || (t.kind == TaskKind::SelfRating && self.scale_order.contains(&t.scale_id));
        RatingRecord {
            rater_id: self.rater_id.clone(),
            session_id: self.session_id.clone(),
            task_id: t.task_id.clone(),
            scale_id: t.scale_id.clone(),
            task: t.kind,
            stimulus_id: t.stimulus_id.clone(),
            response,
            background: palette.then_some(self.background),
            presentation_order: position as u32 + 1,
            timestamp,
        }
    }
}

/// What a plan may draw from.
#[derive(Debug, Clone, Default)]
pub struct PlanAssets {
    /// Palette scale ids with their number of swatches.
    pub palette_scales: Vec<(String, u32)>,
    /// Text scale presented last in study 1, with its number of items.
    pub text_scale: Option<(String, u32)>,
    /// Study-2 images per subject.
    pub images: BTreeMap<String, Vec<(Device, String)>>,
}

pub fn create_plan(
    session_id: &str,
    rater_id: &str,
    study: Study,
    seed: u64,
    assets: &PlanAssets,
) -> Result<SessionPlan, ProtocolError> {
    if assets.palette_scales.is_empty() {
        return Err(ProtocolError::MissingAssets("no palette scales loaded".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tasks = Vec::new();
    let (background, scale_order) = match study {
        Study::One => {
            let background = if rng.random::<bool>() { Background::White } else { Background::Gray };
            let mut order = assets.palette_scales.clone();
            order.shuffle(&mut rng);
            for (scale_id, k) in &order {
                tasks.push((
                    TaskKind::SelfRating,
                    scale_id.clone(),
                    SELF_STIMULUS.to_string(),
                    ResponseOptions::Range { max: *k },
                ));
            }
            let ids: Vec<String> = order.iter().map(|(id, _)| id.clone()).collect();
            if ids.len() > 1 {
                tasks.push((
                    TaskKind::Preference,
                    PREFERENCE_SCALE_ID.to_string(),
                    ids.join("|"),
                    ResponseOptions::Choice { choices: ids.clone() },
                ));
            }
            if let Some((text_id, k)) = &assets.text_scale {
                tasks.push((
                    TaskKind::SelfRating,
                    text_id.clone(),
                    SELF_STIMULUS.to_string(),
                    ResponseOptions::Range { max: *k },
                ));
            }
            (background, ids)
        }
        Study::Two => {
            if assets.images.is_empty() || assets.images.values().any(Vec::is_empty) {
                return Err(ProtocolError::MissingAssets("study 2 needs images for every subject".into()));
            }
            let (scale_id, k) = assets.palette_scales[rng.random_range(0..assets.palette_scales.len())].clone();
            let mut subjects: Vec<&String> = assets.images.keys().collect();
            subjects.shuffle(&mut rng);
            for subject in subjects {
                let images = &assets.images[subject];
                let (_, image_id) = &images[rng.random_range(0..images.len())];
                tasks.push((TaskKind::Image, scale_id.clone(), image_id.clone(), ResponseOptions::Range { max: k }));
            }
            for _ in 0..ATTENTIONAL_CHECKS {
                let truth = if k > 2 { rng.random_range(2..k) } else { 1 };
                let at = rng.random_range(0..=tasks.len());
                tasks.insert(
                    at,
                    (TaskKind::Attentional, scale_id.clone(), truth.to_string(), ResponseOptions::Range { max: k }),
                );
            }
            (Background::Gray, vec![scale_id])
        }
    };
    Ok(SessionPlan {
        session_id: session_id.to_string(),
        rater_id: rater_id.to_string(),
        study,
        background,
        scale_order,
        tasks: tasks
            .into_iter()
            .enumerate()
            .map(|(i, (kind, scale_id, stimulus_id, options))| PlannedTask {
                task_id: format!("t{:02}", i + 1),
                kind,
                scale_id,
                stimulus_id,
                options,
            })
            .collect(),
        seed,
    })
}

/// One line of the rating store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum StoreEntry {
    Session(SessionPlan),
    Rating(RatingRecord),
}

pub fn entry_line(entry: &StoreEntry) -> String {
    let mut s = serde_json::to_string(entry).expect("store entries always serialize");
    s.push('\n');
    s
}

pub fn write_store(mut w: impl Write, entries: &[StoreEntry]) -> std::io::Result<()> {
    for e in entries {
        w.write_all(entry_line(e).as_bytes())?;
    }
    w.flush()
}

pub fn read_store(r: impl std::io::Read) -> Result<Vec<StoreEntry>, ProtocolError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| ProtocolError::Parse { line: i + 1, source })?);
    }
    Ok(out)
}

pub fn read_store_path(path: impl AsRef<Path>) -> Result<Vec<StoreEntry>, ProtocolError> {
    read_store(File::open(path)?)
}

/// The rating records of a store, in append order.
pub fn ratings_of(entries: &[StoreEntry]) -> Vec<RatingRecord> {
    entries
        .iter()
        .filter_map(|e| match e {
            StoreEntry::Rating(r) => Some(r.clone()),
            StoreEntry::Session(_) => None,
        })
        .collect()
}
