//! Session lifecycle: plan creation, task serving and response validation
//! over a replayable store.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use skintone_core::color::{lab_to_srgb, LabColor, RgbColor};
use skintone_core::pipeline::stimuli::images_by_subject;
use skintone_core::pipeline::ImageStimulus;
use skintone_core::protocol::{
    create_plan, Background, PlanAssets, ProtocolError, RatingRecord, Response, ResponseOptions, SessionPlan,
    StoreEntry, Study, TaskKind,
};
use skintone_core::scale::{Scale, ScaleKind, TextItem};

use crate::store::Store;

#[derive(Debug, Error)]
pub enum SurveyError {
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("session {0:?} is complete")]
    Completed(String),
    #[error("task {0:?} is not part of this session")]
    UnknownTask(String),
    #[error("task {got:?} is not the current task {expected:?}")]
    StaleTask { expected: String, got: String },
    #[error("task {0:?} was already answered")]
    Duplicate(String),
    #[error("response {response} is not accepted by task {task_id:?}")]
    OutOfRange { task_id: String, response: Response },
    #[error("unknown image {0:?}")]
    UnknownImage(String),
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error("store replay failed at entry {entry}: {detail}")]
    Replay { entry: usize, detail: String },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("store write failed: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurveyConfig {
    /// L* of the neutral gray background.
    pub gray_lightness: f64,
    /// Root that stimulus `file` paths are resolved against.
    pub image_dir: Option<PathBuf>,
    /// fsync after every append.
    pub sync_writes: bool,
}

impl Default for SurveyConfig {
    fn default() -> Self {
        Self { gray_lightness: 50.0, image_dir: None, sync_writes: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Backgrounds {
    pub white: String,
    pub gray: String,
}

impl Backgrounds {
    pub fn hex(&self, b: Background) -> &str {
        match b {
            Background::White => &self.white,
            Background::Gray => &self.gray,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwatchView {
    pub index: u32,
    pub hex: String,
}

/// Everything a client needs to render one task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskView {
    pub session_id: String,
    pub task_id: String,
    pub kind: TaskKind,
    /// 1-based position in the session.
    pub position: u32,
    pub total: u32,
    pub prompt: String,
    pub background: Background,
    pub background_hex: String,
    pub scale_id: String,
    /// Lightest first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub swatches: Vec<SwatchView>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub items: Vec<TextItem>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub choices: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_url: Option<String>,
    /// Swatch to match on attentional checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_hex: Option<String>,
    pub options: ResponseOptions,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum NextTask {
    Task(Box<TaskView>),
    Complete { session_id: String, answered: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateSession {
    pub rater_id: String,
    pub study: Study,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub task_id: String,
    pub response: Response,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub record: RatingRecord,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalesPayload {
    pub backgrounds: Backgrounds,
    pub scales: Vec<Scale>,
}

#[derive(Debug)]
struct Session {
    plan: SessionPlan,
    answered: usize,
}

impl Session {
    /// Validates `req` against the current task and builds its record.
    fn accept(&self, req: &SubmitResponse, timestamp: u64) -> Result<RatingRecord, SurveyError> {
        let Some((position, task)) = self.plan.task(&req.task_id) else {
            return Err(SurveyError::UnknownTask(req.task_id.clone()));
        };
        if position < self.answered {
            return Err(SurveyError::Duplicate(req.task_id.clone()));
        }
        if position > self.answered {
            return Err(SurveyError::StaleTask {
                expected: self.plan.tasks[self.answered].task_id.clone(),
                got: req.task_id.clone(),
            });
        }
        if !task.options.accepts(&req.response) {
            return Err(SurveyError::OutOfRange { task_id: req.task_id.clone(), response: req.response.clone() });
        }
        Ok(self.plan.record(position, req.response.clone(), timestamp))
    }

    fn complete(&self) -> bool {
        self.answered == self.plan.tasks.len()
    }
}

type Clock = Box<dyn Fn() -> u64 + Send + Sync>;

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

pub struct SurveyService {
    scales: Vec<Scale>,
    stimuli: HashMap<String, ImageStimulus>,
    assets: PlanAssets,
    backgrounds: Backgrounds,
    image_dir: Option<PathBuf>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    store: Store,
    clock: Clock,
}

impl std::fmt::Debug for SurveyService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SurveyService").field("store", &self.store.path()).finish_non_exhaustive()
    }
}

fn plan_assets(scales: &[Scale], stimuli: &[ImageStimulus]) -> PlanAssets {
    PlanAssets {
        palette_scales: scales
            .iter()
            .filter(|s| s.kind == ScaleKind::Palette)
            .map(|s| (s.scale_id.clone(), s.len() as u32))
            .collect(),
        text_scale: scales.iter().find(|s| s.kind == ScaleKind::Text).map(|s| (s.scale_id.clone(), s.len() as u32)),
        images: images_by_subject(stimuli),
    }
}

impl SurveyService {
    /// Opens the store at `store_path` and replays it.
    pub fn open(
        scales: Vec<Scale>,
        stimuli: Vec<ImageStimulus>,
        config: &SurveyConfig,
        store_path: impl AsRef<Path>,
    ) -> Result<Self, SurveyError> {
        let (store, entries) = Store::open(store_path, config.sync_writes)?;
        let gray: RgbColor = lab_to_srgb(LabColor::new(config.gray_lightness, 0.0, 0.0)).rgb;
        let service = Self {
            assets: plan_assets(&scales, &stimuli),
            scales,
            stimuli: stimuli.into_iter().map(|s| (s.image_id.clone(), s)).collect(),
            backgrounds: Backgrounds { white: RgbColor::new(255, 255, 255).to_hex(), gray: gray.to_hex() },
            image_dir: config.image_dir.clone(),
            sessions: RwLock::new(HashMap::new()),
            store,
            clock: Box::new(now_ms),
        };
        service.replay(&entries)?;
        Ok(service)
    }

    /// Replaces the wall clock used for record timestamps.
    pub fn with_clock(mut self, clock: impl Fn() -> u64 + Send + Sync + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    fn replay(&self, entries: &[StoreEntry]) -> Result<(), SurveyError> {
        let mut sessions = self.sessions.write().unwrap_or_else(|e| e.into_inner());
        for (i, entry) in entries.iter().enumerate() {
            let fail = |detail: String| SurveyError::Replay { entry: i + 1, detail };
            match entry {
                StoreEntry::Session(plan) => {
                    if sessions.contains_key(&plan.session_id) {
                        return Err(fail(format!("session {:?} created twice", plan.session_id)));
                    }
                    let session = Session { plan: plan.clone(), answered: 0 };
                    sessions.insert(plan.session_id.clone(), Arc::new(Mutex::new(session)));
                }
                StoreEntry::Rating(r) => {
                    let slot = sessions
                        .get(&r.session_id)
                        .ok_or_else(|| fail(format!("orphan record for {:?}", r.session_id)))?;
                    let mut s = slot.lock().unwrap_or_else(|e| e.into_inner());
                    if s.complete() {
                        return Err(fail(format!("record after completion of {:?}", r.session_id)));
                    }
                    let req = SubmitResponse { task_id: r.task_id.clone(), response: r.response.clone() };
                    let expected = s.accept(&req, r.timestamp).map_err(|e| fail(e.to_string()))?;
                    if &expected != r {
                        return Err(fail(format!("record for {:?} does not match its plan", r.task_id)));
                    }
                    s.answered += 1;
                }
            }
        }
        Ok(())
    }

    pub fn backgrounds(&self) -> &Backgrounds {
        &self.backgrounds
    }

    pub fn scales(&self) -> ScalesPayload {
        ScalesPayload { backgrounds: self.backgrounds.clone(), scales: self.scales.clone() }
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, SurveyError> {
        let sessions = self.sessions.read().unwrap_or_else(|e| e.into_inner());
        sessions.get(id).cloned().ok_or_else(|| SurveyError::UnknownSession(id.to_string()))
    }

    /// Draws and persists a plan. Without a seed one is drawn from the OS.
    pub fn create_session(&self, req: &CreateSession) -> Result<SessionPlan, SurveyError> {
        if req.rater_id.trim().is_empty() {
            return Err(SurveyError::BadRequest("rater_id is empty".into()));
        }
        let seed = req.seed.unwrap_or_else(rand::random);
        let mut sessions = self.sessions.write().unwrap_or_else(|e| e.into_inner());
        let session_id = loop {
            let id = format!("s-{:016x}", rand::random::<u64>());
            if !sessions.contains_key(&id) {
                break id;
            }
        };
        let plan = create_plan(&session_id, &req.rater_id, req.study, seed, &self.assets)?;
        self.store.append(&StoreEntry::Session(plan.clone()))?;
        sessions.insert(session_id, Arc::new(Mutex::new(Session { plan: plan.clone(), answered: 0 })));
        Ok(plan)
    }

    /// The first unanswered task, or the completion marker. Calling it again
    /// without answering returns the same task.
    pub fn next_task(&self, session_id: &str) -> Result<NextTask, SurveyError> {
        let slot = self.session(session_id)?;
        let s = slot.lock().unwrap_or_else(|e| e.into_inner());
        if s.complete() {
            return Ok(NextTask::Complete { session_id: session_id.to_string(), answered: s.answered as u32 });
        }
        Ok(NextTask::Task(Box::new(self.view(&s.plan, s.answered))))
    }

    fn view(&self, plan: &SessionPlan, position: usize) -> TaskView {
        let task = &plan.tasks[position];
        let scale = self.scales.iter().find(|s| s.scale_id == task.scale_id);
        let palette = scale.is_some_and(|s| s.kind == ScaleKind::Palette);
        let shows_scale = task.kind != TaskKind::Preference;
        let swatches = match scale {
            Some(s) if shows_scale => {
                s.swatches.iter().map(|w| SwatchView { index: w.index, hex: w.srgb_hex.clone() }).collect()
            }
            _ => Vec::new(),
        };
        let items = match scale {
            Some(s) if shows_scale => s.items.clone(),
            _ => Vec::new(),
        };
        let choices = match &task.options {
            ResponseOptions::Choice { choices } => choices.clone(),
            ResponseOptions::Range { .. } => Vec::new(),
        };
        let target_hex = (task.kind == TaskKind::Attentional)
            .then(|| task.stimulus_id.parse::<u32>().ok())
            .flatten()
            .and_then(|i| scale?.swatch(i))
            .map(|w| w.srgb_hex.clone());
        TaskView {
            session_id: plan.session_id.clone(),
            task_id: task.task_id.clone(),
            kind: task.kind,
            position: position as u32 + 1,
            total: plan.tasks.len() as u32,
            prompt: task.prompt(palette).to_string(),
            background: plan.background,
            background_hex: self.backgrounds.hex(plan.background).to_string(),
            scale_id: task.scale_id.clone(),
            swatches,
            items,
            choices,
            image_url: (task.kind == TaskKind::Image).then(|| format!("/images/{}", task.stimulus_id)),
            target_hex,
            options: task.options.clone(),
        }
    }

    /// Validates and appends one response. Rejected submissions leave the
    /// store untouched.
    pub fn submit_response(&self, session_id: &str, req: &SubmitResponse) -> Result<Ack, SurveyError> {
        let slot = self.session(session_id)?;
        let mut s = slot.lock().unwrap_or_else(|e| e.into_inner());
        if s.complete() {
            return match s.plan.task(&req.task_id) {
                Some(_) => Err(SurveyError::Duplicate(req.task_id.clone())),
                None => Err(SurveyError::Completed(session_id.to_string())),
            };
        }
        let record = s.accept(req, (self.clock)())?;
        self.store.append(&StoreEntry::Rating(record.clone()))?;
        s.answered += 1;
        Ok(Ack { record, complete: s.complete() })
    }

    pub fn plan(&self, session_id: &str) -> Result<SessionPlan, SurveyError> {
        Ok(self.session(session_id)?.lock().unwrap_or_else(|e| e.into_inner()).plan.clone())
    }

    /// Number of answered tasks per session.
    pub fn progress(&self) -> HashMap<String, usize> {
        let sessions = self.sessions.read().unwrap_or_else(|e| e.into_inner());
        sessions.iter().map(|(id, s)| (id.clone(), s.lock().unwrap_or_else(|e| e.into_inner()).answered)).collect()
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    /// Image bytes and content type for a stimulus.
    pub fn image(&self, image_id: &str) -> Result<(Vec<u8>, &'static str), SurveyError> {
        let stimulus = self.stimuli.get(image_id).ok_or_else(|| SurveyError::UnknownImage(image_id.to_string()))?;
        let root = self.image_dir.as_deref().ok_or_else(|| SurveyError::UnknownImage(image_id.to_string()))?;
        let path = root.join(&stimulus.file);
        let bytes = std::fs::read(&path).map_err(|_| SurveyError::UnknownImage(image_id.to_string()))?;
        let content_type = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("jpg" | "jpeg") => "image/jpeg",
            Some("png") => "image/png",
            Some("webp") => "image/webp",
            _ => "application/octet-stream",
        };
        Ok((bytes, content_type))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use skintone_core::pipeline::Device;
    use skintone_core::scale::load_scale_dir;

    pub(crate) fn stimuli() -> Vec<ImageStimulus> {
        (1..=8)
            .flat_map(|s| {
                Device::ALL.map(|d| ImageStimulus {
                    image_id: format!("S{s}-{d}"),
                    subject_id: format!("S{s}"),
                    device: d,
                    image_region_lab: LabColor::new(40.0 + f64::from(s) * 2.0, 12.0, 18.0),
                    file: format!("images/S{s}-{d}.jpg"),
                })
            })
            .collect()
    }

    fn service(dir: &Path) -> SurveyService {
        let scales = load_scale_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/scales")).unwrap();
        let config = SurveyConfig { sync_writes: false, ..SurveyConfig::default() };
        SurveyService::open(scales, stimuli(), &config, dir.join("store.jsonl"))
            .unwrap()
            .with_clock(|| 1_700_000_000_000)
    }

    fn create(svc: &SurveyService, study: Study, seed: u64) -> SessionPlan {
        svc.create_session(&CreateSession { rater_id: "R1".into(), study, seed: Some(seed) }).unwrap()
    }

    fn current(svc: &SurveyService, id: &str) -> TaskView {
        match svc.next_task(id).unwrap() {
            NextTask::Task(t) => *t,
            NextTask::Complete { .. } => panic!("session complete"),
        }
    }

    fn answer(t: &TaskView) -> SubmitResponse {
        let response = match &t.options {
            ResponseOptions::Range { max } => Response::Index((*max).min(3)),
            ResponseOptions::Choice { choices } => Response::Choice(choices[0].clone()),
        };
        SubmitResponse { task_id: t.task_id.clone(), response }
    }

    fn run_to_end(svc: &SurveyService, id: &str) -> usize {
        let mut n = 0;
        while let NextTask::Task(t) = svc.next_task(id).unwrap() {
            svc.submit_response(id, &answer(&t)).unwrap();
            n += 1;
        }
        n
    }

    #[test]
    fn gray_is_neutral_mid_lightness() {
        let dir = tempfile::tempdir().unwrap();
        let svc = service(dir.path());
        let expected = lab_to_srgb(LabColor::new(50.0, 0.0, 0.0)).rgb.to_hex();
        assert_eq!(svc.backgrounds().gray, expected);
        assert_eq!(svc.backgrounds().white, "#ffffff");
    }

    #[test]
    fn same_seed_same_plan() {
        let dir = tempfile::tempdir().unwrap();
        let svc = service(dir.path());
        let (a, b) = (create(&svc, Study::One, 5), create(&svc, Study::One, 5));
        assert_ne!(a.session_id, b.session_id);
        assert_eq!((a.background, &a.scale_order, &a.tasks), (b.background, &b.scale_order, &b.tasks));
    }

    #[test]
    fn study2_plan_shows_each_subject_once() {
        let dir = tempfile::tempdir().unwrap();
        let svc = service(dir.path());
        let plan = create(&svc, Study::Two, 3);
        let images: Vec<&str> =
            plan.tasks.iter().filter(|t| t.kind == TaskKind::Image).map(|t| t.stimulus_id.as_str()).collect();
        assert_eq!(images.len(), 8);
        let mut subjects: Vec<&str> = images.iter().map(|id| id.split('-').next().unwrap()).collect();
        subjects.sort();
        subjects.dedup();
        assert_eq!(subjects.len(), 8);
    }

    #[test]
    fn background_split_is_balanced() {
        let dir = tempfile::tempdir().unwrap();
        let svc = service(dir.path());
        let white = (0..10_000u64).filter(|&s| create(&svc, Study::One, s).background == Background::White).count();
        assert!((white as f64 / 10_000.0 - 0.5).abs() < 0.02, "{white}");
    }

    #[test]
    fn fresh_session_serves_first_palette_task() {
        let dir = tempfile::tempdir().unwrap();
        let svc = service(dir.path());
        let plan = create(&svc, Study::One, 11);
        let t = current(&svc, &plan.session_id);
        assert_eq!(t.position, 1);
        assert_eq!(t.kind, TaskKind::SelfRating);
        assert_eq!(t.scale_id, plan.scale_order[0]);
        assert_eq!(t.background, plan.background);
        assert_eq!(t.background_hex, svc.backgrounds().hex(plan.background));
        assert_eq!(t.swatches.len(), 10);
        assert!(t.swatches.windows(2).all(|w| w[0].index + 1 == w[1].index));
        assert_eq!(t.prompt, skintone_core::protocol::PROMPT_SELF_PALETTE);
        assert_eq!(current(&svc, &plan.session_id), t);
    }

    #[test]
    fn swatch_hex_is_served_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let svc = service(dir.path());
        let plan = create(&svc, Study::One, 2);
        let t = current(&svc, &plan.session_id);
        let scale = svc.scales().scales.into_iter().find(|s| s.scale_id == t.scale_id).unwrap();
        let served: Vec<&str> = t.swatches.iter().map(|s| s.hex.as_str()).collect();
        let defined: Vec<&str> = scale.swatches.iter().map(|s| s.srgb_hex.as_str()).collect();
        assert_eq!(served, defined);
    }

    #[test]
    fn session_runs_to_completion() {
        let dir = tempfile::tempdir().unwrap();
        let svc = service(dir.path());
        let plan = create(&svc, Study::One, 4);
        assert_eq!(run_to_end(&svc, &plan.session_id), plan.tasks.len());
        assert_eq!(
            svc.next_task(&plan.session_id).unwrap(),
            NextTask::Complete { session_id: plan.session_id.clone(), answered: plan.tasks.len() as u32 }
        );
        let ratings = skintone_core::protocol::ratings_of(&svc.store().snapshot().unwrap());
        assert_eq!(ratings.len(), plan.tasks.len());
        let ids: Vec<&str> = ratings.iter().map(|r| r.task_id.as_str()).collect();
        let planned: Vec<&str> = plan.tasks.iter().map(|t| t.task_id.as_str()).collect();
        assert_eq!(ids, planned);
        let last = answer(&current_or_last(&svc, &plan));
        assert!(matches!(svc.submit_response(&plan.session_id, &last), Err(SurveyError::Duplicate(_))));
        let other = SubmitResponse { task_id: "t99".into(), response: Response::Index(1) };
        assert!(matches!(svc.submit_response(&plan.session_id, &other), Err(SurveyError::Completed(_))));
    }

    fn current_or_last(svc: &SurveyService, plan: &SessionPlan) -> TaskView {
        svc.view(plan, plan.tasks.len() - 1)
    }

    #[test]
    fn rejected_submissions_leave_store_unchanged() {
        let dir = tempfile::tempdir().unwrap();
        let svc = service(dir.path());
        let plan = create(&svc, Study::One, 8);
        let id = &plan.session_id;
        let before = svc.store().snapshot().unwrap();
        let t = current(&svc, id);
        let bad = SubmitResponse { task_id: t.task_id.clone(), response: Response::Index(11) };
        assert!(matches!(svc.submit_response(id, &bad), Err(SurveyError::OutOfRange { .. })));
        let zero = SubmitResponse { task_id: t.task_id.clone(), response: Response::Index(0) };
        assert!(matches!(svc.submit_response(id, &zero), Err(SurveyError::OutOfRange { .. })));
        let ahead = SubmitResponse { task_id: plan.tasks[1].task_id.clone(), response: Response::Index(1) };
        assert!(matches!(svc.submit_response(id, &ahead), Err(SurveyError::StaleTask { .. })));
        let unknown = SubmitResponse { task_id: "nope".into(), response: Response::Index(1) };
        assert!(matches!(svc.submit_response(id, &unknown), Err(SurveyError::UnknownTask(_))));
        assert!(matches!(svc.submit_response("missing", &bad), Err(SurveyError::UnknownSession(_))));
        assert_eq!(svc.store().snapshot().unwrap(), before);

        let ack = svc.submit_response(id, &answer(&t)).unwrap();
        assert_eq!(ack.record.presentation_order, 1);
        assert!(!ack.complete);
        let after = svc.store().snapshot().unwrap();
        assert_eq!(after.len(), before.len() + 1);
        assert!(matches!(svc.submit_response(id, &answer(&t)), Err(SurveyError::Duplicate(_))));
        assert_eq!(svc.store().snapshot().unwrap(), after);
    }

    #[test]
    fn attentional_and_image_views() {
        let dir = tempfile::tempdir().unwrap();
        let svc = service(dir.path());
        let plan = create(&svc, Study::Two, 21);
        let id = &plan.session_id;
        let mut kinds = Vec::new();
        while let NextTask::Task(t) = svc.next_task(id).unwrap() {
            match t.kind {
                TaskKind::Attentional => {
                    let truth: u32 = plan.tasks[t.position as usize - 1].stimulus_id.parse().unwrap();
                    let hex = &t.swatches[truth as usize - 1].hex;
                    assert_eq!(t.target_hex.as_ref(), Some(hex));
                }
                TaskKind::Image => {
                    assert!(t.image_url.as_ref().unwrap().starts_with("/images/S"));
                    assert_eq!(t.background, Background::Gray);
                }
                _ => panic!("unexpected task {t:?}"),
            }
            kinds.push(t.kind);
            svc.submit_response(id, &answer(&t)).unwrap();
        }
        assert_eq!(kinds.iter().filter(|k| **k == TaskKind::Attentional).count(), 2);
    }

    #[test]
    fn replay_restores_every_session() {
        let dir = tempfile::tempdir().unwrap();
        let (plans, progress) = {
            let svc = service(dir.path());
            let a = create(&svc, Study::One, 1);
            let b = create(&svc, Study::Two, 2);
            let c = create(&svc, Study::One, 3);
            run_to_end(&svc, &a.session_id);
            for _ in 0..3 {
                let t = current(&svc, &b.session_id);
                svc.submit_response(&b.session_id, &answer(&t)).unwrap();
            }
            (vec![a, b, c], svc.progress())
        };
        let svc = service(dir.path());
        assert_eq!(svc.progress(), progress);
        for p in &plans {
            assert_eq!(&svc.plan(&p.session_id).unwrap(), p);
        }
        let t = current(&svc, &plans[1].session_id);
        assert_eq!(t.position, 4);
        svc.submit_response(&plans[1].session_id, &answer(&t)).unwrap();
    }

    #[test]
    fn orphan_records_fail_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        let record = RatingRecord {
            rater_id: "R1".into(),
            session_id: "ghost".into(),
            task_id: "t01".into(),
            scale_id: "cst".into(),
            task: TaskKind::SelfRating,
            stimulus_id: "self".into(),
            response: Response::Index(2),
            background: None,
            presentation_order: 1,
            timestamp: 0,
        };
        std::fs::write(&path, skintone_core::protocol::entry_line(&StoreEntry::Rating(record))).unwrap();
        let scales = load_scale_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/scales")).unwrap();
        let err = SurveyService::open(scales, Vec::new(), &SurveyConfig::default(), &path).unwrap_err();
        assert!(matches!(err, SurveyError::Replay { entry: 1, .. }), "{err}");
    }

    #[test]
    fn study2_without_stimuli_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let scales = load_scale_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/scales")).unwrap();
        let svc =
            SurveyService::open(scales, Vec::new(), &SurveyConfig::default(), dir.path().join("s.jsonl")).unwrap();
        let err =
            svc.create_session(&CreateSession { rater_id: "R".into(), study: Study::Two, seed: None }).unwrap_err();
        assert!(matches!(err, SurveyError::Protocol(ProtocolError::MissingAssets(_))));
        assert!(svc.store().snapshot().unwrap().is_empty());
    }

    #[test]
    fn concurrent_sessions_are_independent() {
        let dir = tempfile::tempdir().unwrap();
        let svc = Arc::new(service(dir.path()));
        let handles: Vec<_> = (0..8u64)
            .map(|i| {
                let svc = Arc::clone(&svc);
                std::thread::spawn(move || {
                    let study = if i % 2 == 0 { Study::One } else { Study::Two };
                    let plan = create(&svc, study, i);
                    let n = run_to_end(&svc, &plan.session_id);
                    (plan, n)
                })
            })
            .collect();
        let results: Vec<(SessionPlan, usize)> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        let entries = svc.store().snapshot().unwrap();
        let ratings = skintone_core::protocol::ratings_of(&entries);
        assert_eq!(ratings.len(), results.iter().map(|(_, n)| n).sum::<usize>());
        for (plan, n) in &results {
            assert_eq!(*n, plan.tasks.len());
            let mine: Vec<u32> =
                ratings.iter().filter(|r| r.session_id == plan.session_id).map(|r| r.presentation_order).collect();
            assert_eq!(mine, (1..=*n as u32).collect::<Vec<_>>());
        }
        let progress = svc.progress();
        drop(svc);
        assert_eq!(service(dir.path()).progress(), progress);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]

        #[test]
        fn store_holds_exactly_the_accepted_submissions(
            seed in 0u64..1000,
            attempts in proptest::collection::vec((0usize..40, 0u32..13), 1..60),
        ) {
            let dir = tempfile::tempdir().unwrap();
            let svc = service(dir.path());
            let plan = create(&svc, Study::One, seed);
            let mut accepted = Vec::new();
            for (pick, value) in attempts {
                let task = &plan.tasks[pick % plan.tasks.len()];
                let response = match &task.options {
                    ResponseOptions::Range { .. } => Response::Index(value),
                    ResponseOptions::Choice { choices } => Response::Choice(choices[value as usize % choices.len()].clone()),
                };
                let req = SubmitResponse { task_id: task.task_id.clone(), response };
                if let Ok(ack) = svc.submit_response(&plan.session_id, &req) {
                    proptest::prop_assert!(task.options.accepts(&ack.record.response));
                    accepted.push(ack.record);
                }
            }
            let stored = skintone_core::protocol::ratings_of(&svc.store().snapshot().unwrap());
            proptest::prop_assert_eq!(&stored, &accepted);
            for (i, r) in stored.iter().enumerate() {
                proptest::prop_assert_eq!(r.presentation_order as usize, i + 1);
                proptest::prop_assert_eq!(&r.task_id, &plan.tasks[i].task_id);
            }
            proptest::prop_assert_eq!(svc.progress()[&plan.session_id], accepted.len());
        }
    }
}
