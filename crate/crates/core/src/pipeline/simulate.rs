//! Synthetic datasets with planted coefficients, written in the ingestion
//! formats so they can be fed back through the analyses.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::demographics::{write_demographics, RawDemographics};
use super::stimuli::{images_by_subject, write_stimuli, Device, ImageStimulus};
use super::PipelineError;
use crate::color::{LabColor, PolarTone};
use crate::measurement::{write_measurements, ColorReading, MeasurementRecord, Side, Site};
use crate::protocol::{create_plan, write_store, Background, PlanAssets, Response, StoreEntry, Study, TaskKind};
use crate::scale::{nearest_swatch, Scale, ScaleKind};

/// Hue of human skin as a function of L*, fitted to published ranges.
pub const HUE_QUADRATIC: [f64; 3] = [10.48, 2.352, -0.0288];
/// Chroma of human skin as a function of L*.
pub const CHROMA_QUADRATIC: [f64; 3] = [4.56, 0.764, -0.0096];

const BASE_TIMESTAMP: u64 = 1_700_000_000_000;

fn quad(c: [f64; 3], l: f64) -> f64 {
    c[0] + c[1] * l + c[2] * l * l
}

fn normal(mean: f64, sd: f64) -> Normal<f64> {
    Normal::new(mean, sd).expect("finite, non-negative sd")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
enum Group {
    White,
    Asian,
    Hispanic,
    Black,
}

impl Group {
    fn lightness(self) -> (f64, f64) {
        match self {
            Group::White => (59.0, 3.5),
            Group::Asian => (57.0, 3.5),
            Group::Hispanic => (56.0, 3.5),
            Group::Black => (50.0, 5.0),
        }
    }

    fn label(self) -> &'static str {
        match self {
            Group::White => "White",
            Group::Asian => "Asian",
            Group::Hispanic => "Hispanic",
            Group::Black => "Black",
        }
    }

    fn draw(rng: &mut impl Rng, probs: &[(Group, f64)]) -> Group {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for &(g, p) in probs {
            acc += p;
            if u < acc {
                return g;
            }
        }
        probs.last().map_or(Group::White, |p| p.0)
    }

    /// Raw answers as a participant might write them.
    fn raw_answers(self, rng: &mut impl Rng) -> (&'static str, &'static str) {
        match self {
            Group::White => ("White", "Not Hispanic or Latino"),
            Group::Asian => ("Asian", "Not Hispanic or Latino"),
            Group::Black => ("Black or African American", "Not Hispanic or Latino"),
            Group::Hispanic => (["White", "Other", "Black"][rng.random_range(0..3)], "Hispanic or Latino"),
        }
    }
}

const STUDY1_RACES: [(Group, f64); 4] =
    [(Group::White, 0.5), (Group::Asian, 0.18), (Group::Hispanic, 0.23), (Group::Black, 0.09)];
const STUDY2_RACES: [(Group, f64); 4] =
    [(Group::Black, 0.3), (Group::Asian, 0.15), (Group::Hispanic, 0.2), (Group::White, 0.35)];

fn skin_tone(rng: &mut impl Rng, l: f64) -> PolarTone {
    let hue = quad(HUE_QUADRATIC, l) + normal(0.0, 6.0).sample(rng);
    let chroma = (quad(CHROMA_QUADRATIC, l) + normal(0.0, 2.0).sample(rng)).max(0.5);
    PolarTone { l, hue_deg: hue, chroma }
}

fn draw_lightness(rng: &mut impl Rng, g: Group) -> f64 {
    let (m, sd) = g.lightness();
    normal(m, sd).sample(rng).clamp(25.0, 75.0)
}

/// Hand tones of a population with the study-1 ethno-racial mix, hue and
/// chroma scattered around the skin quadratics.
pub fn realistic_corpus(n: usize, seed: u64) -> Vec<PolarTone> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let g = Group::draw(&mut rng, &STUDY1_RACES);
            let l = draw_lightness(&mut rng, g);
            skin_tone(&mut rng, l)
        })
        .collect()
}

/// Left and right readings whose average is `tone` and whose ΔE is `distance`.
fn bilateral(rng: &mut impl Rng, subject: &str, site: Site, tone: LabColor, distance: f64) -> [MeasurementRecord; 2] {
    let unit = loop {
        let v: [f64; 3] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.1 && n <= 1.0 {
            break v.map(|x| x / n);
        }
    };
    let h = distance / 2.0;
    let side = |s: f64, side: Side| MeasurementRecord {
        subject_id: subject.to_string(),
        site,
        side,
        reading: ColorReading::Lab(LabColor::new(
            tone.l + s * h * unit[0],
            tone.a + s * h * unit[1],
            tone.b + s * h * unit[2],
        )),
        captured_at: None,
    };
    [side(-1.0, Side::Left), side(1.0, Side::Right)]
}

/// Linear model planted for one scale. Coefficients are keyed by design
/// column name, e.g. `lightness` or `race:Asian`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedScale {
    pub scale_id: String,
    pub k: u32,
    pub coefficients: BTreeMap<String, f64>,
    /// Share of response variance explained by the fixed part (plus the
    /// random intercept in study 2).
    pub r_squared: f64,
    pub target_mean: f64,
    #[serde(default)]
    pub sigma_b2: f64,
}

impl PlantedScale {
    fn new(scale_id: &str, k: u32, r_squared: f64, target_mean: f64, coefficients: &[(&str, f64)]) -> Self {
        Self {
            scale_id: scale_id.into(),
            k,
            coefficients: coefficients.iter().map(|&(n, v)| (n.to_string(), v)).collect(),
            r_squared,
            target_mean,
            sigma_b2: 0.0,
        }
    }

    pub fn coefficient(&self, name: &str) -> f64 {
        self.coefficients.get(name).copied().unwrap_or(0.0)
    }

    fn latent(&self, x: &BTreeMap<&str, f64>) -> f64 {
        self.coefficients.iter().map(|(name, b)| b * x.get(name.as_str()).copied().unwrap_or(0.0)).sum()
    }
}

/// Log-odds of preferring `focus` over the other palette scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedLogit {
    pub focus: String,
    pub intercept: f64,
    pub background_white: f64,
    /// Per unit of centered hand L*.
    pub lightness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedSubject {
    pub lightness: f64,
    pub white: bool,
    pub male: bool,
    pub hue_offset: f64,
    pub chroma_offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RatingMode {
    /// Responses follow the planted linear models.
    Planted,
    /// Responses are the nearest swatch to the target's tone plus Gaussian
    /// noise of the given SD before rounding.
    Oracle { noise_sd: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub study: Study,
    /// Eligible raters in study 1, raters in study 2.
    pub n: usize,
    pub seed: u64,
    pub mode: RatingMode,
    pub planted: Vec<PlantedScale>,
    pub preference: Option<PlantedLogit>,
    /// Extra raters, as a fraction of `n`, that the demographic filter removes.
    pub ineligible_fraction: f64,
    pub subjects: Vec<PlantedSubject>,
    /// Lightness of each device's images relative to the subject's face.
    pub device_shift: BTreeMap<Device, f64>,
    /// Extra response noise SD for images from a device.
    pub device_noise: BTreeMap<Device, f64>,
    /// Fraction of study-2 raters who fail one attentional check.
    pub attentional_failure_rate: f64,
    /// Fraction of image responses replaced by a far-off value.
    pub outlier_rate: f64,
    /// Mean left/right ΔE at the hand and face.
    pub bilateral_delta_e: [f64; 2],
}

impl SimulationConfig {
    /// Self-rating study with the published study-1 optimal models.
    pub fn study1(n: usize, seed: u64) -> Self {
        let cst = PlantedScale::new(
            "cst",
            10,
            0.6093,
            5.5,
            &[
                ("lightness", -0.2027),
                ("hue", 0.0287),
                ("race:Asian", 1.1802),
                ("race:Black", 1.2237),
                ("race:Hispanic", 0.9801),
                ("background:white", -1.1185),
                ("location:CA", -0.5409),
            ],
        );
        let mst = PlantedScale::new(
            "mst",
            10,
            0.5709,
            5.5,
            &[
                ("lightness", -0.1360),
                ("hue", 0.0308),
                ("race:Asian", 1.2161),
                ("race:Black", 1.1704),
                ("race:Hispanic", 1.0519),
                ("background:white", -0.7026),
                ("location:CA", -0.3752),
            ],
        );
        let fst = PlantedScale::new(
            "fst",
            6,
            0.3048,
            3.0,
            &[
                ("lightness", -0.0680),
                ("hue", 0.0193),
                ("chromaticity", 0.0446),
                ("race:Asian", 0.3033),
                ("race:Black", 0.3196),
                ("race:Hispanic", 0.2352),
            ],
        );
        Self {
            study: Study::One,
            n,
            seed,
            mode: RatingMode::Planted,
            planted: vec![cst, mst, fst],
            preference: Some(PlantedLogit {
                focus: "cst".into(),
                intercept: 1.2,
                background_white: -1.6,
                lightness: -0.08,
            }),
            ineligible_fraction: 0.05,
            subjects: Vec::new(),
            device_shift: BTreeMap::new(),
            device_noise: BTreeMap::new(),
            attentional_failure_rate: 0.0,
            outlier_rate: 0.0,
            bilateral_delta_e: [3.3, 3.5],
        }
    }

    /// Image-rating study with the published study-2 mixed models.
    pub fn study2(n: usize, seed: u64) -> Self {
        let common = |l, h, c, sw, sm, ra, rh, rw, rm, dd, de| {
            vec![
                ("lightness", l),
                ("hue", h),
                ("chromaticity", c),
                ("subject_race:White", sw),
                ("subject_gender:Male", sm),
                ("rater_race:Asian", ra),
                ("rater_race:Hispanic", rh),
                ("rater_race:White", rw),
                ("rater_gender:Male", rm),
                ("device:D", dd),
                ("device:E", de),
            ]
        };
        let cst = common(-0.1640, 0.0159, -0.0439, -2.1827, -0.1304, 0.2907, 0.2956, 0.3467, -0.0794, -0.2960, 0.6453);
        let mst = common(-0.1173, 0.0053, -0.0188, -2.0687, -0.1924, 0.2677, 0.2655, 0.3201, -0.0549, -0.3198, 0.2769);
        let subject = |lightness, white, male, hue_offset, chroma_offset| PlantedSubject {
            lightness,
            white: white == 1,
            male: male == 1,
            hue_offset,
            chroma_offset,
        };
        Self {
            study: Study::Two,
            n,
            seed,
            mode: RatingMode::Planted,
            planted: vec![
                PlantedScale::new("cst", 10, 0.8873, 5.5, &cst),
                PlantedScale::new("mst", 10, 0.8352, 5.5, &mst),
            ],
            preference: None,
            ineligible_fraction: 0.0,
            subjects: vec![
                subject(47.0, 0, 0, 2.0, 1.0),
                subject(40.0, 0, 1, -3.0, -1.5),
                subject(60.0, 1, 0, 1.5, 0.5),
                subject(55.0, 1, 1, -1.0, 1.2),
                subject(43.0, 0, 0, -2.0, -0.8),
                subject(51.0, 0, 1, 3.0, 0.3),
                subject(58.0, 1, 0, -1.5, -1.0),
                subject(53.0, 1, 1, 1.0, 0.7),
            ],
            device_shift: BTreeMap::from([(Device::B, 0.0), (Device::D, 1.1), (Device::E, -21.7)]),
            device_noise: BTreeMap::new(),
            attentional_failure_rate: 0.02,
            outlier_rate: 0.0,
            bilateral_delta_e: [3.3, 3.5],
        }
    }

    pub fn planted(&self, scale_id: &str) -> Option<&PlantedScale> {
        self.planted.iter().find(|p| p.scale_id == scale_id)
    }
}

/// A generated dataset in memory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimulatedData {
    pub measurements: Vec<MeasurementRecord>,
    pub demographics: Vec<RawDemographics>,
    pub stimuli: Vec<ImageStimulus>,
    pub store: Vec<StoreEntry>,
}

impl SimulatedData {
    pub fn ratings(&self) -> Vec<crate::protocol::RatingRecord> {
        crate::protocol::ratings_of(&self.store)
    }
}

struct Person {
    id: String,
    group: Group,
    male: bool,
    california: bool,
    eligible: bool,
    hand: PolarTone,
}

fn plan_assets(
    config: &SimulationConfig,
    scales: &[Scale],
    images: BTreeMap<String, Vec<(Device, String)>>,
) -> Result<PlanAssets, PipelineError> {
    let mut assets = PlanAssets { images, ..Default::default() };
    let wanted = |s: &Scale| match config.mode {
        RatingMode::Planted => config.planted(&s.scale_id).is_some(),
        RatingMode::Oracle { .. } => true,
    };
    for s in scales.iter().filter(|s| wanted(s)) {
        let k = match config.mode {
            RatingMode::Planted => config.planted(&s.scale_id).map_or(s.len() as u32, |p| p.k),
            RatingMode::Oracle { .. } => s.len() as u32,
        };
        match s.kind {
            ScaleKind::Palette => assets.palette_scales.push((s.scale_id.clone(), k)),
            ScaleKind::Text if config.study == Study::One => assets.text_scale = Some((s.scale_id.clone(), k)),
            ScaleKind::Text => {}
        }
    }
    if config.mode == RatingMode::Planted {
        for p in &config.planted {
            if !scales.iter().any(|s| s.scale_id == p.scale_id) {
                return Err(PipelineError::MissingScale(p.scale_id.clone()));
            }
        }
    }
    Ok(assets)
}

/// Shift that moves the latents to the target mean, and the noise SD that
/// leaves the planted R² after rounding.
fn calibration(latent: &[f64], planted: &PlantedScale) -> (f64, f64) {
    if latent.is_empty() {
        return (0.0, 0.0);
    }
    let n = latent.len() as f64;
    let mean = latent.iter().sum::<f64>() / n;
    let var = latent.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / n;
    let explained = var + planted.sigma_b2;
    let sd = (explained * (1.0 - planted.r_squared) / planted.r_squared - 1.0 / 12.0).max(0.0).sqrt();
    (planted.target_mean - mean, sd)
}

fn clamp_round(v: f64, k: u32) -> u32 {
    v.round().clamp(1.0, f64::from(k)) as u32
}

fn timestamp(session: usize, position: usize) -> u64 {
    BASE_TIMESTAMP + session as u64 * 600_000 + position as u64 * 5_000
}

fn rater_id(i: usize) -> String {
    format!("R{:05}", i + 1)
}

/// Generates a dataset; deterministic in `config.seed`.
pub fn simulate(config: &SimulationConfig, scales: &[Scale]) -> Result<SimulatedData, PipelineError> {
    match config.study {
        Study::One => simulate_study1(config, scales),
        Study::Two => simulate_study2(config, scales),
    }
}

fn raw_person(rng: &mut impl Rng, p: &Person) -> RawDemographics {
    let other_race = !p.eligible && rng.random::<bool>();
    let (race, ethnicity) = if other_race { ("Other", "Not Hispanic or Latino") } else { p.group.raw_answers(rng) };
    let gender = match (p.eligible || other_race, p.male) {
        (false, _) => "Prefer not to say",
        (true, true) => "Male",
        (true, false) => "Female",
    };
    RawDemographics {
        person_id: p.id.clone(),
        race: race.into(),
        ethnicity: ethnicity.into(),
        gender: gender.into(),
        age_bin: ["18-29", "30-49", "50-64", "65+"][rng.random_range(0..4)].into(),
        location: if p.california { "CA" } else { "MD" }.into(),
    }
}

fn simulate_study1(config: &SimulationConfig, scales: &[Scale]) -> Result<SimulatedData, PipelineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let assets = plan_assets(config, scales, BTreeMap::new())?;
    let extra = (config.n as f64 * config.ineligible_fraction).round() as usize;
    let mut eligible: Vec<bool> = (0..config.n + extra).map(|i| i < config.n).collect();
    eligible.shuffle(&mut rng);

    let mut data = SimulatedData::default();
    let mut people = Vec::with_capacity(eligible.len());
    for (i, &ok) in eligible.iter().enumerate() {
        let group = Group::draw(&mut rng, &STUDY1_RACES);
        let l = draw_lightness(&mut rng, group);
        let person = Person {
            id: rater_id(i),
            group,
            male: rng.random(),
            california: rng.random(),
            eligible: ok,
            hand: skin_tone(&mut rng, l),
        };
        data.demographics.push(raw_person(&mut rng, &person));
        let hand = person.hand.to_lab();
        let face = PolarTone { l: person.hand.l - 1.5, ..person.hand }.to_lab();
        for (site, tone, mean) in
            [(Site::Hand, hand, config.bilateral_delta_e[0]), (Site::Face, face, config.bilateral_delta_e[1])]
        {
            let d = mean * rng.random_range(0.5..1.5);
            data.measurements.extend(bilateral(&mut rng, &person.id, site, tone, d));
        }
        people.push(person);
    }

    let plans = people
        .iter()
        .enumerate()
        .map(|(i, p)| create_plan(&format!("s{:05}", i + 1), &p.id, Study::One, rng.random(), &assets))
        .collect::<Result<Vec<_>, _>>()?;

    let mut responses: HashMap<(usize, String), u32> = HashMap::new();
    for scale in scales {
        let k = assets
            .palette_scales
            .iter()
            .chain(assets.text_scale.iter())
            .find(|(id, _)| *id == scale.scale_id)
            .map(|(_, k)| *k);
        let Some(k) = k else { continue };
        match (config.mode, config.planted(&scale.scale_id)) {
            (RatingMode::Oracle { noise_sd }, _) if scale.kind == ScaleKind::Palette => {
                let noise = normal(0.0, noise_sd);
                for (i, p) in people.iter().enumerate() {
                    let (idx, _) = nearest_swatch(p.hand.to_lab(), scale)?;
                    let v = f64::from(idx) + noise.sample(&mut rng);
                    responses.insert((i, scale.scale_id.clone()), clamp_round(v, k));
                }
            }
            (_, Some(planted)) => {
                let mut latent: Vec<f64> = people
                    .iter()
                    .zip(&plans)
                    .map(|(p, plan)| {
                        let race_key = format!("race:{}", p.group.label());
                        let white_bg = plan.background == Background::White && scale.kind == ScaleKind::Palette;
                        let x = BTreeMap::from([
                            ("lightness", p.hand.l),
                            ("hue", p.hand.hue_deg),
                            ("chromaticity", p.hand.chroma),
                            (race_key.as_str(), 1.0),
                            ("background:white", f64::from(u8::from(white_bg))),
                            ("location:CA", f64::from(u8::from(p.california))),
                            ("gender:Male", f64::from(u8::from(p.male))),
                        ]);
                        planted.latent(&x)
                    })
                    .collect();
                let eligible: Vec<f64> =
                    latent.iter().zip(&people).filter(|(_, p)| p.eligible).map(|(f, _)| *f).collect();
                let (shift, sd) = calibration(&eligible, planted);
                latent.iter_mut().for_each(|f| *f += shift);
                let noise = normal(0.0, sd);
                for (i, f) in latent.iter().enumerate() {
                    responses.insert((i, scale.scale_id.clone()), clamp_round(f + noise.sample(&mut rng), k));
                }
            }
            _ => {}
        }
    }

    let mean_l = {
        let ls: Vec<f64> = people.iter().filter(|p| p.eligible).map(|p| p.hand.l).collect();
        if ls.is_empty() {
            0.0
        } else {
            ls.iter().sum::<f64>() / ls.len() as f64
        }
    };
    for (i, (p, plan)) in people.iter().zip(&plans).enumerate() {
        data.store.push(StoreEntry::Session(plan.clone()));
        for (pos, task) in plan.tasks.iter().enumerate() {
            let response = match task.kind {
                TaskKind::Preference => {
                    let crate::protocol::ResponseOptions::Choice { choices } = &task.options else { continue };
                    let Some(logit) = &config.preference else { continue };
                    let eta = logit.intercept
                        + if plan.background == Background::White { logit.background_white } else { 0.0 }
                        + logit.lightness * (p.hand.l - mean_l);
                    let hit = rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp());
                    let other = choices.iter().find(|c| **c != logit.focus).unwrap_or(&logit.focus);
                    Response::Choice(if hit { logit.focus.clone() } else { other.clone() })
                }
                _ => match responses.get(&(i, task.scale_id.clone())) {
                    Some(&v) => Response::Index(v),
                    None => continue,
                },
            };
            data.store.push(StoreEntry::Rating(plan.record(pos, response, timestamp(i, pos))));
        }
    }
    Ok(data)
}

fn simulate_study2(config: &SimulationConfig, scales: &[Scale]) -> Result<SimulatedData, PipelineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut data = SimulatedData::default();
    let mut subject_tones: BTreeMap<String, (PolarTone, &PlantedSubject)> = BTreeMap::new();
    for (i, s) in config.subjects.iter().enumerate() {
        let id = format!("S{}", i + 1);
        let face = PolarTone {
            l: s.lightness,
            hue_deg: quad(HUE_QUADRATIC, s.lightness) + s.hue_offset,
            chroma: quad(CHROMA_QUADRATIC, s.lightness) + s.chroma_offset,
        };
        let hand = PolarTone { l: s.lightness + 1.5, ..face };
        for (site, tone, mean) in
            [(Site::Hand, hand, config.bilateral_delta_e[0]), (Site::Face, face, config.bilateral_delta_e[1])]
        {
            let d = mean * rng.random_range(0.5..1.5);
            data.measurements.extend(bilateral(&mut rng, &id, site, tone.to_lab(), d));
        }
        let group = if s.white { Group::White } else { Group::Black };
        let (race, ethnicity) = group.raw_answers(&mut rng);
        data.demographics.push(RawDemographics {
            person_id: id.clone(),
            race: race.into(),
            ethnicity: ethnicity.into(),
            gender: if s.male { "Male" } else { "Female" }.into(),
            age_bin: "30-49".into(),
            location: "MD".into(),
        });
        for device in Device::ALL {
            let shift = config.device_shift.get(&device).copied().unwrap_or(0.0);
            let lab = face.to_lab();
            data.stimuli.push(ImageStimulus {
                image_id: format!("{id}-{device}"),
                subject_id: id.clone(),
                device,
                image_region_lab: LabColor::new((lab.l + shift).clamp(0.0, 100.0), lab.a, lab.b),
                file: format!("images/{id}-{device}.jpg"),
            });
        }
        subject_tones.insert(id, (face, s));
    }
    if config.n > 0 && data.stimuli.is_empty() {
        return Err(PipelineError::Protocol(crate::protocol::ProtocolError::MissingAssets(
            "no subjects configured".into(),
        )));
    }
    let images: HashMap<&str, &ImageStimulus> = data.stimuli.iter().map(|s| (s.image_id.as_str(), s)).collect();
    let assets = plan_assets(config, scales, images_by_subject(&data.stimuli))?;

    let mut raters = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let group = Group::draw(&mut rng, &STUDY2_RACES);
        let male: bool = rng.random();
        let (race, ethnicity) = group.raw_answers(&mut rng);
        data.demographics.push(RawDemographics {
            person_id: rater_id(i),
            race: race.into(),
            ethnicity: ethnicity.into(),
            gender: if male { "Male" } else { "Female" }.into(),
            age_bin: ["18-29", "30-49", "50-64", "65+"][rng.random_range(0..4)].into(),
            location: "MD".into(),
        });
        raters.push((group, male));
    }
    let plans = (0..config.n)
        .map(|i| create_plan(&format!("s{:05}", i + 1), &rater_id(i), Study::Two, rng.random(), &assets))
        .collect::<Result<Vec<_>, _>>()?;

    // Image responses by (rater, position).
    let mut responses: HashMap<(usize, usize), u32> = HashMap::new();
    for scale in scales.iter().filter(|s| assets.palette_scales.iter().any(|(id, _)| *id == s.scale_id)) {
        let tasks: Vec<(usize, usize, &ImageStimulus)> = plans
            .iter()
            .enumerate()
            .flat_map(|(i, plan)| {
                plan.tasks
                    .iter()
                    .enumerate()
                    .filter(|(_, t)| t.kind == TaskKind::Image && t.scale_id == scale.scale_id)
                    .map(move |(pos, t)| (i, pos, t.stimulus_id.as_str()))
            })
            .filter_map(|(i, pos, image)| images.get(image).map(|s| (i, pos, *s)))
            .collect();
        let extra_noise = |device: Device| config.device_noise.get(&device).copied().unwrap_or(0.0);
        match (config.mode, config.planted(&scale.scale_id)) {
            (RatingMode::Oracle { noise_sd }, _) => {
                let k = scale.len() as u32;
                let oracle: HashMap<&str, u32> = subject_tones
                    .iter()
                    .map(|(id, (tone, _))| Ok((id.as_str(), nearest_swatch(tone.to_lab(), scale)?.0)))
                    .collect::<Result<_, PipelineError>>()?;
                for (i, pos, image) in tasks {
                    let sd = noise_sd.hypot(extra_noise(image.device));
                    let v = f64::from(oracle[image.subject_id.as_str()]) + normal(0.0, sd).sample(&mut rng);
                    responses.insert((i, pos), clamp_round(v, k));
                }
            }
            (RatingMode::Planted, Some(planted)) => {
                let intercepts: HashMap<&str, f64> = subject_tones
                    .keys()
                    .map(|id| (id.as_str(), normal(0.0, planted.sigma_b2.sqrt()).sample(&mut rng)))
                    .collect();
                let mut latent: Vec<f64> = tasks
                    .iter()
                    .map(|&(i, _, image)| {
                        let (tone, subject) = subject_tones[&image.subject_id];
                        let (group, male) = raters[i];
                        let rater_race = format!("rater_race:{}", group.label());
                        let device = format!("device:{}", image.device);
                        let x = BTreeMap::from([
                            ("lightness", tone.l),
                            ("hue", tone.hue_deg),
                            ("chromaticity", tone.chroma),
                            ("subject_race:White", f64::from(u8::from(subject.white))),
                            ("subject_gender:Male", f64::from(u8::from(subject.male))),
                            (rater_race.as_str(), 1.0),
                            ("rater_gender:Male", f64::from(u8::from(male))),
                            (device.as_str(), 1.0),
                        ]);
                        planted.latent(&x)
                    })
                    .collect();
                let (shift, sd) = calibration(&latent, planted);
                latent.iter_mut().for_each(|f| *f += shift);
                for ((i, pos, image), f) in tasks.into_iter().zip(latent) {
                    let e = normal(0.0, sd.hypot(extra_noise(image.device))).sample(&mut rng);
                    let v = f + intercepts[image.subject_id.as_str()] + e;
                    responses.insert((i, pos), clamp_round(v, planted.k));
                }
            }
            (RatingMode::Planted, None) => {}
        }
    }

    for (i, plan) in plans.iter().enumerate() {
        data.store.push(StoreEntry::Session(plan.clone()));
        let fails = rng.random::<f64>() < config.attentional_failure_rate;
        let mut failed_once = false;
        let k = match plan.tasks.first().map(|t| &t.options) {
            Some(crate::protocol::ResponseOptions::Range { max }) => *max,
            _ => 10,
        };
        for (pos, task) in plan.tasks.iter().enumerate() {
            let v = match task.kind {
                TaskKind::Attentional => {
                    let truth: u32 = task.stimulus_id.parse().unwrap_or(1);
                    if fails && !failed_once {
                        failed_once = true;
                        if truth + 2 <= k {
                            truth + 2
                        } else {
                            truth.saturating_sub(2).max(1)
                        }
                    } else {
                        let jitter: f64 = rng.random();
                        if jitter < 0.1 {
                            truth + 1
                        } else if jitter < 0.2 {
                            truth - 1
                        } else {
                            truth
                        }
                    }
                }
                _ => {
                    let Some(&v) = responses.get(&(i, pos)) else { continue };
                    if rng.random::<f64>() < config.outlier_rate {
                        if v <= k / 2 {
                            k
                        } else {
                            1
                        }
                    } else {
                        v
                    }
                }
            };
            data.store.push(StoreEntry::Rating(plan.record(pos, Response::Index(v), timestamp(i, pos))));
        }
    }
    Ok(data)
}

pub const MEASUREMENTS_FILE: &str = "measurements.csv";
pub const DEMOGRAPHICS_FILE: &str = "demographics.csv";
pub const STIMULI_FILE: &str = "stimuli.csv";
pub const RATINGS_FILE: &str = "ratings.jsonl";
pub const PLANTED_FILE: &str = "planted.json";

/// Writes `data` in the ingestion formats plus the generating config.
pub fn write_simulation(
    data: &SimulatedData,
    config: &SimulationConfig,
    dir: &Path,
) -> Result<Vec<PathBuf>, PipelineError> {
    fs::create_dir_all(dir)?;
    let path = |name: &str| dir.join(name);
    let mut written = Vec::new();

    write_measurements(BufWriter::new(File::create(path(MEASUREMENTS_FILE))?), &data.measurements)?;
    written.push(path(MEASUREMENTS_FILE));
    write_demographics(BufWriter::new(File::create(path(DEMOGRAPHICS_FILE))?), &data.demographics)?;
    written.push(path(DEMOGRAPHICS_FILE));
    if config.study == Study::Two {
        write_stimuli(BufWriter::new(File::create(path(STIMULI_FILE))?), &data.stimuli)?;
        written.push(path(STIMULI_FILE));
    }
    write_store(BufWriter::new(File::create(path(RATINGS_FILE))?), &data.store)?;
    written.push(path(RATINGS_FILE));
    fs::write(path(PLANTED_FILE), serde_json::to_string_pretty(config)? + "\n")?;
    written.push(path(PLANTED_FILE));
    Ok(written)
}

pub fn simulate_study(config: &SimulationConfig, scales: &[Scale], dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let data = simulate(config, scales)?;
    write_simulation(&data, config, dir)
}
