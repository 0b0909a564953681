//! Rating-quality metrics: per-swatch color accuracy, scale-range
//! utilization, intraclass correlation, exclusion filtering and preference
//! summaries.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color::{delta_e, LabColor};
use crate::pipeline::demographics::Race;
use crate::pipeline::stimuli::Device;
use crate::protocol::{Background, RatingRecord, TaskKind};
use crate::scale::Scale;
use crate::stats::{DesignSpec, Frame, StatsError, Term};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RatingError {
    #[error("rating {task_id} of rater {rater_id} does not join to a measured tone for {target:?}")]
    Unjoinable { rater_id: String, task_id: String, target: String },
    #[error("rater {0:?} has no demographics")]
    MissingDemographics(String),
    #[error("scale {0:?} has no swatches")]
    NotPalette(String),
    #[error("need at least one bin, got {0}")]
    NoBins(usize),
    #[error("need at least 2 occupied lightness bins, found {0}")]
    TooFewBins(usize),
    #[error("table row {row} has {found} ratings, expected {expected}")]
    IncompleteTable { row: usize, expected: usize, found: usize },
    #[error("need at least 2 targets and 2 raters, got {targets}x{raters}")]
    TooSmall { targets: usize, raters: usize },
    #[error("table has no variance")]
    Degenerate,
    #[error("attentional task {task_id} has a non-numeric true index {stimulus_id:?}")]
    BadAttentional { task_id: String, stimulus_id: String },
    #[error("no preference responses")]
    NoPreferences,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

fn is_rating_task(r: &RatingRecord) -> bool {
    matches!(r.task, TaskKind::SelfRating | TaskKind::Image)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwatchAccuracy {
    pub index: u32,
    pub n: usize,
    /// Mean measured tone of everyone assigned this swatch.
    pub mean_tone: Option<LabColor>,
    /// ΔE between `mean_tone` and the swatch; absent when nobody chose it.
    pub delta_e: Option<f64>,
}

/// Per-swatch ΔE between each swatch and the mean measured tone of the
/// targets assigned to it. `tones` is keyed by [`RatingRecord::target_id`].
pub fn swatch_accuracy<'a>(
    ratings: impl IntoIterator<Item = &'a RatingRecord>,
    tones: &HashMap<String, LabColor>,
    scale: &Scale,
) -> Result<Vec<SwatchAccuracy>, RatingError> {
    if scale.swatches.is_empty() {
        return Err(RatingError::NotPalette(scale.scale_id.clone()));
    }
    let mut assigned: BTreeMap<u32, Vec<LabColor>> = BTreeMap::new();
    for r in ratings.into_iter().filter(|r| r.scale_id == scale.scale_id && is_rating_task(r)) {
        let Some(index) = r.response.index() else { continue };
        let tone = tones.get(r.target_id()).ok_or_else(|| RatingError::Unjoinable {
            rater_id: r.rater_id.clone(),
            task_id: r.task_id.clone(),
            target: r.target_id().to_string(),
        })?;
        assigned.entry(index).or_default().push(*tone);
    }
    Ok(scale
        .swatches
        .iter()
        .map(|s| {
            let tones = assigned.get(&s.index).map(Vec::as_slice).unwrap_or(&[]);
            let mean_tone = LabColor::mean(tones);
            SwatchAccuracy { index: s.index, n: tones.len(), mean_tone, delta_e: mean_tone.map(|m| delta_e(m, s.lab)) }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightnessBin {
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
    pub mean_lightness: Option<f64>,
    pub mean_response: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utilization {
    pub fraction: f64,
    pub bins: Vec<LightnessBin>,
}

/// Range of bin-average responses, as a fraction of the K − 1 available
/// steps, after binning targets into `n_bins` equal-width L* bins.
pub fn scale_utilization<'a>(
    ratings: impl IntoIterator<Item = &'a RatingRecord>,
    tones: &HashMap<String, LabColor>,
    k: usize,
    n_bins: usize,
) -> Result<Utilization, RatingError> {
    if n_bins == 0 {
        return Err(RatingError::NoBins(n_bins));
    }
    let mut points = Vec::new();
    for r in ratings.into_iter().filter(|r| is_rating_task(r)) {
        let Some(index) = r.response.index() else { continue };
        let tone = tones.get(r.target_id()).ok_or_else(|| RatingError::Unjoinable {
            rater_id: r.rater_id.clone(),
            task_id: r.task_id.clone(),
            target: r.target_id().to_string(),
        })?;
        points.push((tone.l, f64::from(index)));
    }
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let width = if points.is_empty() { 0.0 } else { (hi - lo) / n_bins as f64 };
    let mut acc = vec![(0usize, 0.0, 0.0); n_bins];
    for &(l, y) in &points {
        let b = if width > 0.0 { (((l - lo) / width) as usize).min(n_bins - 1) } else { 0 };
        acc[b].0 += 1;
        acc[b].1 += l;
        acc[b].2 += y;
    }
    let bins: Vec<LightnessBin> = acc
        .iter()
        .enumerate()
        .map(|(i, &(n, sl, sy))| LightnessBin {
            lower: lo + i as f64 * width,
            upper: lo + (i + 1) as f64 * width,
            n,
            mean_lightness: (n > 0).then(|| sl / n as f64),
            mean_response: (n > 0).then(|| sy / n as f64),
        })
        .collect();
    let means: Vec<f64> = bins.iter().filter_map(|b| b.mean_response).collect();
    if means.len() < 2 {
        return Err(RatingError::TooFewBins(means.len()));
    }
    let max = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = means.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Utilization { fraction: (max - min) / (k as f64 - 1.0), bins })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IccValues {
    pub icc_single: f64,
    pub icc_average: f64,
    pub n_targets: usize,
    pub k_raters: usize,
    pub ms_rows: f64,
    pub ms_cols: f64,
    pub ms_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IccResult {
    pub scale_id: String,
    pub device: Device,
    #[serde(flatten)]
    pub values: IccValues,
}

/// Two-way random-effects ICC, single and average measures, for a
/// complete targets × raters table.
pub fn icc_two_way(table: &[Vec<f64>]) -> Result<IccValues, RatingError> {
    let n = table.len();
    let k = table.first().map_or(0, Vec::len);
    if n < 2 || k < 2 {
        return Err(RatingError::TooSmall { targets: n, raters: k });
    }
    if let Some((row, r)) = table.iter().enumerate().find(|(_, r)| r.len() != k || r.iter().any(|v| !v.is_finite())) {
        return Err(RatingError::IncompleteTable {
            row,
            expected: k,
            found: r.iter().filter(|v| v.is_finite()).count(),
        });
    }
    let (nf, kf) = (n as f64, k as f64);
    let grand = table.iter().flatten().sum::<f64>() / (nf * kf);
    let row_means: Vec<f64> = table.iter().map(|r| r.iter().sum::<f64>() / kf).collect();
    let col_means: Vec<f64> = (0..k).map(|j| table.iter().map(|r| r[j]).sum::<f64>() / nf).collect();
    let sst: f64 = table.iter().flatten().map(|v| (v - grand).powi(2)).sum();
    let ssr = kf * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ssc = nf * col_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let sse = (sst - ssr - ssc).max(0.0);
    let msr = ssr / (nf - 1.0);
    let msc = ssc / (kf - 1.0);
    let mse = sse / ((nf - 1.0) * (kf - 1.0));
    let single_den = msr + (kf - 1.0) * mse + kf * (msc - mse) / nf;
    let average_den = msr + (msc - mse) / nf;
    if sst <= 0.0 || single_den == 0.0 || average_den == 0.0 {
        return Err(RatingError::Degenerate);
    }
    Ok(IccValues {
        icc_single: (msr - mse) / single_den,
        icc_average: (msr - mse) / average_den,
        n_targets: n,
        k_raters: k,
        ms_rows: msr,
        ms_cols: msc,
        ms_error: mse,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExclusionConfig {
    /// Largest accepted |response − true index| on an attentional check.
    pub attentional_tolerance: u32,
    /// Outlier threshold in MADs.
    pub mad_multiplier: f64,
    /// Lower bound on the MAD, in scale steps.
    pub mad_floor: f64,
}

impl Default for ExclusionConfig {
    fn default() -> Self {
        Self { attentional_tolerance: 1, mad_multiplier: 3.0, mad_floor: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum ExclusionReason {
    /// The rater failed attentional check `task_id`; all their records go.
    Attentional { task_id: String, true_index: u32, response: u32 },
    /// Response too far from the per-image median.
    Outlier { median: f64, mad: f64, threshold: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub record: RatingRecord,
    #[serde(flatten)]
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExclusionOutcome {
    pub kept: Vec<RatingRecord>,
    pub excluded: Vec<Exclusion>,
}

impl ExclusionOutcome {
    pub fn excluded_raters(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .excluded
            .iter()
            .filter(|e| matches!(e.reason, ExclusionReason::Attentional { .. }))
            .map(|e| e.record.rater_id.clone())
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Removes raters that fail an attentional check, then per-image outliers.
/// The outlier pass repeats until nothing more is removed, so the filter is
/// idempotent.
pub fn exclusion_filter(ratings: &[RatingRecord], config: &ExclusionConfig) -> Result<ExclusionOutcome, RatingError> {
    let mut failed: HashMap<&str, ExclusionReason> = HashMap::new();
    for r in ratings.iter().filter(|r| r.task == TaskKind::Attentional) {
        let true_index: u32 = r.stimulus_id.trim().parse().map_err(|_| RatingError::BadAttentional {
            task_id: r.task_id.clone(),
            stimulus_id: r.stimulus_id.clone(),
        })?;
        let Some(response) = r.response.index() else { continue };
        if response.abs_diff(true_index) > config.attentional_tolerance {
            failed.entry(&r.rater_id).or_insert(ExclusionReason::Attentional {
                task_id: r.task_id.clone(),
                true_index,
                response,
            });
        }
    }

    let mut outcome = ExclusionOutcome::default();
    let mut candidates: Vec<&RatingRecord> = Vec::new();
    for r in ratings {
        match failed.get(r.rater_id.as_str()) {
            Some(reason) => outcome.excluded.push(Exclusion { record: r.clone(), reason: reason.clone() }),
            None => candidates.push(r),
        }
    }

    let mut groups: BTreeMap<(&str, &str), Vec<usize>> = BTreeMap::new();
    for (i, r) in candidates.iter().enumerate() {
        if r.task == TaskKind::Image && r.response.index().is_some() {
            groups.entry((&r.scale_id, &r.stimulus_id)).or_default().push(i);
        }
    }
    let mut outliers: HashMap<usize, ExclusionReason> = HashMap::new();
    for members in groups.values() {
        let mut live: Vec<usize> = members.clone();
        loop {
            let value = |i: usize| f64::from(candidates[i].response.index().unwrap_or(0));
            let mut xs: Vec<f64> = live.iter().map(|&i| value(i)).collect();
            xs.sort_by(f64::total_cmp);
            let med = median(&xs);
            let mut dev: Vec<f64> = xs.iter().map(|x| (x - med).abs()).collect();
            dev.sort_by(f64::total_cmp);
            let mad = median(&dev);
            let threshold = config.mad_multiplier * mad.max(config.mad_floor);
            let (out, keep): (Vec<usize>, Vec<usize>) = live.iter().partition(|&&i| (value(i) - med).abs() > threshold);
            if out.is_empty() {
                break;
            }
            for i in out {
                outliers.insert(i, ExclusionReason::Outlier { median: med, mad, threshold });
            }
            live = keep;
        }
    }
    for (i, r) in candidates.into_iter().enumerate() {
        match outliers.remove(&i) {
            Some(reason) => outcome.excluded.push(Exclusion { record: r.clone(), reason }),
            None => outcome.kept.push(r.clone()),
        }
    }
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceCell {
    pub background: Background,
    pub race: Race,
    pub n: usize,
    /// Percent of raters preferring the focal scale; absent for empty cells.
    pub percent: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PreferenceSummary {
    pub focal_scale: String,
    pub cells: Vec<PreferenceCell>,
    /// `prefers ~ background + lightness` over raters with a measured tone.
    pub design: DesignSpec,
}

pub const PREFERENCE_RESPONSE: &str = "prefers";

/// Percent preferring `focal_scale` by background × race, plus the logistic
/// design in background and measured lightness.
pub fn preference_summary<'a>(
    ratings: impl IntoIterator<Item = &'a RatingRecord>,
    demographics: &HashMap<String, Race>,
    tones: &HashMap<String, LabColor>,
    focal_scale: &str,
) -> Result<PreferenceSummary, RatingError> {
    let mut counts: BTreeMap<(Background, Race), (usize, usize)> = BTreeMap::new();
    let (mut y, mut bg, mut light) = (Vec::new(), Vec::new(), Vec::new());
    let mut seen = HashSet::new();
    for r in ratings.into_iter().filter(|r| r.task == TaskKind::Preference) {
        let Some(choice) = r.response.choice() else { continue };
        if !seen.insert(r.rater_id.as_str()) {
            continue;
        }
        let race =
            *demographics.get(&r.rater_id).ok_or_else(|| RatingError::MissingDemographics(r.rater_id.clone()))?;
        let Some(background) = r.background else { continue };
        let tone = tones.get(&r.rater_id).ok_or_else(|| RatingError::Unjoinable {
            rater_id: r.rater_id.clone(),
            task_id: r.task_id.clone(),
            target: r.rater_id.clone(),
        })?;
        let prefers = choice == focal_scale;
        let c = counts.entry((background, race)).or_default();
        c.0 += 1;
        c.1 += usize::from(prefers);
        y.push(if prefers { 1.0 } else { 0.0 });
        bg.push(background.to_string());
        light.push(tone.l);
    }
    if y.is_empty() {
        return Err(RatingError::NoPreferences);
    }
    let cells = [Background::White, Background::Gray]
        .into_iter()
        .flat_map(|b| Race::ALL.into_iter().map(move |r| (b, r)))
        .map(|(background, race)| {
            let (n, k) = counts.get(&(background, race)).copied().unwrap_or((0, 0));
            PreferenceCell { background, race, n, percent: (n > 0).then(|| 100.0 * k as f64 / n as f64) }
        })
        .collect();
    let frame = Frame::new()
        .with_numeric(PREFERENCE_RESPONSE, y)?
        .with_categorical("background", bg)?
        .with_numeric("lightness", light)?;
    let design = DesignSpec::new(
        PREFERENCE_RESPONSE,
        vec![Term::categorical_ref("background", "gray"), Term::continuous("lightness")],
        frame,
    );
    Ok(PreferenceSummary { focal_scale: focal_scale.to_string(), cells, design })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::Response;
    use crate::scale::{ScaleKind, ScaleSource, Swatch};
    use crate::stats::logistic_fit;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rec(rater: &str, task: TaskKind, scale: &str, stimulus: &str, response: Response) -> RatingRecord {
        RatingRecord {
            rater_id: rater.into(),
            session_id: format!("s-{rater}"),
            task_id: format!("t-{stimulus}"),
            scale_id: scale.into(),
            task,
            stimulus_id: stimulus.into(),
            response,
            background: Some(Background::Gray),
            presentation_order: 1,
            timestamp: 0,
        }
    }

    fn self_rating(rater: &str, index: u32) -> RatingRecord {
        rec(rater, TaskKind::SelfRating, "x", "self", Response::Index(index))
    }

    fn scale(labs: &[(f64, f64, f64)]) -> Scale {
        Scale {
            scale_id: "x".into(),
            name: "x".into(),
            kind: ScaleKind::Palette,
            source: ScaleSource::External,
            swatches: labs
                .iter()
                .enumerate()
                .map(|(i, &(l, a, b))| Swatch::from_lab(i as u32 + 1, LabColor::new(l, a, b)))
                .collect(),
            items: vec![],
        }
    }

    fn ten_swatches() -> Scale {
        scale(
            &(0..10).map(|i| (75.0 - 5.0 * i as f64, 8.0 + i as f64 * 0.5, 16.0 + i as f64 * 0.3)).collect::<Vec<_>>(),
        )
    }

    #[test]
    fn accuracy_examples() {
        let s = ten_swatches();
        let sw4 = s.swatches[3].lab;
        let sw2 = s.swatches[1].lab;
        let mut tones = HashMap::new();
        tones.insert("a".to_string(), sw4);
        tones.insert("b".to_string(), sw4);
        tones.insert("c".to_string(), LabColor::new(sw2.l - 1.0, sw2.a - 1.0, sw2.b - 1.0));
        tones.insert("d".to_string(), LabColor::new(sw2.l + 1.0, sw2.a + 1.0, sw2.b + 1.0));
        let ratings = vec![self_rating("a", 4), self_rating("b", 4), self_rating("c", 2), self_rating("d", 2)];
        let acc = swatch_accuracy(&ratings, &tones, &s).unwrap();
        assert_eq!(acc[3].n, 2);
        assert_eq!(acc[3].delta_e, Some(0.0));
        assert_abs_diff_eq!(acc[1].delta_e.unwrap(), 0.0, epsilon = 1e-12);
        assert_eq!(acc[0].delta_e, None);
        assert_eq!(acc[0].n, 0);

        let orphan = vec![self_rating("zz", 3)];
        assert!(matches!(swatch_accuracy(&orphan, &tones, &s), Err(RatingError::Unjoinable { .. })));
    }

    #[test]
    fn oracle_assignment_is_accurate() {
        let s = Scale { scale_id: "x".into(), ..crate::pipeline::simulate::tests::test_scales().remove(0) };
        let mut tones = HashMap::new();
        let mut ratings = Vec::new();
        for (i, t) in crate::pipeline::simulate::realistic_corpus(5000, 2).into_iter().enumerate() {
            let c = t.to_lab();
            let (idx, _) = crate::scale::nearest_swatch(c, &s).unwrap();
            let id = format!("r{i}");
            tones.insert(id.clone(), c);
            ratings.push(self_rating(&id, idx));
        }
        let max_half = s
            .swatches
            .iter()
            .flat_map(|a| s.swatches.iter().map(move |b| delta_e(a.lab, b.lab) / 2.0))
            .fold(0.0, f64::max);
        let spacing = s.swatches.windows(2).map(|w| delta_e(w[0].lab, w[1].lab)).fold(f64::INFINITY, f64::min);
        let acc = swatch_accuracy(&ratings, &tones, &s).unwrap();
        assert!(acc.iter().filter(|a| a.n > 0).count() >= 4, "{acc:?}");
        for a in acc {
            if let Some(d) = a.delta_e {
                assert!(d <= max_half);
                assert!(d < spacing / 2.0, "swatch {} ΔE {d}", a.index);
            }
        }
    }

    #[test]
    fn utilization_examples() {
        let mut tones = HashMap::new();
        let mut ratings = Vec::new();
        // Seven bins over L* 20..90, responses 8 down to 2.
        for b in 0..7 {
            for j in 0..5 {
                let id = format!("r{b}-{j}");
                tones.insert(id.clone(), LabColor::new(20.0 + 10.0 * b as f64 + 2.0 * j as f64, 10.0, 15.0));
                ratings.push(self_rating(&id, 8 - b as u32));
            }
        }
        let u = scale_utilization(&ratings, &tones, 10, 7).unwrap();
        assert_abs_diff_eq!(u.fraction, 6.0 / 9.0, epsilon = 1e-12);

        let flat: Vec<RatingRecord> =
            ratings.iter().map(|r| RatingRecord { response: Response::Index(5), ..r.clone() }).collect();
        assert_eq!(scale_utilization(&flat, &tones, 10, 7).unwrap().fraction, 0.0);

        let full: Vec<RatingRecord> = ratings
            .iter()
            .map(|r| {
                let b = r.rater_id[1..2].parse::<u32>().unwrap();
                RatingRecord { response: Response::Index(1 + (b * 9).div_ceil(6)), ..r.clone() }
            })
            .collect();
        assert_eq!(scale_utilization(&full, &tones, 10, 7).unwrap().fraction, 1.0);

        let one = vec![ratings[0].clone()];
        assert!(matches!(scale_utilization(&one, &tones, 10, 7), Err(RatingError::TooFewBins(1))));
    }

    /// Mean squares of a two-way table computed by hand for the fixture:
    /// grand mean 5, row means (2, 4, 6, 8), column means (4, 5, 6).
    #[test]
    fn icc_matches_hand_anova() {
        let table = vec![vec![1.0, 2.0, 3.0], vec![3.0, 4.0, 5.0], vec![6.0, 5.0, 7.0], vec![6.0, 9.0, 9.0]];
        // SST = 16+9+4+4+1+0+1+0+4+1+16+16 = 72, SSR = 3·(9+1+1+9) = 60,
        // SSC = 4·(1+0+1) = 8, SSE = 4.
        let (msr, msc, mse) = (20.0, 4.0, 4.0 / 6.0);
        let single = (msr - mse) / (msr + 2.0 * mse + 3.0 * (msc - mse) / 4.0);
        let average = (msr - mse) / (msr + (msc - mse) / 4.0);
        let icc = icc_two_way(&table).unwrap();
        assert_abs_diff_eq!(icc.ms_rows, msr, epsilon = 1e-12);
        assert_abs_diff_eq!(icc.ms_cols, msc, epsilon = 1e-12);
        assert_abs_diff_eq!(icc.ms_error, mse, epsilon = 1e-12);
        assert_abs_diff_eq!(icc.icc_single, single, epsilon = 1e-9);
        assert_abs_diff_eq!(icc.icc_average, average, epsilon = 1e-9);
        assert_abs_diff_eq!(icc.icc_single, 19.333333333333332 / 23.833333333333332, epsilon = 1e-9);
    }

    #[test]
    fn icc_edge_cases() {
        let perfect = vec![vec![2.0; 4], vec![5.0; 4], vec![7.0; 4]];
        let icc = icc_two_way(&perfect).unwrap();
        assert_abs_diff_eq!(icc.icc_single, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(icc.icc_average, 1.0, epsilon = 1e-12);
        assert!(matches!(icc_two_way(&[vec![1.0, 2.0], vec![3.0]]), Err(RatingError::IncompleteTable { row: 1, .. })));
        assert!(matches!(icc_two_way(&[vec![1.0, 2.0]]), Err(RatingError::TooSmall { .. })));
        assert!(matches!(icc_two_way(&[vec![3.0; 3], vec![3.0; 3]]), Err(RatingError::Degenerate)));
    }

    #[test]
    fn icc_of_pure_noise_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let table: Vec<Vec<f64>> =
            (0..8).map(|_| (0..50).map(|_| f64::from(rng.random_range(1..=10u32))).collect()).collect();
        let icc = icc_two_way(&table).unwrap();
        assert!(icc.icc_single.abs() < 0.15, "{icc:?}");
    }

    proptest! {
        #[test]
        fn icc_affine_invariance(seed in 0u64..500, shift in -10.0f64..10.0, scale in 0.1f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let table: Vec<Vec<f64>> = (0..6).map(|i| (0..4).map(|_| i as f64 + rng.random_range(-2.0..2.0)).collect()).collect();
            let moved: Vec<Vec<f64>> = table.iter().map(|r| r.iter().map(|v| v * scale + shift).collect()).collect();
            let (a, b) = (icc_two_way(&table).unwrap(), icc_two_way(&moved).unwrap());
            prop_assert!((a.icc_single - b.icc_single).abs() < 1e-9);
            prop_assert!((a.icc_average - b.icc_average).abs() < 1e-9);
            if a.icc_single >= 0.0 {
                prop_assert!(a.icc_average >= a.icc_single - 1e-12);
            }
        }
    }

    fn attentional(rater: &str, truth: u32, response: u32) -> RatingRecord {
        rec(rater, TaskKind::Attentional, "x", &truth.to_string(), Response::Index(response))
    }

    #[test]
    fn attentional_rule() {
        let ratings = vec![
            attentional("ok", 4, 5),
            rec("ok", TaskKind::Image, "x", "img", Response::Index(3)),
            attentional("bad", 4, 6),
            rec("bad", TaskKind::Image, "x", "img", Response::Index(3)),
        ];
        let out = exclusion_filter(&ratings, &ExclusionConfig::default()).unwrap();
        assert_eq!(out.excluded_raters(), vec!["bad"]);
        assert_eq!(out.excluded.len(), 2);
        assert!(out
            .excluded
            .iter()
            .all(|e| matches!(e.reason, ExclusionReason::Attentional { true_index: 4, response: 6, .. })));
        assert_eq!(out.kept.len(), 2);
        let json = serde_json::to_value(&out.excluded[0]).unwrap();
        assert_eq!(json["reason"], "attentional");
    }

    #[test]
    fn outlier_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ratings: Vec<RatingRecord> = (0..250)
            .map(|i| rec(&format!("r{i}"), TaskKind::Image, "x", "img", Response::Index(rng.random_range(1..=3))))
            .collect();
        ratings.push(rec("odd", TaskKind::Image, "x", "img", Response::Index(9)));
        let out = exclusion_filter(&ratings, &ExclusionConfig::default()).unwrap();
        assert_eq!(out.excluded.len(), 1);
        assert_eq!(out.excluded[0].record.rater_id, "odd");
        assert!(matches!(out.excluded[0].reason, ExclusionReason::Outlier { median, .. } if median == 2.0));
    }

    proptest! {
        #[test]
        fn exclusion_is_idempotent(seed in 0u64..300) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut ratings = Vec::new();
            for r in 0..40 {
                let id = format!("r{r}");
                ratings.push(attentional(&id, 4, rng.random_range(1..=10)));
                for img in 0..3 {
                    let v = if rng.random::<f64>() < 0.1 { rng.random_range(1..=10) } else { 3 + img + rng.random_range(0..2) };
                    ratings.push(rec(&id, TaskKind::Image, "x", &format!("i{img}"), Response::Index(v)));
                }
            }
            let cfg = ExclusionConfig::default();
            let once = exclusion_filter(&ratings, &cfg).unwrap();
            let twice = exclusion_filter(&once.kept, &cfg).unwrap();
            prop_assert!(twice.excluded.is_empty());
            prop_assert_eq!(once.kept.len() + once.excluded.len(), ratings.len());
            for e in &once.excluded {
                if let ExclusionReason::Attentional { true_index, response, .. } = e.reason {
                    prop_assert!(true_index.abs_diff(response) > 1);
                }
            }
        }
    }

    fn preference(rater: &str, bg: Background, choice: &str) -> RatingRecord {
        RatingRecord {
            background: Some(bg),
            ..rec(rater, TaskKind::Preference, "preference", "cst|mst", Response::Choice(choice.into()))
        }
    }

    #[test]
    fn preference_cells() {
        let mut demo = HashMap::new();
        let mut tones = HashMap::new();
        let mut ratings = Vec::new();
        for (i, race) in [Race::Asian, Race::Black, Race::White, Race::White].into_iter().enumerate() {
            let id = format!("p{i}");
            demo.insert(id.clone(), race);
            tones.insert(id.clone(), LabColor::new(50.0 + i as f64, 10.0, 15.0));
            ratings.push(preference(&id, Background::Gray, "cst"));
        }
        let s = preference_summary(&ratings, &demo, &tones, "cst").unwrap();
        let cell = |b, r| s.cells.iter().find(|c| c.background == b && c.race == r).unwrap();
        assert_eq!(cell(Background::Gray, Race::White).percent, Some(100.0));
        assert_eq!(cell(Background::Gray, Race::White).n, 2);
        assert_eq!(cell(Background::White, Race::Asian).percent, None);
        assert_eq!(cell(Background::Gray, Race::Hispanic).n, 0);
        assert_eq!(s.design.n(), 4);
    }

    #[test]
    fn preference_logit_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (b0, b_white, b_l) = (1.0, -1.5, -0.08);
        let mut demo = HashMap::new();
        let mut tones = HashMap::new();
        let mut ratings = Vec::new();
        let mut ls = Vec::new();
        for i in 0..2000 {
            let id = format!("p{i}");
            let l: f64 = rng.random_range(35.0..70.0);
            ls.push(l);
            let white = rng.random::<bool>();
            demo.insert(id.clone(), Race::White);
            tones.insert(id.clone(), LabColor::new(l, 10.0, 15.0));
            let bg = if white { Background::White } else { Background::Gray };
            ratings.push((id, bg, white, l));
        }
        let mean_l = ls.iter().sum::<f64>() / ls.len() as f64;
        let records: Vec<RatingRecord> = ratings
            .iter()
            .map(|(id, bg, white, l)| {
                let eta = b0 + if *white { b_white } else { 0.0 } + b_l * (l - mean_l);
                let p = 1.0 / (1.0 + (-eta).exp());
                preference(id, *bg, if rng.random::<f64>() < p { "cst" } else { "mst" })
            })
            .collect();
        let s = preference_summary(&records, &demo, &tones, "cst").unwrap();
        let fit = logistic_fit(&s.design).unwrap();
        for (name, truth) in [("(Intercept)", b0), ("background:white", b_white), ("lightness", b_l)] {
            let c = fit.coefficient(name).unwrap();
            assert!((c.estimate - truth).abs() < 3.0 * c.std_error, "{c:?}");
        }
    }
}
