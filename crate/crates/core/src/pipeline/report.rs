//! Report bundles and their text and CSV renderings.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::demographics::FilterReport;
use super::PipelineError;
use crate::protocol::Background;
use crate::rating::{IccResult, PreferenceCell, SwatchAccuracy, Utilization};
use crate::stats::lmm::ConfidenceInterval;
use crate::stats::{l_star_ratios, MixedFit, ModelFit, Step, StepAction, StepwiseResult, INTERCEPT};

pub const TABLE1_COLUMNS: [&str; 6] =
    ["Estimate", "Standard Error", "t-statistic", "p-value", "L* Ratio", "Adjusted R²"];
pub const TABLE2_COLUMNS: [&str; 4] = ["ICC (single)", "ICC (average)", "Targets", "Raters"];
pub const TABLE3_COLUMNS: [&str; 5] =
    ["Estimate", "Standard Error", "Wald 95% Confidence Interval", "L* Ratio", "Conditional R²"];

pub const LIGHTNESS: &str = "lightness";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub scale_id: String,
    pub fit: ModelFit,
    pub l_star_ratios: Vec<(String, f64)>,
    #[serde(default)]
    pub intervals: Vec<ConfidenceInterval>,
    pub sigma_b2: Option<f64>,
    pub sigma_e2: Option<f64>,
    #[serde(default)]
    pub trace: Vec<Step>,
}

impl ModelReport {
    /// Ratios are left empty when lightness was not selected.
    pub fn from_stepwise(scale_id: &str, sel: StepwiseResult) -> Self {
        ModelReport {
            scale_id: scale_id.to_string(),
            l_star_ratios: l_star_ratios(&sel.fit, LIGHTNESS).unwrap_or_default(),
            fit: sel.fit,
            intervals: Vec::new(),
            sigma_b2: None,
            sigma_e2: None,
            trace: sel.trace,
        }
    }

    pub fn from_mixed(scale_id: &str, m: MixedFit) -> Self {
        ModelReport {
            scale_id: scale_id.to_string(),
            l_star_ratios: l_star_ratios(&m.fit, LIGHTNESS).unwrap_or_default(),
            fit: m.fit,
            intervals: m.conf_intervals,
            sigma_b2: Some(m.sigma_b2),
            sigma_e2: Some(m.sigma_e2),
            trace: Vec::new(),
        }
    }

    pub fn ratio(&self, name: &str) -> Option<f64> {
        self.l_star_ratios.iter().find(|(n, _)| n == name).map(|(_, r)| *r)
    }

    fn interval(&self, name: &str) -> Option<&ConfidenceInterval> {
        self.intervals.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub scale_id: String,
    /// `None` pools all backgrounds.
    pub background: Option<Background>,
    pub rows: Vec<SwatchAccuracy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilizationReport {
    pub scale_id: String,
    pub k: usize,
    pub utilization: Utilization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceReport {
    pub focal_scale: String,
    pub cells: Vec<PreferenceCell>,
    pub fit: Option<ModelFit>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExclusionSummary {
    pub n_ratings: usize,
    pub n_kept: usize,
    pub attentional_raters: Vec<String>,
    pub attentional_records: usize,
    pub outlier_records: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub table1: Vec<ModelReport>,
    pub table2: Vec<IccResult>,
    pub table3: Vec<ModelReport>,
    pub accuracy: Vec<AccuracyTable>,
    pub utilization: Vec<UtilizationReport>,
    pub preference: Option<PreferenceReport>,
    pub filter: Option<FilterReport>,
    pub exclusions: Option<ExclusionSummary>,
    /// Join failures, empty strata and other recoverable problems.
    pub notes: Vec<String>,
}

impl ReportBundle {
    pub fn model(&self, scale_id: &str) -> Option<&ModelReport> {
        self.table1.iter().chain(&self.table3).find(|m| m.scale_id == scale_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Text,
    Csv,
    #[default]
    Both,
}

crate::text_enum!(ReportFormat { Text => "text", Csv => "csv", Both => "both" });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    #[serde(rename = "Scale")]
    pub scale: String,
    #[serde(rename = "Variable")]
    pub variable: String,
    #[serde(rename = "Estimate")]
    pub estimate: f64,
    #[serde(rename = "Standard Error")]
    pub std_error: f64,
    #[serde(rename = "t-statistic")]
    pub statistic: f64,
    #[serde(rename = "p-value")]
    pub p_value: f64,
    #[serde(rename = "L* Ratio")]
    pub l_star_ratio: Option<f64>,
    #[serde(rename = "Adjusted R²")]
    pub adj_r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    #[serde(rename = "Scale")]
    pub scale: String,
    #[serde(rename = "Device")]
    pub device: String,
    #[serde(rename = "ICC (single)")]
    pub icc_single: f64,
    #[serde(rename = "ICC (average)")]
    pub icc_average: f64,
    #[serde(rename = "Targets")]
    pub n_targets: usize,
    #[serde(rename = "Raters")]
    pub k_raters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table3Row {
    #[serde(rename = "Scale")]
    pub scale: String,
    #[serde(rename = "Covariate")]
    pub covariate: String,
    #[serde(rename = "Estimate")]
    pub estimate: f64,
    #[serde(rename = "Standard Error")]
    pub std_error: f64,
    #[serde(rename = "Wald 95% CI Lower")]
    pub ci_lower: Option<f64>,
    #[serde(rename = "Wald 95% CI Upper")]
    pub ci_upper: Option<f64>,
    #[serde(rename = "L* Ratio")]
    pub l_star_ratio: Option<f64>,
    #[serde(rename = "Conditional R²")]
    pub conditional_r2: Option<f64>,
}

fn ratio_of(m: &ModelReport, name: &str) -> Option<f64> {
    if name == INTERCEPT {
        None
    } else {
        m.ratio(name)
    }
}

pub fn table1_rows(bundle: &ReportBundle) -> Vec<Table1Row> {
    bundle
        .table1
        .iter()
        .flat_map(|m| {
            m.fit.coefficients.iter().map(move |c| Table1Row {
                scale: m.scale_id.clone(),
                variable: c.name.clone(),
                estimate: c.estimate,
                std_error: c.std_error,
                statistic: c.statistic,
                p_value: c.p_value,
                l_star_ratio: ratio_of(m, &c.name),
                adj_r2: m.fit.adj_r2,
            })
        })
        .collect()
}

pub fn table2_rows(bundle: &ReportBundle) -> Vec<Table2Row> {
    bundle
        .table2
        .iter()
        .map(|r| Table2Row {
            scale: r.scale_id.clone(),
            device: r.device.to_string(),
            icc_single: r.values.icc_single,
            icc_average: r.values.icc_average,
            n_targets: r.values.n_targets,
            k_raters: r.values.k_raters,
        })
        .collect()
}

pub fn table3_rows(bundle: &ReportBundle) -> Vec<Table3Row> {
    bundle
        .table3
        .iter()
        .flat_map(|m| {
            m.fit.coefficients.iter().map(move |c| {
                let ci = m.interval(&c.name);
                Table3Row {
                    scale: m.scale_id.clone(),
                    covariate: c.name.clone(),
                    estimate: c.estimate,
                    std_error: c.std_error,
                    ci_lower: ci.map(|i| i.lower),
                    ci_upper: ci.map(|i| i.upper),
                    l_star_ratio: ratio_of(m, &c.name),
                    conditional_r2: m.fit.conditional_r2,
                }
            })
        })
        .collect()
}

fn csv_of<T: Serialize>(header: &[&str], rows: &[T]) -> Result<String, PipelineError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn parse_csv<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, PipelineError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(PipelineError::from)).collect()
}

const TABLE1_HEADER: [&str; 8] =
    ["Scale", "Variable", "Estimate", "Standard Error", "t-statistic", "p-value", "L* Ratio", "Adjusted R²"];
const TABLE2_HEADER: [&str; 6] = ["Scale", "Device", "ICC (single)", "ICC (average)", "Targets", "Raters"];
const TABLE3_CSV_HEADER: [&str; 8] = [
    "Scale",
    "Covariate",
    "Estimate",
    "Standard Error",
    "Wald 95% CI Lower",
    "Wald 95% CI Upper",
    "L* Ratio",
    "Conditional R²",
];

pub fn table1_csv(bundle: &ReportBundle) -> Result<String, PipelineError> {
    csv_of(&TABLE1_HEADER, &table1_rows(bundle))
}

pub fn table2_csv(bundle: &ReportBundle) -> Result<String, PipelineError> {
    csv_of(&TABLE2_HEADER, &table2_rows(bundle))
}

pub fn table3_csv(bundle: &ReportBundle) -> Result<String, PipelineError> {
    csv_of(&TABLE3_CSV_HEADER, &table3_rows(bundle))
}

fn text_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &mut dyn Iterator<Item = &str>| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.zip(&widths).enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            let pad = w - cell.chars().count();
            if i < 2 {
                s.push_str(cell);
                s.extend(std::iter::repeat_n(' ', pad));
            } else {
                s.extend(std::iter::repeat_n(' ', pad));
                s.push_str(cell);
            }
        }
        s.truncate(s.trim_end().len());
        s.push('\n');
        s
    };
    let mut out = line(&mut header.iter().copied());
    for r in rows {
        out.push_str(&line(&mut r.iter().map(String::as_str)));
    }
    out
}

fn num(v: f64) -> String {
    format!("{v:.4}")
}

fn p_text(p: f64) -> String {
    if p < 1e-4 {
        "<0.0001".into()
    } else {
        format!("{p:.4}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Fit statistics appear on the first row of each scale only.
fn first_of_scale<T>(rows: &[T], scale: impl Fn(&T) -> &str) -> Vec<bool> {
    rows.iter().enumerate().map(|(i, r)| i == 0 || scale(&rows[i - 1]) != scale(r)).collect()
}

pub fn table1_text(bundle: &ReportBundle) -> String {
    let rows = table1_rows(bundle);
    let first = first_of_scale(&rows, |r| &r.scale);
    let cells: Vec<Vec<String>> = rows
        .iter()
        .zip(first)
        .map(|(r, first)| {
            vec![
                if first { r.scale.to_uppercase() } else { String::new() },
                r.variable.clone(),
                num(r.estimate),
                num(r.std_error),
                format!("{:.2}", r.statistic),
                p_text(r.p_value),
                opt(r.l_star_ratio),
                if first { opt(r.adj_r2) } else { String::new() },
            ]
        })
        .collect();
    text_table(&TABLE1_HEADER, &cells)
}

pub fn table2_text(bundle: &ReportBundle) -> String {
    let cells: Vec<Vec<String>> = table2_rows(bundle)
        .iter()
        .map(|r| {
            vec![
                r.scale.to_uppercase(),
                r.device.clone(),
                format!("{:.2}", r.icc_single),
                format!("{:.2}", r.icc_average),
                r.n_targets.to_string(),
                r.k_raters.to_string(),
            ]
        })
        .collect();
    text_table(&TABLE2_HEADER, &cells)
}

pub fn table3_text(bundle: &ReportBundle) -> String {
    let rows = table3_rows(bundle);
    let first = first_of_scale(&rows, |r| &r.scale);
    let cells: Vec<Vec<String>> = rows
        .iter()
        .zip(first)
        .map(|(r, first)| {
            let ci = match (r.ci_lower, r.ci_upper) {
                (Some(l), Some(u)) => format!("[{l:.4}, {u:.4}]"),
                _ => String::new(),
            };
            vec![
                if first { r.scale.to_uppercase() } else { String::new() },
                r.covariate.clone(),
                num(r.estimate),
                num(r.std_error),
                ci,
                opt(r.l_star_ratio),
                if first { opt(r.conditional_r2) } else { String::new() },
            ]
        })
        .collect();
    let mut header = vec!["Scale", "Covariate"];
    header.extend(TABLE3_COLUMNS);
    text_table(&header, &cells)
}

#[derive(Serialize)]
struct AccuracyRow<'a> {
    scale: &'a str,
    background: String,
    index: u32,
    n: usize,
    #[serde(rename = "L")]
    l: Option<f64>,
    a: Option<f64>,
    b: Option<f64>,
    delta_e: Option<f64>,
}

#[derive(Serialize)]
struct UtilizationRow<'a> {
    scale: &'a str,
    bin: usize,
    lower: f64,
    upper: f64,
    n: usize,
    mean_lightness: Option<f64>,
    mean_response: Option<f64>,
    utilization: f64,
}

#[derive(Serialize)]
struct PreferenceRow {
    background: String,
    race: String,
    n: usize,
    percent: Option<f64>,
}

#[derive(Serialize)]
struct CoefficientRow<'a> {
    variable: &'a str,
    estimate: f64,
    std_error: f64,
    z: f64,
    p_value: f64,
}

#[derive(Serialize)]
struct TraceRow<'a> {
    scale: &'a str,
    step: usize,
    action: &'static str,
    term: &'a str,
    bic: f64,
    terms: String,
}

fn accuracy_csv(bundle: &ReportBundle) -> Result<String, PipelineError> {
    let rows: Vec<AccuracyRow> = bundle
        .accuracy
        .iter()
        .flat_map(|t| {
            t.rows.iter().map(move |r| AccuracyRow {
                scale: &t.scale_id,
                background: t.background.map_or_else(|| "all".into(), |b| b.to_string()),
                index: r.index,
                n: r.n,
                l: r.mean_tone.map(|c| c.l),
                a: r.mean_tone.map(|c| c.a),
                b: r.mean_tone.map(|c| c.b),
                delta_e: r.delta_e,
            })
        })
        .collect();
    csv_of(&["scale", "background", "index", "n", "L", "a", "b", "delta_e"], &rows)
}

fn utilization_csv(bundle: &ReportBundle) -> Result<String, PipelineError> {
    let rows: Vec<UtilizationRow> = bundle
        .utilization
        .iter()
        .flat_map(|u| {
            u.utilization.bins.iter().enumerate().map(move |(i, b)| UtilizationRow {
                scale: &u.scale_id,
                bin: i + 1,
                lower: b.lower,
                upper: b.upper,
                n: b.n,
                mean_lightness: b.mean_lightness,
                mean_response: b.mean_response,
                utilization: u.utilization.fraction,
            })
        })
        .collect();
    csv_of(&["scale", "bin", "lower", "upper", "n", "mean_lightness", "mean_response", "utilization"], &rows)
}

fn preference_csv(bundle: &ReportBundle) -> Result<String, PipelineError> {
    let rows: Vec<PreferenceRow> = bundle
        .preference
        .iter()
        .flat_map(|p| &p.cells)
        .map(|c| PreferenceRow {
            background: c.background.to_string(),
            race: c.race.to_string(),
            n: c.n,
            percent: c.percent,
        })
        .collect();
    csv_of(&["background", "race", "n", "percent"], &rows)
}

fn preference_model_csv(bundle: &ReportBundle) -> Result<String, PipelineError> {
    let rows: Vec<CoefficientRow> = bundle
        .preference
        .iter()
        .filter_map(|p| p.fit.as_ref())
        .flat_map(|f| &f.coefficients)
        .map(|c| CoefficientRow {
            variable: &c.name,
            estimate: c.estimate,
            std_error: c.std_error,
            z: c.statistic,
            p_value: c.p_value,
        })
        .collect();
    csv_of(&["variable", "estimate", "std_error", "z", "p_value"], &rows)
}

fn trace_csv(bundle: &ReportBundle) -> Result<String, PipelineError> {
    let rows: Vec<TraceRow> = bundle
        .table1
        .iter()
        .flat_map(|m| {
            m.trace.iter().enumerate().map(move |(i, s)| {
                let (action, term) = match &s.action {
                    StepAction::Start => ("start", ""),
                    StepAction::Drop(t) => ("drop", t.as_str()),
                    StepAction::Add(t) => ("add", t.as_str()),
                };
                TraceRow { scale: &m.scale_id, step: i, action, term, bic: s.bic, terms: s.terms.join(";") }
            })
        })
        .collect();
    csv_of(&["scale", "step", "action", "term", "bic", "terms"], &rows)
}

#[derive(Serialize)]
struct Summary<'a> {
    models: Vec<ModelSummary<'a>>,
    filter: &'a Option<FilterReport>,
    exclusions: &'a Option<ExclusionSummary>,
    notes: &'a [String],
}

#[derive(Serialize)]
struct ModelSummary<'a> {
    scale_id: &'a str,
    kind: crate::stats::ModelKind,
    terms: &'a [String],
    n: usize,
    k: usize,
    log_lik: f64,
    bic: f64,
    adj_r2: Option<f64>,
    conditional_r2: Option<f64>,
    sigma_b2: Option<f64>,
    sigma_e2: Option<f64>,
}

fn summary_json(bundle: &ReportBundle) -> Result<String, PipelineError> {
    let models = bundle
        .table1
        .iter()
        .chain(&bundle.table3)
        .map(|m| ModelSummary {
            scale_id: &m.scale_id,
            kind: m.fit.kind,
            terms: &m.fit.terms,
            n: m.fit.n,
            k: m.fit.k,
            log_lik: m.fit.log_lik,
            bic: m.fit.bic,
            adj_r2: m.fit.adj_r2,
            conditional_r2: m.fit.conditional_r2,
            sigma_b2: m.sigma_b2,
            sigma_e2: m.sigma_e2,
        })
        .collect();
    let s = Summary { models, filter: &bundle.filter, exclusions: &bundle.exclusions, notes: &bundle.notes };
    Ok(serde_json::to_string_pretty(&s)? + "\n")
}

/// Writes every table of `bundle` into `dir` and returns the written paths.
/// Sections with no content still produce their header line.
pub fn emit_reports(bundle: &ReportBundle, dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>, PipelineError> {
    fs::create_dir_all(dir)?;
    let mut files: Vec<(&str, String)> = Vec::new();
    if format != ReportFormat::Csv {
        files.push(("table1.txt", table1_text(bundle)));
        files.push(("table2.txt", table2_text(bundle)));
        files.push(("table3.txt", table3_text(bundle)));
    }
    if format != ReportFormat::Text {
        files.push(("table1.csv", table1_csv(bundle)?));
        files.push(("table2.csv", table2_csv(bundle)?));
        files.push(("table3.csv", table3_csv(bundle)?));
    }
    files.push(("accuracy.csv", accuracy_csv(bundle)?));
    files.push(("utilization.csv", utilization_csv(bundle)?));
    files.push(("preference.csv", preference_csv(bundle)?));
    files.push(("preference_model.csv", preference_model_csv(bundle)?));
    files.push(("stepwise.csv", trace_csv(bundle)?));
    files.push(("summary.json", summary_json(bundle)?));
    let mut written = Vec::new();
    for (name, text) in files {
        let path = dir.join(name);
        fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}

/// Short human-readable digest used by the CLI.
pub fn digest(bundle: &ReportBundle) -> String {
    let mut s = String::new();
    for m in bundle.table1.iter().chain(&bundle.table3) {
        let r2 = m.fit.adj_r2.or(m.fit.conditional_r2).unwrap_or(f64::NAN);
        let _ = writeln!(s, "{}: n={} k={} R²={r2:.4} terms={}", m.scale_id, m.fit.n, m.fit.k, m.fit.terms.join(" + "));
    }
    for r in &bundle.table2 {
        let _ =
            writeln!(s, "ICC {} {}: {:.3} / {:.3}", r.scale_id, r.device, r.values.icc_single, r.values.icc_average);
    }
    for n in &bundle.notes {
        let _ = writeln!(s, "note: {n}");
    }
    s
}
