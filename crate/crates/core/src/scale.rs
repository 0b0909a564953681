//! Skin-tone scales: quadratic hue/chroma models over L*, colorimetric scale
//! generation, scale definition files and nearest-swatch assignment.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color::{delta_e, ita_of, lab_to_srgb, ColorError, ItaClass, LabColor, PolarTone, RgbColor};
use crate::stats::linalg::least_squares;

#[derive(Debug, Error)]
pub enum ScaleError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid scale definition: {0}")]
    Schema(String),
    #[error("need at least 3 distinct L* values, found {0}")]
    TooFewLightnessLevels(usize),
    #[error("need at least 2 swatches, got {0}")]
    TooFewSwatches(usize),
    #[error("invalid lightness range [{0}, {1}]")]
    InvalidRange(f64, f64),
    #[error("predicted chroma {chroma:.4} is negative at L* = {l:.4}")]
    NegativeChroma { l: f64, chroma: f64 },
    #[error("scale {scale_id:?}: indices must run 1..={expected}, found {found:?}")]
    NonContiguous { scale_id: String, expected: usize, found: Vec<u32> },
    #[error("scale {scale_id:?}: swatch {index} hex {hex} disagrees with its Lab value (renders as {rendered})")]
    HexMismatch { scale_id: String, index: u32, hex: String, rendered: String },
    #[error("scale {scale_id:?}: swatch 1 is not the lightest")]
    NotLightestFirst { scale_id: String },
    #[error("scale {0:?} has no swatches")]
    NotPalette(String),
    #[error(transparent)]
    Color(#[from] ColorError),
}

/// y = β₀ + β₁·L* + β₂·L*² fitted by least squares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub rss: f64,
    pub n: usize,
    /// Classical standard errors; NaN when there are no residual degrees of freedom.
    pub std_errors: [f64; 3],
}

impl QuadraticFit {
    pub fn predict(&self, l: f64) -> f64 {
        self.beta0 + self.beta1 * l + self.beta2 * l * l
    }

    pub fn coefficients(&self) -> [f64; 3] {
        [self.beta0, self.beta1, self.beta2]
    }
}

pub fn fit_quadratic(points: &[(f64, f64)]) -> Result<QuadraticFit, ScaleError> {
    let mut levels: Vec<f64> = points.iter().map(|p| p.0).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    if levels.len() < 3 {
        return Err(ScaleError::TooFewLightnessLevels(levels.len()));
    }
    let n = points.len();
    let x = DMatrix::from_fn(n, 3, |i, j| points[i].0.powi(j as i32));
    let y = DVector::from_iterator(n, points.iter().map(|p| p.1));
    let ls = least_squares(&x, &y).map_err(|_| ScaleError::TooFewLightnessLevels(levels.len()))?;
    let sigma2 = if n > 3 { ls.rss / (n - 3) as f64 } else { f64::NAN };
    let std_errors = [0, 1, 2].map(|j| (sigma2 * ls.gram_inverse[(j, j)]).sqrt());
    Ok(QuadraticFit { beta0: ls.beta[0], beta1: ls.beta[1], beta2: ls.beta[2], rss: ls.rss, n, std_errors })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleKind {
    Palette,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleSource {
    Generated,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Swatch {
    pub index: u32,
    #[serde(flatten)]
    pub lab: LabColor,
    #[serde(rename = "hex")]
    pub srgb_hex: String,
    #[serde(default)]
    pub out_of_gamut: bool,
}

impl Swatch {
    pub fn from_lab(index: u32, lab: LabColor) -> Self {
        let rendered = lab_to_srgb(lab);
        Self { index, lab, srgb_hex: rendered.rgb.to_hex(), out_of_gamut: rendered.out_of_gamut }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextItem {
    pub index: u32,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    pub scale_id: String,
    pub name: String,
    pub kind: ScaleKind,
    #[serde(default = "external")]
    pub source: ScaleSource,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub swatches: Vec<Swatch>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub items: Vec<TextItem>,
}

fn external() -> ScaleSource {
    ScaleSource::External
}

impl Scale {
    /// Number of response options.
    pub fn len(&self) -> usize {
        match self.kind {
            ScaleKind::Palette => self.swatches.len(),
            ScaleKind::Text => self.items.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn swatch(&self, index: u32) -> Option<&Swatch> {
        self.swatches.iter().find(|s| s.index == index)
    }

    /// ITA class of every swatch, in index order.
    pub fn ita_classes(&self) -> Result<Vec<ItaClass>, ColorError> {
        self.swatches.iter().map(|s| ita_of(s.lab)).collect()
    }

    /// Checks index contiguity, Lab validity, hex consistency and ordering,
    /// and recomputes the out-of-gamut flags.
    pub fn validate(mut self) -> Result<Self, ScaleError> {
        let indices: Vec<u32> = match self.kind {
            ScaleKind::Palette => self.swatches.iter().map(|s| s.index).collect(),
            ScaleKind::Text => self.items.iter().map(|s| s.index).collect(),
        };
        if indices.is_empty() {
            return Err(ScaleError::Schema(format!("scale {:?} lists no entries", self.scale_id)));
        }
        if indices.iter().enumerate().any(|(i, &idx)| idx as usize != i + 1) {
            return Err(ScaleError::NonContiguous {
                scale_id: self.scale_id.clone(),
                expected: indices.len(),
                found: indices,
            });
        }
        if self.kind == ScaleKind::Text {
            return Ok(self);
        }
        for s in &mut self.swatches {
            s.lab.validate()?;
            let declared: RgbColor = s.srgb_hex.parse()?;
            let rendered = lab_to_srgb(s.lab);
            if declared.max_channel_diff(rendered.rgb) > 1 {
                return Err(ScaleError::HexMismatch {
                    scale_id: self.scale_id.clone(),
                    index: s.index,
                    hex: s.srgb_hex.clone(),
                    rendered: rendered.rgb.to_hex(),
                });
            }
            s.srgb_hex = declared.to_hex();
            s.out_of_gamut = rendered.out_of_gamut;
        }
        let first = self.swatches[0].lab.l;
        if self.swatches[1..].iter().any(|s| s.lab.l > first) {
            return Err(ScaleError::NotLightestFirst { scale_id: self.scale_id.clone() });
        }
        Ok(self)
    }
}

pub fn parse_scale(text: &str) -> Result<Scale, ScaleError> {
    let scale: Scale = serde_json::from_str(text).map_err(|e| ScaleError::Schema(e.to_string()))?;
    scale.validate()
}

pub fn load_scale(path: impl AsRef<Path>) -> Result<Scale, ScaleError> {
    parse_scale(&fs::read_to_string(path)?)
}

/// Every `*.json` scale in `dir`, sorted by file name.
pub fn load_scale_dir(dir: impl AsRef<Path>) -> Result<Vec<Scale>, ScaleError> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths.into_iter().map(load_scale).collect()
}

pub fn scale_to_string(scale: &Scale) -> String {
    let mut s = serde_json::to_string_pretty(scale).expect("scales always serialize");
    s.push('\n');
    s
}

pub fn write_scale(path: impl AsRef<Path>, scale: &Scale) -> Result<(), ScaleError> {
    fs::write(path, scale_to_string(scale))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CstConfig {
    pub k: usize,
    pub l_min: f64,
    pub l_max: f64,
}

impl Default for CstConfig {
    fn default() -> Self {
        Self { k: 10, l_min: 20.0, l_max: 70.0 }
    }
}

impl CstConfig {
    /// Evenly spaced L* values from `l_max` down to `l_min`, both included.
    pub fn lightness_levels(&self) -> Vec<f64> {
        let step = (self.l_max - self.l_min) / (self.k - 1) as f64;
        (0..self.k).map(|i| self.l_max - i as f64 * step).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScale {
    pub scale: Scale,
    pub hue_fit: QuadraticFit,
    pub chroma_fit: QuadraticFit,
}

/// Fits hue and chroma as quadratics in L* over `corpus` and samples them at
/// evenly spaced lightness levels, lightest first.
pub fn generate_cst_scale(corpus: &[PolarTone], config: CstConfig) -> Result<GeneratedScale, ScaleError> {
    if config.k < 2 {
        return Err(ScaleError::TooFewSwatches(config.k));
    }
    if !(config.l_min.is_finite() && config.l_max.is_finite() && config.l_min < config.l_max)
        || config.l_min < 0.0
        || config.l_max > 100.0
    {
        return Err(ScaleError::InvalidRange(config.l_min, config.l_max));
    }
    let hue_fit = fit_quadratic(&corpus.iter().map(|t| (t.l, t.hue_deg)).collect::<Vec<_>>())?;
    let chroma_fit = fit_quadratic(&corpus.iter().map(|t| (t.l, t.chroma)).collect::<Vec<_>>())?;
    let swatches = config
        .lightness_levels()
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            let chroma = chroma_fit.predict(l);
            if chroma < 0.0 {
                return Err(ScaleError::NegativeChroma { l, chroma });
            }
            let tone = PolarTone { l, hue_deg: hue_fit.predict(l), chroma };
            Ok(Swatch::from_lab(i as u32 + 1, tone.to_lab()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GeneratedScale {
        scale: Scale {
            scale_id: "cst".into(),
            name: "Colorimetric Skin Tone".into(),
            kind: ScaleKind::Palette,
            source: ScaleSource::Generated,
            swatches,
            items: Vec::new(),
        },
        hue_fit,
        chroma_fit,
    })
}

/// Closest swatch by CIE76 ΔE; ties go to the lower index.
pub fn nearest_swatch(c: LabColor, scale: &Scale) -> Result<(u32, f64), ScaleError> {
    let mut best: Option<(u32, f64)> = None;
    for s in &scale.swatches {
        let d = delta_e(c, s.lab);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((s.index, d));
        }
    }
    best.ok_or_else(|| ScaleError::NotPalette(scale.scale_id.clone()))
}
