//! Regression engines shared by the study analyses: OLS with t inference,
//! BIC and bidirectional stepwise selection, a random-intercept linear mixed
//! model fitted by maximum likelihood, and logistic regression via IRLS.

pub mod design;
pub mod dist;
pub mod linalg;
pub mod lmm;
pub mod logistic;
pub mod ols;
pub mod stepwise;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use design::{Column, DesignMatrix, DesignSpec, Frame, Term, INTERCEPT};
pub use lmm::{lmm_fit, LmmDiagnostic, MixedFit};
pub use logistic::{logistic_fit, logistic_fit_detailed, LogisticFit};
pub use ols::ols_fit;
pub use stepwise::{stepwise_bic, stepwise_bic_with, Step, StepAction, StepwiseResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("no column named {0:?}")]
    MissingColumn(String),
    #[error("column {column:?} is not {expected}")]
    ColumnType { column: String, expected: &'static str },
    #[error("column {column:?} has {found} rows, expected {expected}")]
    ColumnLength { column: String, expected: usize, found: usize },
    #[error("column {column:?} has a non-finite value at row {row}")]
    NonFinite { column: String, row: usize },
    #[error("reference level {level:?} does not occur in {column:?}")]
    UnknownReference { column: String, level: String },
    #[error("rank-deficient design; collinear columns: {}", .0.join(", "))]
    RankDeficient(Vec<String>),
    #[error("need more observations ({n}) than parameters ({k})")]
    TooFewObservations { n: usize, k: usize },
    #[error("response {0:?} must be coded 0/1")]
    NonBinaryResponse(String),
    #[error("perfect separation: coefficients diverge ({})", .0.join(", "))]
    Separation(Vec<String>),
    #[error("no convergence after {iterations} iterations: {detail}")]
    NonConvergence { iterations: usize, detail: String },
    #[error("need at least two groups, found {0}")]
    TooFewGroups(usize),
    #[error("term {0:?} not present in the fit")]
    MissingTerm(String),
    #[error("coefficient of {0:?} is zero; ratios undefined")]
    ZeroLightness(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ols,
    Logistic,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    /// t for OLS, Wald z for logistic and mixed fits.
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub kind: ModelKind,
    pub response: String,
    pub terms: Vec<String>,
    pub coefficients: Vec<Coefficient>,
    pub n: usize,
    /// Estimated parameters, including variance parameters.
    pub k: usize,
    pub log_lik: f64,
    pub bic: f64,
    pub r_squared: Option<f64>,
    pub adj_r2: Option<f64>,
    pub conditional_r2: Option<f64>,
    pub residual_variance: Option<f64>,
    pub df_resid: usize,
    pub fitted: Vec<f64>,
}

impl ModelFit {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn estimate(&self, name: &str) -> Option<f64> {
        self.coefficient(name).map(|c| c.estimate)
    }
}

/// BIC = k·ln(n) − 2·ln(L̂).
pub fn bic(k: usize, n: usize, log_lik: f64) -> f64 {
    k as f64 * (n as f64).ln() - 2.0 * log_lik
}

pub fn bic_of(fit: &ModelFit) -> f64 {
    bic(fit.k, fit.n, fit.log_lik)
}

/// Each non-intercept coefficient divided by the lightness coefficient.
pub fn l_star_ratios(fit: &ModelFit, lightness_term: &str) -> Result<Vec<(String, f64)>, StatsError> {
    let beta_l = fit.estimate(lightness_term).ok_or_else(|| StatsError::MissingTerm(lightness_term.to_string()))?;
    if beta_l == 0.0 {
        return Err(StatsError::ZeroLightness(lightness_term.to_string()));
    }
    Ok(fit.coefficients.iter().filter(|c| c.name != INTERCEPT).map(|c| (c.name.clone(), c.estimate / beta_l)).collect())
}

/// Gaussian log-likelihood at the ML variance RSS/n.
pub fn gaussian_log_lik(rss: f64, n: usize) -> f64 {
    if rss <= 0.0 {
        return f64::INFINITY;
    }
    let n = n as f64;
    -0.5 * n * ((2.0 * std::f64::consts::PI).ln() + (rss / n).ln() + 1.0)
}
