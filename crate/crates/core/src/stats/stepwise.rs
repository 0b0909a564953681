//! Bidirectional stepwise selection on BIC.
//!
//! Starts from the full model. Each step scores every single-term deletion
//! from the current model and every re-addition of a full-model term that is
//! currently out, and applies the lowest-BIC move if it beats the current
//! BIC. Categorical terms move as whole blocks because moves act on terms,
//! not design columns.

use serde::{Deserialize, Serialize};

use super::{ols_fit, DesignSpec, ModelFit, StatsError, Term};

/// Improvements smaller than this are treated as ties with the current model.
const MIN_IMPROVEMENT: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", content = "term", rename_all = "snake_case")]
pub enum StepAction {
    Start,
    Drop(String),
    Add(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub action: StepAction,
    pub bic: f64,
    pub terms: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct StepwiseResult {
    pub spec: DesignSpec,
    pub fit: ModelFit,
    pub trace: Vec<Step>,
}

impl StepwiseResult {
    pub fn selected_terms(&self) -> Vec<String> {
        self.spec.term_names()
    }
}

/// Stepwise selection of an OLS model.
pub fn stepwise_bic(full: &DesignSpec) -> Result<StepwiseResult, StatsError> {
    stepwise_bic_with(full, ols_fit)
}

/// Stepwise selection driven by any fitter that reports BIC.
pub fn stepwise_bic_with<F>(full: &DesignSpec, fit: F) -> Result<StepwiseResult, StatsError>
where
    F: Fn(&DesignSpec) -> Result<ModelFit, StatsError>,
{
    let mut current: Vec<Term> = full.terms.clone();
    let mut current_fit = fit(full)?;
    let mut trace = vec![Step { action: StepAction::Start, bic: current_fit.bic, terms: full.term_names() }];

    loop {
        let mut best: Option<(StepAction, Vec<Term>, ModelFit)> = None;
        let mut consider = |action: StepAction, terms: Vec<Term>| -> Result<(), StatsError> {
            let candidate = fit(&full.with_terms(terms.clone()))?;
            if best.as_ref().is_none_or(|(_, _, b)| candidate.bic < b.bic) {
                best = Some((action, terms, candidate));
            }
            Ok(())
        };

        for (i, term) in current.iter().enumerate() {
            let mut terms = current.clone();
            terms.remove(i);
            consider(StepAction::Drop(term.name().to_string()), terms)?;
        }
        for term in full.terms.iter().filter(|t| !current.contains(t)) {
            // Keep full-model ordering so reports list terms consistently.
            let terms: Vec<Term> = full.terms.iter().filter(|t| *t == term || current.contains(t)).cloned().collect();
            consider(StepAction::Add(term.name().to_string()), terms)?;
        }

        match best {
            Some((action, terms, candidate)) if candidate.bic < current_fit.bic - MIN_IMPROVEMENT => {
                trace.push(Step {
                    action,
                    bic: candidate.bic,
                    terms: terms.iter().map(|t| t.name().to_string()).collect(),
                });
                current = terms;
                current_fit = candidate;
            }
            _ => break,
        }
    }

    Ok(StepwiseResult { spec: full.with_terms(current), fit: current_fit, trace })
}
