//! Binary logistic regression by iteratively reweighted least squares.

use nalgebra::DVector;

use super::dist::normal_two_sided;
use super::linalg::least_squares;
use super::{bic, Coefficient, DesignSpec, ModelFit, ModelKind, StatsError};

const MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 30;
/// Relative deviance change at which IRLS stops (the glm.fit criterion).
const DEVIANCE_TOL: f64 = 1e-10;
const PROB_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub fit: ModelFit,
    /// Deviance after each IRLS iteration, starting from β = 0.
    pub deviance_trace: Vec<f64>,
    pub iterations: usize,
}

impl LogisticFit {
    pub fn deviance(&self) -> f64 {
        -2.0 * self.fit.log_lik
    }
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn deviance(y: &DVector<f64>, eta: &DVector<f64>) -> f64 {
    -2.0 * y
        .iter()
        .zip(eta.iter())
        .map(|(&yi, &e)| {
            let mu = sigmoid(e).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            yi * mu.ln() + (1.0 - yi) * (1.0 - mu).ln()
        })
        .sum::<f64>()
}

pub fn logistic_fit(spec: &DesignSpec) -> Result<ModelFit, StatsError> {
    logistic_fit_detailed(spec).map(|f| f.fit)
}

pub fn logistic_fit_detailed(spec: &DesignSpec) -> Result<LogisticFit, StatsError> {
    let d = spec.prepare()?;
    let (n, p) = (d.n(), d.p());
    if d.y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(StatsError::NonBinaryResponse(spec.response.clone()));
    }
    if n <= p {
        return Err(StatsError::TooFewObservations { n, k: p });
    }
    let names = |cols: Vec<usize>| cols.into_iter().map(|j| d.column_names[j].clone()).collect();
    if let Err(cols) = least_squares(&d.x, &d.y) {
        return Err(StatsError::RankDeficient(names(cols)));
    }

    let mut beta = DVector::zeros(p);
    let mut eta = &d.x * &beta;
    let mut dev = deviance(&d.y, &eta);
    let mut trace = vec![dev];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITER {
        iterations += 1;
        let mu: Vec<f64> = eta.iter().map(|&e| sigmoid(e).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)).collect();
        let sqrt_w: Vec<f64> = mu.iter().map(|m| (m * (1.0 - m)).sqrt()).collect();
        let mut xw = d.x.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= sqrt_w[i];
        }
        let zw = DVector::from_fn(n, |i, _| sqrt_w[i] * (eta[i] + (d.y[i] - mu[i]) / (mu[i] * (1.0 - mu[i]))));
        let step = match least_squares(&xw, &zw) {
            Ok(ls) => ls.beta,
            Err(_) => break,
        };

        // Step-halving keeps the deviance sequence non-increasing.
        let mut candidate = step;
        let mut cand_eta = &d.x * &candidate;
        let mut cand_dev = deviance(&d.y, &cand_eta);
        let mut halvings = 0;
        while !(cand_dev.is_finite() && cand_dev <= dev) && halvings < MAX_HALVINGS {
            candidate = (&candidate + &beta) * 0.5;
            cand_eta = &d.x * &candidate;
            cand_dev = deviance(&d.y, &cand_eta);
            halvings += 1;
        }
        if !(cand_dev.is_finite() && cand_dev <= dev) {
            break;
        }
        let change = (dev - cand_dev).abs() / (cand_dev.abs() + 0.1);
        beta = candidate;
        eta = cand_eta;
        dev = cand_dev;
        trace.push(dev);
        if change < DEVIANCE_TOL {
            converged = true;
            break;
        }
    }

    let max_eta = eta.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let diverging = || {
        let mut idx: Vec<usize> = (0..p).collect();
        idx.sort_by(|&a, &b| beta[b].abs().total_cmp(&beta[a].abs()));
        names(idx.into_iter().filter(|&j| j > 0).take(1).collect())
    };
    if dev < 1e-8 * n as f64 || (!converged && max_eta > 30.0) {
        return Err(StatsError::Separation(diverging()));
    }
    if !converged {
        return Err(StatsError::NonConvergence { iterations, detail: format!("deviance {dev:.6}") });
    }

    let mu: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
    let mut xw = d.x.clone();
    for (i, mut row) in xw.row_iter_mut().enumerate() {
        row *= (mu[i] * (1.0 - mu[i])).sqrt();
    }
    let cov = (xw.transpose() * &xw).try_inverse().ok_or_else(|| StatsError::Separation(diverging()))?;
    let coefficients = (0..p)
        .map(|j| {
            let std_error = cov[(j, j)].sqrt();
            let statistic = beta[j] / std_error;
            Coefficient {
                name: d.column_names[j].clone(),
                estimate: beta[j],
                std_error,
                statistic,
                p_value: normal_two_sided(statistic),
            }
        })
        .collect();
    let log_lik = -0.5 * dev;
    Ok(LogisticFit {
        fit: ModelFit {
            kind: ModelKind::Logistic,
            response: spec.response.clone(),
            terms: spec.term_names(),
            coefficients,
            n,
            k: p,
            log_lik,
            bic: bic(p, n, log_lik),
            r_squared: None,
            adj_r2: None,
            conditional_r2: None,
            residual_variance: None,
            df_resid: n - p,
            fitted: mu,
        },
        deviance_trace: trace,
        iterations,
    })
}
