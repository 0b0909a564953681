use super::dist::student_t_two_sided;
use super::linalg::least_squares;
use super::{bic, gaussian_log_lik, Coefficient, DesignSpec, ModelFit, ModelKind, StatsError};

/// Ordinary least squares with classical standard errors and t inference
/// on n − p degrees of freedom.
pub fn ols_fit(spec: &DesignSpec) -> Result<ModelFit, StatsError> {
    let d = spec.prepare()?;
    let (n, p) = (d.n(), d.p());
    if n <= p {
        return Err(StatsError::TooFewObservations { n, k: p });
    }
    let ls = least_squares(&d.x, &d.y)
        .map_err(|cols| StatsError::RankDeficient(cols.into_iter().map(|j| d.column_names[j].clone()).collect()))?;

    let df = n - p;
    let sigma2 = ls.rss / df as f64;
    let coefficients = (0..p)
        .map(|j| {
            let estimate = ls.beta[j];
            let std_error = (sigma2 * ls.gram_inverse[(j, j)]).sqrt();
            let statistic = estimate / std_error;
            let p_value = if std_error > 0.0 { student_t_two_sided(statistic, df as f64) } else { 0.0 };
            Coefficient { name: d.column_names[j].clone(), estimate, std_error, statistic, p_value }
        })
        .collect();

    let mean_y = d.y.mean();
    let tss: f64 = d.y.iter().map(|v| (v - mean_y).powi(2)).sum();
    let (r_squared, adj_r2) = if tss > 0.0 {
        let r2 = 1.0 - ls.rss / tss;
        (Some(r2), Some(1.0 - (1.0 - r2) * (n as f64 - 1.0) / df as f64))
    } else {
        (None, None)
    };
    // Coefficients plus the residual variance.
    let k = p + 1;
    let log_lik = gaussian_log_lik(ls.rss, n);
    Ok(ModelFit {
        kind: ModelKind::Ols,
        response: spec.response.clone(),
        terms: spec.term_names(),
        coefficients,
        n,
        k,
        log_lik,
        bic: bic(k, n, log_lik),
        r_squared,
        adj_r2,
        conditional_r2: None,
        residual_variance: Some(sigma2),
        df_resid: df,
        fitted: ls.fitted.iter().copied().collect(),
    })
}
