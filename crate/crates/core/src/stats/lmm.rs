//! Random-intercept linear mixed model fitted by maximum likelihood.
//!
//! Model: y = Xβ + b_group + ε with b ~ N(0, σ_b²), ε ~ N(0, σ_e²).
//! For a fixed ratio λ = σ_b²/σ_e² the GLS problem reduces to OLS on
//! quasi-demeaned data (x − θ_g·x̄_g with θ_g = 1 − 1/√(1 + λ·n_g)), which
//! gives β̂(λ) and σ̂_e²(λ) in closed form. The profiled log-likelihood is then
//! maximised over log λ, with λ = 0 checked separately as a boundary point.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::dist::{normal_quantile, normal_two_sided};
use super::linalg::{collinear_columns, least_squares, LeastSquares};
use super::{bic, Coefficient, DesignSpec, ModelFit, ModelKind, StatsError};

const LOG_LAMBDA_MIN: f64 = -12.0;
const LOG_LAMBDA_MAX: f64 = 8.0;
const GRID_STEP: f64 = 0.5;
const GOLDEN_TOL: f64 = 1e-7;
const GOLDEN_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LmmDiagnostic {
    /// The likelihood is maximised at λ = 0 (σ_b² = 0).
    Boundary,
    /// The optimum sits at the upper end of the searched λ range.
    UpperBoundary,
    /// Every group has a single observation, so σ_b² and σ_e² cannot be
    /// separated; λ is reported as 0.
    Unidentifiable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedFit {
    pub fit: ModelFit,
    pub sigma_b2: f64,
    pub sigma_e2: f64,
    pub lambda: f64,
    pub n_groups: usize,
    /// Wald 95% intervals for the fixed effects.
    pub conf_intervals: Vec<ConfidenceInterval>,
    /// Conditional modes of the random intercepts.
    pub random_effects: Vec<(String, f64)>,
    pub diagnostics: Vec<LmmDiagnostic>,
    pub evaluations: usize,
}

struct Problem {
    x: DMatrix<f64>,
    y: DVector<f64>,
    group_of: Vec<usize>,
    sizes: Vec<usize>,
    x_means: DMatrix<f64>,
    y_means: DVector<f64>,
}

struct Profile {
    log_lik: f64,
    ls: LeastSquares,
    sigma_e2: f64,
}

impl Problem {
    fn profile(&self, lambda: f64) -> Profile {
        let n = self.x.nrows();
        let theta: Vec<f64> = self.sizes.iter().map(|&m| 1.0 - 1.0 / (1.0 + lambda * m as f64).sqrt()).collect();
        let xs = DMatrix::from_fn(n, self.x.ncols(), |i, j| {
            let g = self.group_of[i];
            self.x[(i, j)] - theta[g] * self.x_means[(g, j)]
        });
        let ys = DVector::from_fn(n, |i, _| {
            let g = self.group_of[i];
            self.y[i] - theta[g] * self.y_means[g]
        });
        let ls = least_squares(&xs, &ys).expect("full-rank design stays full rank after quasi-demeaning");
        let sigma_e2 = ls.rss / n as f64;
        let log_det: f64 = self.sizes.iter().map(|&m| (1.0 + lambda * m as f64).ln()).sum();
        let nf = n as f64;
        let log_lik = if sigma_e2 > 0.0 {
            -0.5 * nf * ((2.0 * std::f64::consts::PI).ln() + sigma_e2.ln() + 1.0) - 0.5 * log_det
        } else {
            f64::INFINITY
        };
        Profile { log_lik, ls, sigma_e2 }
    }
}

/// Fits the random-intercept model with `group` (a categorical column) as
/// the grouping factor.
pub fn lmm_fit(spec: &DesignSpec, group: &str) -> Result<MixedFit, StatsError> {
    let d = spec.prepare()?;
    let labels = spec.frame.categorical(group)?;
    let (n, p) = (d.n(), d.p());
    if n <= p {
        return Err(StatsError::TooFewObservations { n, k: p });
    }
    let dependent = collinear_columns(&d.x);
    if !dependent.is_empty() {
        return Err(StatsError::RankDeficient(dependent.into_iter().map(|j| d.column_names[j].clone()).collect()));
    }

    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        let next = index.len();
        index.entry(l.as_str()).or_insert(next);
    }
    let n_groups = index.len();
    if n_groups < 2 {
        return Err(StatsError::TooFewGroups(n_groups));
    }
    let group_of: Vec<usize> = labels.iter().map(|l| index[l.as_str()]).collect();
    let mut sizes = vec![0usize; n_groups];
    let mut x_means = DMatrix::zeros(n_groups, p);
    let mut y_means = DVector::zeros(n_groups);
    for (i, &g) in group_of.iter().enumerate() {
        sizes[g] += 1;
        for j in 0..p {
            x_means[(g, j)] += d.x[(i, j)];
        }
        y_means[g] += d.y[i];
    }
    for g in 0..n_groups {
        let m = sizes[g] as f64;
        x_means.row_mut(g).unscale_mut(m);
        y_means[g] /= m;
    }
    let problem = Problem { x: d.x.clone(), y: d.y.clone(), group_of, sizes, x_means, y_means };

    let mut diagnostics = Vec::new();
    let mut evaluations = 1;
    let at_zero = problem.profile(0.0);
    let (lambda, best) = if problem.sizes.iter().all(|&m| m == 1) {
        diagnostics.push(LmmDiagnostic::Unidentifiable);
        (0.0, at_zero)
    } else {
        let (t_star, ll_star, evals) = maximise_log_lambda(&problem, &mut diagnostics)?;
        evaluations += evals;
        if at_zero.log_lik >= ll_star {
            diagnostics.push(LmmDiagnostic::Boundary);
            (0.0, at_zero)
        } else {
            let lambda = t_star.exp();
            (lambda, problem.profile(lambda))
        }
    };

    let sigma_e2 = best.sigma_e2;
    let sigma_b2 = lambda * sigma_e2;
    let beta = &best.ls.beta;
    let z975 = normal_quantile(0.975);
    let mut coefficients = Vec::with_capacity(p);
    let mut conf_intervals = Vec::with_capacity(p);
    for j in 0..p {
        let std_error = (sigma_e2 * best.ls.gram_inverse[(j, j)]).sqrt();
        let statistic = beta[j] / std_error;
        let name = d.column_names[j].clone();
        conf_intervals.push(ConfidenceInterval {
            name: name.clone(),
            lower: beta[j] - z975 * std_error,
            upper: beta[j] + z975 * std_error,
        });
        coefficients.push(Coefficient {
            name,
            estimate: beta[j],
            std_error,
            statistic,
            p_value: normal_two_sided(statistic),
        });
    }

    let fixed = &d.x * beta;
    let mean_fixed = fixed.mean();
    let var_fixed = fixed.iter().map(|v| (v - mean_fixed).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let conditional_r2 = (var_fixed + sigma_b2) / (var_fixed + sigma_b2 + sigma_e2);

    let mut resid_means = vec![0.0; n_groups];
    for (i, &g) in problem.group_of.iter().enumerate() {
        resid_means[g] += (d.y[i] - fixed[i]) / problem.sizes[g] as f64;
    }
    let random_effects = index
        .iter()
        .map(|(label, &g)| {
            let m = problem.sizes[g] as f64;
            (label.to_string(), lambda * m / (1.0 + lambda * m) * resid_means[g])
        })
        .collect();

    let k = p + 2;
    Ok(MixedFit {
        fit: ModelFit {
            kind: ModelKind::Mixed,
            response: spec.response.clone(),
            terms: spec.term_names(),
            coefficients,
            n,
            k,
            log_lik: best.log_lik,
            bic: bic(k, n, best.log_lik),
            r_squared: None,
            adj_r2: None,
            conditional_r2: Some(conditional_r2),
            residual_variance: Some(sigma_e2),
            df_resid: n - p,
            fitted: fixed.iter().copied().collect(),
        },
        sigma_b2,
        sigma_e2,
        lambda,
        n_groups,
        conf_intervals,
        random_effects,
        diagnostics,
        evaluations,
    })
}

/// Grid scan over log λ followed by golden-section refinement inside the
/// bracket around the best grid point.
fn maximise_log_lambda(
    problem: &Problem,
    diagnostics: &mut Vec<LmmDiagnostic>,
) -> Result<(f64, f64, usize), StatsError> {
    let steps = ((LOG_LAMBDA_MAX - LOG_LAMBDA_MIN) / GRID_STEP).round() as usize;
    let grid: Vec<f64> = (0..=steps).map(|i| LOG_LAMBDA_MIN + i as f64 * GRID_STEP).collect();
    let values: Vec<f64> = grid.iter().map(|&t| problem.profile(t.exp()).log_lik).collect();
    let mut evaluations = grid.len();
    let best = (0..grid.len()).max_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    if best == grid.len() - 1 {
        diagnostics.push(LmmDiagnostic::UpperBoundary);
    }
    let mut lo = grid[best.saturating_sub(1)];
    let mut hi = grid[(best + 1).min(grid.len() - 1)];

    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let f = |t: f64| problem.profile(t.exp()).log_lik;
    let mut c = hi - ratio * (hi - lo);
    let mut e = lo + ratio * (hi - lo);
    let (mut fc, mut fe) = (f(c), f(e));
    evaluations += 2;
    let mut iter = 0;
    while hi - lo > GOLDEN_TOL {
        iter += 1;
        if iter > GOLDEN_MAX_ITER {
            return Err(StatsError::NonConvergence {
                iterations: iter,
                detail: format!("log-lambda bracket [{lo:.6}, {hi:.6}] did not shrink below {GOLDEN_TOL}"),
            });
        }
        if fc >= fe {
            hi = e;
            e = c;
            fe = fc;
            c = hi - ratio * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = e;
            fc = fe;
            e = lo + ratio * (hi - lo);
            fe = f(e);
        }
        evaluations += 1;
    }
    let (t, ll) = if fc >= fe { (c, fc) } else { (e, fe) };
    let (t, ll) = if values[best] > ll { (grid[best], values[best]) } else { (t, ll) };
    Ok((t, ll, evaluations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ols_fit, Frame, Term, INTERCEPT};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    struct Sim {
        spec: DesignSpec,
    }

    fn simulate(seed: u64, groups: usize, per_group: usize, sigma_b: f64, sigma_e: f64, demean_noise: bool) -> Sim {
        simulate_with(seed, groups, per_group, sigma_b, sigma_e, demean_noise, true)
    }

    fn simulate_with(
        seed: u64,
        groups: usize,
        per_group: usize,
        sigma_b: f64,
        sigma_e: f64,
        demean_noise: bool,
        group_level_x2: bool,
    ) -> Sim {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eps = Normal::new(0.0, sigma_e).unwrap();
        let mut y = Vec::new();
        let mut x1 = Vec::new();
        let mut x2 = Vec::new();
        let mut g = Vec::new();
        for gi in 0..groups {
            let b: f64 = Normal::new(0.0, sigma_b).unwrap().sample(&mut rng);
            let group_x2 = rng.random_range(-2.0..2.0);
            let mut noise: Vec<f64> = (0..per_group).map(|_| eps.sample(&mut rng)).collect();
            if demean_noise {
                let m = noise.iter().sum::<f64>() / per_group as f64;
                noise.iter_mut().for_each(|v| *v -= m);
            }
            for e in noise {
                let a = rng.random_range(-3.0..3.0);
                let c = if group_level_x2 { group_x2 } else { rng.random_range(-2.0..2.0) };
                x1.push(a);
                x2.push(c);
                y.push(2.0 + 0.7 * a - 1.2 * c + b + e);
                g.push(format!("g{gi:02}"));
            }
        }
        let f = Frame::new()
            .with_numeric("y", y)
            .unwrap()
            .with_numeric("x1", x1)
            .unwrap()
            .with_numeric("x2", x2)
            .unwrap()
            .with_categorical("group", g)
            .unwrap();
        Sim { spec: DesignSpec::new("y", vec![Term::continuous("x1"), Term::continuous("x2")], f) }
    }

    #[test]
    fn zero_between_group_variance_matches_ols() {
        let sim = simulate(1, 12, 40, 0.0, 1.0, true);
        let mixed = lmm_fit(&sim.spec, "group").unwrap();
        let ols = ols_fit(&sim.spec).unwrap();
        assert!(mixed.sigma_b2 < 1e-6);
        assert!(mixed.diagnostics.contains(&LmmDiagnostic::Boundary));
        for (m, o) in mixed.fit.coefficients.iter().zip(&ols.coefficients) {
            assert!((m.estimate - o.estimate).abs() < 1e-6, "{m:?} vs {o:?}");
        }
        assert!((mixed.fit.log_lik - ols.log_lik).abs() < 1e-9);
    }

    #[test]
    fn recovers_planted_variance_components() {
        let (mut sb, mut se) = (0.0, 0.0);
        for seed in 0..20 {
            let sim = simulate_with(100 + seed, 24, 250, 2.0, 1.0, false, false);
            let fit = lmm_fit(&sim.spec, "group").unwrap();
            for (name, truth) in [("x1", 0.7), ("x2", -1.2)] {
                let c = fit.fit.coefficient(name).unwrap();
                assert!((c.estimate - truth).abs() < 3.0 * c.std_error, "seed {seed}: {c:?}");
            }
            let c = fit.fit.coefficient(INTERCEPT).unwrap();
            assert!((c.estimate - 2.0).abs() < 3.0 * c.std_error, "seed {seed}: {c:?}");
            sb += fit.sigma_b2 / 20.0;
            se += fit.sigma_e2 / 20.0;
        }
        assert!((sb - 4.0).abs() < 0.3 * 4.0, "mean sigma_b2 {sb}");
        assert!((se - 1.0).abs() < 0.3, "mean sigma_e2 {se}");
    }

    // Reference fit from statsmodels MixedLM (ML, centred covariates) on the
    // same simulated data.
    #[test]
    fn matches_reference_fit() {
        let sim = simulate(100, 24, 250, 2.0, 1.0, false);
        let fit = lmm_fit(&sim.spec, "group").unwrap();
        let expected =
            [(INTERCEPT, 2.05777936, 0.38225968), ("x1", 0.70271658, 0.00747519), ("x2", -2.36800405, 0.32444033)];
        for (name, est, se) in expected {
            let c = fit.fit.coefficient(name).unwrap();
            assert!((c.estimate - est).abs() < 1e-4, "{c:?}");
            assert!((c.std_error - se).abs() < 1e-4, "{c:?}");
        }
        assert!((fit.sigma_b2 - 3.50297885).abs() < 1e-3);
        assert!((fit.sigma_e2 - 0.99006173).abs() < 1e-5);
        assert!((fit.fit.log_lik + 8565.10154879).abs() < 1e-5);
    }

    #[test]
    fn likelihood_dominates_the_ols_submodel() {
        for seed in 0..5 {
            let sim = simulate(seed, 10, 15, 0.8, 1.0, false);
            let mixed = lmm_fit(&sim.spec, "group").unwrap();
            let ols = ols_fit(&sim.spec).unwrap();
            assert!(mixed.fit.log_lik >= ols.log_lik - 1e-9);
            assert!(mixed.sigma_b2 >= 0.0 && mixed.sigma_e2 > 0.0);
            let r2 = mixed.fit.conditional_r2.unwrap();
            assert!((0.0..=1.0).contains(&r2));
        }
    }

    #[test]
    fn singleton_groups_are_unidentifiable() {
        let y = vec![1.0, 2.5, 0.3, 1.7, 2.2];
        let g: Vec<String> = (0..5).map(|i| format!("s{i}")).collect();
        let f = Frame::new().with_numeric("y", y).unwrap().with_categorical("g", g).unwrap();
        let fit = lmm_fit(&DesignSpec::new("y", vec![], f), "g").unwrap();
        assert_eq!(fit.diagnostics, vec![LmmDiagnostic::Unidentifiable]);
        assert_eq!(fit.sigma_b2, 0.0);
    }

    #[test]
    fn needs_two_groups() {
        let f = Frame::new()
            .with_numeric("y", vec![1.0, 2.0, 3.0])
            .unwrap()
            .with_categorical("g", ["a", "a", "a"])
            .unwrap();
        assert!(matches!(lmm_fit(&DesignSpec::new("y", vec![], f), "g"), Err(StatsError::TooFewGroups(1))));
    }

    #[test]
    fn wald_intervals_bracket_estimates() {
        let sim = simulate(3, 8, 30, 1.0, 1.0, false);
        let fit = lmm_fit(&sim.spec, "group").unwrap();
        for (ci, c) in fit.conf_intervals.iter().zip(&fit.fit.coefficients) {
            assert!((ci.upper - ci.lower - 2.0 * 1.959963984540054 * c.std_error).abs() < 1e-9);
            assert!(ci.lower < c.estimate && c.estimate < ci.upper);
        }
        assert_eq!(fit.random_effects.len(), 8);
    }
}
