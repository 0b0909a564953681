//! Reference distributions for Wald and t inference. Tail probabilities come
//! from statrs, whose regularized incomplete beta is a Lentz continued fraction.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

/// Two-sided p-value of a t statistic with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_nan() || df <= 0.0 {
        return f64::NAN;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.cdf(-t.abs())).clamp(0.0, 1.0)
}

pub fn normal_two_sided(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    (2.0 * standard_normal().cdf(-z.abs())).clamp(0.0, 1.0)
}

pub fn normal_quantile(p: f64) -> f64 {
    standard_normal().inverse_cdf(p)
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from scipy.stats.t.sf / norm.sf.
    #[test]
    fn t_tail_matches_reference() {
        let cases = [
            (2.0, 10.0, 0.07338803477074039),
            (0.5, 3.0, 0.651447964848151),
            (26.8745, 1739.0, 2.397020853412335e-133),
        ];
        for (t, df, p) in cases {
            let got = student_t_two_sided(t, df);
            assert!((got - p).abs() < 1e-10, "t={t} df={df}: {got} vs {p}");
            assert!((got / p - 1.0).abs() < 1e-6, "t={t} df={df}: {got} vs {p}");
        }
        assert_eq!(student_t_two_sided(0.0, 5.0), 1.0);
    }

    #[test]
    fn normal_tail_and_quantile() {
        assert!((normal_two_sided(1.959963984540054) - 0.05).abs() < 1e-9);
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-9);
    }
}
