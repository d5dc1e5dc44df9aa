//! Small distribution helpers.

use statrs::distribution::{Binomial, ContinuousCDF, Discrete, Normal};

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Two-sided p-value of a standard-normal statistic.
pub fn normal_two_sided_p(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    // sf is accurate in the far tail where 1 - cdf would cancel.
    (2.0 * std_normal().sf(z.abs())).min(1.0)
}

/// Critical value `z` with `P(|Z| <= z) = level`.
pub fn normal_critical(level: f64) -> f64 {
    std_normal().inverse_cdf(1.0 - (1.0 - level) / 2.0)
}

/// p-value for a statistic with known standard error; a zero standard error
/// gives 1 for a zero statistic and 0 otherwise.
pub fn p_from_se(stat: f64, se: f64) -> f64 {
    if se > 0.0 {
        normal_two_sided_p(stat / se)
    } else if stat == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Exact two-sided binomial p-value: total mass of all counts no more
/// likely than the observed one.
pub fn binomial_two_sided_p(successes: u64, trials: u64, prob: f64) -> f64 {
    let dist = Binomial::new(prob, trials).expect("valid binomial parameters");
    let observed = dist.pmf(successes);
    // relative slack so that mathematically tied masses are counted together
    let bound = observed * (1.0 + 1e-7);
    let total: f64 = (0..=trials)
        .map(|k| dist.pmf(k))
        .filter(|&m| m <= bound)
        .sum();
    total.min(1.0)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the n - 1 denominator (0 for fewer than two points).
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn sample_sd(xs: &[f64]) -> f64 {
    sample_variance(xs).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_quantiles() {
        assert!((normal_two_sided_p(1.959963984540054) - 0.05).abs() < 1e-9);
        assert!((normal_two_sided_p(3.2905267314919) - 0.001).abs() < 1e-9);
        assert_eq!(normal_two_sided_p(0.0), 1.0);
        assert!((normal_critical(0.95) - 1.959963984540054).abs() < 1e-9);
    }

    #[test]
    fn binomial_symmetric_case() {
        assert!((binomial_two_sided_p(5, 10, 0.5) - 1.0).abs() < 1e-12);
        assert!((binomial_two_sided_p(10, 10, 0.5) - 2.0 * 0.5f64.powi(10)).abs() < 1e-15);
    }

    #[test]
    fn variance_basics() {
        assert_eq!(sample_variance(&[1.0]), 0.0);
        assert!((sample_variance(&[0.0, 0.0, 1.0]) - 1.0 / 3.0).abs() < 1e-15);
    }
}
