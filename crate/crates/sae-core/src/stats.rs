//! Small statistical helpers: normal CDF, Kolmogorov-Smirnov statistic and
//! chain diagnostics. Used by the samplers' tests and by downstream tooling
//! that wants to sanity-check chain output.

/// Complementary error function, rational approximation with relative error
/// below 1.2e-7 everywhere.
pub fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t * (-z * z - 1.26551223
        + t * (1.00002368
            + t * (0.37409196
                + t * (0.09678418
                    + t * (-0.18628806
                        + t * (0.27886807
                            + t * (-1.13520398
                                + t * (1.48851587
                                    + t * (-0.82215223 + t * 0.17087277)))))))))
    .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// CDF of the standard normal distribution.
pub fn standard_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Kolmogorov-Smirnov statistic of a sample against an analytic CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let hi = ((i + 1) as f64 / n - f).abs();
        let lo = (f - i as f64 / n).abs();
        d = d.max(hi).max(lo);
    }
    d
}

/// Sample mean and (biased, 1/n) variance.
pub fn mean_and_variance(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Lag-1 autocorrelation of a series.
pub fn lag1_autocorrelation(series: &[f64]) -> f64 {
    let (mean, var) = mean_and_variance(series);
    if var == 0.0 {
        return 1.0;
    }
    let cov = series
        .windows(2)
        .map(|w| (w[0] - mean) * (w[1] - mean))
        .sum::<f64>()
        / (series.len() - 1) as f64;
    cov / var
}

/// Median of a sample (mean of the two central order statistics when even).
pub fn median(samples: &[f64]) -> f64 {
    assert!(!samples.is_empty(), "median of empty sample");
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_cdf_reference_values() {
        // The rational approximation is good to ~1.2e-7.
        assert!((standard_normal_cdf(0.0) - 0.5).abs() < 1e-6);
        assert!((standard_normal_cdf(1.959964) - 0.975).abs() < 1e-5);
        assert!((standard_normal_cdf(-1.0) - 0.15865525).abs() < 1e-6);
        assert!(standard_normal_cdf(8.0) > 1.0 - 1e-12);
        assert!(standard_normal_cdf(-8.0) < 1e-12);
    }

    #[test]
    fn ks_detects_shift() {
        // Uniform grid vs its own CDF is nearly zero; against a shifted CDF it is not.
        let samples: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let uniform_cdf = |x: f64| x.clamp(0.0, 1.0);
        assert!(ks_statistic(&samples, uniform_cdf) < 1e-3);
        let shifted = |x: f64| (x - 0.2).clamp(0.0, 1.0);
        assert!(ks_statistic(&samples, shifted) > 0.19);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn lag1_of_iid_is_small_and_of_a_line_is_high() {
        use rand::Rng;
        let mut rng = crate::rng::substream(1, &[0]);
        let series: Vec<f64> = (0..20_000).map(|_| rng.gen::<f64>()).collect();
        assert!(lag1_autocorrelation(&series).abs() < 0.05);

        let ramp: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert!(lag1_autocorrelation(&ramp) > 0.99);
    }
}
