//! Small summary-statistics helpers shared by Monte Carlo drivers.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// Half-width of the normal-approximation 95% interval. `None` for a
    /// single sample.
    pub ci95: Option<f64>,
    pub n: usize,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn summarize(xs: &[f64]) -> Summary {
    let n = xs.len();
    let m = mean(xs);
    let ci95 = (n >= 2).then(|| 1.959_963_984_540_054 * (variance(xs) / n as f64).sqrt());
    Summary { mean: m, ci95, n }
}

/// One-sample Kolmogorov-Smirnov statistic against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sample_has_no_interval() {
        let s = summarize(&[3.0]);
        assert_eq!(s.mean, 3.0);
        assert!(s.ci95.is_none());
    }

    #[test]
    fn ks_of_uniform_grid() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!((ks_statistic(&xs, |x| x.clamp(0.0, 1.0)) - 0.005).abs() < 1e-12);
    }
}
