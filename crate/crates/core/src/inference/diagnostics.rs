//! Chain summaries.

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

fn autocovariance(xs: &[f64], lag: usize) -> f64 {
    let m = mean(xs);
    let n = xs.len();
    (0..n - lag).map(|i| (xs[i] - m) * (xs[i + lag] - m)).sum::<f64>() / n as f64
}

/// Effective sample size with Geyer's initial positive sequence: pairs of
/// autocorrelations are summed until a pair turns negative.
pub fn effective_sample_size(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return n as f64;
    }
    let c0 = autocovariance(xs, 0);
    if c0 <= 0.0 {
        return n as f64;
    }
    let rho = |k: usize| autocovariance(xs, k) / c0;
    let mut tau = -1.0;
    let mut k = 0;
    while k + 1 < n {
        let pair = rho(k) + rho(k + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 2;
    }
    n as f64 / tau.max(1.0 / n as f64)
}

/// Standard error of the chain mean.
pub fn monte_carlo_se(xs: &[f64]) -> f64 {
    (variance(xs) / effective_sample_size(xs)).sqrt()
}
