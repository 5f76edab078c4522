//! Scalar special functions shared by the plain and differentiable paths.

use std::f64::consts::PI;

/// ½·ln(2π)
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Even Bernoulli numbers B₂, B₄, …, B₁₆.
const BERNOULLI_EVEN: [f64; 8] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
];

/// Below this the asymptotic expansions are not trusted; the recurrence
/// shifts the argument up first.
const ASYMPTOTIC_FROM: f64 = 15.0;

/// ln Γ(x) for x > 0 (Lanczos, g = 7, nine coefficients).
pub fn lgamma(x: f64) -> f64 {
    if x.is_nan() || x <= 0.0 {
        return f64::NAN;
    }
    if x == 1.0 || x == 2.0 {
        return 0.0;
    }
    if x < 0.5 {
        // reflection: Γ(x)Γ(1−x) = π / sin(πx)
        return (PI / (PI * x).sin()).ln() - lgamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (k, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + k as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    HALF_LN_2PI + (x + 0.5) * t.ln() - t + acc.ln()
}

/// ψ(x) = d/dx ln Γ(x) for x > 0.
pub fn digamma(x: f64) -> f64 {
    polygamma(0, x)
}

/// ψ⁽ⁿ⁾(x), the n-th derivative of the digamma function, for x > 0.
pub fn polygamma(n: u32, x: f64) -> f64 {
    if x.is_nan() || x <= 0.0 {
        return f64::NAN;
    }
    let nf = n as f64;
    let n_fact = factorial(n);
    let sign = if n % 2 == 0 { -1.0 } else { 1.0 }; // (−1)^(n+1)

    // ψ⁽ⁿ⁾(x) = ψ⁽ⁿ⁾(x+1) + (−1)^(n+1) n! / x^(n+1)
    let mut x = x;
    let mut shifted = 0.0;
    while x < ASYMPTOTIC_FROM {
        shifted += sign * n_fact / x.powf(nf + 1.0);
        x += 1.0;
    }

    let tail = if n == 0 {
        let x2 = x * x;
        let mut xpow = x2;
        let mut series = 0.0;
        for (k, b) in BERNOULLI_EVEN.iter().enumerate() {
            let two_k = 2.0 * (k as f64 + 1.0);
            series += b / (two_k * xpow);
            xpow *= x2;
        }
        x.ln() - 0.5 / x - series
    } else {
        let mut sum = factorial(n - 1) / x.powf(nf) + n_fact / (2.0 * x.powf(nf + 1.0));
        for (k, b) in BERNOULLI_EVEN.iter().enumerate() {
            let two_k = 2 * (k as u32 + 1);
            let coef = factorial(two_k + n - 1) / factorial(two_k);
            sum += b * coef / x.powf(two_k as f64 + nf);
        }
        sign * sum
    };
    shifted + tail
}

fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + eˣ) without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lgamma_known_values() {
        assert_eq!(lgamma(1.0), 0.0);
        assert_eq!(lgamma(2.0), 0.0);
        assert!((lgamma(0.5) - PI.sqrt().ln()).abs() < 1e-13);
        assert!((lgamma(5.0) - 24f64.ln()).abs() < 1e-12);
        assert!((lgamma(0.1) - 2.252_712_651_734_206).abs() < 1e-12);
        assert!(lgamma(0.0).is_nan());
        assert!(lgamma(-1.0).is_nan());
    }

    #[test]
    fn digamma_known_values() {
        let euler = 0.577_215_664_901_532_9;
        assert!((digamma(1.0) + euler).abs() < 1e-13);
        assert!((digamma(0.5) + euler + 2.0 * 2f64.ln()).abs() < 1e-13);
        // trigamma(1) = π²/6
        assert!((polygamma(1, 1.0) - PI * PI / 6.0).abs() < 1e-12);
        // ψ''(1) = −2ζ(3)
        assert!((polygamma(2, 1.0) + 2.0 * 1.202_056_903_159_594_2).abs() < 1e-11);
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((sigmoid(-800.0)).abs() < 1e-300);
    }
}
