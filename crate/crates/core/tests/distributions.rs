use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ranvar::autodiff::{finite_difference, gradient};
use ranvar::{Distribution, Scalar};
use statrs::distribution::{Beta, Continuous, Normal};

fn c(v: f64) -> Scalar {
    Scalar::constant(v)
}

fn lp(d: &Distribution, x: f64) -> f64 {
    d.log_prob(&[c(x)]).unwrap()[0].value()
}

fn trapezoid(d: &Distribution, lo: f64, hi: f64) -> f64 {
    let n = 10_000;
    let h = (hi - lo) / (n - 1) as f64;
    let f: Vec<f64> = (0..n).map(|i| lp(d, lo + h * i as f64).exp()).collect();
    h * (f.iter().sum::<f64>() - 0.5 * (f[0] + f[n - 1]))
}

#[test]
fn continuous_densities_integrate_to_one() {
    let cases = [
        (Distribution::normal(1.5, 2.0).unwrap(), -18.5, 21.5),
        (Distribution::normal(-3.0, 0.1).unwrap(), -4.0, -2.0),
        (Distribution::beta(2.0, 3.0).unwrap(), 0.0, 1.0),
        (Distribution::beta(1.0, 4.0).unwrap(), 0.0, 1.0),
        (Distribution::beta(1.0, 1.0).unwrap(), 0.0, 1.0),
        (Distribution::uniform(-1.0, 3.0).unwrap(), -1.0, 3.0),
    ];
    for (d, lo, hi) in cases {
        let z = trapezoid(&d, lo, hi);
        assert!((0.999..=1.001).contains(&z), "{:?}: {z}", d.snapshot());
    }
}

#[test]
fn discrete_masses_sum_to_one() {
    let cat = Distribution::categorical(vec![0.3, -1.0, 2.0, 0.0]).unwrap();
    let total: f64 = (0..4).map(|k| lp(&cat, k as f64).exp()).sum();
    assert!((total - 1.0).abs() < 1e-12);
    for d in [
        Distribution::bernoulli_probs(0.3).unwrap(),
        Distribution::bernoulli_logits(-2.5).unwrap(),
    ] {
        let total = lp(&d, 0.0).exp() + lp(&d, 1.0).exp();
        assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn densities_match_an_independent_implementation() {
    let n = Normal::new(0.7, 1.3).unwrap();
    let b = Beta::new(2.5, 0.8).unwrap();
    let ours_n = Distribution::normal(0.7, 1.3).unwrap();
    let ours_b = Distribution::beta(2.5, 0.8).unwrap();
    for x in [-2.0, 0.1, 0.5, 0.9, 3.0] {
        assert!((lp(&ours_n, x) - n.ln_pdf(x)).abs() < 1e-12);
    }
    for x in [0.01, 0.3, 0.5, 0.99] {
        assert!((lp(&ours_b, x) - b.ln_pdf(x)).abs() < 1e-10);
    }
}

fn check_mean(draws: &[f64], mean: f64, sd: f64) {
    let n = draws.len() as f64;
    let m = draws.iter().sum::<f64>() / n;
    let se = sd / n.sqrt();
    assert!((m - mean).abs() < 4.0 * se, "mean {m} vs {mean} (se {se})");
}

fn check_variance(draws: &[f64], mean: f64, var: f64, fourth_central: f64) {
    let n = draws.len() as f64;
    let v = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let se = ((fourth_central - var * var) / n).sqrt();
    assert!((v - var).abs() < 4.0 * se, "variance {v} vs {var} (se {se})");
}

#[test]
fn sample_moments_match_analytic_moments() {
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    let d = Distribution::normal(1.5, 2.0).unwrap().with_batch(n).unwrap();
    let x = d.sample_plain(&mut rng);
    check_mean(&x, 1.5, 2.0);
    check_variance(&x, 1.5, 4.0, 3.0 * 16.0);

    let d = Distribution::uniform(0.0, 1.0).unwrap().with_batch(n).unwrap();
    let x = d.sample_plain(&mut rng);
    let m = x.iter().sum::<f64>() / n as f64;
    assert!((m - 0.5).abs() < 0.005);
    assert!(x.iter().all(|v| (0.0..1.0).contains(v)));

    let d = Distribution::uniform(-1.0, 3.0).unwrap().with_batch(n).unwrap();
    let x = d.sample_plain(&mut rng);
    let w4 = 4f64.powi(4);
    check_mean(&x, 1.0, (16.0f64 / 12.0).sqrt());
    check_variance(&x, 1.0, 16.0 / 12.0, w4 / 80.0);

    let (a, b) = (2.0, 5.0);
    let d = Distribution::beta(a, b).unwrap().with_batch(n).unwrap();
    let x = d.sample_plain(&mut rng);
    let var = a * b / ((a + b) * (a + b) * (a + b + 1.0));
    check_mean(&x, a / (a + b), var.sqrt());
    assert!(x.iter().all(|v| *v > 0.0 && *v < 1.0));

    let d = Distribution::bernoulli_logits(-0.4).unwrap().with_batch(n).unwrap();
    let x = d.sample_plain(&mut rng);
    let p = 1.0 / (1.0 + 0.4f64.exp());
    check_mean(&x, p, (p * (1.0 - p)).sqrt());

    let logits = [0.5, -1.0, 1.0];
    let d = Distribution::categorical(logits.to_vec()).unwrap().with_batch(n).unwrap();
    let x = d.sample_plain(&mut rng);
    let z: f64 = logits.iter().map(|l| l.exp()).sum();
    let probs: Vec<f64> = logits.iter().map(|l| l.exp() / z).collect();
    let mean: f64 = probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
    let second: f64 = probs.iter().enumerate().map(|(k, p)| (k * k) as f64 * p).sum();
    check_mean(&x, mean, (second - mean * mean).sqrt());
}

#[test]
fn beta_one_one_draws_lie_in_the_open_interval() {
    let d = Distribution::beta(1.0, 1.0).unwrap().with_batch(1000).unwrap();
    let x = d.sample_plain(&mut ChaCha8Rng::seed_from_u64(3));
    assert!(x.iter().all(|v| *v > 0.0 && *v < 1.0));
}

#[test]
fn sampling_is_deterministic_given_the_seed() {
    let d = Distribution::normal(0.0, 1.0).unwrap().with_batch(20).unwrap();
    let a = d.sample_plain(&mut ChaCha8Rng::seed_from_u64(5));
    let b = d.sample_plain(&mut ChaCha8Rng::seed_from_u64(5));
    assert_eq!(a, b);
}

#[test]
fn reparameterized_samples_carry_parameter_gradients() {
    // x = loc + scale·ε, so ∂x/∂loc = 1 and ∂x/∂scale = ε = (x − loc)/scale.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut eps = 0.0;
    let g = gradient(
        |p| {
            let d = Distribution::normal(&p[0], &p[1]).unwrap();
            let x = d.sample(&mut rng).pop().unwrap();
            eps = (x.value() - 0.3) / 2.0;
            x
        },
        &[0.3, 2.0],
    )
    .unwrap();
    assert_eq!(g[0], 1.0);
    assert!((g[1] - eps).abs() < 1e-12);
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

proptest! {
    #[test]
    fn categorical_is_shift_invariant(
        logits in prop::collection::vec(-5.0f64..5.0, 2..6),
        shift in -50.0f64..50.0,
        k in 0usize..6,
    ) {
        let k = (k % logits.len()) as f64;
        let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
        let a = lp(&Distribution::categorical(logits).unwrap(), k);
        let b = lp(&Distribution::categorical(shifted).unwrap(), k);
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn normal_gradient_matches_finite_differences(
        loc in -3.0f64..3.0, scale in 0.2f64..4.0, x in -5.0f64..5.0,
    ) {
        let f = |p: &[Scalar]| Distribution::normal(&p[0], &p[1]).unwrap().log_prob(&[p[2].clone()]).unwrap()[0].clone();
        let g = gradient(f, &[loc, scale, x]).unwrap();
        let oracle = |p: &[f64]| Normal::new(p[0], p[1]).unwrap().ln_pdf(p[2]);
        let fd = finite_difference(oracle, &[loc, scale, x], 1e-5).unwrap();
        for k in 0..3 {
            prop_assert!(rel_err(g[k], fd[k]) < 1e-6, "slot {k}: {} vs {}", g[k], fd[k]);
        }
    }

    #[test]
    fn beta_gradient_matches_finite_differences(
        a in 0.5f64..5.0, b in 0.5f64..5.0, x in 0.05f64..0.95,
    ) {
        let f = |p: &[Scalar]| Distribution::beta(&p[0], &p[1]).unwrap().log_prob(&[p[2].clone()]).unwrap()[0].clone();
        let g = gradient(f, &[a, b, x]).unwrap();
        let oracle = |p: &[f64]| Beta::new(p[0], p[1]).unwrap().ln_pdf(p[2]);
        let fd = finite_difference(oracle, &[a, b, x], 1e-5).unwrap();
        for k in 0..3 {
            prop_assert!(rel_err(g[k], fd[k]) < 1e-6, "slot {k}: {} vs {}", g[k], fd[k]);
        }
    }

    #[test]
    fn bernoulli_gradient_matches_finite_differences(l in -6.0f64..6.0, p in 0.05f64..0.95, y in 0u8..2) {
        let y = y as f64;
        let g = gradient(|v| Distribution::bernoulli_logits(&v[0]).unwrap().log_prob(&[c(y)]).unwrap()[0].clone(), &[l]).unwrap();
        let oracle = |v: &[f64]| { let q = 1.0 / (1.0 + (-v[0]).exp()); if y == 1.0 { q.ln() } else { (1.0 - q).ln() } };
        let fd = finite_difference(oracle, &[l], 1e-5).unwrap();
        prop_assert!(rel_err(g[0], fd[0]) < 1e-6);

        let g = gradient(|v| Distribution::bernoulli_probs(&v[0]).unwrap().log_prob(&[c(y)]).unwrap()[0].clone(), &[p]).unwrap();
        let oracle = |v: &[f64]| if y == 1.0 { v[0].ln() } else { (1.0 - v[0]).ln() };
        let fd = finite_difference(oracle, &[p], 1e-5).unwrap();
        prop_assert!(rel_err(g[0], fd[0]) < 1e-6);
    }

    #[test]
    fn uniform_and_categorical_gradients_match_finite_differences(
        lo in -3.0f64..0.0, width in 0.5f64..3.0,
        logits in prop::collection::vec(-3.0f64..3.0, 3), k in 0usize..3,
    ) {
        let g = gradient(|v| Distribution::uniform(&v[0], &v[1]).unwrap().log_prob(&[c(lo + width / 2.0)]).unwrap()[0].clone(), &[lo, lo + width]).unwrap();
        let fd = finite_difference(|v| -(v[1] - v[0]).ln(), &[lo, lo + width], 1e-5).unwrap();
        for j in 0..2 {
            prop_assert!(rel_err(g[j], fd[j]) < 1e-6);
        }

        let g = gradient(|v| Distribution::categorical(v).unwrap().log_prob(&[c(k as f64)]).unwrap()[0].clone(), &logits).unwrap();
        let oracle = |v: &[f64]| v[k] - v.iter().map(|l| l.exp()).sum::<f64>().ln();
        let fd = finite_difference(oracle, &logits, 1e-5).unwrap();
        for j in 0..3 {
            prop_assert!(rel_err(g[j], fd[j]) < 1e-6);
        }
    }

    #[test]
    fn samples_lie_in_the_support(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Distribution::uniform(2.0, 2.5).unwrap().with_batch(32).unwrap().sample_plain(&mut rng);
        prop_assert!(u.iter().all(|v| (2.0..2.5).contains(v)));
        let b = Distribution::beta(0.3, 0.4).unwrap().with_batch(32).unwrap().sample_plain(&mut rng);
        prop_assert!(b.iter().all(|v| (0.0..=1.0).contains(v)));
        let k = Distribution::categorical(vec![0.0, 1.0, -1.0]).unwrap().with_batch(32).unwrap().sample_plain(&mut rng);
        prop_assert!(k.iter().all(|v| [0.0, 1.0, 2.0].contains(v)));
        let d = Distribution::categorical(vec![0.0, 1.0, -1.0]).unwrap().with_batch(32).unwrap();
        prop_assert!(d.log_prob(&k.iter().map(|v| c(*v)).collect::<Vec<_>>()).unwrap().iter().all(|l| l.value().is_finite()));
    }
}
