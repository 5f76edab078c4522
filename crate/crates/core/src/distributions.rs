//! Parameterized families with sampling and per-element log densities.
//!
//! Parameters are vectors of [`Scalar`]s broadcast over a one-dimensional
//! batch: every parameter has length 1 or the batch size. Log densities are
//! differentiable with respect to parameters and, for continuous families,
//! the value. Sampling of Normal and Uniform is written as a deterministic
//! function of the parameters and exogenous noise, so under the
//! differentiable backend samples carry gradients (reparameterization).

use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};

use crate::autodiff::{Real, Scalar, Tags};
use crate::error::{Error, Result};
use crate::special::{self, HALF_LN_2PI};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Normal,
    Bernoulli,
    Beta,
    Categorical,
    Uniform,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Normal => "Normal",
            Family::Bernoulli => "Bernoulli",
            Family::Beta => "Beta",
            Family::Categorical => "Categorical",
            Family::Uniform => "Uniform",
        }
    }

    pub fn is_continuous(self) -> bool {
        matches!(self, Family::Normal | Family::Beta | Family::Uniform)
    }
}

/// A parameter vector, broadcast against the batch.
#[derive(Clone, Debug, Default)]
pub struct Param(pub Vec<Scalar>);

impl Param {
    fn at(&self, i: usize) -> &Scalar {
        if self.0.len() == 1 {
            &self.0[0]
        } else {
            &self.0[i]
        }
    }

    fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().map(Scalar::value)
    }
}

impl From<f64> for Param {
    fn from(v: f64) -> Self {
        Param(vec![Scalar::constant(v)])
    }
}

impl From<Scalar> for Param {
    fn from(v: Scalar) -> Self {
        Param(vec![v])
    }
}

impl From<&Scalar> for Param {
    fn from(v: &Scalar) -> Self {
        Param(vec![v.clone()])
    }
}

impl From<Vec<Scalar>> for Param {
    fn from(v: Vec<Scalar>) -> Self {
        Param(v)
    }
}

impl From<&[Scalar]> for Param {
    fn from(v: &[Scalar]) -> Self {
        Param(v.to_vec())
    }
}

impl From<Vec<f64>> for Param {
    fn from(v: Vec<f64>) -> Self {
        Param(v.into_iter().map(Scalar::constant).collect())
    }
}

impl From<&[f64]> for Param {
    fn from(v: &[f64]) -> Self {
        Param(v.iter().copied().map(Scalar::constant).collect())
    }
}

#[derive(Clone, Debug)]
enum Params {
    Normal { loc: Param, scale: Param },
    BernoulliProbs { probs: Param },
    BernoulliLogits { logits: Param },
    Beta { concentration1: Param, concentration0: Param },
    Categorical { logits: Param },
    Uniform { low: Param, high: Param },
}

#[derive(Clone, Debug)]
pub struct Distribution {
    params: Params,
    batch: usize,
}

fn bad(family: Family, field: &'static str, reason: impl Into<String>) -> Error {
    Error::Parameter {
        family: family.name(),
        field,
        reason: reason.into(),
    }
}

fn check_all(
    family: Family,
    field: &'static str,
    p: &Param,
    ok: impl Fn(f64) -> bool,
    what: &str,
) -> Result<()> {
    if p.0.is_empty() {
        return Err(bad(family, field, "empty parameter"));
    }
    for v in p.values() {
        if v.is_nan() {
            return Err(bad(family, field, "NaN"));
        }
        if !ok(v) {
            return Err(bad(family, field, format!("{v} is not {what}")));
        }
    }
    Ok(())
}

fn broadcast_len(family: Family, params: &[&Param]) -> Result<usize> {
    let n = params.iter().map(|p| p.0.len()).max().unwrap_or(1);
    for p in params {
        if p.0.len() != 1 && p.0.len() != n {
            return Err(Error::Dimension(format!(
                "{} parameters of lengths {:?} do not broadcast",
                family.name(),
                params.iter().map(|p| p.0.len()).collect::<Vec<_>>()
            )));
        }
    }
    Ok(n)
}

impl Distribution {
    pub fn normal(loc: impl Into<Param>, scale: impl Into<Param>) -> Result<Self> {
        let (loc, scale) = (loc.into(), scale.into());
        check_all(Family::Normal, "loc", &loc, |v| !v.is_nan(), "a number")?;
        check_all(Family::Normal, "scale", &scale, |v| v > 0.0, "positive")?;
        let batch = broadcast_len(Family::Normal, &[&loc, &scale])?;
        Ok(Distribution {
            params: Params::Normal { loc, scale },
            batch,
        })
    }

    pub fn bernoulli_probs(probs: impl Into<Param>) -> Result<Self> {
        let probs = probs.into();
        check_all(
            Family::Bernoulli,
            "probs",
            &probs,
            |v| (0.0..=1.0).contains(&v),
            "in [0, 1]",
        )?;
        let batch = probs.0.len();
        Ok(Distribution {
            params: Params::BernoulliProbs { probs },
            batch,
        })
    }

    pub fn bernoulli_logits(logits: impl Into<Param>) -> Result<Self> {
        let logits = logits.into();
        check_all(Family::Bernoulli, "logits", &logits, |v| !v.is_nan(), "a number")?;
        let batch = logits.0.len();
        Ok(Distribution {
            params: Params::BernoulliLogits { logits },
            batch,
        })
    }

    pub fn beta(concentration1: impl Into<Param>, concentration0: impl Into<Param>) -> Result<Self> {
        let (c1, c0) = (concentration1.into(), concentration0.into());
        let positive = |v: f64| v > 0.0 && v.is_finite();
        check_all(Family::Beta, "concentration1", &c1, positive, "positive")?;
        check_all(Family::Beta, "concentration0", &c0, positive, "positive")?;
        let batch = broadcast_len(Family::Beta, &[&c1, &c0])?;
        Ok(Distribution {
            params: Params::Beta {
                concentration1: c1,
                concentration0: c0,
            },
            batch,
        })
    }

    /// One categorical over `logits.len()` outcomes, replicated over the batch.
    pub fn categorical(logits: impl Into<Param>) -> Result<Self> {
        let logits = logits.into();
        check_all(
            Family::Categorical,
            "logits",
            &logits,
            |v| v < f64::INFINITY,
            "below +inf",
        )?;
        if logits.values().all(|v| v == f64::NEG_INFINITY) {
            return Err(bad(Family::Categorical, "logits", "no outcome has mass"));
        }
        Ok(Distribution {
            params: Params::Categorical { logits },
            batch: 1,
        })
    }

    pub fn uniform(low: impl Into<Param>, high: impl Into<Param>) -> Result<Self> {
        let (low, high) = (low.into(), high.into());
        check_all(Family::Uniform, "low", &low, f64::is_finite, "finite")?;
        check_all(Family::Uniform, "high", &high, f64::is_finite, "finite")?;
        let batch = broadcast_len(Family::Uniform, &[&low, &high])?;
        for i in 0..batch {
            if low.at(i).value() >= high.at(i).value() {
                return Err(bad(Family::Uniform, "high", "must exceed low"));
            }
        }
        Ok(Distribution {
            params: Params::Uniform { low, high },
            batch,
        })
    }

    /// Replicate over `n` independent draws. Parameters must have length 1 or `n`.
    pub fn with_batch(mut self, n: usize) -> Result<Self> {
        let family = self.family();
        if n == 0 {
            return Err(Error::Dimension(format!("{} batch of size 0", family.name())));
        }
        let per_element = !matches!(self.params, Params::Categorical { .. });
        if per_element {
            for (_, p) in self.fields() {
                if p.len() != 1 && p.len() != n {
                    return Err(Error::Dimension(format!(
                        "{} parameter of length {} cannot fill a batch of {n}",
                        family.name(),
                        p.len()
                    )));
                }
            }
        }
        self.batch = n;
        Ok(self)
    }

    pub fn family(&self) -> Family {
        match self.params {
            Params::Normal { .. } => Family::Normal,
            Params::BernoulliProbs { .. } | Params::BernoulliLogits { .. } => Family::Bernoulli,
            Params::Beta { .. } => Family::Beta,
            Params::Categorical { .. } => Family::Categorical,
            Params::Uniform { .. } => Family::Uniform,
        }
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Named parameter vectors, in a fixed order per family.
    pub fn fields(&self) -> Vec<(&'static str, &[Scalar])> {
        match &self.params {
            Params::Normal { loc, scale } => vec![("loc", &loc.0), ("scale", &scale.0)],
            Params::BernoulliProbs { probs } => vec![("probs", &probs.0)],
            Params::BernoulliLogits { logits } => vec![("logits", &logits.0)],
            Params::Beta {
                concentration1,
                concentration0,
            } => vec![
                ("concentration1", &concentration1.0),
                ("concentration0", &concentration0.0),
            ],
            Params::Categorical { logits } => vec![("logits", &logits.0)],
            Params::Uniform { low, high } => vec![("low", &low.0), ("high", &high.0)],
        }
    }

    /// Parameter values as plain numbers, for comparing executions.
    pub fn snapshot(&self) -> Vec<(&'static str, Vec<f64>)> {
        self.fields()
            .into_iter()
            .map(|(k, v)| (k, v.iter().map(Scalar::value).collect()))
            .collect()
    }

    /// Names of the random variables that flowed into any parameter.
    pub fn provenance(&self) -> Tags {
        self.fields()
            .iter()
            .flat_map(|(_, p)| p.iter())
            .fold(Tags::default(), |acc, s| acc.union(s.tags()))
    }

    pub fn detach(&self) -> Distribution {
        let d = |p: &Param| Param(p.0.iter().map(Scalar::detach).collect());
        let params = match &self.params {
            Params::Normal { loc, scale } => Params::Normal {
                loc: d(loc),
                scale: d(scale),
            },
            Params::BernoulliProbs { probs } => Params::BernoulliProbs { probs: d(probs) },
            Params::BernoulliLogits { logits } => Params::BernoulliLogits { logits: d(logits) },
            Params::Beta {
                concentration1,
                concentration0,
            } => Params::Beta {
                concentration1: d(concentration1),
                concentration0: d(concentration0),
            },
            Params::Categorical { logits } => Params::Categorical { logits: d(logits) },
            Params::Uniform { low, high } => Params::Uniform {
                low: d(low),
                high: d(high),
            },
        };
        Distribution {
            params,
            batch: self.batch,
        }
    }

    /// Draws keeping the dependence on parameters where the family allows it.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Scalar> {
        self.draw(rng, Scalar::clone)
    }

    /// Draws as plain numbers. Consumes the random source exactly like
    /// [`Distribution::sample`] and yields the same values.
    pub fn sample_plain<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.draw(rng, Scalar::value)
    }

    fn draw<T: Real, R: Rng + ?Sized>(&self, rng: &mut R, lift: impl Fn(&Scalar) -> T) -> Vec<T> {
        let n = self.batch;
        match &self.params {
            Params::Normal { loc, scale } => (0..n)
                .map(|i| {
                    let eps: f64 = StandardNormal.sample(rng);
                    lift(loc.at(i)) + lift(scale.at(i)) * T::from_f64(eps)
                })
                .collect(),
            Params::Uniform { low, high } => (0..n)
                .map(|i| {
                    let u: f64 = rng.random();
                    let lo = lift(low.at(i));
                    lo.clone() + (lift(high.at(i)) - lo) * T::from_f64(u)
                })
                .collect(),
            Params::BernoulliProbs { probs } => (0..n)
                .map(|i| {
                    let u: f64 = rng.random();
                    T::from_f64(if u < probs.at(i).value() { 1.0 } else { 0.0 })
                })
                .collect(),
            Params::BernoulliLogits { logits } => (0..n)
                .map(|i| {
                    let u: f64 = rng.random();
                    let p = special::sigmoid(logits.at(i).value());
                    T::from_f64(if u < p { 1.0 } else { 0.0 })
                })
                .collect(),
            Params::Beta {
                concentration1,
                concentration0,
            } => (0..n)
                .map(|i| {
                    let beta = rand_distr::Beta::new(
                        concentration1.at(i).value(),
                        concentration0.at(i).value(),
                    )
                    .expect("validated at construction");
                    T::from_f64(beta.sample(rng))
                })
                .collect(),
            Params::Categorical { logits } => {
                let lv: Vec<f64> = logits.values().collect();
                let lse = special::log_sum_exp(&lv);
                (0..n)
                    .map(|_| {
                        let u: f64 = rng.random();
                        let mut cdf = 0.0;
                        let mut k = lv.len() - 1;
                        for (j, l) in lv.iter().enumerate() {
                            cdf += (l - lse).exp();
                            if u < cdf {
                                k = j;
                                break;
                            }
                        }
                        T::from_f64(k as f64)
                    })
                    .collect()
            }
        }
    }

    /// Per-element log density (or mass). Values outside the support give
    /// negative infinity rather than an error.
    pub fn log_prob(&self, value: &[Scalar]) -> Result<Vec<Scalar>> {
        if value.len() != self.batch {
            return Err(Error::Dimension(format!(
                "{} with batch {} scored against {} values",
                self.family().name(),
                self.batch,
                value.len()
            )));
        }
        for (field, p) in self.fields() {
            if p.iter().any(|s| s.value().is_nan()) {
                return Err(bad(self.family(), field, "NaN"));
            }
        }
        let neg_inf = || Scalar::constant(f64::NEG_INFINITY);
        let out = match &self.params {
            Params::Normal { loc, scale } => value
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    let scale = scale.at(i);
                    let z = (x - loc.at(i)) / scale;
                    -(&z * &z) * 0.5 - scale.ln() - HALF_LN_2PI
                })
                .collect(),
            Params::BernoulliLogits { logits } => value
                .iter()
                .enumerate()
                .map(|(i, y)| match y.value() {
                    v if v == 1.0 => -(-logits.at(i)).softplus(),
                    v if v == 0.0 => -logits.at(i).softplus(),
                    _ => neg_inf(),
                })
                .collect(),
            Params::BernoulliProbs { probs } => value
                .iter()
                .enumerate()
                .map(|(i, y)| {
                    let p = probs.at(i);
                    match y.value() {
                        v if v == 1.0 && p.value() > 0.0 => p.ln(),
                        v if v == 0.0 && p.value() < 1.0 => (-p).ln_1p(),
                        _ => neg_inf(),
                    }
                })
                .collect(),
            Params::Beta {
                concentration1,
                concentration0,
            } => value
                .iter()
                .enumerate()
                .map(|(i, x)| beta_log_density(concentration1.at(i), concentration0.at(i), x))
                .collect(),
            Params::Categorical { logits } => {
                let lse = Scalar::log_sum_exp(&logits.0);
                value
                    .iter()
                    .map(|k| {
                        let kv = k.value();
                        if kv.fract() == 0.0 && kv >= 0.0 && (kv as usize) < logits.0.len() {
                            &logits.0[kv as usize] - &lse
                        } else {
                            neg_inf()
                        }
                    })
                    .collect()
            }
            Params::Uniform { low, high } => value
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    let (lo, hi) = (low.at(i), high.at(i));
                    if x.value() >= lo.value() && x.value() < hi.value() {
                        -(hi - lo).ln()
                    } else {
                        neg_inf()
                    }
                })
                .collect(),
        };
        Ok(out)
    }

    /// Sum of [`Distribution::log_prob`] over the batch.
    pub fn log_prob_sum(&self, value: &[Scalar]) -> Result<Scalar> {
        Ok(self.log_prob(value)?.into_iter().sum())
    }
}

fn beta_log_density(a: &Scalar, b: &Scalar, x: &Scalar) -> Scalar {
    let xv = x.value();
    if !(0.0..=1.0).contains(&xv) {
        return Scalar::constant(f64::NEG_INFINITY);
    }
    let norm = (a + b).lgamma() - a.lgamma() - b.lgamma();
    // At a boundary the matching power term is 0·ln 0 when its concentration is
    // one (finite density), and otherwise the density vanishes or diverges.
    let boundary = |c: &Scalar| {
        let cv = c.value();
        if cv == 1.0 {
            None
        } else if cv > 1.0 {
            Some(f64::NEG_INFINITY)
        } else {
            Some(f64::INFINITY)
        }
    };
    if xv == 0.0 {
        return match boundary(a) {
            Some(v) => Scalar::constant(v),
            None => norm,
        };
    }
    if xv == 1.0 {
        return match boundary(b) {
            Some(v) => Scalar::constant(v),
            None => norm,
        };
    }
    (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() + norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn s(v: f64) -> Scalar {
        Scalar::constant(v)
    }

    #[test]
    fn reference_log_densities() {
        let n = Distribution::normal(0.0, 1.0).unwrap();
        assert!((n.log_prob(&[s(0.0)]).unwrap()[0].value() + 0.918_938_533_2).abs() < 1e-10);
        let b = Distribution::beta(1.0, 1.0).unwrap();
        assert_eq!(b.log_prob(&[s(0.5)]).unwrap()[0].value(), 0.0);
        let c = Distribution::bernoulli_probs(0.5).unwrap();
        assert!((c.log_prob(&[s(1.0)]).unwrap()[0].value() + 0.693_147_180_6).abs() < 1e-10);
    }

    #[test]
    fn invalid_parameters_name_the_field() {
        let err = Distribution::normal(0.0, 0.0).unwrap_err();
        assert!(matches!(err, Error::Parameter { field: "scale", .. }));
        let err = Distribution::normal(f64::NAN, 1.0).unwrap_err();
        assert!(matches!(err, Error::Parameter { field: "loc", .. }));
        let err = Distribution::beta(1.0, -2.0).unwrap_err();
        assert!(matches!(err, Error::Parameter { field: "concentration0", .. }));
        let err = Distribution::bernoulli_probs(1.5).unwrap_err();
        assert!(matches!(err, Error::Parameter { field: "probs", .. }));
        assert!(Distribution::uniform(1.0, 1.0).is_err());
        assert!(Distribution::normal(vec![0.0, 1.0], vec![1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn out_of_support_is_negative_infinity() {
        let u = Distribution::uniform(0.0, 1.0).unwrap();
        assert_eq!(u.log_prob(&[s(1.0)]).unwrap()[0].value(), f64::NEG_INFINITY);
        let b = Distribution::bernoulli_probs(1.0).unwrap();
        assert_eq!(b.log_prob(&[s(0.0)]).unwrap()[0].value(), f64::NEG_INFINITY);
        assert_eq!(b.log_prob(&[s(0.5)]).unwrap()[0].value(), f64::NEG_INFINITY);
        let c = Distribution::categorical(vec![0.0, 0.0]).unwrap();
        assert_eq!(c.log_prob(&[s(2.0)]).unwrap()[0].value(), f64::NEG_INFINITY);
        let beta = Distribution::beta(2.0, 1.0).unwrap();
        assert_eq!(beta.log_prob(&[s(0.0)]).unwrap()[0].value(), f64::NEG_INFINITY);
        assert_eq!(beta.log_prob(&[s(-0.1)]).unwrap()[0].value(), f64::NEG_INFINITY);
        // Beta(2, 1) has density 2x: finite, equal to 2 at x = 1.
        assert!((beta.log_prob(&[s(1.0)]).unwrap()[0].value() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_bernoulli_samples_ones() {
        let d = Distribution::bernoulli_probs(1.0).unwrap().with_batch(50).unwrap();
        let x = d.sample(&mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(x.len(), 50);
        assert!(x.iter().all(|v| v.value() == 1.0));
    }

    #[test]
    fn batch_mismatch_is_a_dimension_error() {
        let d = Distribution::normal(0.0, 1.0).unwrap().with_batch(3).unwrap();
        assert!(matches!(d.log_prob(&[s(0.0)]), Err(Error::Dimension(_))));
        let d = Distribution::normal(vec![0.0, 1.0], 1.0).unwrap();
        assert!(d.with_batch(3).is_err());
    }

    #[test]
    fn plain_and_differentiable_draws_agree() {
        let d = Distribution::normal(vec![0.5, -1.0], 2.0).unwrap();
        let a = d.sample(&mut ChaCha8Rng::seed_from_u64(9));
        let b = d.sample_plain(&mut ChaCha8Rng::seed_from_u64(9));
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.value().to_bits(), y.to_bits());
        }
    }
}
