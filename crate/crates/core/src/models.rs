//! Example programs with independently written log densities and, where
//! known, analytic posterior facts.

use std::rc::Rc;
use std::sync::Arc;

use crate::autodiff::Scalar;
use crate::distributions::Distribution;
use crate::error::{Error, Result};
use crate::program::{Ctx, Program};
use crate::special::HALF_LN_2PI;
use crate::transforms::Bindings;

/// Where a latent variable lives, which fixes its map to unconstrained space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Support {
    Real,
    Positive,
    UnitInterval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Latent {
    pub name: String,
    pub size: usize,
    pub support: Support,
}

impl Latent {
    pub fn new(name: &str, size: usize, support: Support) -> Self {
        Latent {
            name: name.to_owned(),
            size,
            support,
        }
    }
}

/// Dense row-major features.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
            return Err(Error::Dimension(format!(
                "row {i} has {} columns, expected {cols}",
                r.len()
            )));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Known answers, for tests.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Facts {
    pub posterior_mean: Option<Vec<f64>>,
    pub posterior_variance: Option<Vec<f64>>,
    pub log_marginal: Option<f64>,
    pub true_weights: Option<Vec<f64>>,
}

pub type ZooProgram = Rc<dyn Program<(), Output = Vec<Scalar>>>;
pub type HandwrittenLogJoint = Rc<dyn Fn(&Bindings) -> Result<Scalar>>;

/// A fixture: program, closed-form log joint, variable roles, data.
#[derive(Clone)]
pub struct ZooEntry {
    pub name: &'static str,
    pub program: ZooProgram,
    pub handwritten: HandwrittenLogJoint,
    pub latents: Vec<Latent>,
    pub observed: Vec<String>,
    /// Observed values, keyed by the observed variables' names.
    pub data: Bindings,
    pub facts: Facts,
}

impl std::fmt::Debug for ZooEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ZooEntry")
            .field("name", &self.name)
            .field("latents", &self.latents)
            .field("observed", &self.observed)
            .finish()
    }
}

fn bound<'a>(b: &'a Bindings, name: &str, len: usize) -> Result<&'a [Scalar]> {
    let v = b
        .get(name)
        .ok_or_else(|| Error::MissingBinding(vec![name.to_owned()]))?;
    if v.len() != len {
        return Err(Error::Dimension(format!(
            "{name}: expected {len} values, got {}",
            v.len()
        )));
    }
    Ok(v)
}

fn constants(v: &[f64]) -> Vec<Scalar> {
    v.iter().copied().map(Scalar::constant).collect()
}

/// log N(x; 0, 1) per element via the residual z = (x − 0)/1, summed left
/// to right.
fn std_normal_terms(x: &[Scalar]) -> Scalar {
    x.iter()
        .map(|w| {
            let z = (w - 0.0) / 1.0;
            -(&z * &z) * 0.5 - 0.0 - HALF_LN_2PI
        })
        .sum()
}

/// `b + Σⱼ wⱼ·xᵢⱼ` accumulated left to right.
fn linear_predictor(row: &[f64], w: &[Scalar], b: &Scalar) -> Scalar {
    row.iter()
        .zip(w)
        .fold(b.clone(), |acc, (x, w)| acc + w * *x)
}

pub const NUM_FLIPS: usize = 50;

/// p ~ Beta(1, 1); x ~ Bernoulli(p), 50 draws.
pub fn beta_bernoulli() -> ZooEntry {
    beta_bernoulli_with(&default_coin_flips())
}

/// 35 ones then 15 zeros, interleaved.
pub fn default_coin_flips() -> Vec<f64> {
    (0..NUM_FLIPS).map(|i| if i % 10 < 7 { 1.0 } else { 0.0 }).collect()
}

pub fn beta_bernoulli_with(x: &[f64]) -> ZooEntry {
    let n = x.len();
    let program: ZooProgram = Rc::new(move |ctx: &mut Ctx, _: &()| -> Result<Vec<Scalar>> {
        let p = ctx.rv("p", Distribution::beta(1.0, 1.0)?)?;
        let x = ctx.rv("x", Distribution::bernoulli_probs(p.item())?.with_batch(n)?)?;
        Ok(x.into_value())
    });
    let handwritten: HandwrittenLogJoint = Rc::new(move |b: &Bindings| {
        let p = &bound(b, "p", 1)?[0];
        let x = bound(b, "x", n)?;
        let pv = p.value();
        if !(0.0..=1.0).contains(&pv) {
            return Ok(Scalar::constant(f64::NEG_INFINITY));
        }
        // Beta(1, 1), written out term by term so the arithmetic matches the
        // traced density exactly.
        let one = Scalar::constant(1.0);
        let norm = (&one + &one).lgamma() - one.lgamma() - one.lgamma();
        let prior = if pv == 0.0 || pv == 1.0 {
            norm
        } else {
            (&one - 1.0) * p.ln() + (&one - 1.0) * (-p).ln_1p() + norm
        };
        let mut terms = Vec::with_capacity(n);
        for xi in x {
            terms.push(match xi.value() {
                v if v == 1.0 && pv > 0.0 => p.ln(),
                v if v == 0.0 && pv < 1.0 => (-p).ln_1p(),
                _ => return Ok(Scalar::constant(f64::NEG_INFINITY)),
            });
        }
        let total = prior + terms.into_iter().sum::<Scalar>();
        Ok(total)
    });
    let k = x.iter().filter(|v| **v == 1.0).count() as f64;
    let (a, b) = beta_bernoulli_posterior(k as usize, n);
    ZooEntry {
        name: "beta_bernoulli",
        program,
        handwritten,
        latents: vec![Latent::new("p", 1, Support::UnitInterval)],
        observed: vec!["x".into()],
        data: Bindings::from([("x".to_owned(), constants(x))]),
        facts: Facts {
            posterior_mean: Some(vec![a / (a + b)]),
            posterior_variance: Some(vec![a * b / ((a + b).powi(2) * (a + b + 1.0))]),
            log_marginal: None,
            true_weights: None,
        },
    }
}

/// Posterior Beta parameters after `k` successes in `n` flips under Beta(1, 1).
pub fn beta_bernoulli_posterior(k: usize, n: usize) -> (f64, f64) {
    (1.0 + k as f64, 1.0 + (n - k) as f64)
}

const BRANCH_A: [[f64; 1]; 2] = [[1.5], [-0.5]];
const BRANCH_A_BIAS: [f64; 2] = [0.2, 0.0];
const BRANCH_B: [[f64; 2]; 4] = [[1.0, 0.0], [0.5, 0.5], [0.0, -1.0], [2.0, 1.0]];
const BRANCH_B_BIAS: [f64; 4] = [0.0, 0.1, -0.1, 0.3];
const BRANCH_NOISE: f64 = 0.1;

fn affine<const C: usize>(w: &[[f64; C]], bias: &[f64], h: &[Scalar]) -> Vec<Scalar> {
    w.iter()
        .zip(bias)
        .map(|(row, b)| {
            row.iter()
                .zip(h)
                .fold(Scalar::constant(*b), |acc, (w, h)| acc + h * *w)
        })
        .collect()
}

/// coin ~ Bernoulli(0.5). Heads: a ~ N(0, 1) mapped to 2 outputs; tails:
/// b ~ N(0, 1)² mapped to 4 outputs. y ~ N(outputs, 0.1).
pub fn branching_program() -> ZooEntry {
    let program: ZooProgram = Rc::new(|ctx: &mut Ctx, _: &()| -> Result<Vec<Scalar>> {
        let coin = ctx.rv("coin", Distribution::bernoulli_probs(0.5)?)?;
        let mean = if coin.item().value() == 1.0 {
            let a = ctx.rv("a", Distribution::normal(0.0, 1.0)?)?;
            affine(&BRANCH_A, &BRANCH_A_BIAS, a.value())
        } else {
            let b = ctx.rv("b", Distribution::normal(0.0, 1.0)?.with_batch(2)?)?;
            affine(&BRANCH_B, &BRANCH_B_BIAS, b.value())
        };
        let y = ctx.rv("y", Distribution::normal(mean, BRANCH_NOISE)?)?;
        Ok(y.into_value())
    });
    let handwritten: HandwrittenLogJoint = Rc::new(|b: &Bindings| {
        let coin = bound(b, "coin", 1)?[0].value();
        let (h, w, bias): (_, Vec<&[f64]>, &[f64]) = if coin == 1.0 {
            (
                bound(b, "a", 1)?,
                BRANCH_A.iter().map(|r| &r[..]).collect(),
                &BRANCH_A_BIAS,
            )
        } else if coin == 0.0 {
            (
                bound(b, "b", 2)?,
                BRANCH_B.iter().map(|r| &r[..]).collect(),
                &BRANCH_B_BIAS,
            )
        } else {
            return Ok(Scalar::constant(f64::NEG_INFINITY));
        };
        let y = bound(b, "y", w.len())?;
        let mut total = Scalar::constant(0.5f64.ln()) + std_normal_terms(h);
        for ((row, c), yi) in w.iter().zip(bias).zip(y) {
            let mut m = Scalar::constant(*c);
            for (wk, hk) in row.iter().zip(h) {
                m = m + hk * *wk;
            }
            let z = (yi - m) / BRANCH_NOISE;
            total += -(&z * &z) * 0.5 - BRANCH_NOISE.ln() - HALF_LN_2PI;
        }
        Ok(total)
    });
    ZooEntry {
        name: "branching_program",
        program,
        handwritten,
        latents: vec![],
        observed: vec![],
        data: Bindings::new(),
        facts: Facts::default(),
    }
}

/// w ~ N(0, 1)ᵈ, b ~ N(0, 1), y ~ N(Xw + b, 1).
pub fn linear_regression(features: Matrix) -> Result<ZooEntry> {
    let (n, d) = (features.rows(), features.cols());
    if d == 0 {
        return Err(Error::Dimension("linear regression needs d >= 1".into()));
    }
    let x = Arc::new(features);
    let xp = x.clone();
    let program: ZooProgram = Rc::new(move |ctx: &mut Ctx, _: &()| -> Result<Vec<Scalar>> {
        let w = ctx.rv("w", Distribution::normal(0.0, 1.0)?.with_batch(d)?)?;
        let b = ctx.rv("b", Distribution::normal(0.0, 1.0)?)?;
        let mean: Vec<Scalar> = (0..n)
            .map(|i| linear_predictor(xp.row(i), w.value(), &b.item()))
            .collect();
        let y = ctx.rv("y", Distribution::normal(mean, 1.0)?.with_batch(n)?)?;
        Ok(y.into_value())
    });
    let handwritten: HandwrittenLogJoint = Rc::new(move |bind: &Bindings| {
        let w = bound(bind, "w", d)?;
        let b = &bound(bind, "b", 1)?[0];
        let y = bound(bind, "y", n)?;
        // −½‖y − Xw − b‖² − (n/2)·ln 2π, plus standard normal priors.
        let mut sq = Scalar::constant(0.0);
        for (i, yi) in y.iter().enumerate() {
            let mut m = b.clone();
            for (wj, xij) in w.iter().zip(x.row(i)) {
                m = m + wj * *xij;
            }
            let r = yi - m;
            sq += &r * &r;
        }
        let prior: Scalar = w.iter().chain(std::iter::once(b)).map(|v| v * v).sum();
        Ok(-(sq + prior) * 0.5 - HALF_LN_2PI * (n + d + 1) as f64)
    });
    Ok(ZooEntry {
        name: "linear_regression",
        program,
        handwritten,
        latents: vec![Latent::new("w", d, Support::Real), Latent::new("b", 1, Support::Real)],
        observed: vec!["y".into()],
        data: Bindings::new(),
        facts: Facts::default(),
    })
}

/// w ~ N(0, 1)ᵈ, b ~ N(0, 1), y ~ Bernoulli(logits = Xw + b).
///
/// Features are used as given; standardize them first (see
/// [`standardize`]).
pub fn logistic_regression(features: Matrix, labels: &[f64]) -> Result<ZooEntry> {
    let (n, d) = (features.rows(), features.cols());
    if d == 0 {
        return Err(Error::Dimension("logistic regression needs d >= 1".into()));
    }
    if labels.len() != n {
        return Err(Error::Dimension(format!(
            "{n} feature rows but {} labels",
            labels.len()
        )));
    }
    if let Some((i, v)) = labels
        .iter()
        .enumerate()
        .find(|(_, v)| **v != 0.0 && **v != 1.0)
    {
        return Err(Error::Data(format!("label {i} is {v}, expected 0 or 1")));
    }
    let x = Arc::new(features);
    let xp = x.clone();
    let program: ZooProgram = Rc::new(move |ctx: &mut Ctx, _: &()| -> Result<Vec<Scalar>> {
        let w = ctx.rv("w", Distribution::normal(0.0, 1.0)?.with_batch(d)?)?;
        let b = ctx.rv("b", Distribution::normal(0.0, 1.0)?)?;
        let b = b.item();
        let logits: Vec<Scalar> = (0..n)
            .map(|i| linear_predictor(xp.row(i), w.value(), &b))
            .collect();
        let y = ctx.rv("y", Distribution::bernoulli_logits(logits)?.with_batch(n)?)?;
        Ok(y.into_value())
    });
    let handwritten: HandwrittenLogJoint = Rc::new(move |bind: &Bindings| {
        let w = bound(bind, "w", d)?;
        let b = &bound(bind, "b", 1)?[0];
        let y = bound(bind, "y", n)?;
        let lw = std_normal_terms(w);
        let lb = std_normal_terms(std::slice::from_ref(b));
        let ly: Scalar = y
            .iter()
            .enumerate()
            .map(|(i, yi)| {
                let eta = linear_predictor(x.row(i), w, b);
                match yi.value() {
                    v if v == 1.0 => -(-eta).softplus(),
                    v if v == 0.0 => -eta.softplus(),
                    _ => Scalar::constant(f64::NEG_INFINITY),
                }
            })
            .sum();
        Ok(lw + lb + ly)
    });
    Ok(ZooEntry {
        name: "logistic_regression",
        program,
        handwritten,
        latents: vec![Latent::new("w", d, Support::Real), Latent::new("b", 1, Support::Real)],
        observed: vec!["y".into()],
        data: Bindings::from([("y".to_owned(), constants(labels))]),
        facts: Facts::default(),
    })
}

/// Per-column z-scores. Constant columns are centered and left unscaled;
/// their indices are returned.
pub fn standardize(m: &mut Matrix) -> Vec<usize> {
    let (n, d) = (m.rows, m.cols);
    let mut constant = Vec::new();
    if n == 0 {
        return constant;
    }
    for j in 0..d {
        let mean = (0..n).map(|i| m.data[i * d + j]).sum::<f64>() / n as f64;
        let var = (0..n)
            .map(|i| (m.data[i * d + j] - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        let sd = var.sqrt();
        let scale = if sd > 0.0 {
            sd
        } else {
            constant.push(j);
            1.0
        };
        for i in 0..n {
            m.data[i * d + j] = (m.data[i * d + j] - mean) / scale;
        }
    }
    constant
}

pub const CONJUGATE_X: f64 = 1.0;
/// log N(1; 0, √2).
pub const CONJUGATE_LOG_MARGINAL: f64 = -1.515_512_123_484_645_4;

/// z ~ N(0, 1); x ~ N(z, 1), observed x = 1.
pub fn conjugate_normal() -> ZooEntry {
    let program: ZooProgram = Rc::new(|ctx: &mut Ctx, _: &()| -> Result<Vec<Scalar>> {
        let z = ctx.rv("z", Distribution::normal(0.0, 1.0)?)?;
        let x = ctx.rv("x", Distribution::normal(z.item(), 1.0)?)?;
        Ok(x.into_value())
    });
    let handwritten: HandwrittenLogJoint = Rc::new(|b: &Bindings| {
        let z = &bound(b, "z", 1)?[0];
        let x = &bound(b, "x", 1)?[0];
        let term = |v: &Scalar, loc: &Scalar| {
            let r = (v - loc) / 1.0;
            -(&r * &r) * 0.5 - 0.0 - HALF_LN_2PI
        };
        Ok(term(z, &Scalar::constant(0.0)) + term(x, z))
    });
    ZooEntry {
        name: "conjugate_normal",
        program,
        handwritten,
        latents: vec![Latent::new("z", 1, Support::Real)],
        observed: vec!["x".into()],
        data: Bindings::from([("x".to_owned(), vec![Scalar::constant(CONJUGATE_X)])]),
        facts: Facts {
            posterior_mean: Some(vec![0.5]),
            posterior_variance: Some(vec![0.5]),
            log_marginal: Some(CONJUGATE_LOG_MARGINAL),
            true_weights: None,
        },
    }
}
