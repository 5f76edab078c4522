//! Random variables, programs, and the tracer stack.
//!
//! A program is an ordinary function of a [`Ctx`] and its inputs. Every
//! random choice goes through [`Ctx::rv`], which hands the construction to
//! the tracer on top of the context's stack. A tracer may return its own
//! [`RandomVariable`] or delegate to the tracer below it via
//! [`Next::proceed`]; below the last tracer, the default draws a sample.

use std::collections::HashSet;
use std::fmt;
use std::panic::{self, AssertUnwindSafe};
use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Scalar, Tags};
use crate::distributions::{Distribution, Family};
use crate::error::{Error, Result};

/// How the default tracer represents sampled values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Backend {
    /// Values stay connected to parameters (reparameterized where possible).
    #[default]
    Differentiable,
    /// Values are plain numbers: nothing is recorded on any tape.
    Plain,
}

/// A named draw: its distribution, realized value, and the names of the
/// random variables its distribution's parameters were computed from.
#[derive(Clone)]
pub struct RandomVariable {
    name: Rc<str>,
    dist: Distribution,
    value: Vec<Scalar>,
    ancestors: Tags,
}

impl fmt::Debug for RandomVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RandomVariable")
            .field("name", &self.name)
            .field("family", &self.dist.family())
            .field("value", &self.values())
            .field("ancestors", &self.ancestors)
            .finish()
    }
}

impl RandomVariable {
    /// Fails if `value` does not match the batch of `dist`.
    pub fn new(name: &str, dist: Distribution, value: Vec<Scalar>) -> Result<Self> {
        if value.len() != dist.batch() {
            return Err(Error::Dimension(format!(
                "random variable {name:?}: value of length {} for batch {}",
                value.len(),
                dist.batch()
            )));
        }
        let name: Rc<str> = Rc::from(name);
        let own = Tags::single(name.clone());
        let value = value.into_iter().map(|v| v.with_tags(own.clone())).collect();
        let ancestors = dist.provenance();
        Ok(RandomVariable {
            name,
            dist,
            value,
            ancestors,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn distribution(&self) -> &Distribution {
        &self.dist
    }

    pub fn family(&self) -> Family {
        self.dist.family()
    }

    pub fn value(&self) -> &[Scalar] {
        &self.value
    }

    pub fn into_value(self) -> Vec<Scalar> {
        self.value
    }

    /// The first element; convenient for scalar random variables.
    pub fn item(&self) -> Scalar {
        self.value[0].clone()
    }

    pub fn values(&self) -> Vec<f64> {
        self.value.iter().map(Scalar::value).collect()
    }

    pub fn ancestors(&self) -> &Tags {
        &self.ancestors
    }

    /// Sum of per-element log densities of the value.
    pub fn log_prob(&self) -> Result<Scalar> {
        self.dist.log_prob_sum(&self.value)
    }
}

/// What a tracer sees: a random variable about to be constructed.
#[derive(Clone, Debug)]
pub struct Site {
    pub name: String,
    pub dist: Distribution,
    /// A value to use instead of sampling. Tracers set this to force values.
    pub value: Option<Vec<Scalar>>,
}

impl Site {
    pub fn family(&self) -> Family {
        self.dist.family()
    }
}

pub trait Tracer {
    fn intercept(&mut self, site: Site, next: Next<'_>) -> Result<RandomVariable>;
}

impl<F> Tracer for F
where
    F: FnMut(Site, Next<'_>) -> Result<RandomVariable>,
{
    fn intercept(&mut self, site: Site, next: Next<'_>) -> Result<RandomVariable> {
        self(site, next)
    }
}

#[derive(Clone, Copy, Debug)]
struct Env {
    seed: u64,
    backend: Backend,
}

/// The rest of the stack below the tracer currently intercepting.
pub struct Next<'a> {
    below: &'a mut [Box<dyn Tracer>],
    env: Env,
}

impl Next<'_> {
    pub fn proceed(self, site: Site) -> Result<RandomVariable> {
        dispatch(self.below, self.env, site)
    }

    pub fn backend(&self) -> Backend {
        self.env.backend
    }
}

fn dispatch(stack: &mut [Box<dyn Tracer>], env: Env, site: Site) -> Result<RandomVariable> {
    match stack.split_last_mut() {
        Some((top, below)) => top.intercept(site, Next { below, env }),
        None => default_construct(env, site),
    }
}

fn default_construct(env: Env, site: Site) -> Result<RandomVariable> {
    let dist = match env.backend {
        Backend::Differentiable => site.dist,
        Backend::Plain => site.dist.detach(),
    };
    let value = match site.value {
        Some(v) => match env.backend {
            Backend::Differentiable => v,
            Backend::Plain => v.iter().map(Scalar::detach).collect(),
        },
        None => {
            let mut rng = stream(env.seed, &site.name);
            match env.backend {
                Backend::Differentiable => dist.sample(&mut rng),
                Backend::Plain => dist
                    .sample_plain(&mut rng)
                    .into_iter()
                    .map(Scalar::constant)
                    .collect(),
            }
        }
    };
    RandomVariable::new(&site.name, dist, value)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Each name draws from its own stream, so forcing one variable never shifts
/// the randomness seen by another.
fn stream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name.as_bytes()));
    rng
}

/// One execution: the tracer stack, the seed, the backend, and the names
/// constructed so far.
pub struct Ctx {
    stack: Vec<Box<dyn Tracer>>,
    env: Env,
    seen: HashSet<String>,
}

impl Default for Ctx {
    fn default() -> Self {
        Ctx::new(0)
    }
}

impl fmt::Debug for Ctx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Ctx")
            .field("depth", &self.stack.len())
            .field("seed", &self.env.seed)
            .field("backend", &self.env.backend)
            .finish()
    }
}

impl Ctx {
    pub fn new(seed: u64) -> Self {
        Ctx {
            stack: Vec::new(),
            env: Env {
                seed,
                backend: Backend::Differentiable,
            },
            seen: HashSet::new(),
        }
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.env.backend = backend;
        self
    }

    pub fn seed(&self) -> u64 {
        self.env.seed
    }

    pub fn backend(&self) -> Backend {
        self.env.backend
    }

    /// Number of tracers currently pushed.
    pub fn depth(&self) -> usize {
        self.stack.len()
    }

    /// A random source for auxiliary randomness (e.g. a sampler inside a
    /// program), independent of every random variable's stream.
    pub fn rng(&self, label: &str) -> ChaCha8Rng {
        stream(self.env.seed, &format!("\u{0}aux:{label}"))
    }

    /// Construct a random variable through the tracer stack.
    pub fn rv(&mut self, name: &str, dist: Distribution) -> Result<RandomVariable> {
        if !self.seen.insert(name.to_owned()) {
            return Err(Error::DuplicateName(name.to_owned()));
        }
        let site = Site {
            name: name.to_owned(),
            dist,
            value: None,
        };
        let rv = dispatch(&mut self.stack, self.env, site)?;
        if rv.name() != name {
            return Err(Error::Renamed {
                expected: name.to_owned(),
                found: rv.name().to_owned(),
            });
        }
        Ok(rv)
    }

    /// Run `f` with `tracer` on top of the stack. The tracer is popped on
    /// every exit path, including errors and panics.
    pub fn trace<T, F>(&mut self, tracer: impl Tracer + 'static, f: F) -> T
    where
        F: FnOnce(&mut Ctx) -> T,
    {
        let depth = self.stack.len();
        self.stack.push(Box::new(tracer));
        let out = panic::catch_unwind(AssertUnwindSafe(|| f(self)));
        self.stack.truncate(depth);
        match out {
            Ok(v) => v,
            Err(payload) => panic::resume_unwind(payload),
        }
    }

    pub fn run<I: ?Sized, P: Program<I> + ?Sized>(&mut self, program: &P, input: &I) -> Result<P::Output> {
        program.run(self, input)
    }
}

/// A probabilistic program: a function of a context and explicit inputs.
pub trait Program<I: ?Sized = ()> {
    type Output;
    fn run(&self, ctx: &mut Ctx, input: &I) -> Result<Self::Output>;
}

impl<I: ?Sized, O, F> Program<I> for F
where
    F: Fn(&mut Ctx, &I) -> Result<O>,
{
    type Output = O;
    fn run(&self, ctx: &mut Ctx, input: &I) -> Result<O> {
        self(ctx, input)
    }
}

impl<I: ?Sized, O> Program<I> for Box<dyn Program<I, Output = O>> {
    type Output = O;
    fn run(&self, ctx: &mut Ctx, input: &I) -> Result<O> {
        (**self).run(ctx, input)
    }
}

impl<I: ?Sized, O> Program<I> for Rc<dyn Program<I, Output = O>> {
    type Output = O;
    fn run(&self, ctx: &mut Ctx, input: &I) -> Result<O> {
        (**self).run(ctx, input)
    }
}

/// Turns a distribution builder into an interceptable constructor:
/// `let normal = traceable(|(m, s)| Distribution::normal(m, s));`
/// then `normal(ctx, "z", (0.0, 1.0))`.
pub fn traceable<A, B>(build: B) -> impl Fn(&mut Ctx, &str, A) -> Result<RandomVariable>
where
    B: Fn(A) -> Result<Distribution>,
{
    move |ctx, name, args| {
        let dist = build(args)?;
        ctx.rv(name, dist)
    }
}

/// Run `program` once on a fresh context.
pub fn sample<I: ?Sized, P: Program<I> + ?Sized>(program: &P, input: &I, seed: u64, backend: Backend) -> Result<P::Output> {
    let mut ctx = Ctx::new(seed).with_backend(backend);
    program.run(&mut ctx, input)
}
