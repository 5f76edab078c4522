//! Program transformations built on tracing: log-joint extraction, causal
//! intervention, and name alignment between programs and data.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;

use crate::autodiff::Scalar;
use crate::error::{Error, Result};
use crate::program::{Backend, Ctx, Next, Program, RandomVariable, Site};

/// Values for random variables, by name.
pub type Bindings = BTreeMap<String, Vec<Scalar>>;

/// Build [`Bindings`] from plain numbers.
pub fn bindings<'a>(pairs: impl IntoIterator<Item = (&'a str, Vec<f64>)>) -> Bindings {
    pairs
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v.into_iter().map(Scalar::constant).collect()))
        .collect()
}

/// What a log-joint evaluation consumed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LogJointReport {
    /// Names in construction order.
    pub visited: Vec<String>,
    /// Bindings that no random variable asked for.
    pub unused: Vec<String>,
}

/// The log-joint density of a model as a function of bindings.
#[derive(Clone)]
pub struct LogJoint<P> {
    model: P,
}

pub fn make_log_joint<P>(model: P) -> LogJoint<P> {
    LogJoint { model }
}

impl<P> LogJoint<P> {
    pub fn model(&self) -> &P {
        &self.model
    }

    /// Σ log p(value) over the random variables the model constructs, each
    /// value taken from `bindings`.
    pub fn eval(&self, bindings: &Bindings) -> Result<Scalar>
    where
        P: Program<()>,
    {
        self.eval_with(&(), bindings)
    }

    pub fn eval_with<I: ?Sized>(&self, input: &I, bindings: &Bindings) -> Result<Scalar>
    where
        P: Program<I>,
    {
        let (total, report) = self.eval_report(input, bindings)?;
        if !report.unused.is_empty() {
            log::warn!("log joint ignored unused bindings {:?}", report.unused);
        }
        Ok(total)
    }

    pub fn eval_report<I: ?Sized>(
        &self,
        input: &I,
        bindings: &Bindings,
    ) -> Result<(Scalar, LogJointReport)>
    where
        P: Program<I>,
    {
        let mut ctx = Ctx::new(0);
        self.eval_in(&mut ctx, input, bindings)
    }

    /// Evaluate on an existing context, beneath whatever it already traces.
    pub fn eval_in<I: ?Sized>(
        &self,
        ctx: &mut Ctx,
        input: &I,
        bindings: &Bindings,
    ) -> Result<(Scalar, LogJointReport)>
    where
        P: Program<I>,
    {
        struct State {
            bindings: Bindings,
            total: Option<Scalar>,
            visited: Vec<String>,
        }
        let state = Rc::new(RefCell::new(State {
            bindings: bindings.clone(),
            total: None,
            visited: Vec::new(),
        }));
        let shared = state.clone();
        let tracer = move |mut site: Site, next: Next<'_>| -> Result<RandomVariable> {
            let value = shared
                .borrow()
                .bindings
                .get(&site.name)
                .cloned()
                .ok_or_else(|| Error::MissingBinding(vec![site.name.clone()]))?;
            let name = site.name.clone();
            site.value = Some(value);
            let rv = next.proceed(site)?;
            let lp = rv.log_prob()?;
            let mut st = shared.borrow_mut();
            st.total = Some(match st.total.take() {
                None => lp,
                Some(acc) => acc + lp,
            });
            st.visited.push(name);
            Ok(rv)
        };
        ctx.trace(tracer, |ctx| self.model.run(ctx, input))?;
        let st = Rc::try_unwrap(state)
            .ok()
            .expect("tracer dropped with the stack")
            .into_inner();
        let seen: BTreeSet<&str> = st.visited.iter().map(String::as_str).collect();
        let unused = st
            .bindings
            .keys()
            .filter(|k| !seen.contains(k.as_str()))
            .cloned()
            .collect();
        Ok((
            st.total.unwrap_or_else(|| Scalar::constant(0.0)),
            LogJointReport {
                visited: st.visited,
                unused,
            },
        ))
    }
}

/// A model whose named random variables are replaced by fixed values.
pub struct Intervened<P> {
    model: P,
    fixed: Rc<Bindings>,
    unused: RefCell<Vec<String>>,
}

/// Graph surgery: each named variable's construction is replaced by its
/// do-value, so descendants see the value while the variable's own
/// parents no longer matter. Names the model never reaches are ignored and
/// listed by [`Intervened::unused`].
pub fn intervene<P>(model: P, fixed: Bindings) -> Intervened<P> {
    Intervened {
        model,
        fixed: Rc::new(fixed),
        unused: RefCell::new(Vec::new()),
    }
}

impl<P> Intervened<P> {
    /// Do-names the most recent run never encountered.
    pub fn unused(&self) -> Vec<String> {
        self.unused.borrow().clone()
    }
}

impl<I: ?Sized, P: Program<I>> Program<I> for Intervened<P> {
    type Output = P::Output;

    fn run(&self, ctx: &mut Ctx, input: &I) -> Result<P::Output> {
        let fixed = self.fixed.clone();
        let hit: Rc<RefCell<BTreeSet<String>>> = Rc::default();
        let hits = hit.clone();
        let tracer = move |site: Site, next: Next<'_>| -> Result<RandomVariable> {
            match fixed.get(&site.name) {
                Some(v) => {
                    hits.borrow_mut().insert(site.name.clone());
                    let (dist, value) = match next.backend() {
                        Backend::Differentiable => (site.dist, v.clone()),
                        Backend::Plain => (site.dist.detach(), v.iter().map(Scalar::detach).collect()),
                    };
                    RandomVariable::new(&site.name, dist, value)
                }
                None => next.proceed(site),
            }
        };
        let out = ctx.trace(tracer, |ctx| self.model.run(ctx, input));
        let hit = hit.borrow();
        let unused: Vec<String> = self
            .fixed
            .keys()
            .filter(|k| !hit.contains(*k))
            .cloned()
            .collect();
        if !unused.is_empty() {
            log::debug!("intervention names not encountered: {unused:?}");
        }
        *self.unused.borrow_mut() = unused;
        out
    }
}

/// Where a model variable's value comes from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Target {
    /// A random variable of the variational program.
    Variational(String),
    /// An entry of the observed data.
    Data(String),
}

/// Maps model variable names to variational variables or data.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Alignment {
    map: BTreeMap<String, Target>,
}

impl Alignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn latent(self, model: &str, variational: &str) -> Result<Self> {
        self.insert(model, Target::Variational(variational.to_owned()))
    }

    pub fn observed(self, model: &str, data: &str) -> Result<Self> {
        self.insert(model, Target::Data(data.to_owned()))
    }

    pub fn insert(mut self, model: &str, target: Target) -> Result<Self> {
        if self.map.contains_key(model) {
            return Err(Error::DuplicateAlignmentKey(model.to_owned()));
        }
        self.map.insert(model.to_owned(), target);
        Ok(self)
    }

    pub fn get(&self, model: &str) -> Option<&Target> {
        self.map.get(model)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Target)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn latents(&self) -> impl Iterator<Item = (&str, &str)> {
        self.map.iter().filter_map(|(k, v)| match v {
            Target::Variational(q) => Some((k.as_str(), q.as_str())),
            Target::Data(_) => None,
        })
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Bindings for a model's log joint: latents from variational samples,
/// observed variables from data.
pub fn align_bindings<S: AsRef<str>>(
    model_names: &[S],
    alignment: &Alignment,
    q_values: &Bindings,
    data: &Bindings,
) -> Result<Bindings> {
    let names: BTreeSet<&str> = model_names.iter().map(AsRef::as_ref).collect();
    let gaps: Vec<String> = model_names
        .iter()
        .map(AsRef::as_ref)
        .filter(|n| alignment.get(n).is_none())
        .map(str::to_owned)
        .collect();
    if !gaps.is_empty() {
        return Err(Error::AlignmentGap(gaps));
    }
    let dangling: Vec<String> = alignment
        .iter()
        .filter(|(k, _)| !names.contains(k))
        .map(|(k, _)| k.to_owned())
        .collect();
    if !dangling.is_empty() {
        return Err(Error::DanglingAlignment(dangling));
    }
    let mut out = Bindings::new();
    for name in names {
        let value = match alignment.get(name).expect("checked above") {
            Target::Variational(q) => q_values.get(q),
            Target::Data(d) => data.get(d),
        };
        let value = value.ok_or_else(|| Error::MissingBinding(vec![name.to_owned()]))?;
        out.insert(name.to_owned(), value.clone());
    }
    Ok(out)
}
