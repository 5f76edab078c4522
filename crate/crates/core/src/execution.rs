//! Execution traces: the random variables one run of a program realized,
//! with parent edges taken from value provenance.

use std::cell::RefCell;
use std::collections::{BTreeSet, HashMap};
use std::rc::Rc;

use crate::autodiff::Scalar;
use crate::distributions::Family;
use crate::error::{Error, Result};
use crate::program::{Backend, Ctx, Next, Program, RandomVariable, Site};

#[derive(Clone, Debug)]
pub struct TraceNode {
    pub rv: RandomVariable,
    /// Sum over the batch of the value's log density.
    pub log_prob: Scalar,
}

impl TraceNode {
    pub fn name(&self) -> &str {
        self.rv.name()
    }

    pub fn family(&self) -> Family {
        self.rv.family()
    }

    pub fn params(&self) -> Vec<(&'static str, Vec<f64>)> {
        self.rv.distribution().snapshot()
    }

    pub fn parents(&self) -> Vec<&str> {
        self.rv.ancestors().iter().collect()
    }
}

/// Nodes in construction order plus the program's output.
#[derive(Clone, Debug)]
pub struct ExecutionTrace<O> {
    pub nodes: Vec<TraceNode>,
    pub output: O,
}

impl<O> ExecutionTrace<O> {
    pub fn names(&self) -> Vec<&str> {
        self.nodes.iter().map(TraceNode::name).collect()
    }

    pub fn get(&self, name: &str) -> Option<&TraceNode> {
        self.nodes.iter().find(|n| n.name() == name)
    }

    /// (parent, child) pairs.
    pub fn edges(&self) -> Vec<(String, String)> {
        self.nodes
            .iter()
            .flat_map(|n| {
                n.parents()
                    .into_iter()
                    .map(|p| (p.to_owned(), n.name().to_owned()))
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    /// Every node reachable from `name` along parent edges.
    pub fn descendants(&self, name: &str) -> Result<BTreeSet<String>> {
        if self.get(name).is_none() {
            return Err(Error::MissingVariable(name.to_owned()));
        }
        let mut children: HashMap<&str, Vec<&str>> = HashMap::new();
        for n in &self.nodes {
            for p in n.parents() {
                children.entry(p).or_default().push(n.name());
            }
        }
        let mut out = BTreeSet::new();
        let mut frontier = vec![name];
        while let Some(v) = frontier.pop() {
            for &c in children.get(v).into_iter().flatten() {
                if out.insert(c.to_owned()) {
                    frontier.push(c);
                }
            }
        }
        Ok(out)
    }

    /// Log density of `name` plus those of the nodes it directly feeds: the
    /// terms of the joint that involve its value.
    pub fn factor_terms(&self, name: &str) -> Result<Scalar> {
        let own = self
            .get(name)
            .ok_or_else(|| Error::MissingVariable(name.to_owned()))?;
        let mut total = own.log_prob.clone();
        for n in &self.nodes {
            if n.rv.ancestors().iter().any(|a| a == name) {
                total += &n.log_prob;
            }
        }
        Ok(total)
    }
}

/// Run `program` on `ctx`, recording every random variable that reaches the
/// bottom of the current stack.
pub fn capture<I: ?Sized, P: Program<I> + ?Sized>(
    ctx: &mut Ctx,
    program: &P,
    input: &I,
) -> Result<ExecutionTrace<P::Output>> {
    let nodes: Rc<RefCell<Vec<TraceNode>>> = Rc::default();
    let sink = nodes.clone();
    let recorder = move |site: Site, next: Next<'_>| {
        let rv = next.proceed(site)?;
        let log_prob = rv.log_prob()?;
        sink.borrow_mut().push(TraceNode {
            rv: rv.clone(),
            log_prob,
        });
        Ok(rv)
    };
    let output = ctx.trace(recorder, |ctx| program.run(ctx, input))?;
    let nodes = nodes.take();
    Ok(ExecutionTrace { nodes, output })
}

/// Run `program` once on a fresh context and record its trace.
pub fn capture_trace<I: ?Sized, P: Program<I> + ?Sized>(
    program: &P,
    input: &I,
    seed: u64,
    backend: Backend,
) -> Result<ExecutionTrace<P::Output>> {
    let mut ctx = Ctx::new(seed).with_backend(backend);
    capture(&mut ctx, program, input)
}
