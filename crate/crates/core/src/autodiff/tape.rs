use std::cell::{Cell, RefCell};
use std::fmt;
use std::rc::Rc;

use super::scalar::{Node, Scalar};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Op {
    Leaf,
    Identity,
    /// Blocks reverse sweeps at or above the nesting depth it was created at.
    Stop(u32),
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Neg,
    Ln,
    Ln1p,
    Exp,
    Sigmoid,
    Softplus,
    Lgamma,
    Polygamma(u32),
    Sqrt,
    Tanh,
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum Arg {
    None,
    Node(u32),
    Const(f64),
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Record {
    pub value: f64,
    pub op: Op,
    pub args: [Arg; 2],
    pub partials: [f64; 2],
}

struct TapeInner {
    records: RefCell<Vec<Record>>,
    depth: Cell<u32>,
    fault: RefCell<Option<Error>>,
}

thread_local! {
    /// Record storage from the last dropped tape, reused to avoid regrowing
    /// large buffers on every evaluation.
    static SPARE: RefCell<Vec<Record>> = const { RefCell::new(Vec::new()) };
}

impl Drop for TapeInner {
    fn drop(&mut self) {
        let mut records = std::mem::take(self.records.get_mut());
        records.clear();
        let _ = SPARE.try_with(|spare| {
            if let Ok(mut spare) = spare.try_borrow_mut() {
                if records.capacity() > spare.capacity() {
                    *spare = records;
                }
            }
        });
    }
}

/// An append-only record of scalar operations.
///
/// Scalars hold a handle to the tape that produced them, so there is no
/// global tape. Nested differentiation reuses the same tape: an inner
/// gradient raises the tape's generation while it runs and sweeps back
/// with differentiable adjoints, which are themselves recorded.
#[derive(Clone)]
pub struct Tape(Rc<TapeInner>);

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape")
            .field("records", &self.len())
            .field("generation", &self.generation())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        let records = SPARE
            .try_with(|spare| spare.try_borrow_mut().map(|mut s| std::mem::take(&mut *s)).unwrap_or_default())
            .unwrap_or_default();
        Tape(Rc::new(TapeInner {
            records: RefCell::new(records),
            depth: Cell::new(0),
            fault: RefCell::new(None),
        }))
    }

    /// A fresh leaf on this tape.
    pub fn variable(&self, x: f64) -> Scalar {
        let index = self.push(Record {
            value: x,
            op: Op::Leaf,
            args: [Arg::None, Arg::None],
            partials: [0.0, 0.0],
        });
        Scalar::from_node(x, Node::new(self.clone(), index))
    }

    pub fn len(&self) -> usize {
        self.0.records.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Nesting depth of the differentiation currently running on this tape.
    pub fn generation(&self) -> u32 {
        self.0.depth.get()
    }

    /// The first domain violation recorded on this tape, if any.
    pub fn fault(&self) -> Option<Error> {
        self.0.fault.borrow().clone()
    }

    /// Reverse sweep from `output` with plain adjoints.
    pub fn backward(&self, output: &Scalar) -> Result<Gradients> {
        if let Some(err) = self.fault() {
            return Err(err);
        }
        match output.index_on(self) {
            Some(out) => Ok(Gradients {
                tape: Some(self.clone()),
                lo: 0,
                adjoints: self.sweep_values(out, 0, self.generation()),
            }),
            None => Ok(Gradients {
                tape: None,
                lo: 0,
                adjoints: Vec::new(),
            }),
        }
    }

    pub(crate) fn ptr_eq(&self, other: &Tape) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    pub(crate) fn push(&self, record: Record) -> u32 {
        let mut records = self.0.records.borrow_mut();
        let index = u32::try_from(records.len()).expect("tape exceeds u32::MAX records");
        records.push(record);
        index
    }

    pub(crate) fn record(&self, index: u32) -> Record {
        self.0.records.borrow()[index as usize]
    }

    pub(crate) fn set_fault(&self, op: &'static str, arg: f64) {
        let mut fault = self.0.fault.borrow_mut();
        if fault.is_none() {
            *fault = Some(Error::NonFinite { op, arg });
        }
    }

    pub(crate) fn enter(&self) -> DepthGuard {
        self.0.depth.set(self.0.depth.get() + 1);
        DepthGuard(self.clone())
    }

    fn scalar_at(&self, index: u32) -> Scalar {
        Scalar::from_node(self.record(index).value, Node::new(self.clone(), index))
    }

    fn arg_scalar(&self, arg: Arg) -> Scalar {
        match arg {
            Arg::Node(j) => self.scalar_at(j),
            Arg::Const(c) => Scalar::constant(c),
            Arg::None => Scalar::constant(0.0),
        }
    }

    /// Plain-number reverse sweep over `lo..=out`. Index `i` of the result is
    /// the adjoint of record `lo + i`.
    pub(crate) fn sweep_values(&self, out: u32, lo: u32, level: u32) -> Vec<f64> {
        let records = self.0.records.borrow();
        let mut adj = vec![0.0; (out - lo + 1) as usize];
        *adj.last_mut().unwrap() = 1.0;
        for i in (lo..=out).rev() {
            let g = adj[(i - lo) as usize];
            if g == 0.0 {
                continue;
            }
            let rec = &records[i as usize];
            match rec.op {
                Op::Leaf => continue,
                Op::Stop(l) if l <= level => continue,
                _ => {}
            }
            for k in 0..2 {
                if let Arg::Node(j) = rec.args[k] {
                    if j >= lo {
                        adj[(j - lo) as usize] += g * rec.partials[k];
                    }
                }
            }
        }
        adj
    }

    /// Reverse sweep whose adjoints are Scalars recorded on this same tape,
    /// so the result can be differentiated again.
    pub(crate) fn sweep_scalars(&self, out: u32, lo: u32, level: u32) -> Vec<Option<Scalar>> {
        let mut adj: Vec<Option<Scalar>> = vec![None; (out - lo + 1) as usize];
        *adj.last_mut().unwrap() = Some(Scalar::constant(1.0));
        for i in (lo..=out).rev() {
            let Some(g) = adj[(i - lo) as usize].clone() else {
                continue;
            };
            let rec = self.record(i);
            match rec.op {
                Op::Leaf => continue,
                Op::Stop(l) if l <= level => continue,
                _ => {}
            }
            for k in 0..2 {
                let Arg::Node(j) = rec.args[k] else { continue };
                if j < lo {
                    continue;
                }
                let term = self.local_term(&rec, i, k, &g);
                let slot = &mut adj[(j - lo) as usize];
                *slot = Some(match slot.take() {
                    None => term,
                    Some(acc) => acc + term,
                });
            }
        }
        adj
    }

    /// g · ∂out/∂arg_k, expressed with recorded operations.
    fn local_term(&self, rec: &Record, out_index: u32, k: usize, g: &Scalar) -> Scalar {
        let a = || self.arg_scalar(rec.args[0]);
        let b = || self.arg_scalar(rec.args[1]);
        let out = || self.scalar_at(out_index);
        match (rec.op, k) {
            (Op::Identity | Op::Stop(_) | Op::Add, _) => g.clone(),
            (Op::Sub, 0) => g.clone(),
            (Op::Sub, _) => -g,
            (Op::Mul, 0) => g * b(),
            (Op::Mul, _) => g * a(),
            (Op::Div, 0) => g / b(),
            (Op::Div, _) => -(g * out() / b()),
            (Op::Pow, 0) => {
                let b = b();
                g * &b * a().pow(&(&b - 1.0))
            }
            (Op::Pow, _) => g * out() * a().ln(),
            (Op::Neg, _) => -g,
            (Op::Ln, _) => g / a(),
            (Op::Ln1p, _) => g / (a() + 1.0),
            (Op::Exp, _) => g * out(),
            (Op::Sigmoid, _) => {
                let s = out();
                g * &s * (1.0 - &s)
            }
            (Op::Softplus, _) => g * a().sigmoid(),
            (Op::Lgamma, _) => g * a().digamma(),
            (Op::Polygamma(n), _) => g * a().polygamma(n + 1),
            (Op::Sqrt, _) => g * 0.5 / out(),
            (Op::Tanh, _) => {
                let t = out();
                g * (1.0 - &t * &t)
            }
            (Op::Leaf, _) => unreachable!("leaves have no inputs"),
        }
    }
}

/// Restores the tape's generation when a nested differentiation ends,
/// including by unwinding.
pub(crate) struct DepthGuard(Tape);

impl Drop for DepthGuard {
    fn drop(&mut self) {
        let depth = &self.0 .0.depth;
        depth.set(depth.get() - 1);
    }
}

/// Adjoints from one reverse sweep.
#[derive(Debug, Clone)]
pub struct Gradients {
    tape: Option<Tape>,
    lo: u32,
    adjoints: Vec<f64>,
}

impl Gradients {
    /// ∂output/∂x. Zero for constants and for values not upstream of the output.
    pub fn wrt(&self, x: &Scalar) -> f64 {
        let Some(tape) = &self.tape else { return 0.0 };
        match x.index_on(tape) {
            Some(i) if i >= self.lo => self
                .adjoints
                .get((i - self.lo) as usize)
                .copied()
                .unwrap_or(0.0),
            _ => 0.0,
        }
    }
}
