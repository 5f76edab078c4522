use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::rc::Rc;

use super::tape::{Arg, Op, Record, Tape};
use crate::error::{Error, Result};
use crate::special;

#[derive(Clone)]
pub(crate) struct Node {
    tape: Tape,
    index: u32,
}

impl Node {
    pub(crate) fn new(tape: Tape, index: u32) -> Self {
        Node { tape, index }
    }
}

/// Names of the random variables a value was computed from.
///
/// Tags ride along with every scalar and are merged by every operation, so a
/// distribution's parameters know which random variables fed them.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct Tags(Option<Rc<[Rc<str>]>>);

impl Tags {
    pub fn single(name: Rc<str>) -> Self {
        Tags(Some(Rc::from(vec![name])))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_none()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().flat_map(|names| names.iter().map(|n| &**n))
    }

    pub fn union(&self, other: &Tags) -> Tags {
        match (&self.0, &other.0) {
            (None, _) => other.clone(),
            (_, None) => self.clone(),
            (Some(a), Some(b)) if Rc::ptr_eq(a, b) || a == b => self.clone(),
            (Some(a), Some(b)) if is_subset(b, a) => self.clone(),
            (Some(a), Some(b)) if is_subset(a, b) => other.clone(),
            (Some(a), Some(b)) => {
                let mut merged: Vec<Rc<str>> = Vec::with_capacity(a.len() + b.len());
                let (mut i, mut j) = (0, 0);
                while i < a.len() && j < b.len() {
                    match a[i].cmp(&b[j]) {
                        std::cmp::Ordering::Less => {
                            merged.push(a[i].clone());
                            i += 1;
                        }
                        std::cmp::Ordering::Greater => {
                            merged.push(b[j].clone());
                            j += 1;
                        }
                        std::cmp::Ordering::Equal => {
                            merged.push(a[i].clone());
                            i += 1;
                            j += 1;
                        }
                    }
                }
                merged.extend(a[i..].iter().cloned());
                merged.extend(b[j..].iter().cloned());
                Tags(Some(Rc::from(merged)))
            }
        }
    }
}

/// Both sorted.
fn is_subset(small: &[Rc<str>], big: &[Rc<str>]) -> bool {
    if small.len() > big.len() {
        return false;
    }
    let mut j = 0;
    for x in small {
        while j < big.len() && big[j] < *x {
            j += 1;
        }
        if j == big.len() || big[j] != *x {
            return false;
        }
        j += 1;
    }
    true
}

impl fmt::Debug for Tags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// A 64-bit real that remembers how it was computed.
///
/// Constants carry no tape node and have zero derivative with respect to
/// everything. Scalars are cheap to clone (two reference counts).
#[derive(Clone)]
pub struct Scalar {
    value: f64,
    node: Option<Node>,
    tags: Tags,
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("Scalar");
        s.field("value", &self.value);
        if let Some(node) = &self.node {
            s.field("node", &node.index);
        }
        if !self.tags.is_empty() {
            s.field("tags", &self.tags);
        }
        s.finish()
    }
}

impl From<f64> for Scalar {
    fn from(v: f64) -> Self {
        Scalar::constant(v)
    }
}

impl Scalar {
    pub fn constant(value: f64) -> Self {
        Scalar {
            value,
            node: None,
            tags: Tags::default(),
        }
    }

    pub(crate) fn from_node(value: f64, node: Node) -> Self {
        Scalar {
            value,
            node: Some(node),
            tags: Tags::default(),
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn is_constant(&self) -> bool {
        self.node.is_none()
    }

    pub fn tape(&self) -> Option<&Tape> {
        self.node.as_ref().map(|n| &n.tape)
    }

    pub fn tags(&self) -> &Tags {
        &self.tags
    }

    /// Same value and tape node, provenance replaced by `tags`.
    pub fn with_tags(mut self, tags: Tags) -> Self {
        self.tags = tags;
        self
    }

    /// Drops the tape node; keeps value and provenance.
    pub fn detach(&self) -> Scalar {
        Scalar {
            value: self.value,
            node: None,
            tags: self.tags.clone(),
        }
    }

    /// Identity in value; invisible to the reverse sweep of the
    /// differentiation level it is created in, transparent to outer levels.
    pub fn stop_gradient(&self) -> Scalar {
        match &self.node {
            None => self.clone(),
            Some(n) => {
                let level = n.tape.generation();
                self.unary_raw(Op::Stop(level), self.value, 1.0)
            }
        }
    }

    /// A fresh record equal to `self`; the inputs of a nested gradient.
    pub(crate) fn identity(&self) -> Scalar {
        self.unary_raw(Op::Identity, self.value, 1.0)
    }

    pub(crate) fn index_on(&self, tape: &Tape) -> Option<u32> {
        match &self.node {
            Some(n) if n.tape.ptr_eq(tape) => Some(n.index),
            Some(_) => panic!("scalar belongs to a different tape"),
            None => None,
        }
    }

    pub(crate) fn index(&self) -> Option<u32> {
        self.node.as_ref().map(|n| n.index)
    }

    fn arg(&self) -> Arg {
        match &self.node {
            Some(n) => Arg::Node(n.index),
            None => Arg::Const(self.value),
        }
    }

    /// Record `op(self)` on the tape with local partial `d`.
    fn unary_raw(&self, op: Op, value: f64, d: f64) -> Scalar {
        match &self.node {
            None => Scalar {
                value,
                node: None,
                tags: self.tags.clone(),
            },
            Some(n) => {
                let index = n.tape.push(Record {
                    value,
                    op,
                    args: [self.arg(), Arg::None],
                    partials: [d, 0.0],
                });
                Scalar {
                    value,
                    node: Some(Node::new(n.tape.clone(), index)),
                    tags: self.tags.clone(),
                }
            }
        }
    }

    fn binary_raw(a: &Scalar, b: &Scalar, op: Op, value: f64, da: f64, db: f64) -> Scalar {
        let tags = a.tags.union(&b.tags);
        let tape = match (&a.node, &b.node) {
            (None, None) => {
                return Scalar {
                    value,
                    node: None,
                    tags,
                }
            }
            (Some(n), None) | (None, Some(n)) => &n.tape,
            (Some(x), Some(y)) => {
                assert!(
                    x.tape.ptr_eq(&y.tape),
                    "operands were recorded on different tapes"
                );
                &x.tape
            }
        };
        let index = tape.push(Record {
            value,
            op,
            args: [a.arg(), b.arg()],
            partials: [da, db],
        });
        Scalar {
            value,
            node: Some(Node::new(tape.clone(), index)),
            tags,
        }
    }

    fn fault(&self, op: &'static str) {
        if let Some(n) = &self.node {
            n.tape.set_fault(op, self.value);
        }
    }

    fn fault_of(a: &Scalar, b: &Scalar, op: &'static str, arg: f64) {
        if let Some(n) = a.node.as_ref().or(b.node.as_ref()) {
            n.tape.set_fault(op, arg);
        }
    }

    fn add_impl(a: &Scalar, b: &Scalar) -> Scalar {
        Self::binary_raw(a, b, Op::Add, a.value + b.value, 1.0, 1.0)
    }

    fn sub_impl(a: &Scalar, b: &Scalar) -> Scalar {
        Self::binary_raw(a, b, Op::Sub, a.value - b.value, 1.0, -1.0)
    }

    fn mul_impl(a: &Scalar, b: &Scalar) -> Scalar {
        Self::binary_raw(a, b, Op::Mul, a.value * b.value, b.value, a.value)
    }

    fn div_impl(a: &Scalar, b: &Scalar) -> Scalar {
        if b.value == 0.0 {
            Self::fault_of(a, b, "div", b.value);
        }
        let v = a.value / b.value;
        Self::binary_raw(a, b, Op::Div, v, 1.0 / b.value, -v / b.value)
    }

    pub fn pow(&self, exponent: &Scalar) -> Scalar {
        let v = self.value.powf(exponent.value);
        let da = exponent.value * self.value.powf(exponent.value - 1.0);
        let db = if exponent.node.is_some() {
            if self.value <= 0.0 {
                Self::fault_of(self, exponent, "pow", self.value);
            }
            v * self.value.ln()
        } else {
            0.0
        };
        if v.is_nan() && !self.value.is_nan() && !exponent.value.is_nan() {
            Self::fault_of(self, exponent, "pow", self.value);
        }
        Self::binary_raw(self, exponent, Op::Pow, v, da, db)
    }

    pub fn powf(&self, exponent: f64) -> Scalar {
        self.pow(&Scalar::constant(exponent))
    }

    pub fn powi(&self, exponent: i32) -> Scalar {
        self.pow(&Scalar::constant(exponent as f64))
    }

    pub fn ln(&self) -> Scalar {
        if self.value.is_nan() || self.value <= 0.0 {
            self.fault("ln");
        }
        self.unary_raw(Op::Ln, self.value.ln(), 1.0 / self.value)
    }

    pub fn ln_1p(&self) -> Scalar {
        if self.value.is_nan() || self.value <= -1.0 {
            self.fault("ln_1p");
        }
        self.unary_raw(Op::Ln1p, self.value.ln_1p(), 1.0 / (1.0 + self.value))
    }

    pub fn exp(&self) -> Scalar {
        let v = self.value.exp();
        self.unary_raw(Op::Exp, v, v)
    }

    pub fn sigmoid(&self) -> Scalar {
        let s = special::sigmoid(self.value);
        self.unary_raw(Op::Sigmoid, s, s * (1.0 - s))
    }

    /// ln(1 + eˣ)
    pub fn softplus(&self) -> Scalar {
        let v = special::softplus(self.value);
        self.unary_raw(Op::Softplus, v, special::sigmoid(self.value))
    }

    pub fn lgamma(&self) -> Scalar {
        if self.value.is_nan() || self.value <= 0.0 {
            self.fault("lgamma");
        }
        self.unary_raw(
            Op::Lgamma,
            special::lgamma(self.value),
            special::digamma(self.value),
        )
    }

    pub fn digamma(&self) -> Scalar {
        self.polygamma(0)
    }

    pub fn polygamma(&self, n: u32) -> Scalar {
        if self.value.is_nan() || self.value <= 0.0 {
            self.fault("polygamma");
        }
        self.unary_raw(
            Op::Polygamma(n),
            special::polygamma(n, self.value),
            special::polygamma(n + 1, self.value),
        )
    }

    pub fn sqrt(&self) -> Scalar {
        if self.value.is_nan() || self.value <= 0.0 {
            self.fault("sqrt");
        }
        let v = self.value.sqrt();
        self.unary_raw(Op::Sqrt, v, 0.5 / v)
    }

    pub fn tanh(&self) -> Scalar {
        let v = self.value.tanh();
        self.unary_raw(Op::Tanh, v, 1.0 - v * v)
    }

    pub fn square(&self) -> Scalar {
        self * self
    }

    /// ln Σ exp(xᵢ), shifted by the (detached) maximum for stability.
    pub fn log_sum_exp(xs: &[Scalar]) -> Scalar {
        let m = xs
            .iter()
            .map(Scalar::value)
            .fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return Scalar::constant(m);
        }
        let total: Scalar = xs.iter().map(|x| (x - m).exp()).sum();
        total.ln() + m
    }

    fn checked(self, op: &'static str, arg: f64) -> Result<Scalar> {
        if self.value.is_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite { op, arg })
        }
    }

    pub fn try_ln(&self) -> Result<Scalar> {
        if self.value <= 0.0 || self.value.is_nan() {
            return Err(Error::NonFinite {
                op: "ln",
                arg: self.value,
            });
        }
        self.ln().checked("ln", self.value)
    }

    pub fn try_sqrt(&self) -> Result<Scalar> {
        if self.value <= 0.0 || self.value.is_nan() {
            return Err(Error::NonFinite {
                op: "sqrt",
                arg: self.value,
            });
        }
        self.sqrt().checked("sqrt", self.value)
    }

    pub fn try_lgamma(&self) -> Result<Scalar> {
        if self.value <= 0.0 || self.value.is_nan() {
            return Err(Error::NonFinite {
                op: "lgamma",
                arg: self.value,
            });
        }
        self.lgamma().checked("lgamma", self.value)
    }

    pub fn try_div(&self, rhs: &Scalar) -> Result<Scalar> {
        if rhs.value == 0.0 {
            return Err(Error::NonFinite {
                op: "div",
                arg: rhs.value,
            });
        }
        Ok(self / rhs)
    }
}

macro_rules! binary_ops {
    ($Trait:ident, $method:ident, $imp:ident) => {
        impl $Trait<&Scalar> for &Scalar {
            type Output = Scalar;
            fn $method(self, rhs: &Scalar) -> Scalar {
                Scalar::$imp(self, rhs)
            }
        }
        impl $Trait<Scalar> for Scalar {
            type Output = Scalar;
            fn $method(self, rhs: Scalar) -> Scalar {
                Scalar::$imp(&self, &rhs)
            }
        }
        impl $Trait<&Scalar> for Scalar {
            type Output = Scalar;
            fn $method(self, rhs: &Scalar) -> Scalar {
                Scalar::$imp(&self, rhs)
            }
        }
        impl $Trait<Scalar> for &Scalar {
            type Output = Scalar;
            fn $method(self, rhs: Scalar) -> Scalar {
                Scalar::$imp(self, &rhs)
            }
        }
        impl $Trait<f64> for Scalar {
            type Output = Scalar;
            fn $method(self, rhs: f64) -> Scalar {
                Scalar::$imp(&self, &Scalar::constant(rhs))
            }
        }
        impl $Trait<f64> for &Scalar {
            type Output = Scalar;
            fn $method(self, rhs: f64) -> Scalar {
                Scalar::$imp(self, &Scalar::constant(rhs))
            }
        }
        impl $Trait<Scalar> for f64 {
            type Output = Scalar;
            fn $method(self, rhs: Scalar) -> Scalar {
                Scalar::$imp(&Scalar::constant(self), &rhs)
            }
        }
        impl $Trait<&Scalar> for f64 {
            type Output = Scalar;
            fn $method(self, rhs: &Scalar) -> Scalar {
                Scalar::$imp(&Scalar::constant(self), rhs)
            }
        }
    };
}

binary_ops!(Add, add, add_impl);
binary_ops!(Sub, sub, sub_impl);
binary_ops!(Mul, mul, mul_impl);
binary_ops!(Div, div, div_impl);

impl Neg for &Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        self.unary_raw(Op::Neg, -self.value, -1.0)
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        -&self
    }
}

impl AddAssign<&Scalar> for Scalar {
    fn add_assign(&mut self, rhs: &Scalar) {
        *self = Scalar::add_impl(self, rhs);
    }
}

impl AddAssign<Scalar> for Scalar {
    fn add_assign(&mut self, rhs: Scalar) {
        *self = Scalar::add_impl(self, &rhs);
    }
}

impl SubAssign<&Scalar> for Scalar {
    fn sub_assign(&mut self, rhs: &Scalar) {
        *self = Scalar::sub_impl(self, rhs);
    }
}

impl MulAssign<&Scalar> for Scalar {
    fn mul_assign(&mut self, rhs: &Scalar) {
        *self = Scalar::mul_impl(self, rhs);
    }
}

/// Left fold starting from the first element; the empty sum is constant 0.
impl Sum for Scalar {
    fn sum<I: Iterator<Item = Scalar>>(mut iter: I) -> Scalar {
        match iter.next() {
            None => Scalar::constant(0.0),
            Some(first) => iter.fold(first, |acc, x| Scalar::add_impl(&acc, &x)),
        }
    }
}

impl<'a> Sum<&'a Scalar> for Scalar {
    fn sum<I: Iterator<Item = &'a Scalar>>(iter: I) -> Scalar {
        iter.cloned().sum()
    }
}
