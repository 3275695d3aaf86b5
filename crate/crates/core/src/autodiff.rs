//! Reverse-mode automatic differentiation on a scalar tape.
//!
//! Nodes are appended to an arena in creation order, so parents always have
//! smaller indices than their children. A backward pass can either produce
//! plain `f64` adjoints ([`Tape::gradient`]) or record the adjoint
//! computation onto the same tape ([`Tape::gradient_recorded`]); recorded
//! adjoints are ordinary nodes and can be differentiated again, which is how
//! input-gradient penalties get their parameter gradients.
//!
//! Non-finite values poison the tape: the first offending op is remembered
//! and every later query returns [`Error::NonFiniteValue`].

use std::cell::{Cell, RefCell};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Overflow-safe softplus `(1/τ) ln(1 + e^{τz})`.
pub fn softplus(z: f64, tau: f64) -> f64 {
    let t = tau * z;
    (t.max(0.0) + (-t.abs()).exp().ln_1p()) / tau
}

/// Logistic `1 / (1 + e^{-τz})`, the derivative of [`softplus`].
pub fn logistic(z: f64, tau: f64) -> f64 {
    let t = tau * z;
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// ReLU derivative with the one-sided convention `ReLU'(0) = 0`.
pub fn relu_step(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    Input,
    Const,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    AddConst(usize),
    MulConst(usize, f64),
    Relu(usize),
    Softplus(usize, f64),
    Logistic(usize, f64),
    Exp(usize),
    Ln(usize),
    Sqrt(usize),
    Sin(usize),
    Cos(usize),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Const => "const",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Neg(..) => "neg",
            Op::AddConst(..) => "add_const",
            Op::MulConst(..) => "mul_const",
            Op::Relu(..) => "relu",
            Op::Softplus(..) => "softplus",
            Op::Logistic(..) => "logistic",
            Op::Exp(..) => "exp",
            Op::Ln(..) => "ln",
            Op::Sqrt(..) => "sqrt",
            Op::Sin(..) => "sin",
            Op::Cos(..) => "cos",
        }
    }

    fn parents(&self) -> (Option<usize>, Option<usize>) {
        match *self {
            Op::Input | Op::Const => (None, None),
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => (Some(a), Some(b)),
            Op::Neg(a)
            | Op::AddConst(a)
            | Op::MulConst(a, _)
            | Op::Relu(a)
            | Op::Softplus(a, _)
            | Op::Logistic(a, _)
            | Op::Exp(a)
            | Op::Ln(a)
            | Op::Sqrt(a)
            | Op::Sin(a)
            | Op::Cos(a) => (Some(a), None),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Node {
    pub value: f64,
    pub op: Op,
}

/// Position on the tape, used to discard nodes appended after it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Checkpoint(usize);

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    poisoned: Cell<Option<&'static str>>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("len", &self.len()).finish()
    }
}

#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}({})", self.idx, self.value())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint(self.len())
    }

    /// Drops every node created after `mark`. Vars created after the mark
    /// must not be used afterwards.
    pub fn rewind(&self, mark: Checkpoint) {
        self.nodes.borrow_mut().truncate(mark.0);
    }

    /// Returns the first non-finite op, if any.
    pub fn check(&self) -> Result<()> {
        match self.poisoned.get() {
            Some(op) => Err(Error::NonFiniteValue { op }),
            None => Ok(()),
        }
    }

    fn push(&self, value: f64, op: Op) -> usize {
        if !value.is_finite() && self.poisoned.get().is_none() {
            self.poisoned.set(Some(op.name()));
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        nodes.len() - 1
    }

    pub fn var(&self, value: f64) -> Var<'_> {
        Var {
            tape: self,
            idx: self.push(value, Op::Input),
        }
    }

    pub fn vars(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    pub fn constant(&self, value: f64) -> Var<'_> {
        Var {
            tape: self,
            idx: self.push(value, Op::Const),
        }
    }

    pub fn node(&self, v: Var<'_>) -> Node {
        self.nodes.borrow()[v.idx]
    }

    /// Sum of a slice of vars; a constant zero when empty.
    pub fn sum<'t>(&'t self, xs: &[Var<'t>]) -> Var<'t> {
        let mut it = xs.iter();
        match it.next() {
            None => self.constant(0.0),
            Some(&first) => it.fold(first, |acc, &x| acc + x),
        }
    }

    fn wrap(&self, idx: usize) -> Var<'_> {
        Var { tape: self, idx }
    }

    fn validate(&self, output: Var<'_>) -> Result<()> {
        if !std::ptr::eq(output.tape, self) {
            return Err(Error::InternalGraph("output belongs to another tape".into()));
        }
        self.check()
    }

    /// Adjoints of `output` with respect to each var in `wrt`, as plain numbers.
    /// Vars that `output` does not depend on get 0.
    pub fn gradient(&self, output: Var<'_>, wrt: &[Var<'_>]) -> Result<Vec<f64>> {
        self.validate(output)?;
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0; output.idx + 1];
        adj[output.idx] = 1.0;
        for i in (0..=output.idx).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            let node = nodes[i];
            let (p, q) = node.op.parents();
            if p.is_some_and(|p| p >= i) || q.is_some_and(|q| q >= i) {
                return Err(Error::InternalGraph(format!("node {i} has a non-topological parent")));
            }
            let val = |j: usize| nodes[j].value;
            match node.op {
                Op::Input | Op::Const => {}
                Op::Add(a, b) => {
                    adj[a] += g;
                    adj[b] += g;
                }
                Op::Sub(a, b) => {
                    adj[a] += g;
                    adj[b] -= g;
                }
                Op::Mul(a, b) => {
                    adj[a] += g * val(b);
                    adj[b] += g * val(a);
                }
                Op::Div(a, b) => {
                    adj[a] += g / val(b);
                    adj[b] -= g * node.value / val(b);
                }
                Op::Neg(a) => adj[a] -= g,
                Op::AddConst(a) => adj[a] += g,
                Op::MulConst(a, c) => adj[a] += g * c,
                Op::Relu(a) => adj[a] += g * relu_step(val(a)),
                Op::Softplus(a, tau) => adj[a] += g * logistic(val(a), tau),
                Op::Logistic(a, tau) => adj[a] += g * tau * node.value * (1.0 - node.value),
                Op::Exp(a) => adj[a] += g * node.value,
                Op::Ln(a) => adj[a] += g / val(a),
                Op::Sqrt(a) => adj[a] += g * 0.5 / node.value,
                Op::Sin(a) => adj[a] += g * val(a).cos(),
                Op::Cos(a) => adj[a] -= g * val(a).sin(),
            }
        }
        Ok(wrt
            .iter()
            .map(|w| if w.idx <= output.idx { adj[w.idx] } else { 0.0 })
            .collect())
    }

    /// Like [`Tape::gradient`], but the adjoint computation is appended to the
    /// tape so the returned adjoints can themselves be differentiated.
    pub fn gradient_recorded<'t>(&'t self, output: Var<'t>, wrt: &[Var<'t>]) -> Result<Vec<Var<'t>>> {
        self.validate(output)?;
        let mut adj: Vec<Option<Var<'t>>> = vec![None; output.idx + 1];
        adj[output.idx] = Some(self.constant(1.0));

        fn acc<'t>(slot: &mut Option<Var<'t>>, v: Var<'t>) {
            *slot = Some(match *slot {
                None => v,
                Some(prev) => prev + v,
            });
        }

        for i in (0..=output.idx).rev() {
            let Some(g) = adj[i] else { continue };
            let node = self.nodes.borrow()[i];
            let (p, q) = node.op.parents();
            if p.is_some_and(|p| p >= i) || q.is_some_and(|q| q >= i) {
                return Err(Error::InternalGraph(format!("node {i} has a non-topological parent")));
            }
            let out = self.wrap(i);
            match node.op {
                Op::Input | Op::Const => {}
                Op::Add(a, b) => {
                    acc(&mut adj[a], g);
                    acc(&mut adj[b], g);
                }
                Op::Sub(a, b) => {
                    acc(&mut adj[a], g);
                    acc(&mut adj[b], -g);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.wrap(a), self.wrap(b));
                    acc(&mut adj[a], g * vb);
                    acc(&mut adj[b], g * va);
                }
                Op::Div(a, b) => {
                    let vb = self.wrap(b);
                    acc(&mut adj[a], g / vb);
                    acc(&mut adj[b], -(g * out / vb));
                }
                Op::Neg(a) => acc(&mut adj[a], -g),
                Op::AddConst(a) => acc(&mut adj[a], g),
                Op::MulConst(a, c) => acc(&mut adj[a], g * c),
                Op::Relu(a) => {
                    // the step function has zero derivative almost everywhere
                    let step = relu_step(self.wrap(a).value());
                    acc(&mut adj[a], g * step);
                }
                Op::Softplus(a, tau) => acc(&mut adj[a], g * self.wrap(a).logistic(tau)),
                Op::Logistic(a, tau) => {
                    let d = out * (1.0 - out) * tau;
                    acc(&mut adj[a], g * d);
                }
                Op::Exp(a) => acc(&mut adj[a], g * out),
                Op::Ln(a) => acc(&mut adj[a], g / self.wrap(a)),
                Op::Sqrt(a) => acc(&mut adj[a], g / out * 0.5),
                Op::Sin(a) => acc(&mut adj[a], g * self.wrap(a).cos()),
                Op::Cos(a) => acc(&mut adj[a], -(g * self.wrap(a).sin())),
            }
        }
        self.check()?;
        Ok(wrt
            .iter()
            .map(|w| {
                if w.idx <= output.idx {
                    adj[w.idx].unwrap_or_else(|| self.constant(0.0))
                } else {
                    self.constant(0.0)
                }
            })
            .collect())
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> f64 {
        self.tape.nodes.borrow()[self.idx].value
    }

    pub fn index(&self) -> usize {
        self.idx
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    fn unary(self, value: f64, op: Op) -> Var<'t> {
        Var {
            tape: self.tape,
            idx: self.tape.push(value, op),
        }
    }

    pub fn relu(self) -> Var<'t> {
        let v = self.value();
        self.unary(v.max(0.0), Op::Relu(self.idx))
    }

    pub fn softplus(self, tau: f64) -> Var<'t> {
        let v = self.value();
        self.unary(softplus(v, tau), Op::Softplus(self.idx, tau))
    }

    pub fn logistic(self, tau: f64) -> Var<'t> {
        let v = self.value();
        self.unary(logistic(v, tau), Op::Logistic(self.idx, tau))
    }

    pub fn exp(self) -> Var<'t> {
        let v = self.value();
        self.unary(v.exp(), Op::Exp(self.idx))
    }

    pub fn ln(self) -> Var<'t> {
        let v = self.value();
        self.unary(v.ln(), Op::Ln(self.idx))
    }

    pub fn sqrt(self) -> Var<'t> {
        let v = self.value();
        self.unary(v.sqrt(), Op::Sqrt(self.idx))
    }

    pub fn sin(self) -> Var<'t> {
        let v = self.value();
        self.unary(v.sin(), Op::Sin(self.idx))
    }

    pub fn cos(self) -> Var<'t> {
        let v = self.value();
        self.unary(v.cos(), Op::Cos(self.idx))
    }

    pub fn square(self) -> Var<'t> {
        self * self
    }
}

fn same_tape(a: &Var<'_>, b: &Var<'_>) {
    debug_assert!(std::ptr::eq(a.tape, b.tape), "vars from different tapes");
}

macro_rules! binary_op {
    ($trait:ident, $method:ident, $variant:ident, $f:expr) => {
        impl<'t> $trait for Var<'t> {
            type Output = Var<'t>;
            fn $method(self, rhs: Var<'t>) -> Var<'t> {
                same_tape(&self, &rhs);
                let f: fn(f64, f64) -> f64 = $f;
                let v = f(self.value(), rhs.value());
                self.unary(v, Op::$variant(self.idx, rhs.idx))
            }
        }
    };
}

binary_op!(Add, add, Add, |a, b| a + b);
binary_op!(Sub, sub, Sub, |a, b| a - b);
binary_op!(Mul, mul, Mul, |a, b| a * b);
binary_op!(Div, div, Div, |a, b| a / b);

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        let v = -self.value();
        self.unary(v, Op::Neg(self.idx))
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Var<'t> {
        let v = self.value() + rhs;
        self.unary(v, Op::AddConst(self.idx))
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Var<'t> {
        self + (-rhs)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Var<'t> {
        let v = self.value() * rhs;
        self.unary(v, Op::MulConst(self.idx, rhs))
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: f64) -> Var<'t> {
        self * (1.0 / rhs)
    }
}

impl<'t> Add<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        rhs + self
    }
}

impl<'t> Sub<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        (-rhs) + self
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        rhs * self
    }
}

/// A computation that can be replayed onto a tape.
pub trait Recorded {
    fn arity(&self) -> usize;
    fn record<'t>(&self, tape: &'t Tape, inputs: &[Var<'t>]) -> Var<'t>;
}

pub struct Func<F> {
    arity: usize,
    f: F,
}

/// Wraps a closure as a [`Recorded`] computation of fixed arity.
pub fn func<F>(arity: usize, f: F) -> Func<F>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    Func { arity, f }
}

impl<F> Recorded for Func<F>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    fn arity(&self) -> usize {
        self.arity
    }

    fn record<'t>(&self, tape: &'t Tape, inputs: &[Var<'t>]) -> Var<'t> {
        (self.f)(tape, inputs)
    }
}

/// Forward value of `expr` at `inputs` on a fresh tape.
pub fn evaluate(expr: &impl Recorded, inputs: &[f64]) -> Result<f64> {
    if inputs.len() != expr.arity() {
        return Err(Error::ArityMismatch {
            expected: expr.arity(),
            got: inputs.len(),
        });
    }
    if inputs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue { op: "input" });
    }
    let tape = Tape::new();
    let xs = tape.vars(inputs);
    let out = expr.record(&tape, &xs);
    tape.check()?;
    Ok(out.value())
}

/// Value and gradient of `expr` at `inputs` on a fresh tape.
pub fn value_and_gradient(expr: &impl Recorded, inputs: &[f64]) -> Result<(f64, Vec<f64>)> {
    if inputs.len() != expr.arity() {
        return Err(Error::ArityMismatch {
            expected: expr.arity(),
            got: inputs.len(),
        });
    }
    let tape = Tape::new();
    let xs = tape.vars(inputs);
    let out = expr.record(&tape, &xs);
    let g = tape.gradient(out, &xs)?;
    Ok((out.value(), g))
}

/// Maximum over coordinates of `|AD - CD| / (|CD| + 1e-12)`, where CD is the
/// central difference with step `h`. Any evaluation failure yields `inf`.
pub fn check_gradient(expr: &impl Recorded, params: &[f64], h: f64) -> f64 {
    let ad = match value_and_gradient(expr, params) {
        Ok((_, g)) => g,
        Err(_) => return f64::INFINITY,
    };
    let mut p = params.to_vec();
    let mut worst: f64 = 0.0;
    for j in 0..params.len() {
        p[j] = params[j] + h;
        let fp = evaluate(expr, &p);
        p[j] = params[j] - h;
        let fm = evaluate(expr, &p);
        p[j] = params[j];
        let (Ok(fp), Ok(fm)) = (fp, fm) else {
            return f64::INFINITY;
        };
        let cd = (fp - fm) / (2.0 * h);
        let rel = (ad[j] - cd).abs() / (cd.abs() + 1e-12);
        if !rel.is_finite() {
            return f64::INFINITY;
        }
        worst = worst.max(rel);
    }
    worst
}

/// A model whose forward pass can be recorded with parameters and inputs as
/// tape variables.
pub trait TapeModel {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    /// Axis-aligned box every input coordinate must lie in.
    fn domain(&self) -> (f64, f64);
    fn record<'t>(&self, tape: &'t Tape, params: &[Var<'t>], x: &[Var<'t>]) -> Vec<Var<'t>>;
}

/// Recorded outputs `φ_k(x)` and input gradients `∇_x φ_k(x)`.
pub struct InputGradient<'t> {
    pub outputs: Vec<Var<'t>>,
    pub grads: Vec<Vec<Var<'t>>>,
}

/// Records `φ(x; θ)` and `∇_x φ_k(x; θ)` for every output channel. The
/// gradients are tape nodes, so functions of them remain differentiable with
/// respect to `params`.
pub fn input_gradient<'t, M: TapeModel + ?Sized>(
    tape: &'t Tape,
    model: &M,
    params: &[Var<'t>],
    x: &[f64],
) -> Result<InputGradient<'t>> {
    if x.len() != model.input_dim() {
        return Err(Error::Domain(format!(
            "input has dimension {}, model expects {}",
            x.len(),
            model.input_dim()
        )));
    }
    let (lo, hi) = model.domain();
    if let Some(v) = x.iter().find(|v| !(lo..=hi).contains(*v)) {
        return Err(Error::Domain(format!("coordinate {v} outside [{lo}, {hi}]")));
    }
    let xv = tape.vars(x);
    let outputs = model.record(tape, params, &xv);
    let grads = outputs
        .iter()
        .map(|&o| tape.gradient_recorded(o, &xv))
        .collect::<Result<Vec<_>>>()?;
    Ok(InputGradient { outputs, grads })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_value_and_derivative() {
        let f = func(1, |_, x| x[0] * x[0]);
        assert_eq!(evaluate(&f, &[3.0]).unwrap(), 9.0);
        let (_, g) = value_and_gradient(&f, &[3.0]).unwrap();
        assert_eq!(g, vec![6.0]);
    }

    #[test]
    fn softplus_and_relu_conventions() {
        let sp = func(1, |_, x| x[0].softplus(1.0));
        assert!((evaluate(&sp, &[0.0]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        let (_, g) = value_and_gradient(&sp, &[0.0]).unwrap();
        assert!((g[0] - 0.5).abs() < 1e-15);

        let r = func(1, |_, x| x[0].relu());
        assert_eq!(evaluate(&r, &[-2.0]).unwrap(), 0.0);
        assert_eq!(value_and_gradient(&r, &[-1.0]).unwrap().1, vec![0.0]);
        assert_eq!(value_and_gradient(&r, &[0.0]).unwrap().1, vec![0.0]);
    }

    #[test]
    fn softplus_is_overflow_safe() {
        assert_eq!(softplus(1000.0, 1.0), 1000.0);
        assert!(softplus(-1000.0, 1.0) >= 0.0);
        assert_eq!(logistic(-1000.0, 1.0), 0.0);
        assert_eq!(logistic(1000.0, 1.0), 1.0);
    }

    #[test]
    fn non_finite_is_reported_with_op_name() {
        let f = func(1, |_, x| x[0].ln());
        match evaluate(&f, &[-1.0]) {
            Err(Error::NonFiniteValue { op }) => assert_eq!(op, "ln"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(evaluate(&f, &[f64::NAN]), Err(Error::NonFiniteValue { .. })));
    }

    #[test]
    fn arity_is_checked() {
        let f = func(2, |_, x| x[0] + x[1]);
        assert!(matches!(evaluate(&f, &[1.0]), Err(Error::ArityMismatch { .. })));
    }

    #[test]
    fn unreachable_inputs_get_zero_adjoint() {
        let tape = Tape::new();
        let x = tape.var(2.0);
        let y = tape.var(5.0);
        let out = x * x;
        assert_eq!(tape.gradient(out, &[x, y]).unwrap(), vec![4.0, 0.0]);
        let late = tape.var(1.0);
        assert_eq!(tape.gradient(out, &[late]).unwrap(), vec![0.0]);
    }

    #[test]
    fn quadratic_gradient_check_is_exact() {
        let f = func(3, |_, x| x[0] * x[0] * 3.0 + x[0] * x[1] - x[2] * x[2] * 0.5 + x[1]);
        assert!(check_gradient(&f, &[0.3, -1.2, 2.0], 1e-4) <= 1e-9);
    }

    #[test]
    fn nested_pass_gives_second_derivative() {
        // d/dx (d/dx x^3) = 6x
        let tape = Tape::new();
        let x = tape.var(1.5);
        let y = x * x * x;
        let dy = tape.gradient_recorded(y, &[x]).unwrap()[0];
        assert!((dy.value() - 3.0 * 1.5 * 1.5).abs() < 1e-12);
        let d2 = tape.gradient(dy, &[x]).unwrap()[0];
        assert!((d2 - 9.0).abs() < 1e-12);
    }

    #[test]
    fn recorded_pass_only_appends() {
        let tape = Tape::new();
        let x = tape.var(0.7);
        let y = (x.sin() * x).exp();
        let before: Vec<f64> = (0..tape.len()).map(|i| tape.nodes.borrow()[i].value).collect();
        let _ = tape.gradient_recorded(y, &[x]).unwrap();
        let after: Vec<f64> = (0..before.len()).map(|i| tape.nodes.borrow()[i].value).collect();
        assert_eq!(before, after);
        assert!(tape.len() > before.len());
    }

    #[test]
    fn checkpoint_rewind() {
        let tape = Tape::new();
        let x = tape.var(1.0);
        let mark = tape.checkpoint();
        let _ = x.exp() + x;
        tape.rewind(mark);
        assert_eq!(tape.len(), 1);
    }

    #[test]
    fn recorded_and_plain_adjoints_agree() {
        let tape = Tape::new();
        let xs = tape.vars(&[0.3, -0.8, 1.7]);
        let y = (xs[0] * xs[1]).softplus(2.5) + (xs[2] / (xs[0] + 2.0)).sqrt() - xs[1].cos().ln();
        let plain = tape.gradient(y, &xs).unwrap();
        let rec = tape.gradient_recorded(y, &xs).unwrap();
        for (p, r) in plain.iter().zip(rec) {
            assert!((p - r.value()).abs() < 1e-14);
        }
    }
}
