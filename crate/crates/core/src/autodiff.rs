//! Tape-based reverse-mode automatic differentiation over scalars.
//!
//! Operations on [`Var`] are recorded on a [`Tape`] in evaluation order, so
//! every node's parents have smaller indices than the node itself. A single
//! reverse sweep over the node store therefore visits the graph in reverse
//! topological order and touches every node exactly once.
//!
//! Values that do not depend on any input are carried as untaped constants
//! (`Var::constant`), which keeps the tape small when most operands are fixed
//! model data.
//!
//! ```
//! use probfuse::autodiff::Tape;
//!
//! let tape = Tape::new();
//! let x = tape.var(3.0);
//! let y = x * x;
//! let grads = tape.gradient(y).unwrap();
//! assert_eq!(y.value(), 9.0);
//! assert_eq!(grads.wrt(x), 6.0);
//! ```

use std::cell::{Cell, RefCell};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Denominator guard used by [`grad_check`].
pub const REL_ERROR_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum AdError {
    #[error("logarithm of non-positive value {0}")]
    LogDomain(f64),
    #[error("square root of non-positive value {0}")]
    SqrtDomain(f64),
    #[error("division by zero (numerator {0})")]
    DivisionByZero(f64),
    #[error("non-finite operand {0}")]
    NonFinite(f64),
    #[error("root does not belong to this tape")]
    ForeignRoot,
}

/// One recorded node: its value and up to two (parent, local partial) pairs.
#[derive(Debug, Clone, Copy)]
pub struct DiffNode {
    pub value: f64,
    arity: u8,
    parents: [u32; 2],
    partials: [f64; 2],
}

impl DiffNode {
    pub fn parents(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.arity as usize).map(move |k| (self.parents[k] as usize, self.partials[k]))
    }
}

/// Ordered node store. Single writer while recording.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<DiffNode>>,
    error: Cell<Option<AdError>>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("len", &self.len()).finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self { nodes: RefCell::new(Vec::with_capacity(n)), error: Cell::new(None) }
    }

    /// Declares an input variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        if !value.is_finite() {
            self.flag(AdError::NonFinite(value));
        }
        let idx = self.push(DiffNode { value, arity: 0, parents: [0; 2], partials: [0.0; 2] });
        Var { tape: Some(self), idx, val: value }
    }

    pub fn vars(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, v: Var<'_>) -> Option<DiffNode> {
        v.tape.map(|_| self.nodes.borrow()[v.idx as usize])
    }

    /// First domain error recorded while building the graph, if any.
    pub fn error(&self) -> Option<AdError> {
        self.error.get()
    }

    fn flag(&self, e: AdError) {
        if self.error.get().is_none() {
            self.error.set(Some(e));
        }
    }

    fn push(&self, node: DiffNode) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len() as u32;
        nodes.push(node);
        idx
    }

    fn unary(&self, value: f64, a: u32, da: f64) -> u32 {
        self.push(DiffNode { value, arity: 1, parents: [a, 0], partials: [da, 0.0] })
    }

    fn binary(&self, value: f64, a: u32, da: f64, b: u32, db: f64) -> u32 {
        self.push(DiffNode { value, arity: 2, parents: [a, b], partials: [da, db] })
    }

    /// Reverse sweep from `root`. Fails if any domain error was recorded.
    pub fn gradient(&self, root: Var<'_>) -> Result<Gradients, AdError> {
        if let Some(e) = self.error.get() {
            return Err(e);
        }
        let nodes = self.nodes.borrow();
        let mut adjoints = vec![0.0; nodes.len()];
        let Some(t) = root.tape else {
            // constant root: every gradient is zero
            return Ok(Gradients { adjoints });
        };
        if !std::ptr::eq(t, self) {
            return Err(AdError::ForeignRoot);
        }
        adjoints[root.idx as usize] = 1.0;
        for i in (0..=root.idx as usize).rev() {
            let adj = adjoints[i];
            if adj == 0.0 {
                continue;
            }
            let n = &nodes[i];
            for k in 0..n.arity as usize {
                adjoints[n.parents[k] as usize] += n.partials[k] * adj;
            }
        }
        Ok(Gradients { adjoints })
    }
}

/// Adjoints of every node after a reverse sweep.
#[derive(Debug, Clone)]
pub struct Gradients {
    adjoints: Vec<f64>,
}

impl Gradients {
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        match v.tape {
            Some(_) => self.adjoints[v.idx as usize],
            None => 0.0,
        }
    }

    pub fn wrt_all(&self, vs: &[Var<'_>]) -> Vec<f64> {
        vs.iter().map(|&v| self.wrt(v)).collect()
    }

    pub fn adjoints(&self) -> &[f64] {
        &self.adjoints
    }
}

/// Scalar handle: either a taped node or an untaped constant.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    idx: u32,
    val: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tape {
            Some(_) => write!(f, "Var#{}({})", self.idx, self.val),
            None => write!(f, "Const({})", self.val),
        }
    }
}

impl<'t> Var<'t> {
    pub fn constant(val: f64) -> Self {
        Var { tape: None, idx: 0, val }
    }

    pub fn value(self) -> f64 {
        self.val
    }

    pub fn is_constant(self) -> bool {
        self.tape.is_none()
    }

    fn map1(self, value: f64, d: f64) -> Self {
        match self.tape {
            Some(t) => Var { tape: Some(t), idx: t.unary(value, self.idx, d), val: value },
            None => Var::constant(value),
        }
    }

    fn map2(self, other: Self, value: f64, da: f64, db: f64) -> Self {
        match (self.tape, other.tape) {
            (None, None) => Var::constant(value),
            (Some(t), None) => Var { tape: Some(t), idx: t.unary(value, self.idx, da), val: value },
            (None, Some(t)) => Var { tape: Some(t), idx: t.unary(value, other.idx, db), val: value },
            (Some(t), Some(u)) => {
                debug_assert!(std::ptr::eq(t, u), "operands recorded on different tapes");
                Var { tape: Some(t), idx: t.binary(value, self.idx, da, other.idx, db), val: value }
            }
        }
    }

    fn flag(self, e: AdError) {
        if let Some(t) = self.tape {
            t.flag(e);
        }
    }

    pub fn try_ln(self) -> Result<Self, AdError> {
        if self.val <= 0.0 {
            self.flag(AdError::LogDomain(self.val));
            return Err(AdError::LogDomain(self.val));
        }
        Ok(self.map1(self.val.ln(), 1.0 / self.val))
    }

    pub fn try_sqrt(self) -> Result<Self, AdError> {
        if self.val <= 0.0 {
            self.flag(AdError::SqrtDomain(self.val));
            return Err(AdError::SqrtDomain(self.val));
        }
        let s = self.val.sqrt();
        Ok(self.map1(s, 0.5 / s))
    }

    pub fn try_div(self, rhs: Self) -> Result<Self, AdError> {
        if rhs.val == 0.0 {
            self.flag(AdError::DivisionByZero(self.val));
            rhs.flag(AdError::DivisionByZero(self.val));
            return Err(AdError::DivisionByZero(self.val));
        }
        let q = self.val / rhs.val;
        Ok(self.map2(rhs, q, 1.0 / rhs.val, -q / rhs.val))
    }

    pub fn squared(self) -> Self {
        self.map1(self.val * self.val, 2.0 * self.val)
    }
}

/// Scalar arithmetic shared by plain `f64` evaluation and taped evaluation.
///
/// Model, projection and loss code is written once against this trait.
pub trait Real:
    Copy
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn cst(v: f64) -> Self;
    fn value(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    /// Natural log; non-positive input is a domain error (NaN for `f64`,
    /// recorded on the tape for [`Var`]).
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    /// `max(self, lo)`; the derivative is 0 at and below the boundary.
    fn clamp_min(self, lo: f64) -> Self;
    /// `min(max(self, lo), hi)`; derivative 0 outside the open interval.
    fn clamp(self, lo: f64, hi: f64) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }
    fn sq(self) -> Self {
        self * self
    }
}

impl Real for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn value(self) -> f64 {
        self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        if self <= 0.0 {
            f64::NAN
        } else {
            f64::ln(self)
        }
    }
    fn sqrt(self) -> Self {
        if self < 0.0 {
            f64::NAN
        } else {
            f64::sqrt(self)
        }
    }
    fn clamp_min(self, lo: f64) -> Self {
        self.max(lo)
    }
    fn clamp(self, lo: f64, hi: f64) -> Self {
        f64::clamp(self, lo, hi)
    }
}

impl<'t> Real for Var<'t> {
    fn cst(v: f64) -> Self {
        Var::constant(v)
    }
    fn value(self) -> f64 {
        self.val
    }
    fn sin(self) -> Self {
        self.map1(self.val.sin(), self.val.cos())
    }
    fn cos(self) -> Self {
        self.map1(self.val.cos(), -self.val.sin())
    }
    fn exp(self) -> Self {
        let e = self.val.exp();
        self.map1(e, e)
    }
    fn ln(self) -> Self {
        self.try_ln().unwrap_or_else(|_| self.map1(f64::NAN, f64::NAN))
    }
    fn sqrt(self) -> Self {
        self.try_sqrt().unwrap_or_else(|_| self.map1(f64::NAN, f64::NAN))
    }
    fn clamp_min(self, lo: f64) -> Self {
        if self.val > lo {
            self.map1(self.val, 1.0)
        } else {
            self.map1(lo, 0.0)
        }
    }
    fn clamp(self, lo: f64, hi: f64) -> Self {
        if self.val <= lo {
            self.map1(lo, 0.0)
        } else if self.val >= hi {
            self.map1(hi, 0.0)
        } else {
            self.map1(self.val, 1.0)
        }
    }
    fn sq(self) -> Self {
        self.squared()
    }
}

impl<'t> Add for Var<'t> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.map2(rhs, self.val + rhs.val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.map2(rhs, self.val - rhs.val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.map2(rhs, self.val * rhs.val, rhs.val, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        self.try_div(rhs).unwrap_or_else(|_| self.map2(rhs, f64::NAN, f64::NAN, f64::NAN))
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Self;
    fn neg(self) -> Self {
        self.map1(-self.val, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Self;
    fn add(self, rhs: f64) -> Self {
        self.map1(self.val + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Self;
    fn sub(self, rhs: f64) -> Self {
        self.map1(self.val - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        self.map1(self.val * rhs, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Self;
    fn div(self, rhs: f64) -> Self {
        if rhs == 0.0 {
            self.flag(AdError::DivisionByZero(self.val));
            return self.map1(f64::NAN, f64::NAN);
        }
        self.map1(self.val / rhs, 1.0 / rhs)
    }
}

/// Result of comparing taped gradients against central differences.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// `|analytic - numeric| / (|analytic| + eps)` per component.
    pub rel_error: Vec<f64>,
}

impl GradCheck {
    pub fn max_rel_error(&self) -> f64 {
        self.rel_error.iter().copied().fold(0.0, f64::max)
    }
}

/// Compares the reverse-mode gradient of `f` at `x` with central differences.
///
/// Never fails: a domain error on the tape shows up as NaN entries.
pub fn grad_check<F>(f: F, x: &[f64], step: f64) -> GradCheck
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let analytic = {
        let tape = Tape::new();
        let vars = tape.vars(x);
        let y = f(&tape, &vars);
        match tape.gradient(y) {
            Ok(g) => g.wrt_all(&vars),
            Err(_) => vec![f64::NAN; x.len()],
        }
    };
    let eval = |p: &[f64]| {
        let tape = Tape::new();
        let vars = tape.vars(p);
        f(&tape, &vars).value()
    };
    let mut numeric = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let up = eval(&probe);
        probe[i] = x[i] - step;
        let down = eval(&probe);
        probe[i] = x[i];
        numeric.push((up - down) / (2.0 * step));
    }
    let rel_error = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| {
            let e = (a - n).abs() / (a.abs() + REL_ERROR_EPS);
            if e.is_nan() {
                f64::INFINITY
            } else {
                e
            }
        })
        .collect();
    GradCheck { analytic, numeric, rel_error }
}
