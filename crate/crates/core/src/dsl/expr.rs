use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use super::scalar::{Env, EvalError, Scalar};

/// Which vector a variable reference points into.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VarClass {
    /// Plant state.
    X,
    /// The (scalar) control.
    U,
    /// Exosystem state.
    W,
}

/// A variable reference with a 0-based index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    pub class: VarClass,
    pub index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryFn {
    Sin,
    Cos,
    Exp,
}

impl UnaryFn {
    pub fn name(self) -> &'static str {
        match self {
            UnaryFn::Sin => "sin",
            UnaryFn::Cos => "cos",
            UnaryFn::Exp => "exp",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            UnaryFn::Sin => v.sin(),
            UnaryFn::Cos => v.cos(),
            UnaryFn::Exp => v.exp(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, PartialEq)]
pub enum Node {
    Const(f64),
    Var(Var),
    Neg(Expr),
    Func(UnaryFn, Expr),
    Binary(BinOp, Expr, Expr),
    Pow(Expr, u32),
}

/// Immutable expression tree over `x1..xn`, `u`, `w1..wk`.
///
/// Cloning is cheap; subtrees are shared.
#[derive(Clone, PartialEq)]
pub struct Expr(Arc<Node>);

/// Dimensions of the plant state and exosystem state (the control is
/// always scalar).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub k: usize,
}

impl Dims {
    pub fn new(n: usize, k: usize) -> Self {
        Dims { n, k }
    }

    /// Arity of the joint `(x, u, w)` variable space.
    pub fn xuw(&self) -> usize {
        self.n + 1 + self.k
    }
}

impl Expr {
    fn from_node(node: Node) -> Self {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn constant(c: f64) -> Self {
        Self::from_node(Node::Const(c))
    }

    pub fn var(class: VarClass, index: usize) -> Self {
        Self::from_node(Node::Var(Var { class, index }))
    }

    /// `x_{i+1}`
    pub fn x(i: usize) -> Self {
        Self::var(VarClass::X, i)
    }

    pub fn u() -> Self {
        Self::var(VarClass::U, 0)
    }

    /// `w_{i+1}`
    pub fn w(i: usize) -> Self {
        Self::var(VarClass::W, i)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self.node() {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    // Raw constructors keep the tree exactly as written (used by the parser).

    pub fn raw_neg(a: Expr) -> Self {
        Self::from_node(Node::Neg(a))
    }

    pub fn raw_func(f: UnaryFn, a: Expr) -> Self {
        Self::from_node(Node::Func(f, a))
    }

    pub fn raw_binary(op: BinOp, a: Expr, b: Expr) -> Self {
        Self::from_node(Node::Binary(op, a, b))
    }

    pub fn raw_pow(a: Expr, k: u32) -> Self {
        Self::from_node(Node::Pow(a, k))
    }

    // Simplifying constructors: constant folding and zero/one elimination.

    pub fn func(f: UnaryFn, a: Expr) -> Self {
        match a.as_const() {
            Some(c) => Self::constant(f.apply(c)),
            None => Self::raw_func(f, a),
        }
    }

    pub fn sin(&self) -> Self {
        Self::func(UnaryFn::Sin, self.clone())
    }

    pub fn cos(&self) -> Self {
        Self::func(UnaryFn::Cos, self.clone())
    }

    pub fn exp(&self) -> Self {
        Self::func(UnaryFn::Exp, self.clone())
    }

    pub fn powi(&self, k: u32) -> Self {
        match (k, self.as_const()) {
            (0, _) => Self::constant(1.0),
            (1, _) => self.clone(),
            (_, Some(c)) => Self::constant(c.powi(k as i32)),
            _ => Self::raw_pow(self.clone(), k),
        }
    }

    fn sum(a: &Expr, b: &Expr) -> Self {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Self::constant(x + y),
            (Some(0.0), _) => b.clone(),
            (_, Some(0.0)) => a.clone(),
            _ => Self::raw_binary(BinOp::Add, a.clone(), b.clone()),
        }
    }

    fn difference(a: &Expr, b: &Expr) -> Self {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Self::constant(x - y),
            (_, Some(0.0)) => a.clone(),
            (Some(0.0), _) => Self::negation(b),
            _ => Self::raw_binary(BinOp::Sub, a.clone(), b.clone()),
        }
    }

    fn product(a: &Expr, b: &Expr) -> Self {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Self::constant(x * y),
            (Some(0.0), _) | (_, Some(0.0)) => Self::constant(0.0),
            (Some(1.0), _) => b.clone(),
            (_, Some(1.0)) => a.clone(),
            (Some(-1.0), _) => Self::negation(b),
            (_, Some(-1.0)) => Self::negation(a),
            _ => Self::raw_binary(BinOp::Mul, a.clone(), b.clone()),
        }
    }

    fn quotient(a: &Expr, b: &Expr) -> Self {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) if y != 0.0 => Self::constant(x / y),
            (Some(0.0), _) => Self::constant(0.0),
            (_, Some(1.0)) => a.clone(),
            _ => Self::raw_binary(BinOp::Div, a.clone(), b.clone()),
        }
    }

    fn negation(a: &Expr) -> Self {
        match a.node() {
            Node::Const(c) => Self::constant(-c),
            Node::Neg(inner) => inner.clone(),
            _ => Self::raw_neg(a.clone()),
        }
    }

    /// True if any variable of `class` occurs in the tree.
    pub fn references(&self, class: VarClass) -> bool {
        match self.node() {
            Node::Const(_) => false,
            Node::Var(v) => v.class == class,
            Node::Neg(a) | Node::Func(_, a) | Node::Pow(a, _) => a.references(class),
            Node::Binary(_, a, b) => a.references(class) || b.references(class),
        }
    }

    /// Largest 0-based index used for variables of `class`.
    pub fn max_index(&self, class: VarClass) -> Option<usize> {
        match self.node() {
            Node::Const(_) => None,
            Node::Var(v) => (v.class == class).then_some(v.index),
            Node::Neg(a) | Node::Func(_, a) | Node::Pow(a, _) => a.max_index(class),
            Node::Binary(_, a, b) => a.max_index(class).max(b.max_index(class)),
        }
    }

    /// Number of nodes, counting shared subtrees once per occurrence.
    pub fn size(&self) -> usize {
        match self.node() {
            Node::Const(_) | Node::Var(_) => 1,
            Node::Neg(a) | Node::Func(_, a) | Node::Pow(a, _) => 1 + a.size(),
            Node::Binary(_, a, b) => 1 + a.size() + b.size(),
        }
    }

    /// Evaluates the tree in any [`Scalar`] arithmetic.
    pub fn eval_with<S: Scalar>(&self, env: &Env<'_, S>) -> Result<S, EvalError> {
        Ok(match self.node() {
            Node::Const(c) => env.lift(*c),
            Node::Var(v) => env.get(*v)?.clone(),
            Node::Neg(a) => a.eval_with(env)?.neg(),
            Node::Func(f, a) => {
                let a = a.eval_with(env)?;
                match f {
                    UnaryFn::Sin => a.sin(),
                    UnaryFn::Cos => a.cos(),
                    UnaryFn::Exp => a.exp(),
                }
            }
            Node::Binary(op, a, b) => {
                let a = a.eval_with(env)?;
                let b = b.eval_with(env)?;
                match op {
                    BinOp::Add => a.add(&b),
                    BinOp::Sub => a.sub(&b),
                    BinOp::Mul => a.mul(&b),
                    BinOp::Div => a.div(&b)?,
                }
            }
            Node::Pow(a, k) => a.eval_with(env)?.powi(*k),
        })
    }

    /// Numeric value at `(x, u, w)`.
    pub fn eval(&self, x: &[f64], u: f64, w: &[f64]) -> Result<f64, EvalError> {
        self.eval_with(&Env::new(x, &u, w, 0.0))
    }

    /// Replaces every `x_i`, `u`, `w_j` by the given expressions.
    pub fn substitute(&self, x: &[Expr], u: &Expr, w: &[Expr]) -> Expr {
        let mut memo = HashMap::new();
        self.substitute_memo(x, u, w, &mut memo)
    }

    fn substitute_memo(&self, x: &[Expr], u: &Expr, w: &[Expr], memo: &mut HashMap<*const Node, Expr>) -> Expr {
        let key = Arc::as_ptr(&self.0);
        if let Some(e) = memo.get(&key) {
            return e.clone();
        }
        let out = match self.node() {
            Node::Const(_) => self.clone(),
            Node::Var(v) => match v.class {
                VarClass::X => x[v.index].clone(),
                VarClass::U => u.clone(),
                VarClass::W => w[v.index].clone(),
            },
            Node::Neg(a) => Self::negation(&a.substitute_memo(x, u, w, memo)),
            Node::Func(f, a) => Self::func(*f, a.substitute_memo(x, u, w, memo)),
            Node::Pow(a, k) => a.substitute_memo(x, u, w, memo).powi(*k),
            Node::Binary(op, a, b) => {
                let a = a.substitute_memo(x, u, w, memo);
                let b = b.substitute_memo(x, u, w, memo);
                Self::binary(*op, &a, &b)
            }
        };
        memo.insert(key, out.clone());
        out
    }

    fn binary(op: BinOp, a: &Expr, b: &Expr) -> Expr {
        match op {
            BinOp::Add => Self::sum(a, b),
            BinOp::Sub => Self::difference(a, b),
            BinOp::Mul => Self::product(a, b),
            BinOp::Div => Self::quotient(a, b),
        }
    }

    /// Symbolic partial derivative with respect to `var`.
    pub fn diff(&self, var: Var) -> Expr {
        let mut memo = HashMap::new();
        self.diff_memo(var, &mut memo)
    }

    fn diff_memo(&self, var: Var, memo: &mut HashMap<*const Node, Expr>) -> Expr {
        let key = Arc::as_ptr(&self.0);
        if let Some(e) = memo.get(&key) {
            return e.clone();
        }
        let out = match self.node() {
            Node::Const(_) => Self::constant(0.0),
            Node::Var(v) => Self::constant(if *v == var { 1.0 } else { 0.0 }),
            Node::Neg(a) => Self::negation(&a.diff_memo(var, memo)),
            Node::Func(f, a) => {
                let da = a.diff_memo(var, memo);
                let outer = match f {
                    UnaryFn::Sin => a.cos(),
                    UnaryFn::Cos => Self::negation(&a.sin()),
                    UnaryFn::Exp => self.clone(),
                };
                Self::product(&outer, &da)
            }
            Node::Pow(a, k) => {
                let da = a.diff_memo(var, memo);
                let coeff = Self::product(&Self::constant(*k as f64), &a.powi(k - 1));
                Self::product(&coeff, &da)
            }
            Node::Binary(op, a, b) => {
                let da = a.diff_memo(var, memo);
                let db = b.diff_memo(var, memo);
                match op {
                    BinOp::Add => Self::sum(&da, &db),
                    BinOp::Sub => Self::difference(&da, &db),
                    BinOp::Mul => Self::sum(&Self::product(&da, b), &Self::product(a, &db)),
                    BinOp::Div => {
                        let left = Self::quotient(&da, b);
                        let right = Self::quotient(&Self::product(a, &db), &b.powi(2));
                        Self::difference(&left, &right)
                    }
                }
            }
        };
        memo.insert(key, out.clone());
        out
    }

    fn precedence(&self) -> u8 {
        match self.node() {
            Node::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
            Node::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
            Node::Neg(_) => 3,
            Node::Const(c) if c.is_sign_negative() => 3,
            Node::Pow(..) => 4,
            _ => 5,
        }
    }
}

/// Symbolic Jacobian: entry `(i, j)` is `d f_i / d v_j` for the `dim`
/// variables of `class`.
pub fn jacobian(f: &[Expr], class: VarClass, dim: usize) -> Vec<Vec<Expr>> {
    f.iter()
        .map(|fi| (0..dim).map(|j| fi.diff(Var { class, index: j })).collect())
        .collect()
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, paren: bool) -> fmt::Result {
    if paren {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

/// Canonical text form; parses back to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Const(c) => write!(f, "{c}"),
            Node::Var(v) => match v.class {
                VarClass::X => write!(f, "x{}", v.index + 1),
                VarClass::U => write!(f, "u"),
                VarClass::W => write!(f, "w{}", v.index + 1),
            },
            Node::Neg(a) => {
                write!(f, "-")?;
                write_child(f, a, a.precedence() < 3)
            }
            Node::Func(func, a) => write!(f, "{}({a})", func.name()),
            Node::Pow(a, k) => {
                write_child(f, a, a.precedence() < 5)?;
                write!(f, "^{k}")
            }
            Node::Binary(op, a, b) => {
                let p = self.precedence();
                write_child(f, a, a.precedence() < p)?;
                let sym = match op {
                    BinOp::Add => " + ",
                    BinOp::Sub => " - ",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                };
                write!(f, "{sym}")?;
                write_child(f, b, b.precedence() <= p)
            }
        }
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

impl From<f64> for Expr {
    fn from(c: f64) -> Self {
        Expr::constant(c)
    }
}

macro_rules! expr_binop {
    ($trait:ident, $method:ident, $ctor:ident) => {
        impl $trait<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::$ctor(self, rhs)
            }
        }
        impl $trait<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::$ctor(&self, &rhs)
            }
        }
        impl $trait<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                Expr::$ctor(&self, &Expr::constant(rhs))
            }
        }
        impl $trait<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::$ctor(&Expr::constant(self), &rhs)
            }
        }
    };
}

expr_binop!(Add, add, sum);
expr_binop!(Sub, sub, difference);
expr_binop!(Mul, mul, product);
expr_binop!(Div, div, quotient);

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::negation(&self)
    }
}

impl Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::negation(self)
    }
}
