//! Number types an [`Expr`](super::Expr) can be evaluated in: plain
//! `f64`, forward-mode [`Dual`] numbers and truncated Taylor series.

use thiserror::Error;

use super::expr::{Var, VarClass};
use crate::poly::{PolyError, TruncatedPoly};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("dsl: division by zero")]
    DivisionByZero,
    #[error("dsl: denominator vanishes at the origin; no Taylor jet exists")]
    SingularJet,
    #[error("dsl: variable {class:?}{index} has no value (dimension {dim})")]
    MissingVariable { class: VarClass, index: usize, dim: usize },
}

pub trait Scalar: Clone {
    /// A constant in the same number system as `self`.
    fn lift(&self, c: f64) -> Self;
    fn add(&self, rhs: &Self) -> Self;
    fn sub(&self, rhs: &Self) -> Self;
    fn mul(&self, rhs: &Self) -> Self;
    fn div(&self, rhs: &Self) -> Result<Self, EvalError>;
    fn neg(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn exp(&self) -> Self;

    fn powi(&self, k: u32) -> Self {
        let mut acc = self.lift(1.0);
        for _ in 0..k {
            acc = acc.mul(self);
        }
        acc
    }
}

impl Scalar for f64 {
    fn lift(&self, c: f64) -> Self {
        c
    }
    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn sub(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn div(&self, rhs: &Self) -> Result<Self, EvalError> {
        if *rhs == 0.0 {
            Err(EvalError::DivisionByZero)
        } else {
            Ok(self / rhs)
        }
    }
    fn neg(&self) -> Self {
        -self
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn powi(&self, k: u32) -> Self {
        f64::powi(*self, k as i32)
    }
}

impl Scalar for TruncatedPoly {
    fn lift(&self, c: f64) -> Self {
        TruncatedPoly::constant(self.arity(), self.degree_cap(), c)
    }
    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn sub(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn div(&self, rhs: &Self) -> Result<Self, EvalError> {
        self.try_div(rhs).map_err(|e| match e {
            PolyError::SingularDivision => EvalError::SingularJet,
            other => panic!("jet arithmetic on incompatible series: {other}"),
        })
    }
    fn neg(&self) -> Self {
        -self
    }
    fn sin(&self) -> Self {
        TruncatedPoly::sin(self)
    }
    fn cos(&self) -> Self {
        TruncatedPoly::cos(self)
    }
    fn exp(&self) -> Self {
        TruncatedPoly::exp(self)
    }
    fn powi(&self, k: u32) -> Self {
        TruncatedPoly::powi(self, k)
    }
}

/// First-order forward-mode dual number with a dense tangent vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Dual {
    pub value: f64,
    pub grad: Vec<f64>,
}

impl Dual {
    pub fn constant(value: f64, dim: usize) -> Self {
        Dual {
            value,
            grad: vec![0.0; dim],
        }
    }

    /// Seeded input: tangent is the `index`-th unit vector.
    pub fn seed(value: f64, dim: usize, index: usize) -> Self {
        let mut d = Self::constant(value, dim);
        d.grad[index] = 1.0;
        d
    }

    fn chain(&self, value: f64, slope: f64) -> Self {
        Dual {
            value,
            grad: self.grad.iter().map(|g| g * slope).collect(),
        }
    }
}

impl Scalar for Dual {
    fn lift(&self, c: f64) -> Self {
        Dual::constant(c, self.grad.len())
    }
    fn add(&self, rhs: &Self) -> Self {
        Dual {
            value: self.value + rhs.value,
            grad: self.grad.iter().zip(&rhs.grad).map(|(a, b)| a + b).collect(),
        }
    }
    fn sub(&self, rhs: &Self) -> Self {
        Dual {
            value: self.value - rhs.value,
            grad: self.grad.iter().zip(&rhs.grad).map(|(a, b)| a - b).collect(),
        }
    }
    fn mul(&self, rhs: &Self) -> Self {
        Dual {
            value: self.value * rhs.value,
            grad: self
                .grad
                .iter()
                .zip(&rhs.grad)
                .map(|(a, b)| a * rhs.value + self.value * b)
                .collect(),
        }
    }
    fn div(&self, rhs: &Self) -> Result<Self, EvalError> {
        if rhs.value == 0.0 {
            return Err(EvalError::DivisionByZero);
        }
        let q = self.value / rhs.value;
        Ok(Dual {
            value: q,
            grad: self
                .grad
                .iter()
                .zip(&rhs.grad)
                .map(|(a, b)| (a - q * b) / rhs.value)
                .collect(),
        })
    }
    fn neg(&self) -> Self {
        self.chain(-self.value, -1.0)
    }
    fn sin(&self) -> Self {
        self.chain(self.value.sin(), self.value.cos())
    }
    fn cos(&self) -> Self {
        self.chain(self.value.cos(), -self.value.sin())
    }
    fn exp(&self) -> Self {
        let e = self.value.exp();
        self.chain(e, e)
    }
    fn powi(&self, k: u32) -> Self {
        if k == 0 {
            return self.lift(1.0);
        }
        let slope = k as f64 * self.value.powi(k as i32 - 1);
        self.chain(self.value.powi(k as i32), slope)
    }
}

/// Variable bindings for evaluation.
pub struct Env<'a, S> {
    x: &'a [S],
    u: &'a S,
    w: &'a [S],
    template: S,
}

impl<'a, S: Scalar> Env<'a, S> {
    /// `template` is any value of the number system; it supplies
    /// constants through [`Scalar::lift`].
    pub fn new(x: &'a [S], u: &'a S, w: &'a [S], template: S) -> Self {
        Env { x, u, w, template }
    }

    pub fn lift(&self, c: f64) -> S {
        self.template.lift(c)
    }

    pub fn get(&self, v: Var) -> Result<&S, EvalError> {
        let slot = match v.class {
            VarClass::X => self.x.get(v.index),
            VarClass::U => (v.index == 0).then_some(self.u),
            VarClass::W => self.w.get(v.index),
        };
        slot.ok_or(EvalError::MissingVariable {
            class: v.class,
            index: v.index,
            dim: match v.class {
                VarClass::X => self.x.len(),
                VarClass::U => 1,
                VarClass::W => self.w.len(),
            },
        })
    }
}
