//! Formula language for plants and exosystems: parsing, numeric
//! evaluation, Taylor jets at the origin, symbolic Jacobians and the
//! third-degree Lie-series discretization of continuous-time fields.

mod expr;
mod parse;
mod scalar;
pub mod scenario;

pub use expr::{jacobian, BinOp, Dims, Expr, Node, UnaryFn, Var, VarClass};
pub use parse::{parse_expr, ParseError};
pub use scalar::{Dual, Env, EvalError, Scalar};
pub use scenario::{ContinuousTime, MprSettings, ScenarioError, ScenarioSpec};

use thiserror::Error;

use crate::poly::TruncatedPoly;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DslError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("dsl: Lie discretization needs an unforced field in x only; `{0}` references u or w")]
    ForcedField(String),
    #[error("dsl: time step must be positive, got {0}")]
    BadTimeStep(f64),
}

/// Taylor polynomial at the origin of `e` in the joint `(x, u, w)`
/// space (variables ordered `x1..xn, u, w1..wk`).
pub fn expr_jet(e: &Expr, dims: Dims, degree_cap: usize) -> Result<TruncatedPoly, EvalError> {
    let arity = dims.xuw();
    let var = |i| TruncatedPoly::var(arity, degree_cap, i);
    let x: Vec<_> = (0..dims.n).map(var).collect();
    let u = var(dims.n);
    let w: Vec<_> = (0..dims.k).map(|j| var(dims.n + 1 + j)).collect();
    let zero = TruncatedPoly::zero(arity, degree_cap);
    e.eval_with(&Env::new(&x, &u, &w, zero))
}

/// Taylor polynomial at the origin of an expression in `w` only, as a
/// series in `k` variables.
pub fn expr_jet_w(e: &Expr, k: usize, degree_cap: usize) -> Result<TruncatedPoly, EvalError> {
    let w: Vec<_> = (0..k).map(|j| TruncatedPoly::var(k, degree_cap, j)).collect();
    let zero = TruncatedPoly::zero(k, degree_cap);
    for class in [VarClass::X, VarClass::U] {
        if e.references(class) {
            return Err(EvalError::MissingVariable {
                class,
                index: e.max_index(class).unwrap_or(0),
                dim: 0,
            });
        }
    }
    let x: [TruncatedPoly; 0] = [];
    e.eval_with(&Env::new(&x, &zero, &w, zero.clone()))
}

/// `L_f(g) = (dg/dx) f` for each component of `g`.
pub fn lie_derivative(g: &[Expr], f: &[Expr]) -> Vec<Expr> {
    let jac = jacobian(g, VarClass::X, f.len());
    jac.iter()
        .map(|row| row.iter().zip(f).fold(Expr::constant(0.0), |acc, (d, fj)| acc + d * fj))
        .collect()
}

/// Third-degree Lie series of the unforced field `f_ct`:
/// `x + f ts + L_f(f) ts^2/2 + L_f^2(f) ts^3/6`.
pub fn lie_discretize(f_ct: &[Expr], ts: f64) -> Result<Vec<Expr>, DslError> {
    if ts.is_nan() || ts <= 0.0 {
        return Err(DslError::BadTimeStep(ts));
    }
    if let Some(bad) = f_ct
        .iter()
        .find(|e| e.references(VarClass::U) || e.references(VarClass::W))
    {
        return Err(DslError::ForcedField(bad.to_string()));
    }
    let l1 = lie_derivative(f_ct, f_ct);
    let l2 = lie_derivative(&l1, f_ct);
    Ok((0..f_ct.len())
        .map(|i| {
            Expr::x(i) + f_ct[i].clone() * ts + l1[i].clone() * (ts * ts / 2.0) + l2[i].clone() * (ts * ts * ts / 6.0)
        })
        .collect())
}

#[cfg(test)]
mod tests;
