//! Plant, output and exosystem bundle with cached Taylor data, the
//! output chain `h^(j)`, structural checks and the running cost.

mod chain;
mod structure;

pub use chain::{build_output_chain, build_output_chain_with, build_running_cost, ChainConfig, OutputChain};
pub use structure::{
    eig_small, format_complex, plant_zeros, structure_report, structure_report_with, StructureReport, UNIT_CIRCLE_TOL,
};

use thiserror::Error;

use crate::dsl::{expr_jet, expr_jet_w, Dims, Env, EvalError, Expr, Scalar, ScenarioError, ScenarioSpec};
use crate::linalg::Mat;
use crate::poly::{PolyError, PolyVector, TruncatedPoly};

/// Tolerance for the operating point being the origin.
pub const ORIGIN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("model: {0}")]
    Dimension(String),
    #[error("model: {what} is {value:e} at the origin; the origin must be an equilibrium")]
    OffOrigin { what: String, value: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("model: relative degree undefined, no u-dependence through h^({max_r})")]
    UndefinedRelativeDegree { max_r: usize },
    #[error("model: h^({j}) depends on u away from the origin (|dh/du| = {slope:e}); relative degree is not uniform")]
    NonUniformRelativeDegree { j: usize, slope: f64 },
    #[error("model: H F^(r-1) G = {0:e} vanishes; inconsistent relative degree")]
    InconsistentRelativeDegree(f64),
    #[error("model: eigenvalue iteration failed: {0}")]
    Eigen(String),
    #[error("model: relative degree 0 is not supported by the running cost")]
    ZeroRelativeDegree,
}

/// Plant `x+ = f(x,u,w)`, output `y = h(x,u,w)` and exosystem
/// `w+ = a(w)` with Taylor jets at the origin.
#[derive(Debug, Clone)]
pub struct SystemModel {
    dims: Dims,
    f: Vec<Expr>,
    h: Expr,
    a: Vec<Expr>,
    cap: usize,
    f_jet: PolyVector,
    h_jet: TruncatedPoly,
    a_jet: PolyVector,
}

impl SystemModel {
    /// Builds the model and caches jets through degree `cap`.
    pub fn new(dims: Dims, f: Vec<Expr>, h: Expr, a: Vec<Expr>, cap: usize) -> Result<Self, ModelError> {
        if dims.n == 0 || dims.k == 0 {
            return Err(ModelError::Dimension("n and k must be positive".into()));
        }
        if f.len() != dims.n || a.len() != dims.k {
            return Err(ModelError::Dimension(format!(
                "expected {} plant and {} exosystem equations, got {} and {}",
                dims.n,
                dims.k,
                f.len(),
                a.len()
            )));
        }
        let f_jet = PolyVector::new(
            f.iter()
                .map(|e| expr_jet(e, dims, cap))
                .collect::<Result<Vec<_>, _>>()?,
        )?;
        let h_jet = expr_jet(&h, dims, cap)?;
        let a_jet = PolyVector::new(
            a.iter()
                .map(|e| expr_jet_w(e, dims.k, cap))
                .collect::<Result<Vec<_>, _>>()?,
        )?;
        let m = SystemModel {
            dims,
            f,
            h,
            a,
            cap,
            f_jet,
            h_jet,
            a_jet,
        };
        m.check_origin()?;
        Ok(m)
    }

    /// Model of a scenario with jets through `cap`.
    pub fn from_scenario(spec: &ScenarioSpec, cap: usize) -> Result<Self, ModelError> {
        let f = spec.discrete_plant()?;
        Self::new(spec.dims, f, spec.output_h.clone(), spec.exo_a.clone(), cap)
    }

    fn check_origin(&self) -> Result<(), ModelError> {
        let (n, k) = (self.dims.n, self.dims.k);
        let x0 = vec![0.0; n];
        let w0 = vec![0.0; k];
        let check = |what: String, value: f64| {
            if value.abs() > ORIGIN_TOL || !value.is_finite() {
                Err(ModelError::OffOrigin { what, value })
            } else {
                Ok(())
            }
        };
        for (i, v) in self.step(&x0, 0.0, &w0)?.into_iter().enumerate() {
            check(format!("f{}", i + 1), v)?;
        }
        check("h".into(), self.output(&x0, 0.0, &w0)?)?;
        for (j, v) in self.exo(&w0)?.into_iter().enumerate() {
            check(format!("a{}", j + 1), v)?;
        }
        Ok(())
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn n(&self) -> usize {
        self.dims.n
    }

    pub fn k(&self) -> usize {
        self.dims.k
    }

    pub fn f(&self) -> &[Expr] {
        &self.f
    }

    pub fn h(&self) -> &Expr {
        &self.h
    }

    pub fn a(&self) -> &[Expr] {
        &self.a
    }

    pub fn jet_cap(&self) -> usize {
        self.cap
    }

    /// Jet of `f` in `(x, u, w)`.
    pub fn f_jet(&self) -> &PolyVector {
        &self.f_jet
    }

    /// Jet of `h` in `(x, u, w)`.
    pub fn h_jet(&self) -> &TruncatedPoly {
        &self.h_jet
    }

    /// Jet of `a` in `w`.
    pub fn a_jet(&self) -> &PolyVector {
        &self.a_jet
    }

    /// Jet of `a` re-indexed into the `(x, u, w)` space.
    pub fn a_jet_xuw(&self) -> PolyVector {
        let (n, k) = (self.dims.n, self.dims.k);
        let mapping: Vec<usize> = (0..k).map(|j| n + 1 + j).collect();
        self.a_jet
            .embed(self.dims.xuw(), &mapping)
            .expect("exosystem embedding is in range")
    }

    pub fn step_with<S: Scalar>(&self, x: &[S], u: &S, w: &[S]) -> Result<Vec<S>, EvalError> {
        let env = Env::new(x, u, w, u.clone());
        self.f.iter().map(|e| e.eval_with(&env)).collect()
    }

    pub fn output_with<S: Scalar>(&self, x: &[S], u: &S, w: &[S]) -> Result<S, EvalError> {
        self.h.eval_with(&Env::new(x, u, w, u.clone()))
    }

    pub fn exo_with<S: Scalar>(&self, w: &[S], template: &S) -> Result<Vec<S>, EvalError> {
        let x: [S; 0] = [];
        let env = Env::new(&x, template, w, template.clone());
        self.a.iter().map(|e| e.eval_with(&env)).collect()
    }

    pub fn step(&self, x: &[f64], u: f64, w: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.step_with(x, &u, w)
    }

    pub fn output(&self, x: &[f64], u: f64, w: &[f64]) -> Result<f64, EvalError> {
        self.output_with(x, &u, w)
    }

    pub fn exo(&self, w: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.exo_with(w, &0.0)
    }

    /// `h^(j)(x,u,w)`: the output `j` steps ahead with `u` held constant.
    pub fn chain_output_with<S: Scalar>(&self, j: usize, x: &[S], u: &S, w: &[S]) -> Result<S, EvalError> {
        let mut x = x.to_vec();
        let mut w = w.to_vec();
        for _ in 0..j {
            let xn = self.step_with(&x, u, &w)?;
            w = self.exo_with(&w, u)?;
            x = xn;
        }
        self.output_with(&x, u, &w)
    }

    /// Running cost `(h^(0))^2 + (h^(r))^2` evaluated numerically.
    pub fn running_cost_with<S: Scalar>(&self, r: usize, x: &[S], u: &S, w: &[S]) -> Result<S, EvalError> {
        let h0 = self.output_with(x, u, w)?;
        let hr = self.chain_output_with(r, x, u, w)?;
        Ok(h0.mul(&h0).add(&hr.mul(&hr)))
    }

    pub fn running_cost(&self, r: usize, x: &[f64], u: f64, w: &[f64]) -> Result<f64, EvalError> {
        self.running_cost_with(r, x, &u, w)
    }
}

/// Linear parts `x+ = Fx + Gu + Bw`, `y = Hx + Ju + Dw`, `w+ = Aw`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearData {
    pub f: Mat,
    pub g: Mat,
    pub b: Mat,
    pub h: Mat,
    pub j: f64,
    pub d: Mat,
    pub a: Mat,
}

impl LinearData {
    pub fn n(&self) -> usize {
        self.f.nrows()
    }

    pub fn k(&self) -> usize {
        self.a.nrows()
    }
}

fn grade_one(p: &TruncatedPoly, var: usize) -> f64 {
    p.coeff(&crate::poly::Monomial::var(var))
}

/// Grade-1 coefficients of the cached jets.
pub fn linearize(m: &SystemModel) -> LinearData {
    let (n, k) = (m.n(), m.k());
    let fj = m.f_jet();
    let aj = m.a_jet();
    let f = Mat::from_fn(n, n, |i, c| grade_one(&fj[i], c));
    let g = Mat::from_fn(n, 1, |i, _| grade_one(&fj[i], n));
    let b = Mat::from_fn(n, k, |i, c| grade_one(&fj[i], n + 1 + c));
    let h = Mat::from_fn(1, n, |_, c| grade_one(m.h_jet(), c));
    let j = grade_one(m.h_jet(), n);
    let d = Mat::from_fn(1, k, |_, c| grade_one(m.h_jet(), n + 1 + c));
    let a = Mat::from_fn(k, k, |i, c| grade_one(&aj[i], c));
    LinearData { f, g, b, h, j, d, a }
}
