//! Terminal cost and feedback for the finite-horizon problem.
//!
//! In transverse coordinates `z = x - theta(w)`, `v = u - alpha(w)` the
//! infinite-horizon cost `rho(z, w)` and feedback `beta(z, w)` are
//! expanded in power series: the quadratic/linear part comes from a
//! discrete Riccati equation, higher degrees from graded linear
//! equations. The results are mapped back to
//! `pi_T(x, w) = rho(x - theta(w), w)` and
//! `kappa_T(x, w) = alpha(w) + beta(x - theta(w), w)`.

mod albrekht;
mod region;

pub use albrekht::{albrekht_correct, assemble_terminal, CostSeries, Transverse};
pub use region::{
    dp_residual_order, dp_residual_order_with, estimate_lyapunov_region, DpResidual, LyapunovRegion, RegionConfig,
    RegionMode,
};

use std::fmt::Write as _;

use log::warn;
use thiserror::Error;

use crate::dsl::EvalError;
use crate::linalg::{self, Mat, C64};
use crate::model::{
    build_output_chain, eig_small, format_complex, linearize, structure_report, LinearData, ModelError, SystemModel,
};
use crate::poly::{PolyError, TruncatedPoly};
use crate::regulation::{solve_fbi, write_matrix, FbiSolution, RegulationError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TerminalError {
    #[error("terminal: structural check failed: {}", .0.join(", "))]
    Structural(Vec<String>),
    #[error("terminal: Riccati iteration did not converge (last change {0:e}); check stabilizable/detectable")]
    RiccatiDivergence(f64),
    #[error("terminal: closed loop F+GK has spectral radius {0}; stabilizable flag violated")]
    UnstableClosedLoop(f64),
    #[error("terminal: Riccati residual {0:e} exceeds tolerance")]
    RiccatiResidual(f64),
    #[error("terminal: R + G'PG = {0:e} is not positive")]
    NonPositiveWeight(f64),
    #[error("terminal: resonance in the degree-{0} cost equation")]
    Resonance(usize),
    #[error("terminal: cost degree {degree} unsupported (need 2 <= degree <= jet degree {cap})")]
    Degree { degree: usize, cap: usize },
    #[error("terminal: relative degree 0 has no transverse cost (J must vanish)")]
    ZeroRelativeDegree,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Regulation(#[from] RegulationError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// `z'Qz + 2 z'S v + R v^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadCost {
    pub q: Mat,
    pub s: Mat,
    pub r: f64,
}

impl QuadCost {
    /// `[Q S; S' R]` is positive semidefinite within `tol`.
    pub fn is_psd(&self, tol: f64) -> bool {
        let n = self.q.nrows();
        let mut m = Mat::zeros(n + 1, n + 1);
        m.view_mut((0, 0), (n, n)).copy_from(&self.q);
        m.view_mut((0, n), (n, 1)).copy_from(&self.s);
        m.view_mut((n, 0), (1, n)).copy_from(&self.s.transpose());
        m[(n, n)] = self.r;
        let sym = (&m + m.transpose()) * 0.5;
        sym.symmetric_eigenvalues().min() >= -tol
    }
}

/// Expansion of `|Hz|^2 + |H(F^r z + F^(r-1) G v)|^2`.
pub fn transverse_quadratic_cost(ld: &LinearData, r: usize) -> Result<QuadCost, TerminalError> {
    if r == 0 {
        return Err(TerminalError::ZeroRelativeDegree);
    }
    let hfr1 = &ld.h * linalg::mat_pow(&ld.f, r - 1);
    let hfr = &hfr1 * &ld.f;
    let hg = (&hfr1 * &ld.g)[(0, 0)];
    let q = ld.h.transpose() * &ld.h + hfr.transpose() * &hfr;
    let s = hfr.transpose() * hg;
    Ok(QuadCost { q, s, r: hg * hg })
}

/// Stabilizing solution of the discrete algebraic Riccati equation.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub p: Mat,
    pub k: Mat,
    pub closed_loop: Vec<C64>,
    pub iterations: usize,
    /// `||P - (F'PF - K'(R+G'PG)K + Q)||_F`.
    pub residual: f64,
}

impl RiccatiSolution {
    pub fn spectral_radius(&self) -> f64 {
        self.closed_loop.iter().fold(0.0, |a, l| a.max(l.norm()))
    }
}

const DARE_TOL: f64 = 1e-12;
const DARE_RESIDUAL: f64 = 1e-9;
const VALUE_ITERATIONS: usize = 200;
const DOUBLING_STEPS: usize = 60;

fn riccati_gain(ld: &LinearData, qc: &QuadCost, p: &Mat) -> Result<Mat, TerminalError> {
    let m = ((ld.g.transpose() * p * &ld.g)[(0, 0)]) + qc.r;
    if m.is_nan() || m <= 0.0 {
        return Err(TerminalError::NonPositiveWeight(m));
    }
    let nmat = ld.g.transpose() * p * &ld.f + qc.s.transpose();
    Ok(nmat * (-1.0 / m))
}

fn riccati_map(ld: &LinearData, qc: &QuadCost, p: &Mat) -> Result<Mat, TerminalError> {
    let k = riccati_gain(ld, qc, p)?;
    let m = ((ld.g.transpose() * p * &ld.g)[(0, 0)]) + qc.r;
    let next = ld.f.transpose() * p * &ld.f - k.transpose() * &k * m + &qc.q;
    Ok((&next + next.transpose()) * 0.5)
}

/// Structure-preserving doubling on the cross-term-free problem.
fn doubling(ld: &LinearData, qc: &QuadCost) -> Option<Mat> {
    let n = ld.n();
    let rinv = 1.0 / qc.r;
    let mut a = &ld.f - &ld.g * qc.s.transpose() * rinv;
    let mut g = &ld.g * ld.g.transpose() * rinv;
    let mut h = &qc.q - &qc.s * qc.s.transpose() * rinv;
    let id = Mat::identity(n, n);
    for _ in 0..DOUBLING_STEPS {
        let w = (&id + &g * &h).try_inverse()?;
        let a_next = &a * &w * &a;
        let g_next = &g + &a * &w * &g * a.transpose();
        let h_next = &h + a.transpose() * &h * &w * &a;
        let change = (&h_next - &h).norm();
        a = a_next;
        g = (&g_next + g_next.transpose()) * 0.5;
        h = (&h_next + h_next.transpose()) * 0.5;
        if change <= DARE_TOL * h.norm().max(1.0) {
            return Some(h);
        }
    }
    None
}

/// Value iteration on the Riccati map, switching to doubling when the
/// fixed point is approached slowly.
pub fn solve_dare(ld: &LinearData, qc: &QuadCost) -> Result<RiccatiSolution, TerminalError> {
    let mut p = qc.q.clone();
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    while iterations < VALUE_ITERATIONS {
        let next = riccati_map(ld, qc, &p)?;
        change = (&next - &p).norm();
        p = next;
        iterations += 1;
        if !change.is_finite() {
            return Err(TerminalError::RiccatiDivergence(change));
        }
        if change <= DARE_TOL * p.norm().max(1.0) {
            break;
        }
    }
    if change > DARE_TOL * p.norm().max(1.0) {
        if qc.r <= 0.0 {
            return Err(TerminalError::NonPositiveWeight(qc.r));
        }
        p = doubling(ld, qc).ok_or(TerminalError::RiccatiDivergence(change))?;
        // polish on the original map
        for _ in 0..3 {
            p = riccati_map(ld, qc, &p)?;
            iterations += 1;
        }
    }
    let k = riccati_gain(ld, qc, &p)?;
    let residual = (&p - riccati_map(ld, qc, &p)?).norm();
    if residual > DARE_RESIDUAL * p.norm().max(1.0) {
        return Err(TerminalError::RiccatiResidual(residual));
    }
    let closed = &ld.f + &ld.g * &k;
    let closed_loop = eig_small(&closed)?;
    let radius = closed_loop.iter().fold(0.0, |a: f64, l| a.max(l.norm()));
    if radius >= 1.0 {
        return Err(TerminalError::UnstableClosedLoop(radius));
    }
    Ok(RiccatiSolution {
        p,
        k,
        closed_loop,
        iterations,
        residual,
    })
}

/// Terminal cost `pi_T` and feedback `kappa_T`, both series in `(x, w)`
/// (variables `x1..xn, w1..wk`).
#[derive(Debug, Clone)]
pub struct TerminalLaw {
    pub pi_t: TruncatedPoly,
    pub kappa_t: TruncatedPoly,
    pub cost_degree: usize,
    /// Sampled Lyapunov level `c*`, when estimated.
    pub level: Option<f64>,
    pub relative_degree: usize,
    pub fbi: FbiSolution,
    pub riccati: RiccatiSolution,
    pub series: CostSeries,
}

impl TerminalLaw {
    pub fn n(&self) -> usize {
        self.fbi.n()
    }

    pub fn k(&self) -> usize {
        self.fbi.k()
    }

    fn point(x: &[f64], w: &[f64]) -> Vec<f64> {
        x.iter().chain(w).copied().collect()
    }

    pub fn cost(&self, x: &[f64], w: &[f64]) -> f64 {
        self.pi_t.eval(&Self::point(x, w)).expect("law arity matches the model")
    }

    pub fn feedback(&self, x: &[f64], w: &[f64]) -> f64 {
        self.kappa_t
            .eval(&Self::point(x, w))
            .expect("law arity matches the model")
    }

    /// Gradient of `pi_T` with respect to `x` and `w` (concatenated).
    pub fn cost_gradient(&self, x: &[f64], w: &[f64]) -> Vec<f64> {
        self.pi_t
            .eval_gradient(&Self::point(x, w))
            .expect("law arity matches the model")
    }

    /// Summary lines followed by the polynomial blocks.
    pub fn to_debug_string(&self) -> String {
        let mut s = self.summary();
        write_matrix(&mut s, "P", &self.riccati.p);
        write_matrix(&mut s, "K", &self.riccati.k);
        let _ = writeln!(s, "[piT]");
        let _ = write!(s, "{}", self.pi_t);
        let _ = writeln!(s, "[kappaT]");
        let _ = write!(s, "{}", self.kappa_t);
        s
    }

    /// `key = value` summary.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "cost_degree = {}", self.cost_degree);
        let _ = writeln!(s, "feedback_degree = {}", self.cost_degree - 1);
        let _ = writeln!(s, "relative_degree = {}", self.relative_degree);
        match self.level {
            Some(c) => {
                let _ = writeln!(s, "level = {c:.16e}");
            }
            None => {
                let _ = writeln!(s, "level = unset");
            }
        }
        let spectrum: Vec<String> = self.riccati.closed_loop.iter().map(|&l| format_complex(l)).collect();
        let _ = writeln!(s, "closed_loop_spectrum = {}", spectrum.join("; "));
        let _ = writeln!(s, "closed_loop_radius = {:.16e}", self.riccati.spectral_radius());
        let _ = writeln!(s, "riccati_iterations = {}", self.riccati.iterations);
        let _ = writeln!(s, "riccati_residual = {:.16e}", self.riccati.residual);
        s
    }
}

/// Full pipeline: structure check, FBI through `cost_degree - 1`,
/// Riccati pair, corrections through `cost_degree`, assembly.
pub fn synthesize(m: &SystemModel, cost_degree: usize) -> Result<TerminalLaw, TerminalError> {
    if cost_degree < 2 || cost_degree > m.jet_cap() {
        return Err(TerminalError::Degree {
            degree: cost_degree,
            cap: m.jet_cap(),
        });
    }
    let report = structure_report(m)?;
    if !report.all_ok() {
        if report.hyperbolic_zero_dynamics && report.stabilizable && report.exo_neutral {
            warn!("terminal: zero dynamics are hyperbolic but not stable; the tracking manifold exists but the cost series needs minimum phase");
        }
        return Err(TerminalError::Structural(
            report.failures().into_iter().map(String::from).collect(),
        ));
    }
    let chain = build_output_chain(m, m.n().max(1) + 1)?;
    let fbi = solve_fbi(m, cost_degree - 1)?;
    let ld = linearize(m);
    let qc = transverse_quadratic_cost(&ld, chain.r)?;
    let ric = solve_dare(&ld, &qc)?;
    let tr = Transverse::new(m, &fbi, &chain)?;
    let mut series = CostSeries::quadratic(&tr, &ric);
    for d in 2..cost_degree {
        albrekht_correct(&tr, &ric, &mut series, d)?;
    }
    assemble_terminal(&fbi, &ric, series, chain.r, cost_degree)
}
