//! Tracking-manifold equations: the linear Francis equations for
//! `(T, L)` and their graded higher-degree corrections `(theta^[d], alpha^[d])`.
//!
//! The tracking manifold `x = theta(w)` with feedforward `u = alpha(w)`
//! satisfies
//!
//! ```text
//! f(theta(w), alpha(w), w) = theta(a(w)),   h(theta(w), alpha(w), w) = 0.
//! ```
//!
//! Collecting terms of degree `d` gives a linear system in the
//! degree-`d` coefficients whose operator is
//! `(theta, alpha) -> (F theta + G alpha - theta(A w), H theta + J alpha)`.

use std::fmt::Write as _;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dsl::EvalError;
use crate::linalg::{self, Mat, Vector};
use crate::model::{linearize, LinearData, SystemModel};
use crate::poly::{monomials_of_degree, Monomial, PolyError, PolyVector, TruncatedPoly};

/// Condition numbers above this trigger a near-resonance warning.
pub const CONDITION_WARN: f64 = 1e8;
/// Accepted Frobenius residual of the Francis equations.
pub const FRANCIS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegulationError {
    #[error("regulation: resonance at degree {degree}; the graded FBI system is singular")]
    Resonance { degree: usize },
    #[error("regulation: Francis residual {0:e} exceeds tolerance")]
    FrancisResidual(f64),
    #[error("regulation: degree {degree} exceeds the cached jet degree {cap}")]
    DegreeAboveJetCap { degree: usize, cap: usize },
    #[error("regulation: degree {0} must follow a solution complete through degree {1}")]
    OutOfOrder(usize, usize),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Tracking manifold `theta(w) = T w + sum theta^[d](w)` and feedforward
/// `alpha(w) = L w + sum alpha^[d](w)`, both series in `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct FbiSolution {
    pub t: Mat,
    pub l: Mat,
    /// Degree-2 and higher part of `theta`.
    pub theta_hi: PolyVector,
    /// Degree-2 and higher part of `alpha`.
    pub alpha_hi: TruncatedPoly,
    pub degree: usize,
    /// Condition number of the system solved at each degree `1..=degree`.
    pub conditions: Vec<f64>,
}

impl FbiSolution {
    pub fn k(&self) -> usize {
        self.t.ncols()
    }

    pub fn n(&self) -> usize {
        self.t.nrows()
    }

    pub fn cap(&self) -> usize {
        self.alpha_hi.degree_cap()
    }

    /// Full `theta` through `degree`.
    pub fn theta(&self) -> PolyVector {
        let (k, cap) = (self.k(), self.cap());
        let rows = linalg::rows(&self.t);
        let lin = PolyVector::linear_map(k, cap, &rows);
        PolyVector::new(lin.iter().zip(self.theta_hi.iter()).map(|(a, b)| a + b).collect()).expect("theta shapes agree")
    }

    /// Full `alpha` through `degree`.
    pub fn alpha(&self) -> TruncatedPoly {
        let coeffs: Vec<f64> = (0..self.k()).map(|j| self.l[(0, j)]).collect();
        &TruncatedPoly::linear(self.k(), self.cap(), &coeffs) + &self.alpha_hi
    }

    /// Polynomial debug text: matrices, then `theta_i` and `alpha` blocks.
    pub fn to_debug_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "degree = {}", self.degree);
        write_matrix(&mut s, "T", &self.t);
        write_matrix(&mut s, "L", &self.l);
        for (i, p) in self.theta().iter().enumerate() {
            let _ = writeln!(s, "[theta{}]", i + 1);
            let _ = write!(s, "{p}");
        }
        let _ = writeln!(s, "[alpha]");
        let _ = write!(s, "{}", self.alpha());
        s
    }
}

pub(crate) fn write_matrix(s: &mut String, name: &str, m: &Mat) {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)] + 0.0)).collect();
        let _ = writeln!(s, "{name}[{}] = {}", i + 1, row.join(", "));
    }
}

fn checked_solve(a: &Mat, b: &Vector, degree: usize) -> Result<(Vector, f64), RegulationError> {
    let solved = linalg::solve(a, b).ok_or(RegulationError::Resonance { degree })?;
    if solved.condition > CONDITION_WARN {
        warn!(
            "regulation: degree-{degree} system has condition number {:.3e}; near resonance",
            solved.condition
        );
    }
    Ok((solved.x, solved.condition))
}

/// Solves `F T + G L - T A = -B`, `H T + J L = -D` by vectorization.
pub fn solve_francis_linear(ld: &LinearData) -> Result<(Mat, Mat), RegulationError> {
    let (t, l, _) = francis_with_condition(ld)?;
    Ok((t, l))
}

fn francis_with_condition(ld: &LinearData) -> Result<(Mat, Mat, f64), RegulationError> {
    let (n, k) = (ld.n(), ld.k());
    let size = (n + 1) * k;
    let ti = |p: usize, j: usize| p * k + j;
    let li = |j: usize| n * k + j;
    let mut a = Mat::zeros(size, size);
    let mut b = Vector::zeros(size);
    for j in 0..k {
        for i in 0..n {
            let row = i * k + j;
            for p in 0..n {
                a[(row, ti(p, j))] += ld.f[(i, p)];
            }
            a[(row, li(j))] += ld.g[(i, 0)];
            for q in 0..k {
                a[(row, ti(i, q))] -= ld.a[(q, j)];
            }
            b[row] = -ld.b[(i, j)];
        }
        let row = n * k + j;
        for p in 0..n {
            a[(row, ti(p, j))] += ld.h[(0, p)];
        }
        a[(row, li(j))] += ld.j;
        b[row] = -ld.d[(0, j)];
    }
    let (x, cond) = checked_solve(&a, &b, 1)?;
    let t = Mat::from_fn(n, k, |p, j| x[ti(p, j)]);
    let l = Mat::from_fn(1, k, |_, j| x[li(j)]);
    let res = francis_residual(ld, &t, &l);
    if res > FRANCIS_TOL {
        return Err(RegulationError::FrancisResidual(res));
    }
    Ok((t, l, cond))
}

/// `||F T + G L - T A + B||_F + ||H T + J L + D||_F`.
pub fn francis_residual(ld: &LinearData, t: &Mat, l: &Mat) -> f64 {
    let top = &ld.f * t + &ld.g * l - t * &ld.a + &ld.b;
    let bottom = &ld.h * t + l * ld.j + &ld.d;
    top.norm() + bottom.norm()
}

/// Linear Francis part as a degree-1 [`FbiSolution`] with jets at `cap`.
pub fn francis_solution(m: &SystemModel) -> Result<FbiSolution, RegulationError> {
    let (t, l, cond) = francis_with_condition(&linearize(m))?;
    let (n, k, cap) = (m.n(), m.k(), m.jet_cap());
    Ok(FbiSolution {
        t,
        l,
        theta_hi: PolyVector::new(vec![TruncatedPoly::zero(k, cap); n])?,
        alpha_hi: TruncatedPoly::zero(k, cap),
        degree: 1,
        conditions: vec![cond],
    })
}

/// `f(theta, alpha, w) - theta(a(w))` and `h(theta, alpha, w)` as series in `w`.
pub fn fbi_residual_series(
    m: &SystemModel,
    theta: &PolyVector,
    alpha: &TruncatedPoly,
) -> Result<(PolyVector, TruncatedPoly), RegulationError> {
    let k = m.k();
    let cap = m.jet_cap();
    let mut inner: Vec<TruncatedPoly> = theta.entries().to_vec();
    inner.push(alpha.clone());
    inner.extend((0..k).map(|j| TruncatedPoly::var(k, cap, j)));
    let inner = PolyVector::new(inner)?;
    let f_on = m.f_jet().compose(&inner)?;
    let theta_a = theta.compose(m.a_jet())?;
    let rf = PolyVector::new(f_on.iter().zip(theta_a.iter()).map(|(a, b)| a - b).collect())?;
    let rh = m.h_jet().compose(&inner)?;
    Ok((rf, rh))
}

/// Solves the degree-`d` graded equation given `sol` complete through
/// degree `d - 1`, returning `(theta^[d], alpha^[d])`.
pub fn solve_fbi_homogeneous(
    m: &SystemModel,
    sol: &FbiSolution,
    d: usize,
) -> Result<(PolyVector, TruncatedPoly), RegulationError> {
    let (pair, _) = fbi_homogeneous_with_condition(m, sol, d)?;
    Ok(pair)
}

fn fbi_homogeneous_with_condition(
    m: &SystemModel,
    sol: &FbiSolution,
    d: usize,
) -> Result<((PolyVector, TruncatedPoly), f64), RegulationError> {
    let cap = m.jet_cap();
    if d > cap {
        return Err(RegulationError::DegreeAboveJetCap { degree: d, cap });
    }
    if d < 2 || sol.degree + 1 != d {
        return Err(RegulationError::OutOfOrder(d, sol.degree));
    }
    let ld = linearize(m);
    let (n, k) = (m.n(), m.k());
    let (rf, rh) = fbi_residual_series(m, &sol.theta(), &sol.alpha())?;
    let monos = monomials_of_degree(k, d);
    let nm = monos.len();
    let index = |mono: &Monomial| monos.iter().position(|q| q == mono).expect("graded monomial");
    // unknowns: theta_i coefficients (i * nm + c), then alpha (n * nm + c)
    let size = (n + 1) * nm;
    let a_map = PolyVector::linear_map(k, cap, &linalg::rows(&ld.a));
    let mut op = Mat::zeros(size, size);
    for (c, mono) in monos.iter().enumerate() {
        let unit = TruncatedPoly::from_terms(k, cap, [(*mono, 1.0)]);
        let shifted = unit.compose(&a_map)?;
        for i in 0..n {
            let col = i * nm + c;
            for row_i in 0..n {
                op[(row_i * nm + c, col)] += ld.f[(row_i, i)];
            }
            op[(n * nm + c, col)] += ld.h[(0, i)];
            for (sm, sc) in shifted.terms() {
                op[(i * nm + index(sm), col)] -= sc;
            }
        }
        let col = n * nm + c;
        for row_i in 0..n {
            op[(row_i * nm + c, col)] += ld.g[(row_i, 0)];
        }
        op[(n * nm + c, col)] += ld.j;
    }
    let mut rhs = Vector::zeros(size);
    for i in 0..n {
        for (mono, c) in rf[i].grade(d).terms() {
            rhs[i * nm + index(mono)] = -c;
        }
    }
    for (mono, c) in rh.grade(d).terms() {
        rhs[n * nm + index(mono)] = -c;
    }
    let (x, cond) = checked_solve(&op, &rhs, d)?;
    let poly = |block: usize| {
        TruncatedPoly::from_terms(k, cap, monos.iter().enumerate().map(|(c, mo)| (*mo, x[block * nm + c])))
    };
    let theta_d = PolyVector::new((0..n).map(poly).collect())?;
    Ok(((theta_d, poly(n)), cond))
}

/// Francis solution followed by graded corrections through `degree`.
pub fn solve_fbi(m: &SystemModel, degree: usize) -> Result<FbiSolution, RegulationError> {
    let mut sol = francis_solution(m)?;
    for d in 2..=degree {
        let ((theta_d, alpha_d), cond) = fbi_homogeneous_with_condition(m, &sol, d)?;
        sol.theta_hi = PolyVector::new(sol.theta_hi.iter().zip(theta_d.iter()).map(|(a, b)| a + b).collect())?;
        sol.alpha_hi = &sol.alpha_hi + &alpha_d;
        sol.degree = d;
        sol.conditions.push(cond);
    }
    Ok(sol)
}

/// Largest coefficient of the grade-`d` FBI residual, for `d = 1..=sol.degree`.
pub fn graded_residuals(m: &SystemModel, sol: &FbiSolution) -> Result<Vec<f64>, RegulationError> {
    let (rf, rh) = fbi_residual_series(m, &sol.theta(), &sol.alpha())?;
    Ok((1..=sol.degree)
        .map(|d| {
            rf.iter()
                .map(|p| p.grade(d).max_abs_coeff())
                .fold(rh.grade(d).max_abs_coeff(), f64::max)
        })
        .collect())
}

/// Max over sampled unit directions of `||residual(eps w)|| / eps^(D+1)`
/// for `eps` in `{1e-1, 1e-2}`, using the true dynamics.
pub fn fbi_residual_order(m: &SystemModel, sol: &FbiSolution, samples: usize) -> Result<f64, RegulationError> {
    fbi_residual_order_seeded(m, sol, samples, 0)
}

pub fn fbi_residual_order_seeded(
    m: &SystemModel,
    sol: &FbiSolution,
    samples: usize,
    seed: u64,
) -> Result<f64, RegulationError> {
    let theta = sol.theta();
    let alpha = sol.alpha();
    let k = m.k();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples.max(1) {
        let mut dir: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        dir.iter_mut().for_each(|v| *v /= norm);
        for eps in [1e-1, 1e-2] {
            let w: Vec<f64> = dir.iter().map(|v| v * eps).collect();
            let x = theta.eval(&w)?;
            let u = alpha.eval(&w)?;
            let xn = m.step(&x, u, &w)?;
            let target = theta.eval(&m.exo(&w)?)?;
            let y = m.output(&x, u, &w)?;
            let res = xn.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>() + y * y;
            worst = worst.max(res.sqrt() / eps.powi(sol.degree as i32 + 1));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_output_chain;
    use crate::sim::{scenario_linear_example, scenario_pendulum};

    fn linear() -> SystemModel {
        SystemModel::from_scenario(&scenario_linear_example(), 4).unwrap()
    }

    fn pendulum() -> SystemModel {
        SystemModel::from_scenario(&scenario_pendulum(), 4).unwrap()
    }

    #[test]
    fn francis_linear_example() {
        let (t, l) = solve_francis_linear(&linearize(&linear())).unwrap();
        let t_want = Mat::from_row_slice(3, 2, &[1., 0., 0., -1., -0.2, -0.4]);
        let l_want = Mat::from_row_slice(1, 2, &[-0.8, 0.4]);
        assert!((t - t_want).amax() < 1e-12);
        assert!((l - l_want).amax() < 1e-12);
    }

    #[test]
    fn francis_homogeneous_is_zero() {
        let mut ld = linearize(&linear());
        ld.b.fill(0.0);
        ld.d.fill(0.0);
        let (t, l) = solve_francis_linear(&ld).unwrap();
        assert_eq!(t.amax(), 0.0);
        assert_eq!(l.amax(), 0.0);
    }

    #[test]
    fn francis_pendulum_residual() {
        let ld = linearize(&pendulum());
        let (t, l) = solve_francis_linear(&ld).unwrap();
        assert!(francis_residual(&ld, &t, &l) <= 1e-10);
    }

    #[test]
    fn francis_is_linear_in_the_forcing() {
        let mut ld = linearize(&pendulum());
        let (t, l) = solve_francis_linear(&ld).unwrap();
        ld.b *= 2.5;
        ld.d *= 2.5;
        let (t2, l2) = solve_francis_linear(&ld).unwrap();
        assert!((t2 - t * 2.5).amax() < 1e-12);
        assert!((l2 - l * 2.5).amax() < 1e-12);
    }

    #[test]
    fn resonance_is_reported() {
        // zero at 1 meets an exosystem pole at 1
        let mut ld = linearize(&linear());
        ld.a = Mat::identity(2, 2);
        ld.g = Mat::from_column_slice(3, 1, &[0., 1., -1.0]);
        assert!(matches!(
            solve_francis_linear(&ld),
            Err(RegulationError::Resonance { degree: 1 })
        ));
    }

    #[test]
    fn graded_degree_one_matches_francis() {
        // the graded solver applied at degree 1 from the empty solution
        let m = pendulum();
        let sol = francis_solution(&m).unwrap();
        let (rf, rh) = fbi_residual_series(&m, &sol.theta(), &sol.alpha()).unwrap();
        for p in rf.iter() {
            assert!(p.grade(1).max_abs_coeff() < 1e-12);
        }
        assert!(rh.grade(1).max_abs_coeff() < 1e-12);
    }

    #[test]
    fn linear_plant_has_no_corrections() {
        let m = linear();
        let sol = francis_solution(&m).unwrap();
        let (theta2, alpha2) = solve_fbi_homogeneous(&m, &sol, 2).unwrap();
        assert!(theta2.iter().all(|p| p.is_zero()));
        assert!(alpha2.is_zero());
        let full = solve_fbi(&m, 1).unwrap();
        assert!(fbi_residual_order(&m, &full, 16).unwrap() < 1e-12);
    }

    #[test]
    fn pendulum_graded_residuals_vanish() {
        let m = pendulum();
        let sol = solve_fbi(&m, 3).unwrap();
        assert!(!sol.theta_hi.iter().all(|p| p.is_zero()) || !sol.alpha_hi.is_zero());
        for (d, r) in graded_residuals(&m, &sol).unwrap().into_iter().enumerate() {
            assert!(r <= 1e-9, "degree {}: {r:e}", d + 1);
        }
        let ratio = fbi_residual_order(&m, &sol, 32).unwrap();
        assert!(ratio.is_finite() && ratio < 1e3, "{ratio}");
    }

    #[test]
    fn pendulum_residual_ratio_is_bounded() {
        let m = pendulum();
        let sol = solve_fbi(&m, 3).unwrap();
        let theta = sol.theta();
        let alpha = sol.alpha();
        let dir = [0.6, 0.8];
        let ratio = |eps: f64| {
            let w = [dir[0] * eps, dir[1] * eps];
            let x = theta.eval(&w).unwrap();
            let u = alpha.eval(&w).unwrap();
            (m.output(&x, u, &w).unwrap().powi(2)
                + m.step(&x, u, &w)
                    .unwrap()
                    .iter()
                    .zip(theta.eval(&m.exo(&w).unwrap()).unwrap())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>())
            .sqrt()
                / eps.powi(4)
        };
        let (coarse, fine) = (ratio(1e-1), ratio(1e-2));
        assert!(fine.is_finite() && fine <= 2.0 * coarse, "{coarse} {fine}");
    }

    #[test]
    fn tracking_manifold_zeroes_the_chain() {
        let m = pendulum();
        let sol = solve_fbi(&m, 3).unwrap();
        let chain = build_output_chain(&m, 4).unwrap();
        let (n, k, cap) = (m.n(), m.k(), m.jet_cap());
        let mut inner: Vec<TruncatedPoly> = sol.theta().into_entries();
        inner.push(sol.alpha());
        inner.extend((0..k).map(|j| TruncatedPoly::var(k, cap, j)));
        let inner = PolyVector::new(inner).unwrap();
        for (j, jet) in chain.jets.iter().enumerate() {
            let on = jet.compose(&inner).unwrap();
            assert!(on.truncate(3).max_abs_coeff() < 1e-9, "h^({j})");
        }
        assert_eq!(n, 2);
    }

    #[test]
    fn debug_string_lists_blocks() {
        let m = linear();
        let s = solve_fbi(&m, 2).unwrap().to_debug_string();
        assert!(s.starts_with("degree = 2\nT[1] = 1.0000000000000000e0, 0.0000000000000000e0\nT[2] = "));
        assert!(s.contains("[theta3]\n-2.000000000000000e-1 * z1\n"));
        assert!(s.contains("[alpha]\n-8.000000000000000e-1 * z1\n4.000000000000000e-1 * z2\n"));
    }

    #[test]
    fn out_of_order_degree_is_rejected() {
        let m = pendulum();
        let sol = francis_solution(&m).unwrap();
        assert!(matches!(
            solve_fbi_homogeneous(&m, &sol, 3),
            Err(RegulationError::OutOfOrder(3, 1))
        ));
    }
}
