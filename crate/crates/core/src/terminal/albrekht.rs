use log::warn;

use super::{RiccatiSolution, TerminalError, TerminalLaw};
use crate::linalg::{self, Mat, Vector};
use crate::model::{OutputChain, SystemModel};
use crate::poly::{monomials_of_degree, Monomial, PolyVector, TruncatedPoly};
use crate::regulation::FbiSolution;

/// Transverse dynamics and cost in `(z, v, w)` (variables
/// `z1..zn, v, w1..wk`).
#[derive(Debug, Clone)]
pub struct Transverse {
    pub n: usize,
    pub k: usize,
    pub cap: usize,
    /// `f(z + theta, v + alpha, w) - theta(a(w))`.
    pub fbar: PolyVector,
    /// `(h^(0))^2 + (h^(r))^2` along the shift.
    pub lbar: TruncatedPoly,
    /// `a(w)` in `(z, v, w)`.
    pub a_zvw: PolyVector,
}

impl Transverse {
    pub fn new(m: &SystemModel, fbi: &FbiSolution, chain: &OutputChain) -> Result<Self, TerminalError> {
        let (n, k, cap) = (m.n(), m.k(), m.jet_cap());
        let arity = n + 1 + k;
        let w_slots: Vec<usize> = (0..k).map(|j| n + 1 + j).collect();
        let theta = fbi.theta().map(|p| p.with_cap(cap)).embed(arity, &w_slots)?;
        let alpha = fbi.alpha().with_cap(cap).embed(arity, &w_slots)?;
        let mut shift: Vec<TruncatedPoly> = (0..n).map(|i| &TruncatedPoly::var(arity, cap, i) + &theta[i]).collect();
        shift.push(&TruncatedPoly::var(arity, cap, n) + &alpha);
        shift.extend(w_slots.iter().map(|&j| TruncatedPoly::var(arity, cap, j)));
        let shift = PolyVector::new(shift)?;
        let theta_a = fbi
            .theta()
            .map(|p| p.with_cap(cap))
            .compose(m.a_jet())?
            .embed(arity, &w_slots)?;
        let f_on = m.f_jet().compose(&shift)?;
        let fbar = PolyVector::new(f_on.iter().zip(theta_a.iter()).map(|(a, b)| a - b).collect())?;
        let h0 = m.h_jet().compose(&shift)?;
        let hr = chain.top_jet().compose(&shift)?;
        let lbar = &(&h0 * &h0) + &(&hr * &hr);
        Ok(Transverse {
            n,
            k,
            cap,
            fbar,
            lbar,
            a_zvw: m.a_jet_xuw(),
        })
    }

    fn zw_arity(&self) -> usize {
        self.n + self.k
    }

    /// `[z, beta(z, w), w]` as a map from `(z, w)` into `(z, v, w)`.
    fn close_loop(&self, beta: &TruncatedPoly) -> PolyVector {
        let b = self.zw_arity();
        let mut inner: Vec<TruncatedPoly> = (0..self.n).map(|i| TruncatedPoly::var(b, self.cap, i)).collect();
        inner.push(beta.clone());
        inner.extend((0..self.k).map(|j| TruncatedPoly::var(b, self.cap, self.n + j)));
        PolyVector::new(inner).expect("closed-loop map shapes agree")
    }

    /// `rho(fbar(z, v, w), a(w)) + lbar(z, v, w)`.
    fn bellman(&self, rho: &TruncatedPoly) -> Result<TruncatedPoly, TerminalError> {
        let mut inner = self.fbar.entries().to_vec();
        inner.extend(self.a_zvw.iter().cloned());
        let next = rho.compose(&PolyVector::new(inner)?)?;
        Ok(&next + &self.lbar)
    }
}

/// Transverse cost `rho(z, w)` and feedback `beta(z, w)` in `(z, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSeries {
    pub rho: TruncatedPoly,
    pub beta: TruncatedPoly,
    /// Degree of `rho`; `beta` is one lower.
    pub degree: usize,
}

impl CostSeries {
    /// `rho = z'Pz`, `beta = Kz`.
    pub fn quadratic(tr: &Transverse, ric: &RiccatiSolution) -> Self {
        let (n, b, cap) = (tr.n, tr.zw_arity(), tr.cap);
        let mut rho = TruncatedPoly::zero(b, cap);
        for i in 0..n {
            for j in 0..n {
                let mut e = vec![0u32; b];
                e[i] += 1;
                e[j] += 1;
                rho.add_term(Monomial::from_exponents(&e), ric.p[(i, j)]);
            }
        }
        let mut coeffs = vec![0.0; b];
        for (i, c) in coeffs.iter_mut().take(n).enumerate() {
            *c = ric.k[(0, i)];
        }
        CostSeries {
            rho,
            beta: TruncatedPoly::linear(b, cap, &coeffs),
            degree: 2,
        }
    }
}

/// Adds `rho^[d+1]` and `beta^[d]` to `series` (complete through
/// `rho^[d]`, `beta^[d-1]`) and returns the new pair.
pub fn albrekht_correct(
    tr: &Transverse,
    ric: &RiccatiSolution,
    series: &mut CostSeries,
    d: usize,
) -> Result<(TruncatedPoly, TruncatedPoly), TerminalError> {
    if series.degree != d || d < 2 || d + 1 > tr.cap {
        return Err(TerminalError::Degree {
            degree: d + 1,
            cap: tr.cap,
        });
    }
    let (n, k, cap) = (tr.n, tr.k, tr.cap);
    let b = n + k;
    let cl = tr.close_loop(&series.beta);

    // cost: rho^[d+1](z,w) - rho^[d+1]((F+GK)z, Aw) = grade_{d+1}(E)
    let excess = tr.bellman(&series.rho)?.compose(&cl)?.grade(d + 1);
    let fk = closed_loop_matrix(tr, ric);
    let mut rows = vec![vec![0.0; b]; b];
    for (row, fk_row) in rows.iter_mut().zip(linalg::rows(&fk)) {
        row[..n].copy_from_slice(&fk_row);
    }
    let a_lin = linear_part(&tr.a_zvw, n + 1, k);
    for j in 0..k {
        rows[n + j][n..].copy_from_slice(&a_lin[j]);
    }
    let lin = PolyVector::linear_map(b, cap, &rows);
    let unknowns: Vec<Monomial> = monomials_of_degree(b, d + 1)
        .into_iter()
        .filter(|m| m.partial_degree(0..n) >= 1)
        .collect();
    let pure_w = excess
        .terms()
        .filter(|(m, _)| m.partial_degree(0..n) == 0)
        .fold(0.0, |a: f64, (_, c)| a.max(c.abs()));
    if pure_w > 1e-9 {
        warn!(
            "terminal: degree-{} cost equation has pure-w forcing {pure_w:.3e}; dropped",
            d + 1
        );
    }
    let pos = |m: &Monomial| unknowns.iter().position(|q| q == m);
    let size = unknowns.len();
    let mut op = Mat::zeros(size, size);
    for (c, mono) in unknowns.iter().enumerate() {
        op[(c, c)] += 1.0;
        let image = TruncatedPoly::from_terms(b, cap, [(*mono, 1.0)]).compose(&lin)?;
        for (im, ic) in image.terms() {
            let row = pos(im).expect("linear map preserves z-degree");
            op[(row, c)] -= ic;
        }
    }
    let mut rhs = Vector::zeros(size);
    for (mono, c) in excess.terms() {
        if let Some(row) = pos(mono) {
            rhs[row] = c;
        }
    }
    let solved = linalg::solve(&op, &rhs).ok_or(TerminalError::Resonance(d + 1))?;
    let rho_next = TruncatedPoly::from_terms(b, cap, unknowns.iter().zip(solved.x.iter()).map(|(m, &c)| (*m, c)));
    series.rho = &series.rho + &rho_next;

    // feedback from stationarity in v at v = beta_{<d}
    let stationarity = tr.bellman(&series.rho)?.partial(n)?.compose(&cl)?.grade(d);
    let curvature = 2.0 * ((ric_g(tr, n).transpose() * &ric.p * ric_g(tr, n))[(0, 0)] + r_weight(tr));
    let beta_next = stationarity.scale(-1.0 / curvature);
    series.beta = &series.beta + &beta_next;
    series.degree = d + 1;
    Ok((rho_next, beta_next))
}

/// `v`-column of the linear part of `fbar`.
fn ric_g(tr: &Transverse, n: usize) -> Mat {
    Mat::from_fn(n, 1, |i, _| tr.fbar[i].coeff(&Monomial::var(n)))
}

/// Coefficient of `v^2` in `lbar`.
fn r_weight(tr: &Transverse) -> f64 {
    let mut e = vec![0u32; tr.n + 1 + tr.k];
    e[tr.n] = 2;
    tr.lbar.coeff(&Monomial::from_exponents(&e))
}

/// `F + G K` read from the linear part of `fbar`.
fn closed_loop_matrix(tr: &Transverse, ric: &RiccatiSolution) -> Mat {
    let n = tr.n;
    let f = Mat::from_fn(n, n, |i, j| tr.fbar[i].coeff(&Monomial::var(j)));
    f + ric_g(tr, n) * &ric.k
}

/// Rows of the linear part of `p` in variables `offset..offset + count`.
fn linear_part(p: &PolyVector, offset: usize, count: usize) -> Vec<Vec<f64>> {
    p.iter()
        .map(|e| (0..count).map(|j| e.coeff(&Monomial::var(offset + j))).collect())
        .collect()
}

/// Maps the transverse series back to `(x, w)` and packages the law.
pub fn assemble_terminal(
    fbi: &FbiSolution,
    ric: &RiccatiSolution,
    series: CostSeries,
    relative_degree: usize,
    cost_degree: usize,
) -> Result<TerminalLaw, TerminalError> {
    let (n, k) = (fbi.n(), fbi.k());
    let cap = series.rho.degree_cap();
    let b = n + k;
    let w_slots: Vec<usize> = (0..k).map(|j| n + j).collect();
    let theta = fbi.theta().map(|p| p.with_cap(cap)).embed(b, &w_slots)?;
    let alpha = fbi.alpha().with_cap(cap).embed(b, &w_slots)?;
    let mut inner: Vec<TruncatedPoly> = (0..n).map(|i| &TruncatedPoly::var(b, cap, i) - &theta[i]).collect();
    inner.extend(w_slots.iter().map(|&j| TruncatedPoly::var(b, cap, j)));
    let inner = PolyVector::new(inner)?;
    let pi_t = series.rho.compose(&inner)?.truncate(cost_degree).with_cap(cost_degree);
    let kappa_t = (&alpha + &series.beta.compose(&inner)?)
        .truncate(cost_degree - 1)
        .with_cap(cost_degree);
    Ok(TerminalLaw {
        pi_t,
        kappa_t,
        cost_degree,
        level: None,
        relative_degree,
        fbi: fbi.clone(),
        riccati: ric.clone(),
        series,
    })
}
