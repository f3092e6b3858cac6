//! Multivariate polynomials truncated at a total-degree cap.
//!
//! Every series object in the crate (plant jets, tracking-manifold
//! corrections, terminal costs and feedbacks) is a [`TruncatedPoly`].
//! Terms are kept in a sparse map ordered graded-lexicographically, so
//! iteration visits degree 0 first and products can stop as soon as the
//! combined degree passes the cap.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

/// Largest supported variable arity.
pub const MAX_VARS: usize = 16;

/// Coefficients smaller than this in magnitude are dropped after every
/// operation.
pub const PRUNE_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolyError {
    #[error("poly: arity mismatch ({0} vs {1})")]
    ArityMismatch(usize, usize),
    #[error("poly: degree cap mismatch ({0} vs {1})")]
    CapMismatch(usize, usize),
    #[error("poly: expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("poly: variable index {index} out of range for arity {arity}")]
    IndexOutOfRange { index: usize, arity: usize },
    #[error("poly: arity {0} exceeds the supported maximum of {MAX_VARS}")]
    TooManyVariables(usize),
    #[error("poly: division by a series with zero constant term")]
    SingularDivision,
}

/// Exponent vector of a monomial.
///
/// Ordering is graded: lower total degree first, then lexicographically
/// descending exponents (`z1^2` before `z1 z2` before `z2^2`).
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Monomial {
    exps: [u8; MAX_VARS],
    deg: u8,
}

impl Monomial {
    pub fn one() -> Self {
        Monomial {
            exps: [0; MAX_VARS],
            deg: 0,
        }
    }

    pub fn var(index: usize) -> Self {
        let mut m = Self::one();
        m.exps[index] = 1;
        m.deg = 1;
        m
    }

    pub fn from_exponents(exps: &[u32]) -> Self {
        assert!(exps.len() <= MAX_VARS, "too many exponents");
        let mut m = Self::one();
        for (slot, &e) in m.exps.iter_mut().zip(exps) {
            *slot = u8::try_from(e).expect("exponent too large");
        }
        m.deg = exps.iter().sum::<u32>() as u8;
        m
    }

    pub fn degree(&self) -> usize {
        self.deg as usize
    }

    pub fn exponent(&self, index: usize) -> u32 {
        self.exps[index] as u32
    }

    /// Exponents of the first `arity` variables.
    pub fn exponents(&self, arity: usize) -> Vec<u32> {
        self.exps[..arity].iter().map(|&e| e as u32).collect()
    }

    /// Sum of the exponents of variables in `range`.
    pub fn partial_degree(&self, range: std::ops::Range<usize>) -> usize {
        self.exps[range].iter().map(|&e| e as usize).sum()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut m = *self;
        for (a, b) in m.exps.iter_mut().zip(other.exps.iter()) {
            *a += *b;
        }
        m.deg += other.deg;
        m
    }

    fn lowered(&self, index: usize) -> Monomial {
        let mut m = *self;
        m.exps[index] -= 1;
        m.deg -= 1;
        m
    }

    fn first_var(&self) -> Option<usize> {
        self.exps.iter().position(|&e| e > 0)
    }

    fn eval(&self, point: &[f64]) -> f64 {
        point
            .iter()
            .zip(self.exps.iter())
            .filter(|(_, &e)| e > 0)
            .map(|(x, &e)| x.powi(e as i32))
            .product()
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.deg.cmp(&other.deg).then_with(|| other.exps.cmp(&self.exps))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &self.exps[..])
    }
}

/// All monomials of total degree exactly `degree` in `arity` variables,
/// in graded-lex order.
pub fn monomials_of_degree(arity: usize, degree: usize) -> Vec<Monomial> {
    fn fill(var: usize, arity: usize, remaining: usize, cur: &mut [u32], out: &mut Vec<Monomial>) {
        if var + 1 == arity {
            cur[var] = remaining as u32;
            out.push(Monomial::from_exponents(cur));
            return;
        }
        for e in (0..=remaining).rev() {
            cur[var] = e as u32;
            fill(var + 1, arity, remaining - e, cur, out);
        }
        cur[var] = 0;
    }
    let mut out = Vec::new();
    if arity == 0 {
        if degree == 0 {
            out.push(Monomial::one());
        }
        return out;
    }
    let mut cur = vec![0u32; arity];
    fill(0, arity, degree, &mut cur, &mut out);
    out
}

/// A polynomial in `arity` variables with every term of total degree at
/// most `degree_cap`.
#[derive(Clone, PartialEq)]
pub struct TruncatedPoly {
    arity: usize,
    cap: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl TruncatedPoly {
    pub fn zero(arity: usize, cap: usize) -> Self {
        assert!(arity <= MAX_VARS, "arity {arity} exceeds {MAX_VARS}");
        TruncatedPoly {
            arity,
            cap,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(arity: usize, cap: usize, c: f64) -> Self {
        let mut p = Self::zero(arity, cap);
        p.add_term(Monomial::one(), c);
        p
    }

    /// The coordinate function `z_{index+1}`.
    pub fn var(arity: usize, cap: usize, index: usize) -> Self {
        assert!(index < arity, "variable index out of range");
        let mut p = Self::zero(arity, cap);
        if cap >= 1 {
            p.add_term(Monomial::var(index), 1.0);
        }
        p
    }

    /// Linear form `sum_i coeffs[i] * z_i`.
    pub fn linear(arity: usize, cap: usize, coeffs: &[f64]) -> Self {
        assert_eq!(coeffs.len(), arity);
        let mut p = Self::zero(arity, cap);
        if cap >= 1 {
            for (i, &c) in coeffs.iter().enumerate() {
                p.add_term(Monomial::var(i), c);
            }
        }
        p
    }

    pub fn from_terms<I>(arity: usize, cap: usize, terms: I) -> Self
    where
        I: IntoIterator<Item = (Monomial, f64)>,
    {
        let mut p = Self::zero(arity, cap);
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn degree_cap(&self) -> usize {
        self.cap
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> + '_ {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn coeff(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn constant_term(&self) -> f64 {
        self.coeff(&Monomial::one())
    }

    /// Largest total degree with a nonzero coefficient.
    pub fn degree(&self) -> Option<usize> {
        self.terms.keys().next_back().map(Monomial::degree)
    }

    /// Smallest total degree with a nonzero coefficient.
    pub fn valuation(&self) -> Option<usize> {
        self.terms.keys().next().map(Monomial::degree)
    }

    /// Largest absolute coefficient.
    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |acc, c| acc.max(c.abs()))
    }

    /// Adds `c` to the coefficient of `m`, keeping canonical form.
    pub fn add_term(&mut self, m: Monomial, c: f64) {
        if m.degree() > self.cap {
            return;
        }
        let entry = self.terms.entry(m).or_insert(0.0);
        *entry += c;
        if entry.abs() < PRUNE_TOL {
            self.terms.remove(&m);
        }
    }

    fn check_compatible(&self, other: &Self) -> Result<(), PolyError> {
        if self.arity != other.arity {
            return Err(PolyError::ArityMismatch(self.arity, other.arity));
        }
        if self.cap != other.cap {
            return Err(PolyError::CapMismatch(self.cap, other.cap));
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (m, c) in other.terms() {
            out.add_term(*m, c);
        }
        Ok(out)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (m, c) in other.terms() {
            out.add_term(*m, -c);
        }
        Ok(out)
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_compatible(other)?;
        let mut acc: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (ma, &ca) in &self.terms {
            let room = self.cap - ma.degree();
            for (mb, &cb) in &other.terms {
                if mb.degree() > room {
                    break;
                }
                *acc.entry(ma.mul(mb)).or_insert(0.0) += ca * cb;
            }
        }
        acc.retain(|_, c| c.abs() >= PRUNE_TOL);
        Ok(TruncatedPoly {
            arity: self.arity,
            cap: self.cap,
            terms: acc,
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = Self::zero(self.arity, self.cap);
        for (m, c) in self.terms() {
            out.add_term(*m, c * s);
        }
        out
    }

    pub fn powi(&self, k: u32) -> Self {
        let mut result = Self::constant(self.arity, self.cap, 1.0);
        for _ in 0..k {
            result = &result * self;
        }
        result
    }

    /// Homogeneous part of degree `d` (zero if `d` exceeds the cap).
    pub fn grade(&self, d: usize) -> Self {
        Self::from_terms(
            self.arity,
            self.cap,
            self.terms().filter(|(m, _)| m.degree() == d).map(|(m, c)| (*m, c)),
        )
    }

    /// Drops every term of degree above `d`; the cap is unchanged.
    pub fn truncate(&self, d: usize) -> Self {
        Self::from_terms(
            self.arity,
            self.cap,
            self.terms().filter(|(m, _)| m.degree() <= d).map(|(m, c)| (*m, c)),
        )
    }

    /// Same terms under a different cap (terms above a lowered cap drop).
    pub fn with_cap(&self, cap: usize) -> Self {
        Self::from_terms(self.arity, cap, self.terms().map(|(m, c)| (*m, c)))
    }

    /// Re-indexes into a larger variable space: variable `i` of `self`
    /// becomes variable `mapping[i]` of the result.
    pub fn embed(&self, arity: usize, mapping: &[usize]) -> Result<Self, PolyError> {
        if mapping.len() != self.arity {
            return Err(PolyError::LengthMismatch {
                expected: self.arity,
                got: mapping.len(),
            });
        }
        if arity > MAX_VARS {
            return Err(PolyError::TooManyVariables(arity));
        }
        if let Some(&bad) = mapping.iter().find(|&&j| j >= arity) {
            return Err(PolyError::IndexOutOfRange { index: bad, arity });
        }
        let mut out = Self::zero(arity, self.cap);
        for (m, c) in self.terms() {
            let mut exps = vec![0u32; arity];
            for (i, &j) in mapping.iter().enumerate() {
                exps[j] += m.exponent(i);
            }
            out.add_term(Monomial::from_exponents(&exps), c);
        }
        Ok(out)
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64, PolyError> {
        if point.len() != self.arity {
            return Err(PolyError::LengthMismatch {
                expected: self.arity,
                got: point.len(),
            });
        }
        Ok(self.terms().map(|(m, c)| c * m.eval(point)).sum())
    }

    /// Gradient evaluated at `point`.
    pub fn eval_gradient(&self, point: &[f64]) -> Result<Vec<f64>, PolyError> {
        if point.len() != self.arity {
            return Err(PolyError::LengthMismatch {
                expected: self.arity,
                got: point.len(),
            });
        }
        let mut grad = vec![0.0; self.arity];
        for (m, c) in self.terms() {
            for (i, g) in grad.iter_mut().enumerate() {
                let e = m.exponent(i);
                if e == 0 {
                    continue;
                }
                *g += c * e as f64 * m.lowered(i).eval(point);
            }
        }
        Ok(grad)
    }

    /// Formal partial derivative with respect to variable `index`.
    pub fn partial(&self, index: usize) -> Result<Self, PolyError> {
        if index >= self.arity {
            return Err(PolyError::IndexOutOfRange {
                index,
                arity: self.arity,
            });
        }
        let mut out = Self::zero(self.arity, self.cap);
        for (m, c) in self.terms() {
            let e = m.exponent(index);
            if e > 0 {
                out.add_term(m.lowered(index), c * e as f64);
            }
        }
        Ok(out)
    }

    /// Substitutes `inner[i]` for variable `i`; the result lives in the
    /// variable space of `inner`.
    pub fn compose(&self, inner: &PolyVector) -> Result<Self, PolyError> {
        if inner.len() != self.arity {
            return Err(PolyError::LengthMismatch {
                expected: self.arity,
                got: inner.len(),
            });
        }
        let (arity, cap) = (inner.arity(), inner.degree_cap());
        if cap != self.cap {
            return Err(PolyError::CapMismatch(self.cap, cap));
        }
        let valuations: Vec<Option<usize>> = inner.iter().map(|p| p.valuation()).collect();
        let mut memo: HashMap<Monomial, TruncatedPoly> = HashMap::new();
        memo.insert(Monomial::one(), Self::constant(arity, cap, 1.0));
        let mut out = Self::zero(arity, cap);
        for (m, c) in self.terms() {
            // skip products whose lowest possible degree already exceeds the cap
            let mut low = 0usize;
            let mut vanishes = false;
            for (i, v) in valuations.iter().enumerate() {
                let e = m.exponent(i) as usize;
                if e == 0 {
                    continue;
                }
                match v {
                    Some(v) => low += v * e,
                    None => vanishes = true,
                }
            }
            if vanishes || low > cap {
                continue;
            }
            let prod = power_product(m, inner, &mut memo);
            for (pm, pc) in prod.terms() {
                out.add_term(*pm, c * pc);
            }
        }
        Ok(out)
    }

    /// Taylor expansion of `1/self` (requires a nonzero constant term).
    pub fn recip(&self) -> Result<Self, PolyError> {
        let c = self.constant_term();
        if c.abs() < PRUNE_TOL {
            return Err(PolyError::SingularDivision);
        }
        // 1/(c + q) = (1/c) * sum_j (-q/c)^j
        let ratio = self.without_constant().scale(-1.0 / c);
        Ok(self.series_in(&ratio, |_| 1.0).scale(1.0 / c))
    }

    pub fn try_div(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_compatible(other)?;
        self.try_mul(&other.recip()?)
    }

    pub fn sin(&self) -> Self {
        let c = self.constant_term();
        let q = self.without_constant();
        let cos_q = self.series_in(&q, cos_coeff);
        let sin_q = self.series_in(&q, sin_coeff);
        &cos_q.scale(c.sin()) + &sin_q.scale(c.cos())
    }

    pub fn cos(&self) -> Self {
        let c = self.constant_term();
        let q = self.without_constant();
        let cos_q = self.series_in(&q, cos_coeff);
        let sin_q = self.series_in(&q, sin_coeff);
        &cos_q.scale(c.cos()) - &sin_q.scale(c.sin())
    }

    pub fn exp(&self) -> Self {
        let c = self.constant_term();
        let q = self.without_constant();
        self.series_in(&q, |j| 1.0 / factorial(j)).scale(c.exp())
    }

    fn without_constant(&self) -> Self {
        let mut q = self.clone();
        q.terms.remove(&Monomial::one());
        q
    }

    /// `sum_j coeff(j) q^j` for `q` with zero constant term.
    fn series_in(&self, q: &Self, coeff: impl Fn(usize) -> f64) -> Self {
        let mut out = Self::constant(self.arity, self.cap, coeff(0));
        let mut power = Self::constant(self.arity, self.cap, 1.0);
        for j in 1..=self.cap {
            power = &power * q;
            if power.is_zero() {
                break;
            }
            let cj = coeff(j);
            if cj != 0.0 {
                out = &out + &power.scale(cj);
            }
        }
        out
    }
}

fn factorial(j: usize) -> f64 {
    (1..=j).map(|i| i as f64).product()
}

fn sin_coeff(j: usize) -> f64 {
    if j.is_multiple_of(2) {
        0.0
    } else if (j / 2).is_multiple_of(2) {
        1.0 / factorial(j)
    } else {
        -1.0 / factorial(j)
    }
}

fn cos_coeff(j: usize) -> f64 {
    if j % 2 == 1 {
        0.0
    } else if (j / 2).is_multiple_of(2) {
        1.0 / factorial(j)
    } else {
        -1.0 / factorial(j)
    }
}

fn power_product(m: &Monomial, inner: &PolyVector, memo: &mut HashMap<Monomial, TruncatedPoly>) -> TruncatedPoly {
    if let Some(p) = memo.get(m) {
        return p.clone();
    }
    let i = m.first_var().expect("degree-zero monomial is memoized");
    let rest = power_product(&m.lowered(i), inner, memo);
    let p = &rest * &inner[i];
    memo.insert(*m, p.clone());
    p
}

impl fmt::Debug for TruncatedPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TruncatedPoly(arity={}, cap={}) {{ ", self.arity, self.cap)?;
        for (m, c) in self.terms() {
            write!(f, "{c:+e}*{:?} ", m.exponents(self.arity))?;
        }
        write!(f, "}}")
    }
}

/// One `coef * z1^a z2^b` line per term in graded-lex order.
impl fmt::Display for TruncatedPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (m, c) in self.terms() {
            write!(f, "{c:.15e} *")?;
            if m.degree() == 0 {
                write!(f, " 1")?;
            }
            for i in 0..self.arity {
                match m.exponent(i) {
                    0 => {}
                    1 => write!(f, " z{}", i + 1)?,
                    e => write!(f, " z{}^{e}", i + 1)?,
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

macro_rules! panicking_op {
    ($trait:ident, $method:ident, $checked:ident) => {
        impl $trait<&TruncatedPoly> for &TruncatedPoly {
            type Output = TruncatedPoly;
            fn $method(self, rhs: &TruncatedPoly) -> TruncatedPoly {
                self.$checked(rhs).expect("incompatible polynomials")
            }
        }
    };
}

panicking_op!(Add, add, try_add);
panicking_op!(Sub, sub, try_sub);
panicking_op!(Mul, mul, try_mul);

impl Neg for &TruncatedPoly {
    type Output = TruncatedPoly;
    fn neg(self) -> TruncatedPoly {
        self.scale(-1.0)
    }
}

/// An ordered list of polynomials sharing arity and cap.
#[derive(Clone, PartialEq, Debug)]
pub struct PolyVector {
    arity: usize,
    cap: usize,
    entries: Vec<TruncatedPoly>,
}

impl PolyVector {
    pub fn new(entries: Vec<TruncatedPoly>) -> Result<Self, PolyError> {
        let first = entries
            .first()
            .ok_or(PolyError::LengthMismatch { expected: 1, got: 0 })?;
        let (arity, cap) = (first.arity, first.cap);
        for p in &entries {
            if p.arity != arity {
                return Err(PolyError::ArityMismatch(arity, p.arity));
            }
            if p.cap != cap {
                return Err(PolyError::CapMismatch(cap, p.cap));
            }
        }
        Ok(PolyVector { arity, cap, entries })
    }

    /// Empty vector with explicit arity and cap.
    pub fn empty(arity: usize, cap: usize) -> Self {
        PolyVector {
            arity,
            cap,
            entries: Vec::new(),
        }
    }

    /// The identity map `(z1, .., z_arity)`.
    pub fn identity(arity: usize, cap: usize) -> Self {
        PolyVector {
            arity,
            cap,
            entries: (0..arity).map(|i| TruncatedPoly::var(arity, cap, i)).collect(),
        }
    }

    /// Linear map `z -> M z` given by row-major `rows`.
    pub fn linear_map(arity: usize, cap: usize, rows: &[Vec<f64>]) -> Self {
        PolyVector {
            arity,
            cap,
            entries: rows.iter().map(|r| TruncatedPoly::linear(arity, cap, r)).collect(),
        }
    }

    pub fn push(&mut self, p: TruncatedPoly) -> Result<(), PolyError> {
        if p.arity != self.arity {
            return Err(PolyError::ArityMismatch(self.arity, p.arity));
        }
        if p.cap != self.cap {
            return Err(PolyError::CapMismatch(self.cap, p.cap));
        }
        self.entries.push(p);
        Ok(())
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn degree_cap(&self) -> usize {
        self.cap
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TruncatedPoly> {
        self.entries.iter()
    }

    pub fn entries(&self) -> &[TruncatedPoly] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<TruncatedPoly> {
        self.entries
    }

    pub fn eval(&self, point: &[f64]) -> Result<Vec<f64>, PolyError> {
        self.entries.iter().map(|p| p.eval(point)).collect()
    }

    /// Composes every entry with `inner`.
    pub fn compose(&self, inner: &PolyVector) -> Result<PolyVector, PolyError> {
        let entries = self
            .entries
            .iter()
            .map(|p| p.compose(inner))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PolyVector {
            arity: inner.arity,
            cap: inner.cap,
            entries,
        })
    }

    pub fn map(&self, f: impl Fn(&TruncatedPoly) -> TruncatedPoly) -> PolyVector {
        if self.entries.is_empty() {
            return self.clone();
        }
        PolyVector::new(self.entries.iter().map(f).collect()).expect("map must preserve shape")
    }

    pub fn embed(&self, arity: usize, mapping: &[usize]) -> Result<PolyVector, PolyError> {
        let entries = self
            .entries
            .iter()
            .map(|p| p.embed(arity, mapping))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PolyVector {
            arity,
            cap: self.cap,
            entries,
        })
    }
}

impl std::ops::Index<usize> for PolyVector {
    type Output = TruncatedPoly;
    fn index(&self, i: usize) -> &TruncatedPoly {
        &self.entries[i]
    }
}

impl fmt::Display for PolyVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.entries.iter().enumerate() {
            writeln!(f, "[{}]", i + 1)?;
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z(arity: usize, cap: usize, i: usize) -> TruncatedPoly {
        TruncatedPoly::var(arity, cap, i)
    }

    fn one(arity: usize, cap: usize) -> TruncatedPoly {
        TruncatedPoly::constant(arity, cap, 1.0)
    }

    #[test]
    fn add_examples() {
        let z1 = z(1, 2, 0);
        assert!((&z1 + &(-&z1)).is_zero());

        let sum = &(&one(1, 2) + &z1) + &(&z1 * &z1);
        let expected = TruncatedPoly::from_terms(
            1,
            2,
            [
                (Monomial::one(), 1.0),
                (Monomial::var(0), 1.0),
                (Monomial::from_exponents(&[2]), 1.0),
            ],
        );
        assert_eq!(sum, expected);

        let s = &z1.scale(0.0108) + &z1.scale(0.0499);
        assert!((s.coeff(&Monomial::var(0)) - 0.0607).abs() < 1e-15);
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn mismatch_is_structural_error() {
        let a = z(1, 2, 0);
        let b = z(2, 2, 0);
        assert_eq!(a.try_add(&b), Err(PolyError::ArityMismatch(1, 2)));
        let c = z(1, 3, 0);
        assert_eq!(a.try_mul(&c), Err(PolyError::CapMismatch(2, 3)));
    }

    #[test]
    fn mul_examples() {
        let p = &one(1, 2) + &z(1, 2, 0);
        let sq = &p * &p;
        assert_eq!(sq.coeff(&Monomial::one()), 1.0);
        assert_eq!(sq.coeff(&Monomial::var(0)), 2.0);
        assert_eq!(sq.coeff(&Monomial::from_exponents(&[2])), 1.0);

        assert!((&z(2, 1, 0) * &z(2, 1, 1)).is_zero());

        // (1 + z + z^2)(1 - z) = 1 - z^3, truncated at 2
        let z1 = z(1, 2, 0);
        let a = &(&one(1, 2) + &z1) + &(&z1 * &z1);
        let b = &one(1, 2) - &z1;
        assert_eq!(&a * &b, one(1, 2));
    }

    #[test]
    fn compose_examples() {
        // w1^2 o (w2, w1) = w2^2
        let w1 = z(2, 2, 0);
        let w2 = z(2, 2, 1);
        let outer = &w1 * &w1;
        let inner = PolyVector::new(vec![w2.clone(), w1.clone()]).unwrap();
        assert_eq!(outer.compose(&inner).unwrap(), &w2 * &w2);

        let h = std::f64::consts::SQRT_2 / 2.0;
        let rot = PolyVector::linear_map(2, 2, &[vec![h, -h], vec![h, h]]);
        let got = w1.compose(&rot).unwrap();
        assert_eq!(got, TruncatedPoly::linear(2, 2, &[h, -h]));

        // z^2 o (z + z^2) = z^2 + 2 z^3 at cap 3
        let z1 = z(1, 3, 0);
        let outer = &z1 * &z1;
        let inner = PolyVector::new(vec![&z1 + &(&z1 * &z1)]).unwrap();
        let got = outer.compose(&inner).unwrap();
        assert_eq!(got.coeff(&Monomial::from_exponents(&[2])), 1.0);
        assert_eq!(got.coeff(&Monomial::from_exponents(&[3])), 2.0);
        assert_eq!(got.len(), 2);

        let short = PolyVector::new(vec![z1.clone()]).unwrap();
        assert!(matches!(w1.compose(&short), Err(PolyError::LengthMismatch { .. })));
    }

    #[test]
    fn partial_examples() {
        let z1 = z(2, 2, 0);
        let z2 = z(2, 2, 1);
        assert_eq!((&z1 * &z1).partial(0).unwrap(), z1.scale(2.0));
        assert_eq!((&z1 * &z2).partial(1).unwrap(), z1);
        // d/dv (z3 + v)^2 in (z3, v)
        let s = &z1 + &z2;
        assert_eq!((&s * &s).partial(1).unwrap(), s.scale(2.0));
        assert!(matches!(
            z1.partial(2),
            Err(PolyError::IndexOutOfRange { index: 2, arity: 2 })
        ));
    }

    #[test]
    fn grade_examples() {
        let z1 = z(1, 3, 0);
        let p = &(&one(1, 3) + &z1) + &(&z1 * &z1);
        assert_eq!(p.grade(1), z1);
        assert!(p.grade(3).is_zero());
        let cube = (&one(1, 3) + &z1).powi(3);
        assert_eq!(cube.grade(2), (&z1 * &z1).scale(3.0));
        assert!(cube.grade(7).is_zero());
    }

    #[test]
    fn eval_examples() {
        let z1 = z(2, 2, 0);
        let z2 = z(2, 2, 1);
        let p = &(&z1 * &z1) + &(&z2 * &z2);
        assert_eq!(p.eval(&[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(TruncatedPoly::zero(2, 2).eval(&[3.0, 4.0]).unwrap(), 0.0);
        let q = (&one(1, 2) + &z(1, 2, 0)).powi(2);
        assert!((q.eval(&[0.5]).unwrap() - 2.25).abs() < 1e-15);
        assert!(p.eval(&[1.0]).is_err());
    }

    #[test]
    fn transcendental_series() {
        let x = z(1, 5, 0);
        let s = x.sin();
        assert!((s.coeff(&Monomial::from_exponents(&[3])) + 1.0 / 6.0).abs() < 1e-15);
        assert!((s.coeff(&Monomial::from_exponents(&[5])) - 1.0 / 120.0).abs() < 1e-15);
        // shifted: cos(1 + x) = cos 1 - sin 1 x - cos 1 x^2 / 2 + ...
        let c = (&one(1, 5) + &x).cos();
        assert!((c.constant_term() - 1f64.cos()).abs() < 1e-15);
        assert!((c.coeff(&Monomial::var(0)) + 1f64.sin()).abs() < 1e-15);
        assert!((c.coeff(&Monomial::from_exponents(&[2])) + 1f64.cos() / 2.0).abs() < 1e-15);
        let e = (&one(1, 5) + &x).exp();
        assert!((e.coeff(&Monomial::from_exponents(&[4])) - 1f64.exp() / 24.0).abs() < 1e-14);
        // 1/(2 - x) = 1/2 + x/4 + x^2/8 + ...
        let r = (&one(1, 5).scale(2.0) - &x).recip().unwrap();
        assert!((r.coeff(&Monomial::from_exponents(&[3])) - 1.0 / 16.0).abs() < 1e-15);
        assert_eq!(x.recip(), Err(PolyError::SingularDivision));
    }

    #[test]
    fn graded_lex_display() {
        let z1 = z(2, 2, 0);
        let z2 = z(2, 2, 1);
        let p = &(&(&z2 * &z2) + &(&z1 * &z2)) + &(&z1.scale(-2.0) + &one(2, 2));
        let text = p.to_string();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].ends_with("* 1"));
        assert!(lines[1].starts_with("-2.0") && lines[1].ends_with("* z1"));
        assert!(lines[2].ends_with("* z1 z2"));
        assert!(lines[3].ends_with("* z2^2"));
    }

    #[test]
    fn monomial_enumeration() {
        let ms = monomials_of_degree(3, 2);
        assert_eq!(ms.len(), 6);
        assert!(ms.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(ms[0].exponents(3), vec![2, 0, 0]);
        assert_eq!(ms[5].exponents(3), vec![0, 0, 2]);
        assert_eq!(monomials_of_degree(2, 0).len(), 1);
    }

    #[test]
    fn embed_reindexes() {
        // w1 * w2 in w-space lifted into (x1, x2, u, w1, w2)
        let p = &z(2, 2, 0) * &z(2, 2, 1);
        let lifted = p.embed(5, &[3, 4]).unwrap();
        assert_eq!(lifted.coeff(&Monomial::from_exponents(&[0, 0, 0, 1, 1])), 1.0);
        assert!(p.embed(3, &[1, 5]).is_err());
    }
}
