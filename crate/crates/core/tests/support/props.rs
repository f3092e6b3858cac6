//! Randomized algebraic properties of series and expressions, shared by
//! the property tests and the acceptance run.

use mprlab::dsl::{expr_jet, parse_expr, Dims, Expr, UnaryFn};
use mprlab::poly::{Monomial, PolyVector, TruncatedPoly, PRUNE_TOL};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRng, TestRunner};

const CAP: usize = 4;
const ARITY: usize = 3;

/// Cases per suite.
pub const CASES: u32 = 1000;

/// Runs `test` on `CASES` deterministic draws from `strategy`.
fn check<S: Strategy>(strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let config = Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config.clone(), TestRng::deterministic_rng(config.rng_algorithm));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn monomial(arity: usize, max_degree: usize) -> impl Strategy<Value = Monomial> {
    prop::collection::vec(0u32..=max_degree as u32, arity)
        .prop_filter("degree bound", move |e| e.iter().sum::<u32>() as usize <= max_degree)
        .prop_map(|e| Monomial::from_exponents(&e))
}

/// Sparse polynomial with terms of degree `min..=max`.
fn poly(arity: usize, min: usize, max: usize) -> impl Strategy<Value = TruncatedPoly> {
    prop::collection::vec((monomial(arity, max), -2.0f64..2.0), 0..8).prop_map(move |terms| {
        TruncatedPoly::from_terms(arity, CAP, terms.into_iter().filter(|(m, _)| m.degree() >= min))
    })
}

fn close(a: &TruncatedPoly, b: &TruncatedPoly, tol: f64) -> bool {
    a.try_sub(b).map(|d| d.max_abs_coeff() <= tol).unwrap_or(false)
}

fn canonical(p: &TruncatedPoly) -> bool {
    p.terms()
        .all(|(m, c)| c.abs() >= PRUNE_TOL && m.degree() <= p.degree_cap())
}

fn point(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

pub fn ring_axioms() -> Result<(), String> {
    check(
        (poly(ARITY, 0, CAP), poly(ARITY, 0, CAP), poly(ARITY, 0, CAP)),
        |(a, b, c)| {
            let ab = a.try_add(&b).unwrap();
            prop_assert!(close(&ab, &b.try_add(&a).unwrap(), 0.0));
            let left = ab.try_add(&c).unwrap();
            let right = a.try_add(&b.try_add(&c).unwrap()).unwrap();
            prop_assert!(close(&left, &right, 1e-12));

            let m = a.try_mul(&b).unwrap();
            prop_assert!(close(&m, &b.try_mul(&a).unwrap(), 1e-12));
            let left = m.try_mul(&c).unwrap();
            let right = a.try_mul(&b.try_mul(&c).unwrap()).unwrap();
            prop_assert!(close(&left, &right, 1e-11));

            let dist = a.try_mul(&b.try_add(&c).unwrap()).unwrap();
            let split = a.try_mul(&b).unwrap().try_add(&a.try_mul(&c).unwrap()).unwrap();
            prop_assert!(close(&dist, &split, 1e-12));

            for p in [&ab, &m, &left, &dist, &a.try_sub(&b).unwrap()] {
                prop_assert!(canonical(p));
            }
            Ok(())
        },
    )
}

pub fn composition_matches_nested_evaluation() -> Result<(), String> {
    check(
        (poly(2, 0, 2), poly(ARITY, 1, 2), poly(ARITY, 1, 2), point(ARITY)),
        |(f, g1, g2, x)| {
            let inner = PolyVector::new(vec![g1.clone(), g2.clone()]).unwrap();
            let fg = f.compose(&inner).unwrap();
            prop_assert!(canonical(&fg));
            let inner_at = [g1.eval(&x).unwrap(), g2.eval(&x).unwrap()];
            let want = f.eval(&inner_at).unwrap();
            let got = fg.eval(&x).unwrap();
            prop_assert!((got - want).abs() <= 1e-10 * (1.0 + want.abs()), "{got} vs {want}");
            Ok(())
        },
    )
}

pub fn leibniz_rule() -> Result<(), String> {
    check((poly(ARITY, 0, CAP), poly(ARITY, 0, CAP), 0..ARITY), |(a, b, i)| {
        let lhs = a.try_mul(&b).unwrap().partial(i).unwrap();
        let rhs = a
            .partial(i)
            .unwrap()
            .try_mul(&b)
            .unwrap()
            .try_add(&a.try_mul(&b.partial(i).unwrap()).unwrap())
            .unwrap();
        // the product is truncated before differentiating, so agreement
        // holds below the cap
        prop_assert!(close(&lhs.truncate(CAP - 1), &rhs.truncate(CAP - 1), 1e-12));
        prop_assert!(canonical(&lhs) && canonical(&rhs));
        Ok(())
    })
}

/// Variables of the expression space with `n = 2`, `k = 1` (order x1, x2, u, w1).
fn dims() -> Dims {
    Dims::new(2, 1)
}

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        Just(Expr::x(0)),
        Just(Expr::x(1)),
        Just(Expr::u()),
        Just(Expr::w(0)),
        (-4i32..=4).prop_map(|c| Expr::constant(c as f64 / 2.0)),
    ]
}

/// Polynomial expression of total degree at most `CAP`, as a sum of
/// products of leaves.
fn polynomial_expr() -> impl Strategy<Value = Expr> {
    let term = (prop::collection::vec(leaf(), 1..=CAP), -3.0f64..3.0)
        .prop_map(|(factors, c)| factors.into_iter().fold(Expr::constant(c), |acc, f| acc * f));
    prop::collection::vec(term, 1..6).prop_map(|terms| terms.into_iter().fold(Expr::constant(0.0), |acc, t| acc + t))
}

/// Arbitrary expression built with every node kind except division.
fn smooth_expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a + b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a - b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a * b),
            inner.clone().prop_map(|a| -a),
            (inner.clone(), 2u32..=3).prop_map(|(a, k)| a.powi(k)),
            inner.clone().prop_map(|a| Expr::func(UnaryFn::Sin, a)),
            inner.clone().prop_map(|a| Expr::func(UnaryFn::Cos, a)),
            inner.prop_map(|a| Expr::func(UnaryFn::Exp, a)),
        ]
    })
}

fn any_expr() -> impl Strategy<Value = Expr> {
    (smooth_expr(), smooth_expr(), prop::bool::ANY).prop_map(|(a, b, div)| {
        if div {
            a / (Expr::constant(2.0) + b.powi(2))
        } else {
            a
        }
    })
}

pub fn jet_evaluates_like_the_expression() -> Result<(), String> {
    check((polynomial_expr(), point(2), -1.0f64..1.0, point(1)), |(e, x, u, w)| {
        let jet = expr_jet(&e, dims(), CAP).unwrap();
        let at: Vec<f64> = x.iter().copied().chain([u]).chain(w.iter().copied()).collect();
        let got = jet.eval(&at).unwrap();
        let want = e.eval(&x, u, &w).unwrap();
        prop_assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()), "{e}: {got} vs {want}");
        Ok(())
    })
}

pub fn jet_linear_part_matches_finite_differences() -> Result<(), String> {
    check(any_expr(), |e| {
        let jet = expr_jet(&e, dims(), CAP).unwrap();
        let h = 1e-4;
        let eval = |p: &[f64]| e.eval(&p[..2], p[2], &p[3..]).unwrap();
        for i in 0..4 {
            let (mut plus, mut minus) = ([0.0; 4], [0.0; 4]);
            plus[i] = h;
            minus[i] = -h;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let coeff = jet.coeff(&Monomial::var(i));
            prop_assert!(
                (coeff - fd).abs() <= 1e-6 * (1.0 + fd.abs()),
                "{e}: d/dz{} {coeff} vs {fd}",
                i + 1
            );
        }
        Ok(())
    })
}

pub fn printing_and_parsing_round_trip() -> Result<(), String> {
    check(any_expr(), |e| {
        let text = e.to_string();
        let parsed = parse_expr(&text, dims()).unwrap();
        prop_assert_eq!(parsed.to_string(), text.clone());
        prop_assert_eq!(parse_expr(&parsed.to_string(), dims()).unwrap(), parsed);
        Ok(())
    })
}

pub type Suite = fn() -> Result<(), String>;

/// Every suite with its name.
pub const SUITES: [(&str, Suite); 6] = [
    ("ring_axioms", ring_axioms),
    (
        "composition_matches_nested_evaluation",
        composition_matches_nested_evaluation,
    ),
    ("leibniz_rule", leibniz_rule),
    ("jet_evaluates_like_the_expression", jet_evaluates_like_the_expression),
    (
        "jet_linear_part_matches_finite_differences",
        jet_linear_part_matches_finite_differences,
    ),
    ("printing_and_parsing_round_trip", printing_and_parsing_round_trip),
];
