use std::f64::consts::PI;

use super::*;
use crate::poly::Monomial;

fn d(n: usize, k: usize) -> Dims {
    Dims::new(n, k)
}

const PENDULUM_F2: &str = "-sin(x1) - (x2 + x2^2 + x2^3) + u";

#[test]
fn parse_examples() {
    assert_eq!(parse_expr("x2", d(2, 0)).unwrap(), Expr::x(1));
    let e = parse_expr("x1 - w1", d(3, 2)).unwrap();
    assert_eq!(e, Expr::raw_binary(BinOp::Sub, Expr::x(0), Expr::w(0)));
    let pend = parse_expr(PENDULUM_F2, d(2, 0)).unwrap();
    assert_eq!(pend.to_string(), PENDULUM_F2);
}

#[test]
fn parse_errors() {
    assert!(matches!(
        parse_expr("x1 + * 2", d(1, 0)),
        Err(ParseError::Syntax { pos: 6, .. })
    ));
    assert!(matches!(
        parse_expr("y1", d(1, 0)),
        Err(ParseError::UnknownIdentifier { .. })
    ));
    assert!(matches!(
        parse_expr("x3", d(2, 1)),
        Err(ParseError::IndexOutOfRange { max: 2, .. })
    ));
    assert!(parse_expr("x1^-1", d(1, 0)).is_err());
    assert!(parse_expr("(x1", d(1, 0)).is_err());
    assert!(parse_expr("sin x1", d(1, 0)).is_err());
}

#[test]
fn precedence_and_folding() {
    let e = parse_expr("-2^2", d(0, 0)).unwrap();
    assert_eq!(e.eval(&[], 0.0, &[]).unwrap(), -4.0);
    let e = parse_expr("(-2)^2", d(0, 0)).unwrap();
    assert_eq!(e.eval(&[], 0.0, &[]).unwrap(), 4.0);
    let e = parse_expr("2 - 3 - 4", d(0, 0)).unwrap();
    assert_eq!(e.eval(&[], 0.0, &[]).unwrap(), -5.0);
    let e = parse_expr("8 / 4 / 2", d(0, 0)).unwrap();
    assert_eq!(e.eval(&[], 0.0, &[]).unwrap(), 1.0);
    let e = parse_expr("1.5e-1 * pi", d(0, 0)).unwrap();
    assert!((e.eval(&[], 0.0, &[]).unwrap() - 0.15 * PI).abs() < 1e-15);
}

#[test]
fn eval_examples() {
    let h = parse_expr("x1 - w1", d(3, 2)).unwrap();
    assert_eq!(h.eval(&[1.0, 0.0, 0.0], 0.0, &[1.0, 0.0]).unwrap(), 0.0);
    let f2 = parse_expr(PENDULUM_F2, d(2, 0)).unwrap();
    assert_eq!(f2.eval(&[0.0, 0.0], 0.0, &[]).unwrap(), 0.0);
    let s = parse_expr("sin(x1)", d(1, 0)).unwrap();
    assert!((s.eval(&[PI / 6.0], 0.0, &[]).unwrap() - 0.5).abs() < 1e-15);
    let q = parse_expr("1 / (x1 - 1)", d(1, 0)).unwrap();
    assert_eq!(q.eval(&[1.0], 0.0, &[]), Err(EvalError::DivisionByZero));
}

#[test]
fn jet_examples() {
    let dims = d(3, 2);
    let h = parse_expr("x1 - w1", dims).unwrap();
    let jet = expr_jet(&h, dims, 3).unwrap();
    assert_eq!(jet.len(), 2);
    assert_eq!(jet.coeff(&Monomial::var(0)), 1.0);
    assert_eq!(jet.coeff(&Monomial::var(4)), -1.0);

    let s = parse_expr("sin(x1)", d(1, 0)).unwrap();
    let jet = expr_jet(&s, d(1, 0), 3).unwrap();
    assert_eq!(jet.coeff(&Monomial::var(0)), 1.0);
    assert!((jet.coeff(&Monomial::from_exponents(&[3])) + 1.0 / 6.0).abs() < 1e-16);
    assert_eq!(jet.len(), 2);

    // -sin x1 - (x2 + x2^2 + x2^3) + u  ->  -x1 - x2 + u
    let f2 = parse_expr(PENDULUM_F2, d(2, 0)).unwrap();
    let jet = expr_jet(&f2, d(2, 0), 1).unwrap();
    assert_eq!(jet.len(), 3);
    assert_eq!(jet.coeff(&Monomial::var(0)), -1.0);
    assert_eq!(jet.coeff(&Monomial::var(1)), -1.0);
    assert_eq!(jet.coeff(&Monomial::var(2)), 1.0);

    let singular = parse_expr("x1 / x2", d(2, 0)).unwrap();
    assert_eq!(expr_jet(&singular, d(2, 0), 2), Err(EvalError::SingularJet));
    let fine = parse_expr("x1 / (2 + x2)", d(2, 0)).unwrap();
    let jet = expr_jet(&fine, d(2, 0), 2).unwrap();
    assert_eq!(jet.coeff(&Monomial::var(0)), 0.5);
    assert_eq!(jet.coeff(&Monomial::from_exponents(&[1, 1])), -0.25);
}

#[test]
fn jet_in_w_space_rejects_plant_variables() {
    let a = parse_expr("-w2", d(0, 2)).unwrap();
    let jet = expr_jet_w(&a, 2, 2).unwrap();
    assert_eq!(jet.coeff(&Monomial::var(1)), -1.0);
    let bad = parse_expr("x1 + w1", d(1, 1)).unwrap();
    assert!(expr_jet_w(&bad, 1, 2).is_err());
}

#[test]
fn jacobian_examples() {
    let dims = d(2, 0);
    let f = vec![
        parse_expr("x2", dims).unwrap(),
        parse_expr("-sin(x1)", dims).unwrap(),
        parse_expr("x2 + x2^2 + x2^3", dims).unwrap(),
    ];
    let j = jacobian(&f, VarClass::X, 2);
    assert_eq!(j[0][0].as_const(), Some(0.0));
    assert_eq!(j[0][1].as_const(), Some(1.0));
    assert_eq!(j[1][0].to_string(), "-cos(x1)");
    assert_eq!(j[1][1].as_const(), Some(0.0));
    assert_eq!(j[2][1].to_string(), "1 + 2*x2 + 3*x2^2");
}

#[test]
fn diff_quotient_rule_matches_finite_difference() {
    let dims = d(2, 0);
    let e = parse_expr("exp(x1) * cos(x2) / (3 + x1^2)", dims).unwrap();
    let de = e.diff(Var {
        class: VarClass::X,
        index: 0,
    });
    let (x, h) = ([0.3, -0.7], 1e-6);
    let fd = (e.eval(&[x[0] + h, x[1]], 0.0, &[]).unwrap() - e.eval(&[x[0] - h, x[1]], 0.0, &[]).unwrap()) / (2.0 * h);
    assert!((de.eval(&x, 0.0, &[]).unwrap() - fd).abs() < 1e-8);
}

#[test]
fn lie_discretize_scalar_linear_field() {
    let f = vec![Expr::x(0)];
    let map = lie_discretize(&f, 1.0).unwrap();
    let v = map[0].eval(&[1.0], 0.0, &[]).unwrap();
    assert!((v - 8.0 / 3.0).abs() < 1e-15);
}

#[test]
fn lie_discretize_rotation_matches_matrix_series() {
    let ts = 0.4;
    let f = vec![Expr::x(1), -Expr::x(0)];
    let map = lie_discretize(&f, ts).unwrap();
    // A = [[0,1],[-1,0]]: I + A t + A^2 t^2/2 + A^3 t^3/6
    let (t2, t3) = (ts * ts / 2.0, ts * ts * ts / 6.0);
    let expected = [[1.0 - t2, ts - t3], [-ts + t3, 1.0 - t2]];
    for col in 0..2 {
        let mut x = [0.0, 0.0];
        x[col] = 1.0;
        for row in 0..2 {
            let got = map[row].eval(&x, 0.0, &[]).unwrap();
            assert!((got - expected[row][col]).abs() < 1e-12);
        }
    }
}

#[test]
fn lie_discretize_rejects_forced_fields() {
    let f = vec![Expr::x(0) + Expr::u()];
    assert!(matches!(lie_discretize(&f, 0.1), Err(DslError::ForcedField(_))));
    assert!(matches!(
        lie_discretize(&[Expr::x(0)], 0.0),
        Err(DslError::BadTimeStep(_))
    ));
}

#[test]
fn dual_numbers_match_symbolic_derivatives() {
    let dims = d(2, 1);
    let e = parse_expr("sin(x1*x2) + exp(w1)*u^3 - x2/(1 + x1^2)", dims).unwrap();
    let (x, u, w) = ([0.4, -1.2], 0.7, [0.3]);
    let xd = [Dual::seed(x[0], 3, 0), Dual::seed(x[1], 3, 1)];
    let ud = Dual::seed(u, 3, 2);
    let wd = [Dual::constant(w[0], 3)];
    let v = e.eval_with(&Env::new(&xd, &ud, &wd, Dual::constant(0.0, 3))).unwrap();
    assert!((v.value - e.eval(&x, u, &w).unwrap()).abs() < 1e-15);
    let vars = [
        Var {
            class: VarClass::X,
            index: 0,
        },
        Var {
            class: VarClass::X,
            index: 1,
        },
        Var {
            class: VarClass::U,
            index: 0,
        },
    ];
    for (i, var) in vars.iter().enumerate() {
        let sym = e.diff(*var).eval(&x, u, &w).unwrap();
        assert!((v.grad[i] - sym).abs() < 1e-13, "{i}: {} vs {sym}", v.grad[i]);
    }
}

const PENDULUM_FILE: &str = "\
# pendulum
[dims]
n = 2
k = 2
[plant]
continuous = true
ts = pi/6
G = 0, 1
f1 = x2
f2 = -sin(x1) - (x2 + x2^2 + x2^3) + u
h = x1 - w1
[exo]
a1 = cos(pi/4)*w1 - sin(pi/4)*w2
a2 = sin(pi/4)*w1 + cos(pi/4)*w2
[init]
x0 = 2, 0   # start far from the orbit
w0 = 1, 0
[mpr]
horizon = 4
degree = 4
umax = 2
";

#[test]
fn scenario_file_round_trip() {
    let spec = ScenarioSpec::parse("pendulum", PENDULUM_FILE).unwrap();
    assert_eq!(spec.dims, Dims::new(2, 2));
    assert_eq!(spec.x0, vec![2.0, 0.0]);
    assert_eq!(spec.mpr.umax, Some(2.0));
    let ct = spec.continuous.as_ref().unwrap();
    assert!((ct.ts - PI / 6.0).abs() < 1e-15);
    let again = ScenarioSpec::parse("pendulum", &spec.to_text()).unwrap();
    assert_eq!(again, spec);
}

#[test]
fn scenario_discrete_plant_adds_input_column() {
    let spec = ScenarioSpec::parse("pendulum", PENDULUM_FILE).unwrap();
    let f = spec.discrete_plant().unwrap();
    let (x, w) = ([0.3, -0.2], [0.0, 0.0]);
    let du = f[1].eval(&x, 1.0, &w).unwrap() - f[1].eval(&x, 0.0, &w).unwrap();
    assert!((du - 1.0).abs() < 1e-14);
    let du1 = f[0].eval(&x, 1.0, &w).unwrap() - f[0].eval(&x, 0.0, &w).unwrap();
    assert!(du1.abs() < 1e-14);

    // G omitted: read off df/du at the origin
    let no_g = PENDULUM_FILE.replace("G = 0, 1\n", "");
    let spec2 = ScenarioSpec::parse("pendulum", &no_g).unwrap();
    let f2 = spec2.discrete_plant().unwrap();
    for i in 0..2 {
        assert_eq!(f2[i].eval(&x, 0.5, &w).unwrap(), f[i].eval(&x, 0.5, &w).unwrap());
    }
}

#[test]
fn scenario_errors() {
    let missing = PENDULUM_FILE.replace("h = x1 - w1\n", "");
    assert_eq!(
        ScenarioSpec::parse("p", &missing),
        Err(ScenarioError::Missing("plant.h".into()))
    );
    let unknown = PENDULUM_FILE.replace("degree = 4", "degre = 4");
    assert!(matches!(
        ScenarioSpec::parse("p", &unknown),
        Err(ScenarioError::Syntax { .. })
    ));
    let bad_expr = PENDULUM_FILE.replace("h = x1 - w1", "h = x1 - w3");
    assert!(matches!(
        ScenarioSpec::parse("p", &bad_expr),
        Err(ScenarioError::Expr { .. })
    ));
    let mimo = PENDULUM_FILE.replace("k = 2", "k = 2\nm = 2");
    assert!(matches!(
        ScenarioSpec::parse("p", &mimo),
        Err(ScenarioError::Invalid(_))
    ));
    let bad_ts = PENDULUM_FILE.replace("ts = pi/6", "ts = -1");
    assert!(ScenarioSpec::parse("p", &bad_ts).is_err());
}
