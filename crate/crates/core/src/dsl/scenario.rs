//! Line-oriented scenario files.
//!
//! ```text
//! # asymmetrically damped pendulum
//! [dims]
//! n = 2
//! k = 2
//! [plant]
//! continuous = true
//! ts = pi/6
//! G = 0, 1
//! f1 = x2
//! f2 = -sin(x1) - (x2 + x2^2 + x2^3) + u
//! h = x1 - w1
//! [exo]
//! a1 = cos(pi/4)*w1 - sin(pi/4)*w2
//! a2 = sin(pi/4)*w1 + cos(pi/4)*w2
//! [init]
//! x0 = 0, 0
//! w0 = 1, 0
//! [mpr]
//! horizon = 4
//! degree = 4
//! max_iter = 1000
//! umax = none
//! ```
//!
//! Numeric values accept constant formulas (`pi/6`, `cos(pi/4)`).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::expr::{Dims, Expr, Var, VarClass};
use super::parse::{parse_expr, ParseError};
use super::{lie_discretize, DslError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("scenario: line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("scenario: missing `{0}`")]
    Missing(String),
    #[error("scenario: `{key}`: {source}")]
    Expr {
        key: String,
        #[source]
        source: ParseError,
    },
    #[error("scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Dsl(#[from] DslError),
}

/// Continuous-time plant settings: the field is discretized by a
/// third-degree Lie series and the control enters as `+ G u`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousTime {
    pub ts: f64,
    /// Input column; when absent it is read off `df/du` at the origin.
    pub g: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MprSettings {
    pub horizon: usize,
    pub degree: usize,
    pub umax: Option<f64>,
    pub steps: usize,
    /// Iteration cap of the horizon solver.
    pub max_iter: usize,
}

impl Default for MprSettings {
    fn default() -> Self {
        MprSettings {
            horizon: 4,
            degree: 4,
            umax: None,
            steps: 96,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub dims: Dims,
    /// Plant right-hand side as written (a vector field when
    /// `continuous` is set).
    pub plant_f: Vec<Expr>,
    pub output_h: Expr,
    pub exo_a: Vec<Expr>,
    pub continuous: Option<ContinuousTime>,
    pub x0: Vec<f64>,
    pub w0: Vec<f64>,
    pub mpr: MprSettings,
}

type Sections = BTreeMap<String, BTreeMap<String, (usize, String)>>;

fn split_sections(text: &str) -> Result<Sections, ScenarioError> {
    let mut sections: Sections = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ScenarioError::Syntax {
                    line: line_no,
                    msg: "unterminated section header".into(),
                })?
                .trim()
                .to_string();
            if !["dims", "plant", "exo", "init", "mpr"].contains(&name.as_str()) {
                return Err(ScenarioError::Syntax {
                    line: line_no,
                    msg: format!("unknown section [{name}]"),
                });
            }
            sections.entry(name.clone()).or_default();
            current = Some(name);
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ScenarioError::Syntax {
            line: line_no,
            msg: "expected `key = value`".into(),
        })?;
        let section = current.clone().ok_or_else(|| ScenarioError::Syntax {
            line: line_no,
            msg: "key outside of any section".into(),
        })?;
        let entry = sections.entry(section).or_default();
        let key = key.trim().to_string();
        if entry.contains_key(&key) {
            return Err(ScenarioError::Syntax {
                line: line_no,
                msg: format!("duplicate key `{key}`"),
            });
        }
        entry.insert(key, (line_no, value.trim().to_string()));
    }
    Ok(sections)
}

fn constant(value: &str, key: &str) -> Result<f64, ScenarioError> {
    let e = parse_expr(value, Dims::new(0, 0)).map_err(|source| ScenarioError::Expr {
        key: key.to_string(),
        source,
    })?;
    let v = e
        .eval(&[], 0.0, &[])
        .map_err(|err| ScenarioError::Invalid(format!("`{key}`: {err}")))?;
    if e.references(VarClass::U) {
        return Err(ScenarioError::Invalid(format!("`{key}` must be a constant")));
    }
    Ok(v)
}

fn vector(value: &str, key: &str, len: usize) -> Result<Vec<f64>, ScenarioError> {
    let v = value
        .split(',')
        .map(|s| constant(s.trim(), key))
        .collect::<Result<Vec<_>, _>>()?;
    if v.len() != len {
        return Err(ScenarioError::Invalid(format!(
            "`{key}` needs {len} entries, got {}",
            v.len()
        )));
    }
    Ok(v)
}

fn integer(value: &str, key: &str) -> Result<usize, ScenarioError> {
    value
        .trim()
        .parse()
        .map_err(|_| ScenarioError::Invalid(format!("`{key}` must be a non-negative integer")))
}

impl ScenarioSpec {
    pub fn parse(name: &str, text: &str) -> Result<Self, ScenarioError> {
        let mut sections = split_sections(text)?;
        let mut take = |section: &str, key: &str| -> Option<(usize, String)> {
            sections.get_mut(section).and_then(|s| s.remove(key))
        };
        let require = |v: Option<(usize, String)>, what: &str| {
            v.map(|(_, s)| s)
                .ok_or_else(|| ScenarioError::Missing(what.to_string()))
        };

        let n = integer(&require(take("dims", "n"), "dims.n")?, "n")?;
        let k = integer(&require(take("dims", "k"), "dims.k")?, "k")?;
        for key in ["m", "p"] {
            if let Some((_, v)) = take("dims", key) {
                if integer(&v, key)? != 1 {
                    return Err(ScenarioError::Invalid(format!(
                        "only single-input single-output plants are supported ({key} = {v})"
                    )));
                }
            }
        }
        if n == 0 || k == 0 {
            return Err(ScenarioError::Invalid("n and k must be positive".into()));
        }
        let dims = Dims::new(n, k);
        let formula = |key: &str, src: &str| {
            parse_expr(src, dims).map_err(|source| ScenarioError::Expr {
                key: key.to_string(),
                source,
            })
        };

        let mut plant_f = Vec::with_capacity(n);
        for i in 1..=n {
            let key = format!("f{i}");
            plant_f.push(formula(&key, &require(take("plant", &key), &format!("plant.{key}"))?)?);
        }
        let output_h = formula("h", &require(take("plant", "h"), "plant.h")?)?;
        let continuous = match take("plant", "continuous").map(|(_, v)| v) {
            Some(v) if v == "true" => {
                let ts = constant(&require(take("plant", "ts"), "plant.ts")?, "ts")?;
                if ts.is_nan() || ts <= 0.0 {
                    return Err(DslError::BadTimeStep(ts).into());
                }
                let g = take("plant", "G").map(|(_, v)| vector(&v, "G", n)).transpose()?;
                Some(ContinuousTime { ts, g })
            }
            Some(v) if v == "false" => None,
            None => None,
            Some(v) => {
                return Err(ScenarioError::Invalid(format!(
                    "`continuous` must be true or false, got `{v}`"
                )))
            }
        };
        let mut exo_a = Vec::with_capacity(k);
        for j in 1..=k {
            let key = format!("a{j}");
            let e = formula(&key, &require(take("exo", &key), &format!("exo.{key}"))?)?;
            if e.references(VarClass::X) || e.references(VarClass::U) {
                return Err(ScenarioError::Invalid(format!(
                    "exosystem `{key}` may only depend on w"
                )));
            }
            exo_a.push(e);
        }
        let x0 = match take("init", "x0") {
            Some((_, v)) => vector(&v, "x0", n)?,
            None => vec![0.0; n],
        };
        let w0 = match take("init", "w0") {
            Some((_, v)) => vector(&v, "w0", k)?,
            None => vec![0.0; k],
        };
        let mut mpr = MprSettings::default();
        if let Some((_, v)) = take("mpr", "horizon") {
            mpr.horizon = integer(&v, "horizon")?;
        }
        if let Some((_, v)) = take("mpr", "degree") {
            mpr.degree = integer(&v, "degree")?;
        }
        if let Some((_, v)) = take("mpr", "steps") {
            mpr.steps = integer(&v, "steps")?;
        }
        if let Some((_, v)) = take("mpr", "max_iter") {
            mpr.max_iter = integer(&v, "max_iter")?;
        }
        if let Some((_, v)) = take("mpr", "umax") {
            mpr.umax = if v == "none" { None } else { Some(constant(&v, "umax")?) };
        }

        for (section, rest) in &sections {
            if let Some((key, (line, _))) = rest.iter().next() {
                return Err(ScenarioError::Syntax {
                    line: *line,
                    msg: format!("unknown key `{key}` in [{section}]"),
                });
            }
        }

        Ok(ScenarioSpec {
            name: name.to_string(),
            dims,
            plant_f,
            output_h,
            exo_a,
            continuous,
            x0,
            w0,
            mpr,
        })
    }

    /// The discrete-time map `x+ = f(x, u, w)`.
    pub fn discrete_plant(&self) -> Result<Vec<Expr>, ScenarioError> {
        let Some(ct) = &self.continuous else {
            return Ok(self.plant_f.clone());
        };
        let zero = Expr::constant(0.0);
        let xs: Vec<Expr> = (0..self.dims.n).map(Expr::x).collect();
        let ws: Vec<Expr> = (0..self.dims.k).map(Expr::w).collect();
        let unforced: Vec<Expr> = self.plant_f.iter().map(|e| e.substitute(&xs, &zero, &ws)).collect();
        let g = match &ct.g {
            Some(g) => g.clone(),
            None => {
                let origin_x = vec![0.0; self.dims.n];
                let origin_w = vec![0.0; self.dims.k];
                self.plant_f
                    .iter()
                    .map(|e| {
                        e.diff(Var {
                            class: VarClass::U,
                            index: 0,
                        })
                        .eval(&origin_x, 0.0, &origin_w)
                    })
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(DslError::from)?
            }
        };
        let map = lie_discretize(&unforced, ct.ts)?;
        Ok(map.into_iter().zip(g).map(|(fi, gi)| fi + Expr::u() * gi).collect())
    }

    /// Serializes back to the scenario file format.
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let mut s = String::new();
        let _ = writeln!(s, "# {}", self.name);
        let _ = writeln!(s, "[dims]\nn = {}\nk = {}", self.dims.n, self.dims.k);
        let _ = writeln!(s, "[plant]");
        if let Some(ct) = &self.continuous {
            let _ = writeln!(s, "continuous = true\nts = {}", ct.ts);
            if let Some(g) = &ct.g {
                let _ = writeln!(s, "G = {}", join(g));
            }
        }
        for (i, f) in self.plant_f.iter().enumerate() {
            let _ = writeln!(s, "f{} = {f}", i + 1);
        }
        let _ = writeln!(s, "h = {}", self.output_h);
        let _ = writeln!(s, "[exo]");
        for (j, a) in self.exo_a.iter().enumerate() {
            let _ = writeln!(s, "a{} = {a}", j + 1);
        }
        let _ = writeln!(s, "[init]\nx0 = {}\nw0 = {}", join(&self.x0), join(&self.w0));
        let _ = writeln!(
            s,
            "[mpr]\nhorizon = {}\ndegree = {}\nsteps = {}\nmax_iter = {}\numax = {}",
            self.mpr.horizon,
            self.mpr.degree,
            self.mpr.steps,
            self.mpr.max_iter,
            self.mpr.umax.map_or_else(|| "none".to_string(), |u| u.to_string())
        );
        s
    }
}
