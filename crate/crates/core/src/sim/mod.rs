//! Closed-loop simulation of polynomial feedback laws and the built-in
//! scenarios.

mod scenarios;

use std::fmt::Write as _;
use std::ops::Range;

use thiserror::Error;

pub use scenarios::{builtin, builtin_text, scenario_linear_example, scenario_pendulum};

use crate::model::SystemModel;
use crate::par::Exec;
use crate::terminal::TerminalLaw;

/// States with `|x|_inf` above this are treated as divergent.
pub const DIVERGENCE_BOUND: f64 = 1e3;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("sim: window {start}..{end} exceeds trajectory length {len}")]
    Window { start: usize, end: usize, len: usize },
    #[error("sim: trajectory diverged at step {0}, inside the metric window")]
    DivergedInWindow(usize),
}

/// Time-indexed closed-loop record. Row `t` holds `x(t), w(t), u(t), y(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n: usize,
    pub k: usize,
    pub x: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    /// First step whose state left the divergence bound.
    pub diverged_at: Option<usize>,
}

impl Trajectory {
    pub fn new(n: usize, k: usize) -> Self {
        Trajectory {
            n,
            k,
            x: Vec::new(),
            w: Vec::new(),
            u: Vec::new(),
            y: Vec::new(),
            diverged_at: None,
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    /// Appends a row with `y` recomputed from the model.
    pub fn push(&mut self, m: &SystemModel, x: Vec<f64>, w: Vec<f64>, u: f64) {
        let y = m.output(&x, u, &w).unwrap_or(f64::NAN);
        self.x.push(x);
        self.w.push(w);
        self.u.push(u);
        self.y.push(y);
    }

    /// Marks the trajectory divergent at `step`.
    pub fn mark_divergence(&mut self, step: usize) {
        self.diverged_at.get_or_insert(step);
    }

    /// Header `t,x1..xn,w1..wk,u,y`, then one row per step.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t");
        for i in 1..=self.n {
            let _ = write!(s, ",x{i}");
        }
        for j in 1..=self.k {
            let _ = write!(s, ",w{j}");
        }
        s.push_str(",u,y\n");
        for t in 0..self.len() {
            let _ = write!(s, "{t}");
            for v in self.x[t].iter().chain(&self.w[t]).chain([&self.u[t], &self.y[t]]) {
                let _ = write!(s, ",{}", fmt_num(*v));
            }
            s.push('\n');
        }
        s
    }
}

/// 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{:.16e}", v + 0.0)
}

pub(crate) fn out_of_bounds(x: &[f64]) -> bool {
    x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND)
}

/// `u(t) = kappa_T(x(t), w(t))` applied to the true dynamics for `steps`
/// steps; rows `0..=steps` unless the state diverges first.
pub fn rollout_polynomial(m: &SystemModel, law: &TerminalLaw, x0: &[f64], w0: &[f64], steps: usize) -> Trajectory {
    let mut tr = Trajectory::new(m.n(), m.k());
    let (mut x, mut w) = (x0.to_vec(), w0.to_vec());
    for t in 0..=steps {
        if out_of_bounds(&x) {
            tr.mark_divergence(t);
            break;
        }
        let u = law.feedback(&x, &w);
        tr.push(m, x.clone(), w.clone(), u);
        if t == steps {
            break;
        }
        match (m.step(&x, u, &w), m.exo(&w)) {
            (Ok(xn), Ok(wn)) => {
                x = xn;
                w = wn;
            }
            _ => {
                tr.mark_divergence(t + 1);
                break;
            }
        }
    }
    tr
}

/// Rollouts from several initial states, returned in input order.
pub fn rollout_batch(
    m: &SystemModel,
    law: &TerminalLaw,
    starts: &[(Vec<f64>, Vec<f64>)],
    steps: usize,
    exec: Exec,
) -> Vec<Trajectory> {
    exec.map(starts.len(), |i| {
        rollout_polynomial(m, law, &starts[i].0, &starts[i].1, steps)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingMetrics {
    pub steady_state_avg_error: f64,
    pub max_abs_u: f64,
    /// First step after which `|y|` stays within 10x the window average
    /// up to the end of the window.
    pub settle_step: Option<usize>,
}

impl TrackingMetrics {
    pub fn to_kv(&self) -> String {
        format!(
            "steady_state_avg_error = {}\nmax_abs_u = {}\nsettle_step = {}\n",
            fmt_num(self.steady_state_avg_error),
            fmt_num(self.max_abs_u),
            self.settle_step.map_or("none".to_string(), |s| s.to_string())
        )
    }
}

/// Steps 48..96 of a 96-step run.
pub fn default_window() -> Range<usize> {
    48..96
}

pub fn steady_state_metrics(tr: &Trajectory, window: Range<usize>) -> Result<TrackingMetrics, SimError> {
    if let Some(d) = tr.diverged_at {
        if d < window.end {
            return Err(SimError::DivergedInWindow(d));
        }
    }
    if window.start >= window.end || window.end > tr.len() {
        return Err(SimError::Window {
            start: window.start,
            end: window.end,
            len: tr.len(),
        });
    }
    let avg = tr.y[window.clone()].iter().map(|y| y.abs()).sum::<f64>() / window.len() as f64;
    let max_abs_u = tr.u.iter().fold(0.0, |a: f64, u| a.max(u.abs()));
    let bound = 10.0 * avg;
    let settle_step = match tr.y[..window.end].iter().rposition(|y| y.abs() > bound) {
        None => Some(0),
        Some(last) if last + 1 < window.end => Some(last + 1),
        Some(_) => None,
    };
    Ok(TrackingMetrics {
        steady_state_avg_error: avg,
        max_abs_u,
        settle_step,
    })
}
