//! Receding-horizon regulation: a single-shooting finite-horizon solver
//! with a polynomial terminal cost, box-constrained controls and a
//! penalized terminal set, plus the closed loop that applies the first
//! control at every step.

mod solver;

use std::fmt::Write as _;

use log::debug;
use thiserror::Error;

use crate::dsl::{Dual, EvalError, MprSettings};
use crate::model::SystemModel;
use crate::sim::{fmt_num, out_of_bounds, Trajectory};
use crate::terminal::TerminalLaw;

pub use solver::{minimize, project, LbfgsOptions, LbfgsResult};

#[derive(Debug, Error, PartialEq)]
pub enum MprError {
    #[error("mpr: horizon must be at least 1")]
    Horizon,
    #[error("mpr: control box [{0}, {1}] is empty")]
    EmptyBox(f64, f64),
    #[error("mpr: warm start has length {got}, horizon is {want}")]
    WarmLength { got: usize, want: usize },
    #[error("mpr: initial state or exosystem state is not finite")]
    NonFinite,
    #[error("mpr: rollout diverged (objective not finite)")]
    DivergedRollout,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Quadratic penalty `weight * max(0, pi_T - c)^2`, multiplied by
/// `factor` up to `escalations` times while the terminal set is missed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltySchedule {
    pub weight: f64,
    pub factor: f64,
    pub escalations: usize,
}

impl Default for PenaltySchedule {
    fn default() -> Self {
        PenaltySchedule {
            weight: 10.0,
            factor: 10.0,
            escalations: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MprConfig {
    pub horizon: usize,
    pub terminal: TerminalLaw,
    pub u_box: Option<(f64, f64)>,
    /// Enforce `pi_T(x(t+T), w(t+T)) <= c`.
    pub terminal_level: Option<f64>,
    /// Projected-gradient norm at which the solver stops.
    pub tol: f64,
    pub max_iter: usize,
    pub penalty: PenaltySchedule,
}

impl MprConfig {
    pub fn new(horizon: usize, terminal: TerminalLaw) -> Self {
        MprConfig {
            horizon,
            terminal,
            u_box: None,
            terminal_level: None,
            tol: 1e-8,
            max_iter: 200,
            penalty: PenaltySchedule::default(),
        }
    }

    /// Horizon, box and iteration cap from scenario settings.
    pub fn from_settings(settings: &MprSettings, terminal: TerminalLaw) -> Self {
        let mut cfg = MprConfig::new(settings.horizon, terminal);
        cfg.u_box = settings.umax.map(|u| (-u, u));
        cfg.max_iter = settings.max_iter;
        cfg
    }

    pub fn with_box(mut self, lo: f64, hi: f64) -> Self {
        self.u_box = Some((lo, hi));
        self
    }

    pub fn with_level(mut self, level: f64) -> Self {
        self.terminal_level = Some(level);
        self
    }

    fn validate(&self) -> Result<(), MprError> {
        if self.horizon == 0 {
            return Err(MprError::Horizon);
        }
        if let Some((lo, hi)) = self.u_box {
            if lo.is_nan() || hi.is_nan() || lo >= hi {
                return Err(MprError::EmptyBox(lo, hi));
            }
        }
        Ok(())
    }

    pub fn clamp(&self, u: f64) -> f64 {
        match self.u_box {
            Some((lo, hi)) => u.clamp(lo, hi),
            None => u,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonSolution {
    /// `u*(t..t+T-1)`.
    pub controls: Vec<f64>,
    /// `x*(t+1..t+T)`, recomputed from the controls.
    pub states: Vec<Vec<f64>>,
    /// `w(t..t+T)`.
    pub exo: Vec<Vec<f64>>,
    /// Running plus terminal cost, without the penalty.
    pub cost: f64,
    /// Objective including the penalty.
    pub objective: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub terminal_value: f64,
    pub terminal_ok: bool,
}

/// `w(t), a(w(t)), ...`, `horizon + 1` entries.
pub fn exo_horizon(m: &SystemModel, w_t: &[f64], horizon: usize) -> Result<Vec<Vec<f64>>, MprError> {
    let mut ws = vec![w_t.to_vec()];
    for s in 0..horizon {
        let next = m.exo(&ws[s])?;
        ws.push(next);
    }
    Ok(ws)
}

/// Shooting objective over a fixed exosystem sequence.
pub struct Shooting<'a> {
    m: &'a SystemModel,
    law: &'a TerminalLaw,
    x_t: Vec<f64>,
    ws: Vec<Vec<f64>>,
    level: Option<f64>,
    weight: f64,
}

pub struct Evaluation {
    pub objective: f64,
    pub cost: f64,
    pub terminal_value: f64,
    pub states: Vec<Vec<f64>>,
}

impl<'a> Shooting<'a> {
    pub fn new(m: &'a SystemModel, law: &'a TerminalLaw, x_t: &[f64], ws: Vec<Vec<f64>>) -> Self {
        Shooting {
            m,
            law,
            x_t: x_t.to_vec(),
            ws,
            level: None,
            weight: 0.0,
        }
    }

    pub fn with_penalty(mut self, level: Option<f64>, weight: f64) -> Self {
        self.level = level;
        self.weight = weight;
        self
    }

    fn horizon(&self) -> usize {
        self.ws.len() - 1
    }

    fn penalty(&self, pi: f64) -> (f64, f64) {
        match self.level {
            Some(c) if pi > c => (self.weight * (pi - c).powi(2), 2.0 * self.weight * (pi - c)),
            _ => (0.0, 0.0),
        }
    }

    /// States `x(t..t+T)` (with `x(t)` first).
    fn rollout(&self, u: &[f64]) -> Option<Vec<Vec<f64>>> {
        let mut xs = vec![self.x_t.clone()];
        for (s, &us) in u.iter().enumerate() {
            let next = self.m.step(&xs[s], us, &self.ws[s]).ok()?;
            if next.iter().any(|v| !v.is_finite()) {
                return None;
            }
            xs.push(next);
        }
        Some(xs)
    }

    /// Objective; `None` when the rollout or a cost is not finite.
    pub fn evaluate(&self, u: &[f64]) -> Option<Evaluation> {
        let xs = self.rollout(u)?;
        let r = self.law.relative_degree;
        let mut cost = 0.0;
        for (s, &us) in u.iter().enumerate() {
            cost += self.m.running_cost(r, &xs[s], us, &self.ws[s]).ok()?;
        }
        let t = self.horizon();
        let terminal_value = self.law.cost(&xs[t], &self.ws[t]);
        cost += terminal_value;
        let objective = cost + self.penalty(terminal_value).0;
        objective.is_finite().then(|| Evaluation {
            objective,
            cost,
            terminal_value,
            states: xs[1..].to_vec(),
        })
    }

    /// Objective and its gradient by a backward adjoint pass.
    pub fn gradient(&self, u: &[f64]) -> Option<(f64, Vec<f64>)> {
        let xs = self.rollout(u)?;
        let (n, r, t) = (self.m.n(), self.law.relative_degree, self.horizon());
        let pi = self.law.cost(&xs[t], &self.ws[t]);
        let (pen, dpen) = self.penalty(pi);
        let mut lambda: Vec<f64> = self
            .law
            .cost_gradient(&xs[t], &self.ws[t])
            .iter()
            .map(|g| g * (1.0 + dpen))
            .collect();
        let mut grad = vec![0.0; t];
        let mut objective = pi + pen;
        for s in (0..t).rev() {
            let xd: Vec<Dual> = (0..n).map(|i| Dual::seed(xs[s][i], n + 1, i)).collect();
            let ud = Dual::seed(u[s], n + 1, n);
            let wd: Vec<Dual> = self.ws[s].iter().map(|&v| Dual::constant(v, n + 1)).collect();
            let fd = self.m.step_with(&xd, &ud, &wd).ok()?;
            let ld = self.m.running_cost_with(r, &xd, &ud, &wd).ok()?;
            objective += ld.value;
            grad[s] = ld.grad[n] + fd.iter().zip(&lambda).map(|(f, l)| f.grad[n] * l).sum::<f64>();
            lambda = (0..n)
                .map(|i| ld.grad[i] + fd.iter().zip(&lambda).map(|(f, l)| f.grad[i] * l).sum::<f64>())
                .collect();
        }
        (objective.is_finite() && grad.iter().all(|g| g.is_finite())).then_some((objective, grad))
    }
}

/// Controls from the terminal feedback applied along its own prediction.
pub fn feedback_rollout(m: &SystemModel, cfg: &MprConfig, x_t: &[f64], ws: &[Vec<f64>]) -> Vec<f64> {
    let mut x = x_t.to_vec();
    let mut u = Vec::with_capacity(cfg.horizon);
    for w in ws.iter().take(cfg.horizon) {
        let us = cfg.clamp(cfg.terminal.feedback(&x, w));
        let us = if us.is_finite() { us } else { cfg.clamp(0.0) };
        u.push(us);
        match m.step(&x, us, w) {
            Ok(next) if !out_of_bounds(&next) => x = next,
            _ => {
                u.resize(cfg.horizon, cfg.clamp(0.0));
                break;
            }
        }
    }
    u
}

/// Feedforward `alpha(w(s))` along the exosystem sequence, clamped.
pub fn feedforward(cfg: &MprConfig, ws: &[Vec<f64>]) -> Vec<f64> {
    let alpha = cfg.terminal.fbi.alpha();
    ws.iter()
        .take(cfg.horizon)
        .map(|w| cfg.clamp(alpha.eval(w).unwrap_or(0.0)))
        .collect()
}

/// Range scanned by [`greedy_rollout`] when there is no control box.
const GREEDY_RANGE: f64 = 32.0;
const GREEDY_POINTS: usize = 257;

/// Step-by-step minimizer of `l + pi^T` at the next state: a grid scan over
/// the box, refined by a one-dimensional solve. Stays finite where the
/// feedback rollout escapes.
pub fn greedy_rollout(m: &SystemModel, cfg: &MprConfig, x_t: &[f64], ws: &[Vec<f64>]) -> Vec<f64> {
    let (lo, hi) = cfg.u_box.unwrap_or((-GREEDY_RANGE, GREEDY_RANGE));
    let opts = LbfgsOptions {
        max_iter: 50,
        ..LbfgsOptions::default()
    };
    let mut x = x_t.to_vec();
    let mut u = Vec::with_capacity(cfg.horizon);
    for s in 0..cfg.horizon {
        let one = Shooting::new(m, &cfg.terminal, &x, ws[s..s + 2].to_vec());
        let best = (0..GREEDY_POINTS)
            .map(|i| lo + (hi - lo) * i as f64 / (GREEDY_POINTS - 1) as f64)
            .filter_map(|v| one.evaluate(&[v]).map(|e| (e.objective, v)))
            .min_by(|a, b| a.0.total_cmp(&b.0));
        let Some((_, v)) = best else { break };
        let v = solver::minimize(|c| one.gradient(c), &[v], cfg.u_box, &opts).map_or(v, |r| r.x[0]);
        match one.evaluate(&[v]) {
            Some(e) => x = e.states[0].clone(),
            None => break,
        }
        u.push(v);
    }
    u.resize(cfg.horizon, cfg.clamp(0.0));
    u
}

/// Cheapest finite guess among the feedback rollout, the feedforward, zero
/// controls and the greedy rollout.
pub fn cold_start(m: &SystemModel, cfg: &MprConfig, x_t: &[f64], ws: &[Vec<f64>]) -> Vec<f64> {
    let problem = Shooting::new(m, &cfg.terminal, x_t, ws.to_vec());
    let candidates = [
        feedback_rollout(m, cfg, x_t, ws),
        feedforward(cfg, ws),
        vec![cfg.clamp(0.0); cfg.horizon],
        greedy_rollout(m, cfg, x_t, ws),
    ];
    let mut best: Option<(f64, Vec<f64>)> = None;
    for c in candidates {
        if let Some(e) = problem.evaluate(&c) {
            if best.as_ref().is_none_or(|(v, _)| e.objective < *v) {
                best = Some((e.objective, c));
            }
        }
    }
    best.map_or_else(|| feedback_rollout(m, cfg, x_t, ws), |(_, c)| c)
}

pub fn solve_finite_horizon(
    m: &SystemModel,
    cfg: &MprConfig,
    x_t: &[f64],
    w_t: &[f64],
    warm: Option<&[f64]>,
) -> Result<HorizonSolution, MprError> {
    cfg.validate()?;
    let ws = exo_horizon(m, w_t, cfg.horizon)?;
    solve_with_exo(m, cfg, x_t, ws, warm)
}

/// As [`solve_finite_horizon`] with the exosystem sequence `w(t..t+T)` supplied.
pub fn solve_with_exo(
    m: &SystemModel,
    cfg: &MprConfig,
    x_t: &[f64],
    ws: Vec<Vec<f64>>,
    warm: Option<&[f64]>,
) -> Result<HorizonSolution, MprError> {
    cfg.validate()?;
    if x_t.iter().chain(ws.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(MprError::NonFinite);
    }
    let mut u: Vec<f64> = match warm {
        Some(w) if w.len() != cfg.horizon => {
            return Err(MprError::WarmLength {
                got: w.len(),
                want: cfg.horizon,
            })
        }
        Some(w) => w.iter().map(|&v| cfg.clamp(v)).collect(),
        None => cold_start(m, cfg, x_t, &ws),
    };
    let opts = LbfgsOptions {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        ..LbfgsOptions::default()
    };
    let mut weight = cfg.penalty.weight;
    let mut iterations = 0;
    let mut grad_norm;
    let mut round = 0;
    loop {
        let problem = Shooting::new(m, &cfg.terminal, x_t, ws.clone()).with_penalty(cfg.terminal_level, weight);
        let res = solver::minimize(|v| problem.gradient(v), &u, cfg.u_box, &opts).ok_or(MprError::DivergedRollout)?;
        iterations += res.iterations;
        grad_norm = res.grad_norm;
        u = res.x;
        let eval = problem.evaluate(&u).ok_or(MprError::DivergedRollout)?;
        let satisfied = cfg
            .terminal_level
            .is_none_or(|c| eval.terminal_value <= c * (1.0 + 1e-9));
        if satisfied || round == cfg.penalty.escalations {
            debug!(
                "mpr: solved in {iterations} iterations, objective {:.6e}, |pg| {:.3e}",
                eval.objective, grad_norm
            );
            return Ok(HorizonSolution {
                controls: u,
                states: eval.states,
                exo: ws,
                cost: eval.cost,
                objective: eval.objective,
                iterations,
                grad_norm,
                terminal_value: eval.terminal_value,
                terminal_ok: satisfied,
            });
        }
        weight *= cfg.penalty.factor;
        round += 1;
    }
}

/// Drops the first control and appends `kappa_T(x*(t+T), w(t+T))`, clamped.
pub fn shift_warm_start(prev: &HorizonSolution, law: &TerminalLaw, cfg: &MprConfig) -> Vec<f64> {
    let last = prev.states.last().expect("horizon is at least 1");
    let w_end = prev.exo.last().expect("exosystem sequence is nonempty");
    let tail = cfg.clamp(law.feedback(last, w_end));
    let tail = if tail.is_finite() { tail } else { cfg.clamp(0.0) };
    prev.controls[1..].iter().copied().chain([tail]).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    pub iterations: usize,
    pub grad_norm: f64,
    pub objective: f64,
    pub terminal_value: f64,
    pub terminal_ok: bool,
    /// The warm start diverged and the solve restarted from the feedback rollout.
    pub restarted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MprRun {
    pub trajectory: Trajectory,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl MprRun {
    pub fn diverged(&self) -> bool {
        self.trajectory.diverged()
    }

    /// `step,iterations,grad_norm,objective,terminal_value,terminal_ok,restarted`.
    pub fn diagnostics_csv(&self) -> String {
        let mut s = String::from("step,iterations,grad_norm,objective,terminal_value,terminal_ok,restarted\n");
        for d in &self.diagnostics {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                d.step,
                d.iterations,
                fmt_num(d.grad_norm),
                fmt_num(d.objective),
                fmt_num(d.terminal_value),
                u8::from(d.terminal_ok),
                u8::from(d.restarted)
            );
        }
        s
    }
}

/// Closed loop: solve, apply `u*(t)` to the true plant, shift, repeat.
/// Rows `0..steps`; a failed solve or a divergent state ends the run.
pub fn mpr_run(m: &SystemModel, cfg: &MprConfig, x0: &[f64], w0: &[f64], steps: usize) -> Result<MprRun, MprError> {
    cfg.validate()?;
    let mut run = MprRun {
        trajectory: Trajectory::new(m.n(), m.k()),
        diagnostics: Vec::with_capacity(steps),
    };
    let (mut x, mut w) = (x0.to_vec(), w0.to_vec());
    let mut warm: Option<Vec<f64>> = None;
    for t in 0..steps {
        if out_of_bounds(&x) {
            run.trajectory.mark_divergence(t);
            break;
        }
        let mut restarted = false;
        let sol = match solve_finite_horizon(m, cfg, &x, &w, warm.as_deref()) {
            Ok(sol) => sol,
            Err(MprError::DivergedRollout) if warm.is_some() => {
                restarted = true;
                match solve_finite_horizon(m, cfg, &x, &w, None) {
                    Ok(sol) => sol,
                    Err(MprError::DivergedRollout) => {
                        run.trajectory.mark_divergence(t);
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            Err(MprError::DivergedRollout) => {
                run.trajectory.mark_divergence(t);
                break;
            }
            Err(e) => return Err(e),
        };
        let u = sol.controls[0];
        run.diagnostics.push(StepDiagnostics {
            step: t,
            iterations: sol.iterations,
            grad_norm: sol.grad_norm,
            objective: sol.objective,
            terminal_value: sol.terminal_value,
            terminal_ok: sol.terminal_ok,
            restarted,
        });
        run.trajectory.push(m, x.clone(), w.clone(), u);
        warm = Some(shift_warm_start(&sol, &cfg.terminal, cfg));
        match (m.step(&x, u, &w), m.exo(&w)) {
            (Ok(xn), Ok(wn)) => {
                x = xn;
                w = wn;
            }
            _ => {
                run.trajectory.mark_divergence(t + 1);
                break;
            }
        }
    }
    Ok(run)
}
