//! Projected limited-memory BFGS for a common box `lo <= x_i <= hi`.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    /// Stop when the projected-gradient norm falls to this value.
    pub tol: f64,
    pub max_iter: usize,
    pub memory: usize,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            tol: 1e-8,
            max_iter: 200,
            memory: 10,
            c1: 1e-4,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted step, starting with the initial value.
    pub history: Vec<f64>,
}

pub fn project(x: &[f64], bounds: Option<(f64, f64)>) -> Vec<f64> {
    match bounds {
        Some((lo, hi)) => x.iter().map(|v| v.clamp(lo, hi)).collect(),
        None => x.to_vec(),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn projected_gradient_norm(x: &[f64], g: &[f64], bounds: Option<(f64, f64)>) -> f64 {
    let step: Vec<f64> = x.iter().zip(g).map(|(xi, gi)| xi - gi).collect();
    let p = project(&step, bounds);
    p.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

/// Variables held at a bound by the gradient.
fn active(x: &[f64], g: &[f64], bounds: Option<(f64, f64)>) -> Vec<bool> {
    match bounds {
        Some((lo, hi)) => x
            .iter()
            .zip(g)
            .map(|(&xi, &gi)| (xi <= lo && gi > 0.0) || (xi >= hi && gi < 0.0))
            .collect(),
        None => vec![false; x.len()],
    }
}

/// `-H g` by the two-loop recursion over the free variables.
fn direction(g: &[f64], mask: &[bool], mem: &VecDeque<(Vec<f64>, Vec<f64>)>) -> Vec<f64> {
    let free = |v: &[f64]| -> Vec<f64> { v.iter().zip(mask).map(|(x, &a)| if a { 0.0 } else { *x }).collect() };
    let mut q = free(g);
    let pairs: Vec<(Vec<f64>, Vec<f64>, f64)> = mem
        .iter()
        .filter_map(|(s, y)| {
            let (s, y) = (free(s), free(y));
            let sy = dot(&s, &y);
            (sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0).then(|| (s, y, 1.0 / sy))
        })
        .collect();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.last() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter().zip(mask).map(|(v, &a)| if a { 0.0 } else { -v }).collect()
}

/// Minimizes `f` (value and gradient; `None` where undefined) over the box.
/// Returns `None` if `f` is undefined at the projected starting point.
pub fn minimize<F>(mut f: F, x0: &[f64], bounds: Option<(f64, f64)>, opts: &LbfgsOptions) -> Option<LbfgsResult>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let mut x = project(x0, bounds);
    let (mut fx, mut g) = f(&x)?;
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::with_capacity(opts.memory);
    let mut history = vec![fx];
    let mut iterations = 0;
    let mut pg = projected_gradient_norm(&x, &g, bounds);
    let mut converged = pg <= opts.tol;
    while !converged && iterations < opts.max_iter {
        let mask = active(&x, &g, bounds);
        let mut d = direction(&g, &mask, &mem);
        if dot(&d, &g) >= 0.0 {
            mem.clear();
            d = direction(&g, &mask, &mem);
        }
        let first = mem.is_empty();
        let mut alpha = if first {
            (1.0 / norm(&d).max(1e-300)).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
            let trial = project(&trial, bounds);
            let delta: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            let slope = dot(&g, &delta);
            if slope < 0.0 {
                if let Some((ft, gt)) = f(&trial) {
                    if ft <= fx + opts.c1 * slope {
                        accepted = Some((trial, ft, gt, delta));
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        let Some((xn, fnew, gn, s)) = accepted else {
            if mem.is_empty() {
                break;
            }
            mem.clear();
            continue;
        };
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-12 * norm(&s) * norm(&y) {
            if mem.len() == opts.memory {
                mem.pop_front();
            }
            mem.push_back((s, y));
        }
        x = xn;
        fx = fnew;
        g = gn;
        history.push(fx);
        iterations += 1;
        pg = projected_gradient_norm(&x, &g, bounds);
        converged = pg <= opts.tol;
    }
    Some(LbfgsResult {
        x,
        value: fx,
        grad_norm: pg,
        iterations,
        converged,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Some((v, g))
    }

    #[test]
    fn unconstrained_rosenbrock() {
        let opts = LbfgsOptions {
            max_iter: 500,
            ..Default::default()
        };
        let r = minimize(rosenbrock, &[-1.2, 1.0], None, &opts).unwrap();
        assert!(r.converged, "{r:?}");
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn accepted_steps_decrease() {
        let r = minimize(rosenbrock, &[-1.2, 1.0], Some((-2.0, 0.5)), &LbfgsOptions::default()).unwrap();
        for p in r.history.windows(2) {
            assert!(p[1] <= p[0], "{:?}", r.history);
        }
        assert!(r.x.iter().all(|v| (-2.0..=0.5).contains(v)));
        // constrained optimum has a at its bound and b = a^2
        assert!((r.x[0] - 0.5).abs() < 1e-12 && (r.x[1] - 0.25).abs() < 1e-8, "{r:?}");
    }

    #[test]
    fn box_active_quadratic() {
        // min sum (x_i - c_i)^2 over [-1, 1]
        let c = [3.0, -0.25, -5.0, 0.5];
        let f = |x: &[f64]| -> Option<(f64, Vec<f64>)> {
            let v = x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum();
            Some((v, x.iter().zip(&c).map(|(a, b)| 2.0 * (a - b)).collect()))
        };
        let r = minimize(f, &[0.0; 4], Some((-1.0, 1.0)), &LbfgsOptions::default()).unwrap();
        assert!(r.converged);
        for (got, want) in r.x.iter().zip([1.0, -0.25, -1.0, 0.5]) {
            assert!((got - want).abs() < 1e-9, "{r:?}");
        }
    }

    #[test]
    fn undefined_start_is_reported() {
        assert!(minimize(|_| None, &[0.0], None, &LbfgsOptions::default()).is_none());
    }

    #[test]
    fn undefined_regions_are_backtracked() {
        // defined only for x < 1, minimum at 0.9
        let f = |x: &[f64]| (x[0] < 1.0).then(|| ((x[0] - 0.9).powi(2), vec![2.0 * (x[0] - 0.9)]));
        let r = minimize(f, &[-3.0], None, &LbfgsOptions::default()).unwrap();
        assert!((r.x[0] - 0.9).abs() < 1e-8, "{r:?}");
    }
}
