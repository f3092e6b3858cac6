use rand::Rng;

use super::{TerminalError, TerminalLaw};
use crate::model::SystemModel;
use crate::par::{sample_rng, Exec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionMode {
    /// Decrease under `u = kappa_T(x, w)`.
    Feedback,
    /// Decrease under the best scalar `u` (control Lyapunov function).
    Clf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionConfig {
    pub mode: RegionMode,
    pub w_bound: f64,
    /// Half-width of the box sampled for `z = x - theta(w)`.
    pub z_bound: f64,
    pub samples: usize,
    pub seed: u64,
    /// Increasing candidate levels; samples below the first are ignored.
    pub grid: Vec<f64>,
    pub exec: Exec,
}

impl Default for RegionConfig {
    fn default() -> Self {
        RegionConfig {
            mode: RegionMode::Feedback,
            w_bound: 1.0,
            z_bound: 2.0,
            samples: 2000,
            seed: 0,
            grid: geometric_grid(1e-4, 1e2, 61),
            exec: Exec::default(),
        }
    }
}

/// `count` levels from `lo` to `hi`, equally spaced in log scale.
pub fn geometric_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let ratio = (hi / lo).ln() / (count.max(2) - 1) as f64;
    (0..count).map(|i| lo * (ratio * i as f64).exp()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovRegion {
    /// Largest certified level; 0 when the decrease fails at the first level.
    pub c_star: f64,
    /// Samples with level inside the grid.
    pub samples_in_grid: usize,
    /// Lowest level at which the decrease failed, if any.
    pub first_failure: Option<f64>,
}

struct Sample {
    level: f64,
    decreases: bool,
}

fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..iters {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        }
    }
    fa.min(fb)
}

fn draw(m: &SystemModel, law: &TerminalLaw, cfg: &RegionConfig, index: usize) -> Option<Sample> {
    let mut rng = sample_rng(cfg.seed, index);
    let w: Vec<f64> = (0..m.k())
        .map(|_| rng.random_range(-cfg.w_bound..=cfg.w_bound))
        .collect();
    let theta = law.fbi.theta().eval(&w).ok()?;
    let x: Vec<f64> = theta
        .iter()
        .map(|t| t + rng.random_range(-cfg.z_bound..=cfg.z_bound))
        .collect();
    let level = law.cost(&x, &w);
    let w_next = m.exo(&w).ok()?;
    let next_cost = |u: f64| -> f64 {
        match m.step(&x, u, &w) {
            Ok(xn) if xn.iter().all(|v| v.is_finite()) => law.cost(&xn, &w_next),
            _ => f64::INFINITY,
        }
    };
    let after = match cfg.mode {
        RegionMode::Feedback => next_cost(law.feedback(&x, &w)),
        RegionMode::Clf => {
            let u0 = law.feedback(&x, &w);
            let span = 5.0 * (1.0 + u0.abs());
            golden_min(next_cost, u0 - span, u0 + span, 80).min(next_cost(u0))
        }
    };
    Some(Sample {
        level,
        decreases: after <= level + 1e-12 * (1.0 + level.abs()),
    })
}

/// Sampled estimate of the largest level set of `pi_T` on which it
/// decreases along the closed loop (or under the best control).
pub fn estimate_lyapunov_region(
    m: &SystemModel,
    law: &TerminalLaw,
    cfg: &RegionConfig,
) -> Result<LyapunovRegion, TerminalError> {
    let (lo, hi) = match (cfg.grid.first(), cfg.grid.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => {
            return Ok(LyapunovRegion {
                c_star: 0.0,
                samples_in_grid: 0,
                first_failure: None,
            })
        }
    };
    let samples = cfg.exec.map(cfg.samples, |i| draw(m, law, cfg, i));
    let in_grid: Vec<Sample> = samples
        .into_iter()
        .flatten()
        .filter(|s| s.level >= lo && s.level <= hi)
        .collect();
    let first_failure = in_grid
        .iter()
        .filter(|s| !s.decreases)
        .map(|s| s.level)
        .fold(None, |acc: Option<f64>, l| Some(acc.map_or(l, |a| a.min(l))));
    let c_star = match first_failure {
        None => hi,
        Some(fail) => cfg.grid.iter().copied().filter(|&c| c < fail).fold(0.0, f64::max),
    };
    Ok(LyapunovRegion {
        c_star,
        samples_in_grid: in_grid.len(),
        first_failure,
    })
}

/// DP-equation residual ratios along rays through the origin of `(z, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DpResidual {
    pub eps: Vec<f64>,
    /// `max |e| / eps^(D+1)` per entry of `eps`.
    pub ratios: Vec<f64>,
    /// `max |e|` per entry of `eps`.
    pub errors: Vec<f64>,
}

impl DpResidual {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }

    /// Ratios do not grow as `eps` shrinks (relative slack `tol`).
    pub fn non_increasing(&self, tol: f64) -> bool {
        self.ratios.windows(2).all(|p| p[1] <= p[0] * (1.0 + tol) + 1e-12)
    }
}

pub fn dp_residual_order(m: &SystemModel, law: &TerminalLaw) -> Result<DpResidual, TerminalError> {
    dp_residual_order_with(m, law, &[1e-1, 3e-2, 1e-2], 32, 0)
}

/// `e = pi_T(f(x, kappa_T, w), a(w)) + l(x, kappa_T, w) - pi_T(x, w)` at
/// `x = theta(eps w_hat) + eps z_hat`, `w = eps w_hat` for `directions`
/// seeded unit vectors `(z_hat, w_hat)`.
pub fn dp_residual_order_with(
    m: &SystemModel,
    law: &TerminalLaw,
    eps: &[f64],
    directions: usize,
    seed: u64,
) -> Result<DpResidual, TerminalError> {
    let (n, k) = (m.n(), m.k());
    let theta = law.fbi.theta();
    let dirs: Vec<Vec<f64>> = (0..directions)
        .map(|i| {
            let mut rng = sample_rng(seed, i);
            let mut d: Vec<f64> = (0..n + k).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            d.iter_mut().for_each(|v| *v /= norm);
            d
        })
        .collect();
    let order = law.cost_degree as i32 + 1;
    let mut ratios = Vec::with_capacity(eps.len());
    let mut errors = Vec::with_capacity(eps.len());
    for &e in eps {
        let mut worst: f64 = 0.0;
        for d in &dirs {
            let w: Vec<f64> = d[n..].iter().map(|v| v * e).collect();
            let th = theta.eval(&w)?;
            let x: Vec<f64> = th.iter().zip(&d[..n]).map(|(t, z)| t + z * e).collect();
            let u = law.feedback(&x, &w);
            let xn = m.step(&x, u, &w)?;
            let wn = m.exo(&w)?;
            let l = m.running_cost(law.relative_degree, &x, u, &w)?;
            let res = law.cost(&xn, &wn) + l - law.cost(&x, &w);
            worst = worst.max(res.abs());
        }
        errors.push(worst);
        ratios.push(worst / e.powi(order));
    }
    Ok(DpResidual {
        eps: eps.to_vec(),
        ratios,
        errors,
    })
}
