use std::fmt::Write as _;

use super::chain::{build_output_chain_with, ChainConfig};
use super::{linearize, LinearData, ModelError, SystemModel};
use crate::linalg::{self, Mat, C64};

/// Margin used for every unit-circle comparison.
pub const UNIT_CIRCLE_TOL: f64 = 1e-6;

const EIG_MAX_SIZE: usize = 16;
const EIG_RESIDUAL: f64 = 1e-8;

/// All eigenvalues of a small dense matrix, residual-checked.
pub fn eig_small(m: &Mat) -> Result<Vec<C64>, ModelError> {
    if m.nrows() != m.ncols() {
        return Err(ModelError::Dimension(format!(
            "eigenvalues need a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() > EIG_MAX_SIZE {
        return Err(ModelError::Dimension(format!(
            "eigenvalue routine handles at most {EIG_MAX_SIZE}x{EIG_MAX_SIZE}"
        )));
    }
    let eig =
        linalg::eigenvalues(m, 10_000).ok_or_else(|| ModelError::Eigen("QR iteration did not converge".into()))?;
    let scale = m.norm().max(1.0);
    let mc = linalg::to_complex(m);
    for &l in &eig {
        let shifted = &mc - nalgebra::DMatrix::<C64>::identity(m.nrows(), m.nrows()) * l;
        let res = linalg::min_singular_value(&shifted);
        if res > EIG_RESIDUAL * scale {
            return Err(ModelError::Eigen(format!(
                "eigenvalue {} has residual {res:e}",
                format_complex(l)
            )));
        }
    }
    Ok(eig)
}

/// Zeros of the linear part: eigenvalues of `F - G (H F^r) / (H F^(r-1) G)`
/// minus the `r` that sit at the origin.
pub fn plant_zeros(ld: &LinearData, r: usize) -> Result<Vec<C64>, ModelError> {
    if r == 0 {
        return Err(ModelError::ZeroRelativeDegree);
    }
    let n = ld.n();
    let hfr1 = &ld.h * linalg::mat_pow(&ld.f, r - 1);
    let gain = (&hfr1 * &ld.g)[(0, 0)];
    if gain.abs() <= 1e-9 {
        return Err(ModelError::InconsistentRelativeDegree(gain));
    }
    let hfr = &hfr1 * &ld.f;
    let fbar = &ld.f - &ld.g * &hfr / gain;
    let mut eig = eig_small(&fbar)?;
    if r > n {
        return Err(ModelError::Dimension(format!(
            "relative degree {r} exceeds state dimension {n}"
        )));
    }
    eig.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    let mut zeros: Vec<C64> = eig.split_off(r);
    zeros.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(zeros)
}

fn pbh_stabilizable(ld: &LinearData, poles: &[C64]) -> bool {
    let n = ld.n();
    let scale = ld.f.norm().max(ld.g.norm()).max(1.0);
    poles.iter().filter(|l| l.norm() >= 1.0 - UNIT_CIRCLE_TOL).all(|&l| {
        let mut pencil = nalgebra::DMatrix::<C64>::zeros(n, n + 1);
        for i in 0..n {
            for j in 0..n {
                pencil[(i, j)] = C64::new(ld.f[(i, j)], 0.0);
            }
            pencil[(i, i)] -= l;
            pencil[(i, n)] = C64::new(ld.g[(i, 0)], 0.0);
        }
        linalg::min_singular_value(&pencil) > 1e-9 * scale
    })
}

/// Structural verdicts on the linear parts.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureReport {
    pub relative_degree: usize,
    pub plant_poles: Vec<C64>,
    pub plant_zeros: Vec<C64>,
    pub exo_poles: Vec<C64>,
    pub stabilizable: bool,
    pub linearly_minimum_phase: bool,
    /// No zero on the unit circle (weaker than minimum phase).
    pub hyperbolic_zero_dynamics: bool,
    pub exo_neutral: bool,
    pub certified_box: f64,
    pub certified_samples: usize,
}

impl StructureReport {
    /// Every flag synthesis relies on.
    pub fn all_ok(&self) -> bool {
        self.stabilizable && self.linearly_minimum_phase && self.exo_neutral
    }

    /// Names of failed flags.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.stabilizable {
            out.push("stabilizable");
        }
        if !self.linearly_minimum_phase {
            out.push("linearly_minimum_phase");
        }
        if !self.exo_neutral {
            out.push("exo_neutral");
        }
        out
    }

    /// `key = value` lines.
    pub fn to_kv(&self) -> String {
        let list = |v: &[C64]| v.iter().map(|&c| format_complex(c)).collect::<Vec<_>>().join("; ");
        let mut s = String::new();
        let _ = writeln!(s, "relative_degree = {}", self.relative_degree);
        let _ = writeln!(s, "plant_poles = {}", list(&self.plant_poles));
        let _ = writeln!(s, "plant_zeros = {}", list(&self.plant_zeros));
        let _ = writeln!(s, "exo_poles = {}", list(&self.exo_poles));
        let _ = writeln!(s, "stabilizable = {}", self.stabilizable);
        let _ = writeln!(s, "linearly_minimum_phase = {}", self.linearly_minimum_phase);
        let _ = writeln!(s, "hyperbolic_zero_dynamics = {}", self.hyperbolic_zero_dynamics);
        let _ = writeln!(s, "exo_neutral = {}", self.exo_neutral);
        let _ = writeln!(s, "certified_box = {:.16e}", self.certified_box);
        let _ = writeln!(s, "certified_samples = {}", self.certified_samples);
        s
    }

    /// Short human-readable block.
    pub fn summary(&self) -> String {
        let list = |v: &[C64]| {
            if v.is_empty() {
                "none".to_string()
            } else {
                v.iter().map(|&c| short_complex(c)).collect::<Vec<_>>().join(", ")
            }
        };
        let yes = |b: bool| if b { "yes" } else { "NO" };
        let mut s = String::new();
        let _ = writeln!(s, "relative degree     {}", self.relative_degree);
        let _ = writeln!(s, "plant poles         {}", list(&self.plant_poles));
        let _ = writeln!(s, "plant zeros         {}", list(&self.plant_zeros));
        let _ = writeln!(s, "exosystem poles     {}", list(&self.exo_poles));
        let _ = writeln!(s, "stabilizable        {}", yes(self.stabilizable));
        let _ = writeln!(s, "minimum phase       {}", yes(self.linearly_minimum_phase));
        let _ = writeln!(s, "exosystem neutral   {}", yes(self.exo_neutral));
        let _ = writeln!(
            s,
            "(relative degree certified on |.|inf <= {} with {} samples)",
            self.certified_box, self.certified_samples
        );
        s
    }
}

/// Full-precision `re+imi`.
pub fn format_complex(c: C64) -> String {
    let re = if c.re == 0.0 { 0.0 } else { c.re };
    let im = if c.im == 0.0 { 0.0 } else { c.im };
    format!("{re:.16e}{}{:.16e}i", if im < 0.0 { "-" } else { "+" }, im.abs())
}

fn short_complex(c: C64) -> String {
    let clean = |v: f64| if v.abs() < 1e-12 { 0.0 } else { v };
    let (re, im) = (clean(c.re), clean(c.im));
    if im == 0.0 {
        format!("{re:.6}")
    } else {
        format!("{re:.6}{}{:.6}i", if im < 0.0 { "-" } else { "+" }, im.abs())
    }
}

pub fn structure_report(m: &SystemModel) -> Result<StructureReport, ModelError> {
    structure_report_with(m, &ChainConfig::default())
}

pub fn structure_report_with(m: &SystemModel, cfg: &ChainConfig) -> Result<StructureReport, ModelError> {
    let chain = build_output_chain_with(m, cfg)?;
    let ld = linearize(m);
    let plant_poles = eig_small(&ld.f)?;
    let exo_poles = eig_small(&ld.a)?;
    let zeros = plant_zeros(&ld, chain.r)?;
    let exo_neutral = exo_poles.iter().all(|l| (l.norm() - 1.0).abs() <= UNIT_CIRCLE_TOL);
    let linearly_minimum_phase = zeros.iter().all(|z| z.norm() < 1.0 - UNIT_CIRCLE_TOL);
    let hyperbolic_zero_dynamics = zeros.iter().all(|z| (z.norm() - 1.0).abs() > UNIT_CIRCLE_TOL);
    Ok(StructureReport {
        relative_degree: chain.r,
        stabilizable: pbh_stabilizable(&ld, &plant_poles),
        plant_poles,
        plant_zeros: zeros,
        exo_poles,
        linearly_minimum_phase,
        hyperbolic_zero_dynamics,
        exo_neutral,
        certified_box: chain.certified_box,
        certified_samples: chain.certified_samples,
    })
}
