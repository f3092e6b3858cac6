//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{Complex, DMatrix, DVector};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type C64 = Complex<f64>;

/// Relative singular-value floor below which a system counts as singular.
pub const SINGULAR_RTOL: f64 = 1e-12;

/// Outcome of a dense solve.
#[derive(Debug, Clone)]
pub struct Solved {
    pub x: Vector,
    /// 2-norm condition number of the system matrix.
    pub condition: f64,
}

/// Solves `a x = b` by LU with partial pivoting. Returns `None` when `a`
/// is numerically singular.
pub fn solve(a: &Mat, b: &Vector) -> Option<Solved> {
    let condition = condition_number(a);
    if !condition.is_finite() || condition > 1.0 / SINGULAR_RTOL {
        return None;
    }
    let x = a.clone().lu().solve(b)?;
    Some(Solved { x, condition })
}

pub fn condition_number(a: &Mat) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    let sv = a.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Eigenvalues of a real square matrix via Hessenberg reduction and
/// shifted QR (real Schur form), sorted by real then imaginary part.
pub fn eigenvalues(m: &Mat, max_iter: usize) -> Option<Vec<C64>> {
    if m.nrows() == 0 {
        return Some(Vec::new());
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, max_iter)?;
    let mut eig: Vec<C64> = schur.complex_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Some(eig)
}

pub fn to_complex(m: &Mat) -> DMatrix<C64> {
    m.map(|v| C64::new(v, 0.0))
}

/// Smallest singular value of a complex matrix.
pub fn min_singular_value(m: &DMatrix<C64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().min()
}

/// Matrix power by repeated multiplication.
pub fn mat_pow(m: &Mat, k: usize) -> Mat {
    let mut out = Mat::identity(m.nrows(), m.ncols());
    for _ in 0..k {
        out = &out * m;
    }
    out
}

/// Spectral radius from [`eigenvalues`].
pub fn spectral_radius(m: &Mat) -> Option<f64> {
    Some(eigenvalues(m, 10_000)?.iter().fold(0.0, |acc, l| acc.max(l.norm())))
}

/// Row-major nested `Vec` view.
pub fn rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}
