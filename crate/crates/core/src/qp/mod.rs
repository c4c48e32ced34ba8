//! Small dense convex QP solver.
//!
//! Solves
//!
//! ```text
//! minimize    1/2 x'Px + q'x
//! subject to  l <= Ax <= u
//! ```
//!
//! with `P` symmetric positive semidefinite, by operator splitting (ADMM) on a
//! Ruiz-equilibrated copy of the problem, followed by an active-set polish of
//! the ADMM iterate. Problems on which ADMM runs out of iterations are handed
//! to a dense interior-point method. Both MPC layers are posed as problems of this form; L1
//! terms are turned into slack variables before they reach the solver.

mod admm;
mod ipm;
mod sparse;

use std::fs;
use std::io::{self, Write as _};
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

pub use admm::QpSolver;

/// Bounds with magnitude at or above this value are treated as infinite.
pub const INFINITY_BOUND: f64 = 1e20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("lower bound exceeds upper bound in row {row}: {l} > {u}")]
    BoundsInverted { row: usize, l: f64, u: f64 },
    #[error("P is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("KKT factorisation failed")]
    Factorization,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Solved,
    MaxIter,
    Infeasible,
}

/// `minimize 1/2 x'Px + q'x  s.t.  l <= Ax <= u`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a: DMatrix<f64>,
    pub l: DVector<f64>,
    pub u: DVector<f64>,
}

impl QpProblem {
    /// Validates dimensions and bounds, symmetrizes `P` and clips tiny negative
    /// eigenvalues (down to -1e-9) to zero.
    pub fn new(
        p: DMatrix<f64>,
        q: DVector<f64>,
        a: DMatrix<f64>,
        l: DVector<f64>,
        u: DVector<f64>,
    ) -> Result<Self, QpError> {
        let n = q.len();
        let m = l.len();
        if p.shape() != (n, n) {
            return Err(QpError::Dimension(format!("P is {:?}, expected ({n}, {n})", p.shape())));
        }
        if a.shape() != (m, n) {
            return Err(QpError::Dimension(format!("A is {:?}, expected ({m}, {n})", a.shape())));
        }
        if u.len() != m {
            return Err(QpError::Dimension(format!("u has length {}, expected {m}", u.len())));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite("P"));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite("q"));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite("A"));
        }
        if l.iter().chain(u.iter()).any(|v| v.is_nan()) {
            return Err(QpError::NonFinite("bounds"));
        }
        check_bounds(&l, &u)?;

        let mut p = (&p + p.transpose()) * 0.5;
        ensure_psd(&mut p)?;
        Ok(Self { p, q, a, l, u })
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn m(&self) -> usize {
        self.l.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.q.dot(x)
    }

    /// Writes `P.csv`, `q.csv`, `A.csv`, `l.csv`, `u.csv` into `dir` for offline inspection.
    pub fn dump_csv(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        let write_matrix = |name: &str, m: &DMatrix<f64>| -> io::Result<()> {
            let mut f = io::BufWriter::new(fs::File::create(dir.join(name))?);
            for i in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:e}", m[(i, j)])).collect();
                writeln!(f, "{}", row.join(","))?;
            }
            Ok(())
        };
        let write_vector = |name: &str, v: &DVector<f64>| -> io::Result<()> {
            let mut f = io::BufWriter::new(fs::File::create(dir.join(name))?);
            for x in v.iter() {
                writeln!(f, "{x:e}")?;
            }
            Ok(())
        };
        write_matrix("P.csv", &self.p)?;
        write_vector("q.csv", &self.q)?;
        write_matrix("A.csv", &self.a)?;
        write_vector("l.csv", &self.l)?;
        write_vector("u.csv", &self.u)
    }
}

pub(crate) fn check_bounds(l: &DVector<f64>, u: &DVector<f64>) -> Result<(), QpError> {
    for (row, (&li, &ui)) in l.iter().zip(u.iter()).enumerate() {
        if li > ui {
            return Err(QpError::BoundsInverted { row, l: li, u: ui });
        }
    }
    Ok(())
}

fn ensure_psd(p: &mut DMatrix<f64>) -> Result<(), QpError> {
    let n = p.nrows();
    if n == 0 {
        return Ok(());
    }
    // Fast path: a Cholesky factor of P + tiny*I exists for every PSD matrix.
    let shift = 1e-12 * (1.0 + p.diagonal().amax());
    let shifted = &*p + DMatrix::identity(n, n) * shift;
    if shifted.cholesky().is_some() {
        return Ok(());
    }
    let eig = SymmetricEigen::new(p.clone());
    let min = eig.eigenvalues.min();
    if min < -1e-9 {
        return Err(QpError::NotPsd(min));
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    *p = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    Ok(())
}

/// Solver tuning. Defaults suit the small problems in this crate.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSettings {
    /// Absolute tolerance on the primal and dual residuals (infinity norm).
    pub eps_abs: f64,
    pub max_iter: usize,
    /// Tolerance of the primal infeasibility certificate.
    pub eps_infeasible: f64,
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation parameter in (0, 2).
    pub alpha: f64,
    /// Iterations between step-size adaptations; 0 disables adaptation.
    pub adaptive_rho_interval: usize,
    pub scaling_iters: usize,
    pub polish: bool,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            eps_abs: 1e-6,
            max_iter: 20_000,
            eps_infeasible: 1e-6,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            adaptive_rho_interval: 25,
            scaling_iters: 15,
            polish: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub status: QpStatus,
    /// Infinity-norm distance of `Ax` to `[l, u]`.
    pub primal_res: f64,
    /// Infinity norm of `Px + q + A'y`.
    pub dual_res: f64,
    pub iterations: usize,
    pub objective: f64,
    /// Whether the returned point came from the active-set polish.
    pub polished: bool,
}

/// One-shot solve with default settings apart from the tolerance and iteration cap.
pub fn solve(problem: &QpProblem, eps_abs: f64, max_iter: usize) -> Result<QpSolution, QpError> {
    let settings = QpSettings { eps_abs, max_iter, ..QpSettings::default() };
    let mut solver = QpSolver::new(problem, settings)?;
    Ok(solver.solve())
}

/// Residuals of a candidate primal-dual pair against the unscaled problem.
pub fn residuals(problem: &QpProblem, x: &DVector<f64>, y: &DVector<f64>) -> (f64, f64) {
    let ax = &problem.a * x;
    let primal = ax
        .iter()
        .zip(problem.l.iter().zip(problem.u.iter()))
        .map(|(&v, (&lo, &hi))| (lo - v).max(v - hi).max(0.0))
        .fold(0.0, f64::max);
    let dual = (&problem.p * x + &problem.q + problem.a.transpose() * y).amax();
    (primal, dual)
}
