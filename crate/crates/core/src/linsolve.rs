//! Regularized solves of `g theta_dot = b` for noisy metric estimates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-8;
const RESIDUAL_TOL: f64 = 1e-8;
/// Condition number above which a diagonal-shift solve carries a warning.
const CONDITION_WARN: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    DiagShift,
    StableSubspace,
}

/// Eigenvalues ascending, eigenvectors as matching orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.eigenvectors * DMatrix::from_diagonal(&self.eigenvalues) * self.eigenvectors.transpose()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub theta_dot: DVector<f64>,
    pub active_dims: usize,
    pub method: SolverKind,
    pub delta: f64,
    pub warning: Option<String>,
}

fn check_square_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "{}x{} matrix is not square",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOL * scale || m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

fn check_system(g: &DMatrix<f64>, b: &DVector<f64>, delta: f64) -> Result<()> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "delta must be positive, got {delta}"
        )));
    }
    check_square_symmetric(g)?;
    if b.len() != g.nrows() {
        return Err(Error::Dimension(format!(
            "{}x{} system with rhs of length {}",
            g.nrows(),
            g.ncols(),
            b.len()
        )));
    }
    if b.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(
            "right-hand side has non-finite entries".into(),
        ));
    }
    Ok(())
}

pub fn eigh_symmetric(m: &DMatrix<f64>) -> Result<EigenDecomposition> {
    check_square_symmetric(m)?;
    // symmetrize away round-off before handing to the solver
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let eigenvectors = DMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i))
            .collect::<Vec<_>>(),
    );
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Matrix absolute value `sqrt(m m) = B |Lambda| B^T`, the nearest PSD
/// matrix with the same eigenvectors.
pub fn psd_abs(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut eig = eigh_symmetric(m)?;
    eig.eigenvalues.apply(|l| *l = l.abs());
    Ok(eig.reconstruct())
}

/// Solves `(g + delta I) theta_dot = b`.
pub fn solve_diag_shift(g: &DMatrix<f64>, b: &DVector<f64>, delta: f64) -> Result<SolveReport> {
    check_system(g, b, delta)?;
    let d = g.nrows();
    let shifted = g + DMatrix::identity(d, d) * delta;
    let mut warning = None;
    let x = match shifted.clone().cholesky() {
        Some(ch) => ch.solve(b),
        None => {
            warning = Some(format!(
                "g + {delta} I is not positive definite; delta is below |lambda_min|"
            ));
            shifted
                .clone()
                .lu()
                .solve(b)
                .ok_or_else(|| Error::SolveFailed("shifted metric is singular".into()))?
        }
    };
    let residual = (&shifted * &x - b).norm();
    if !(residual <= RESIDUAL_TOL * b.norm().max(f64::MIN_POSITIVE)) && b.norm() > 0.0 {
        return Err(Error::SolveFailed(format!("residual {residual:e} after solve")));
    }
    if warning.is_none() {
        let ev = shifted.symmetric_eigenvalues();
        let (lo, hi) = (ev.min().abs(), ev.amax());
        if lo == 0.0 || hi / lo > CONDITION_WARN {
            warning = Some(format!("condition number {:e}", hi / lo));
        }
    }
    Ok(SolveReport {
        theta_dot: x,
        active_dims: d,
        method: SolverKind::DiagShift,
        delta,
        warning,
    })
}

/// Inverts `g` on the eigenspace with eigenvalues `>= delta` and drops the rest.
pub fn solve_stable_subspace(g: &DMatrix<f64>, b: &DVector<f64>, delta: f64) -> Result<SolveReport> {
    check_system(g, b, delta)?;
    let eig = eigh_symmetric(g)?;
    let bb = eig.eigenvectors.transpose() * b;
    let mut active = 0;
    let xb = DVector::from_iterator(
        bb.len(),
        bb.iter().zip(eig.eigenvalues.iter()).map(|(&bi, &l)| {
            if l >= delta {
                active += 1;
                bi / l
            } else {
                0.0
            }
        }),
    );
    Ok(SolveReport {
        theta_dot: &eig.eigenvectors * xb,
        active_dims: active,
        method: SolverKind::StableSubspace,
        delta,
        warning: None,
    })
}

pub fn solve(kind: SolverKind, g: &DMatrix<f64>, b: &DVector<f64>, delta: f64) -> Result<SolveReport> {
    match kind {
        SolverKind::DiagShift => solve_diag_shift(g, b, delta),
        SolverKind::StableSubspace => solve_stable_subspace(g, b, delta),
    }
}
