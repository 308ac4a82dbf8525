//! Static solves and the generalized symmetric eigensolver.
//!
//! The static problem `K u = F` is solved by Jacobi-preconditioned
//! conjugate gradients (a dense Cholesky path exists for small systems and
//! must agree). The eigenproblem `K u = lambda M u` is solved by
//! shift-invert Lanczos in the M-inner product with full
//! reorthogonalization; [`dense_eig_oracle`] provides an independent dense
//! route for verification.

mod cg;
mod dense;
mod io;
mod lanczos;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::assembly::{LoadVector, SymSparse};
use crate::scalar::Real;

pub use dense::{dense_eig_oracle, solve_shifted_dense, solve_static_dense};
pub use io::{read_modeset, write_modeset, write_modeset_json, ModeSetHeader, MODESET_MAGIC};
pub use lanczos::eigs_smallest;

/// Dimension cap for the dense factorization paths and the eigen oracle.
pub const DENSE_DIM_CAP: usize = 600;

/// Default relative CG tolerance.
pub const DEFAULT_CG_TOL: f64 = 1e-10;
/// Default relative eigen residual tolerance.
pub const DEFAULT_EIG_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solve options: {reason}")]
    InvalidOptions { reason: String },
    #[error("matrix diagonal entry {row} is not positive; system is not SPD")]
    NonPositiveDiagonal { row: usize },
    #[error("conjugate gradients did not converge in {iterations} iterations (relative residual {residual:e})")]
    CgDidNotConverge { iterations: usize, residual: f64 },
    #[error("dimension {dim} exceeds the dense path cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("matrix is not positive definite ({context})")]
    NotPositiveDefinite { context: String },
    #[error("dimension mismatch: got {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("requested {requested} modes but the system has only {free} free dofs")]
    TooManyModes { requested: usize, free: usize },
    #[error("eigensolver locked only {locked} of {requested} modes after {restarts} restarts")]
    EigenDidNotConverge {
        locked: usize,
        requested: usize,
        restarts: usize,
    },
    #[error("tridiagonal eigensolver failed to converge")]
    TridiagonalFailure,
    #[error("mode set is invalid: {reason}")]
    InvalidModeSet { reason: String },
    #[error("mode container I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad mode container: {reason}")]
    BadContainer { reason: String },
}

/// Reorthogonalization policy of the Lanczos basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reorthogonalization {
    /// Re-project against every basis and locked vector at each step.
    #[default]
    Full,
}

#[derive(Debug, Clone)]
pub struct SolveOptions<T: Real> {
    /// Relative residual target of the conjugate-gradient solver.
    pub cg_tol: T,
    /// Iteration cap shared by CG and the Lanczos outer loop.
    pub max_iterations: usize,
    /// Shift sigma of the shift-invert transform (rad^2/s^2).
    pub shift: T,
    /// Relative eigen residual `|K u - lambda M u| / |K u|` target.
    pub eig_tol: T,
    pub reorthogonalization: Reorthogonalization,
}

impl<T: Real> Default for SolveOptions<T> {
    fn default() -> Self {
        Self {
            cg_tol: T::cast(DEFAULT_CG_TOL),
            max_iterations: 20_000,
            shift: T::zero(),
            eig_tol: T::cast(DEFAULT_EIG_TOL),
            reorthogonalization: Reorthogonalization::Full,
        }
    }
}

impl<T: Real> SolveOptions<T> {
    pub fn validate(&self) -> Result<(), SolverError> {
        let unit = |v: T| v > T::zero() && v < T::one();
        if !unit(self.cg_tol) || !unit(self.eig_tol) {
            return Err(SolverError::InvalidOptions {
                reason: "tolerances must lie in (0, 1)".into(),
            });
        }
        if self.max_iterations == 0 {
            return Err(SolverError::InvalidOptions {
                reason: "max_iterations must be at least 1".into(),
            });
        }
        if !self.shift.is_finite() {
            return Err(SolverError::InvalidOptions {
                reason: "shift must be finite".into(),
            });
        }
        Ok(())
    }
}

/// Ascending eigenvalues with M-orthonormal eigenvectors over free dofs.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet<T: Real> {
    lambdas: Vec<T>,
    /// Columns are the discrete eigenmodes (free dofs x modes).
    modes: DMatrix<T>,
    mesh_fingerprint: Option<String>,
    residual_tol: T,
}

impl<T: Real> ModeSet<T> {
    pub fn new(lambdas: Vec<T>, modes: DMatrix<T>, residual_tol: T) -> Result<Self, SolverError> {
        if modes.ncols() != lambdas.len() {
            return Err(SolverError::InvalidModeSet {
                reason: format!(
                    "{} eigenvalues but {} mode columns",
                    lambdas.len(),
                    modes.ncols()
                ),
            });
        }
        let mut prev = T::zero();
        for (i, &l) in lambdas.iter().enumerate() {
            if !l.is_finite() || l <= T::zero() {
                return Err(SolverError::InvalidModeSet {
                    reason: format!("lambda_{i} = {} is not strictly positive", l.as_f64()),
                });
            }
            if l < prev {
                return Err(SolverError::InvalidModeSet {
                    reason: format!("lambda_{i} breaks the ascending order"),
                });
            }
            prev = l;
        }
        if modes.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::InvalidModeSet {
                reason: "non-finite mode entry".into(),
            });
        }
        Ok(Self {
            lambdas,
            modes,
            mesh_fingerprint: None,
            residual_tol,
        })
    }

    pub fn with_fingerprint(mut self, fingerprint: String) -> Self {
        self.mesh_fingerprint = Some(fingerprint);
        self
    }

    pub fn num_modes(&self) -> usize {
        self.lambdas.len()
    }

    pub fn free_dofs(&self) -> usize {
        self.modes.nrows()
    }

    pub fn lambdas(&self) -> &[T] {
        &self.lambdas
    }

    pub fn lambda(&self, n: usize) -> T {
        self.lambdas[n]
    }

    pub fn modes(&self) -> &DMatrix<T> {
        &self.modes
    }

    pub fn mode(&self, n: usize) -> Vec<T> {
        self.modes.column(n).iter().copied().collect()
    }

    pub fn mesh_fingerprint(&self) -> Option<&str> {
        self.mesh_fingerprint.as_deref()
    }

    pub fn residual_tol(&self) -> T {
        self.residual_tol
    }

    /// First `count` modes as a new set.
    pub fn truncated(&self, count: usize) -> Self {
        let count = count.min(self.num_modes());
        Self {
            lambdas: self.lambdas[..count].to_vec(),
            modes: self.modes.columns(0, count).into_owned(),
            mesh_fingerprint: self.mesh_fingerprint.clone(),
            residual_tol: self.residual_tol,
        }
    }

    /// Max absolute deviation of `modes^T M modes` from the identity.
    pub fn max_ortho_deviation(&self, m: &SymSparse<T>) -> T {
        let k = self.num_modes();
        let mut worst = T::zero();
        let mut m_cols: Vec<Vec<T>> = Vec::with_capacity(k);
        for j in 0..k {
            m_cols.push(m.matvec(&self.mode(j)));
        }
        for i in 0..k {
            let ui = self.modes.column(i);
            for (j, mcol) in m_cols.iter().enumerate() {
                let mut dot = T::zero();
                for (a, b) in ui.iter().zip(mcol.iter()) {
                    dot += *a * *b;
                }
                let target = if i == j { T::one() } else { T::zero() };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

/// Solves `K u = F` by Jacobi-preconditioned conjugate gradients to the
/// relative residual in `opts`. A zero load returns the zero displacement.
pub fn solve_static<T: Real>(
    k: &SymSparse<T>,
    load: &LoadVector<T>,
    opts: &SolveOptions<T>,
) -> Result<Vec<T>, SolverError> {
    opts.validate()?;
    if load.len() != k.dim() {
        return Err(SolverError::DimensionMismatch {
            got: load.len(),
            expected: k.dim(),
        });
    }
    let outcome = cg::pcg_jacobi(k, load.as_slice(), opts.cg_tol, opts.max_iterations)?;
    Ok(outcome.x)
}

/// Relative eigen residuals `|K u_n - lambda_n M u_n|_2 / |K u_n|_2`.
pub fn residual_report<T: Real>(
    k: &SymSparse<T>,
    m: &SymSparse<T>,
    modeset: &ModeSet<T>,
) -> Result<Vec<T>, SolverError> {
    if modeset.free_dofs() != k.dim() || modeset.free_dofs() != m.dim() {
        return Err(SolverError::DimensionMismatch {
            got: modeset.free_dofs(),
            expected: k.dim(),
        });
    }
    let mut out = Vec::with_capacity(modeset.num_modes());
    for n in 0..modeset.num_modes() {
        let u = modeset.mode(n);
        let ku = k.matvec(&u);
        let mu = m.matvec(&u);
        let lambda = modeset.lambda(n);
        let mut res_sq = T::zero();
        let mut ku_sq = T::zero();
        for i in 0..u.len() {
            let r = ku[i] - lambda * mu[i];
            res_sq += r * r;
            ku_sq += ku[i] * ku[i];
        }
        out.push(res_sq.sqrt() / ku_sq.sqrt());
    }
    Ok(out)
}

/// Flips each column so its largest-magnitude entry is positive; ties break
/// on the first occurrence. Keeps output files reproducible.
pub(crate) fn normalize_signs<T: Real>(modes: &mut DMatrix<T>) {
    for mut col in modes.column_iter_mut() {
        let mut best = T::zero();
        let mut best_val = T::zero();
        for v in col.iter() {
            if v.abs() > best {
                best = v.abs();
                best_val = *v;
            }
        }
        if best_val < T::zero() {
            for v in col.iter_mut() {
                *v = -*v;
            }
        }
    }
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b.iter()) {
        acc += *x * *y;
    }
    acc
}

pub(crate) fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}
