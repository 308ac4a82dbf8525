//! Shift-invert Lanczos for `K u = lambda M u`.
//!
//! The iteration runs on `(K - sigma M)^{-1} M` in the M-inner product, the
//! discrete analogue of the compact solution operator whose spectral
//! decomposition supplies the mode basis. The basis is fully
//! reorthogonalized each step; converged Ritz pairs are locked and kept
//! M-orthogonal to every later Krylov basis. Inner solves use a dense
//! Cholesky factorization up to [`DENSE_DIM_CAP`] dofs and
//! Jacobi-preconditioned CG beyond.

use nalgebra::DMatrix;

use crate::assembly::SymSparse;
use crate::scalar::Real;

use super::cg::pcg_jacobi;
use super::dense::{cholesky_factor, cholesky_solve, tridiagonal_eigen};
use super::{dot, normalize_signs, ModeSet, SolveOptions, SolverError, DENSE_DIM_CAP};

enum InnerSolver<T: Real> {
    Dense(DMatrix<T>),
    Cg {
        matrix: SymSparse<T>,
        tol: T,
        max_iterations: usize,
    },
}

impl<T: Real> InnerSolver<T> {
    fn build(shifted: SymSparse<T>, opts: &SolveOptions<T>) -> Result<Self, SolverError> {
        if shifted.dim() <= DENSE_DIM_CAP {
            Ok(Self::Dense(cholesky_factor(&shifted.to_dense())?))
        } else {
            Ok(Self::Cg {
                matrix: shifted,
                tol: opts.cg_tol,
                max_iterations: opts.max_iterations,
            })
        }
    }

    fn apply(&self, rhs: &[T]) -> Result<Vec<T>, SolverError> {
        match self {
            Self::Dense(l) => Ok(cholesky_solve(l, rhs)),
            Self::Cg {
                matrix,
                tol,
                max_iterations,
            } => Ok(pcg_jacobi(matrix, rhs, *tol, *max_iterations)?.x),
        }
    }
}

fn axpy<T: Real>(y: &mut [T], a: T, x: &[T]) {
    for (yi, xi) in y.iter_mut().zip(x.iter()) {
        *yi += a * *xi;
    }
}

/// Deterministic splitmix64 start vector; `round` perturbs restarts.
fn start_vector<T: Real>(n: usize, round: u64) -> Vec<T> {
    let mut state = 0x9E37_79B9_7F4A_7C15u64 ^ round.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    let mut v = Vec::with_capacity(n);
    for _ in 0..n {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        let unit = (z >> 11) as f64 / (1u64 << 53) as f64;
        v.push(T::cast(unit - 0.5));
    }
    v
}

struct LockedMode<T> {
    lambda: T,
    vector: Vec<T>,
    mvec: Vec<T>,
}

/// Relative residual of a candidate eigenpair on the original pencil.
fn pencil_residual<T: Real>(k: &SymSparse<T>, m: &SymSparse<T>, lambda: T, u: &[T]) -> T {
    let ku = k.matvec(u);
    let mu = m.matvec(u);
    let mut res_sq = T::zero();
    let mut ku_sq = T::zero();
    for i in 0..u.len() {
        let r = ku[i] - lambda * mu[i];
        res_sq += r * r;
        ku_sq += ku[i] * ku[i];
    }
    if ku_sq > T::zero() {
        (res_sq / ku_sq).sqrt()
    } else {
        T::cast(f64::INFINITY)
    }
}

/// Computes the `count` smallest eigenpairs of `K u = lambda M u`.
///
/// Modes come back M-normalized with ascending eigenvalues and the
/// largest-magnitude entry of each mode positive. Residuals are verified
/// against `opts.eig_tol` before returning.
///
/// A single Krylov run cannot see eigenvalue multiplicities (the space
/// holds one direction per distinct eigenvalue reachable from its start
/// vector), so once `count` pairs are locked, insurance sweeps restart in
/// the M-orthogonal complement until a sweep finds nothing below the
/// current k-th eigenvalue.
pub fn eigs_smallest<T: Real>(
    k_mat: &SymSparse<T>,
    m_mat: &SymSparse<T>,
    count: usize,
    opts: &SolveOptions<T>,
) -> Result<ModeSet<T>, SolverError> {
    opts.validate()?;
    let n = k_mat.dim();
    if m_mat.dim() != n {
        return Err(SolverError::DimensionMismatch {
            got: m_mat.dim(),
            expected: n,
        });
    }
    if count > n {
        return Err(SolverError::TooManyModes {
            requested: count,
            free: n,
        });
    }
    if count == 0 {
        return ModeSet::new(Vec::new(), DMatrix::zeros(n, 0), opts.eig_tol);
    }

    let sigma = opts.shift;
    let shifted = if sigma == T::zero() {
        k_mat.clone()
    } else {
        k_mat.linear_comb(T::one(), m_mat, -sigma)
    };
    let inner = InnerSolver::build(shifted, opts)?;

    let mut driver = Lanczos {
        k_mat,
        m_mat,
        inner,
        sigma,
        eig_tol: opts.eig_tol,
        max_basis: (3 * count + 40).min(n),
        n,
        locked: Vec::new(),
        restarts: 0,
        max_restarts: 60,
    };

    // Phase 1: gather `count` pairs.
    let mut stagnation = 0usize;
    while driver.locked.len() < count {
        driver.budget_check(count)?;
        let newly = driver.run_round(count - driver.locked.len())?;
        stagnation = if newly == 0 { stagnation + 1 } else { 0 };
        if stagnation >= 6 {
            return Err(SolverError::EigenDidNotConverge {
                locked: driver.locked.len(),
                requested: count,
                restarts: driver.restarts,
            });
        }
    }

    // Phase 2: insurance sweeps against hidden multiplicities. Each sweep
    // hunts the smallest eigenvalue of the complement; once that lies at or
    // above the current k-th eigenvalue, the k smallest are complete.
    loop {
        driver
            .locked
            .sort_by(|a, b| a.lambda.partial_cmp(&b.lambda).expect("finite lambdas"));
        if driver.locked.len() >= n {
            break;
        }
        let cap_lambda = driver.locked[count - 1].lambda;
        driver.budget_check(count)?;
        let before = driver.locked.len();
        let newly = driver.run_round(1)?;
        if newly == 0 {
            // The sweep must converge its smallest pair to certify anything.
            return Err(SolverError::EigenDidNotConverge {
                locked: driver.locked.len(),
                requested: count,
                restarts: driver.restarts,
            });
        }
        let found_below = driver.locked[before..]
            .iter()
            .any(|l| l.lambda < cap_lambda * (T::one() - T::cast(1e-10)));
        if !found_below {
            break;
        }
    }

    driver
        .locked
        .sort_by(|a, b| a.lambda.partial_cmp(&b.lambda).expect("finite lambdas"));
    driver.locked.truncate(count);
    let lambdas: Vec<T> = driver.locked.iter().map(|l| l.lambda).collect();
    let mut modes = DMatrix::<T>::zeros(n, count);
    for (col, lock) in driver.locked.iter().enumerate() {
        for (row, &value) in lock.vector.iter().enumerate() {
            modes[(row, col)] = value;
        }
    }
    normalize_signs(&mut modes);
    let modeset = ModeSet::new(lambdas, modes, opts.eig_tol)?;

    // Contract check: every returned pair meets the residual tolerance.
    let residuals = super::residual_report(k_mat, m_mat, &modeset)?;
    if residuals.iter().any(|&r| r > opts.eig_tol) {
        return Err(SolverError::EigenDidNotConverge {
            locked: count,
            requested: count,
            restarts: driver.restarts,
        });
    }
    Ok(modeset)
}

struct Lanczos<'a, T: Real> {
    k_mat: &'a SymSparse<T>,
    m_mat: &'a SymSparse<T>,
    inner: InnerSolver<T>,
    sigma: T,
    eig_tol: T,
    max_basis: usize,
    n: usize,
    locked: Vec<LockedMode<T>>,
    restarts: usize,
    max_restarts: usize,
}

impl<T: Real> Lanczos<'_, T> {
    fn budget_check(&self, requested: usize) -> Result<(), SolverError> {
        if self.restarts >= self.max_restarts {
            return Err(SolverError::EigenDidNotConverge {
                locked: self.locked.len(),
                requested,
                restarts: self.restarts,
            });
        }
        Ok(())
    }

    /// One Krylov round in the complement of the locked modes, locking at
    /// most `needed` converged Ritz pairs (ascending prefix). Returns how
    /// many were locked.
    fn run_round(&mut self, needed: usize) -> Result<usize, SolverError> {
        let n = self.n;
        // Fresh M-normalized start vector orthogonal to the locked modes.
        let mut v = start_vector::<T>(n, self.restarts as u64);
        self.restarts += 1;
        for _ in 0..2 {
            for lock in &self.locked {
                let c = dot(&v, &lock.mvec);
                axpy(&mut v, -c, &lock.vector);
            }
        }
        let mv = self.m_mat.matvec(&v);
        let norm = dot(&v, &mv).sqrt();
        if !(norm > T::zero()) {
            return Ok(0);
        }
        let inv = T::one() / norm;
        for vi in &mut v {
            *vi *= inv;
        }

        let mut basis_v: Vec<Vec<T>> = Vec::new();
        let mut basis_mv: Vec<Vec<T>> = Vec::new();
        let mut alphas: Vec<T> = Vec::new();
        let mut betas: Vec<T> = Vec::new();
        let cap = self.max_basis.min(n - self.locked.len());

        loop {
            let mv = self.m_mat.matvec(&v);
            let mut w = self.inner.apply(&mv)?;
            basis_v.push(std::mem::take(&mut v));
            basis_mv.push(mv);
            let j = basis_v.len() - 1;
            let alpha = dot(&w, &basis_mv[j]);
            alphas.push(alpha);
            axpy(&mut w, -alpha, &basis_v[j]);
            if j > 0 {
                let beta_prev = betas[j - 1];
                axpy(&mut w, -beta_prev, &basis_v[j - 1]);
            }
            // Full reorthogonalization, two passes, against locked modes and
            // the whole basis.
            for _ in 0..2 {
                for lock in &self.locked {
                    let c = dot(&w, &lock.mvec);
                    axpy(&mut w, -c, &lock.vector);
                }
                for i in 0..basis_v.len() {
                    let c = dot(&w, &basis_mv[i]);
                    axpy(&mut w, -c, &basis_v[i]);
                }
            }
            let mw = self.m_mat.matvec(&w);
            let beta_sq = dot(&w, &mw);
            let beta = if beta_sq > T::zero() {
                beta_sq.sqrt()
            } else {
                T::zero()
            };
            let scale = alphas.iter().fold(T::one(), |acc, a| acc.max(a.abs()));
            let breakdown = beta <= T::epsilon() * T::cast(100.0) * scale;
            let terminal = breakdown || basis_v.len() >= cap;

            // Locking runs at most once per round (either every pair we
            // still need converged, or the round ends), so one tridiagonal
            // spectrum never contributes the same Ritz pair twice.
            if terminal || basis_v.len().is_multiple_of(5) {
                let newly = attempt_lock(
                    self.k_mat,
                    self.m_mat,
                    self.sigma,
                    &alphas,
                    &betas,
                    &basis_v,
                    needed,
                    self.eig_tol,
                    terminal,
                    &mut self.locked,
                );
                if newly > 0 || terminal {
                    return Ok(newly);
                }
            }
            betas.push(beta);
            let inv = T::one() / beta;
            v = w;
            for vi in &mut v {
                *vi *= inv;
            }
        }
    }
}

/// Extracts Ritz pairs from the current tridiagonal matrix and checks the
/// ascending prefix against `eig_tol` on the original pencil. The prefix is
/// locked when every still-needed pair converged, or unconditionally when
/// the round is ending (`terminal`). Returns how many pairs were locked.
#[allow(clippy::too_many_arguments)]
fn attempt_lock<T: Real>(
    k_mat: &SymSparse<T>,
    m_mat: &SymSparse<T>,
    sigma: T,
    alphas: &[T],
    betas: &[T],
    basis_v: &[Vec<T>],
    needed: usize,
    eig_tol: T,
    terminal: bool,
    locked: &mut Vec<LockedMode<T>>,
) -> usize {
    let m = alphas.len();
    let Ok((thetas, s_mat)) = tridiagonal_eigen(alphas, &betas[..m.saturating_sub(1)]) else {
        return 0;
    };
    // theta = 1/(lambda - sigma); discard noise-level thetas whose lambdas
    // the Krylov space cannot resolve.
    let theta_scale = thetas.iter().fold(T::zero(), |acc, t| acc.max(t.abs()));
    let theta_floor = T::epsilon() * T::cast(10.0) * theta_scale;
    let mut candidates: Vec<(T, usize)> = thetas
        .iter()
        .enumerate()
        .filter(|(_, &t)| t > theta_floor)
        .map(|(i, &t)| (sigma + T::one() / t, i))
        .collect();
    candidates.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite lambdas"));

    let n = basis_v[0].len();
    // Converged ascending prefix of the candidates we still need.
    let mut prefix: Vec<LockedMode<T>> = Vec::new();
    for &(lambda, idx) in candidates.iter().take(needed) {
        // Ritz vector u = sum_j s[j, idx] v_j.
        let mut u = vec![T::zero(); n];
        for (j, vj) in basis_v.iter().enumerate() {
            axpy(&mut u, s_mat[(j, idx)], vj);
        }
        let mu = m_mat.matvec(&u);
        let norm = dot(&u, &mu).sqrt();
        if !(norm > T::zero()) {
            break;
        }
        let inv = T::one() / norm;
        let u: Vec<T> = u.iter().map(|&x| x * inv).collect();
        let mu: Vec<T> = mu.iter().map(|&x| x * inv).collect();
        if pencil_residual(k_mat, m_mat, lambda, &u) > eig_tol {
            // Prefix rule: anything above this one is even less converged.
            break;
        }
        prefix.push(LockedMode {
            lambda,
            vector: u,
            mvec: mu,
        });
    }

    if prefix.len() == needed || (terminal && !prefix.is_empty()) {
        let newly = prefix.len();
        locked.append(&mut prefix);
        newly
    } else {
        0
    }
}
