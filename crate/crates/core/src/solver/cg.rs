//! Jacobi-preconditioned conjugate gradients for SPD CSR systems.

use crate::assembly::SymSparse;
use crate::scalar::Real;

use super::{dot, norm2, SolverError};

pub(crate) struct CgOutcome<T> {
    pub x: Vec<T>,
    #[allow(dead_code)]
    pub iterations: usize,
}

/// Solves `A x = b` to `|A x - b| <= tol * |b|`, checking the true residual
/// before accepting convergence of the recurrence.
pub(crate) fn pcg_jacobi<T: Real>(
    a: &SymSparse<T>,
    b: &[T],
    tol: T,
    max_iterations: usize,
) -> Result<CgOutcome<T>, SolverError> {
    let n = a.dim();
    let b_norm = norm2(b);
    if b_norm == T::zero() {
        return Ok(CgOutcome {
            x: vec![T::zero(); n],
            iterations: 0,
        });
    }

    let diag = a.diag();
    let mut inv_diag = Vec::with_capacity(n);
    for (row, &d) in diag.iter().enumerate() {
        if !(d > T::zero()) {
            return Err(SolverError::NonPositiveDiagonal { row });
        }
        inv_diag.push(T::one() / d);
    }

    let target = tol * b_norm;
    let mut x = vec![T::zero(); n];
    let mut r = b.to_vec();
    let mut z: Vec<T> = r.iter().zip(&inv_diag).map(|(ri, di)| *ri * *di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![T::zero(); n];
    let mut last_rel = T::one();

    for iteration in 1..=max_iterations {
        a.matvec_into(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > T::zero()) {
            return Err(SolverError::NotPositiveDefinite {
                context: format!("p^T A p = {} in CG iteration {iteration}", pq.as_f64()),
            });
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        let r_norm = norm2(&r);
        last_rel = r_norm / b_norm;
        let mut restarted = false;
        if r_norm <= target {
            // Recurrence drift check: accept only on the true residual.
            let mut true_r = a.matvec(&x);
            for i in 0..n {
                true_r[i] = b[i] - true_r[i];
            }
            let true_norm = norm2(&true_r);
            last_rel = true_norm / b_norm;
            if true_norm <= target {
                return Ok(CgOutcome {
                    x,
                    iterations: iteration,
                });
            }
            // Restart from the true residual with a fresh search direction.
            r = true_r;
            restarted = true;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = if restarted { T::zero() } else { rz_next / rz };
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }

    Err(SolverError::CgDidNotConverge {
        iterations: max_iterations,
        residual: last_rel.as_f64(),
    })
}
