//! Dense factorization paths and the dense eigen oracle.
//!
//! The Cholesky factorization and the tridiagonal QL eigensolver used by the
//! Lanczos path are implemented here directly, so the verification oracle
//! (nalgebra's Cholesky + symmetric eigendecomposition) shares no machinery
//! with the iterative route it checks.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::assembly::SymSparse;
use crate::scalar::Real;

use super::{normalize_signs, ModeSet, SolverError, DENSE_DIM_CAP};

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub(crate) fn cholesky_factor<T: Real>(a: &DMatrix<T>) -> Result<DMatrix<T>, SolverError> {
    let n = a.nrows();
    let mut l = DMatrix::<T>::zeros(n, n);
    for j in 0..n {
        let mut s = a[(j, j)];
        for k in 0..j {
            s -= l[(j, k)] * l[(j, k)];
        }
        if !(s > T::zero()) {
            return Err(SolverError::NotPositiveDefinite {
                context: format!("Cholesky pivot {j} = {}", s.as_f64()),
            });
        }
        let pivot = s.sqrt();
        l[(j, j)] = pivot;
        for i in (j + 1)..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / pivot;
        }
    }
    Ok(l)
}

/// Solves `L L^T x = b` given the lower factor.
pub(crate) fn cholesky_solve<T: Real>(l: &DMatrix<T>, b: &[T]) -> Vec<T> {
    let n = l.nrows();
    debug_assert_eq!(b.len(), n);
    let mut y = b.to_vec();
    for i in 0..n {
        let mut v = y[i];
        for k in 0..i {
            v -= l[(i, k)] * y[k];
        }
        y[i] = v / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut v = y[i];
        for k in (i + 1)..n {
            v -= l[(k, i)] * y[k];
        }
        y[i] = v / l[(i, i)];
    }
    y
}

fn pythag<T: Real>(a: T, b: T) -> T {
    let absa = a.abs();
    let absb = b.abs();
    if absa > absb {
        let q = absb / absa;
        absa * (T::one() + q * q).sqrt()
    } else if absb == T::zero() {
        T::zero()
    } else {
        let q = absa / absb;
        absb * (T::one() + q * q).sqrt()
    }
}

fn sign_of<T: Real>(magnitude: T, sign: T) -> T {
    if sign >= T::zero() {
        magnitude.abs()
    } else {
        -magnitude.abs()
    }
}

/// QL with implicit shifts for a symmetric tridiagonal matrix.
///
/// `diag` holds the n diagonal entries, `off` the n-1 subdiagonal couplings.
/// Returns ascending eigenvalues and the matching orthonormal eigenvector
/// columns.
pub(crate) fn tridiagonal_eigen<T: Real>(
    diag: &[T],
    off: &[T],
) -> Result<(Vec<T>, DMatrix<T>), SolverError> {
    let n = diag.len();
    assert!(off.len() + 1 == n || (n == 0 && off.is_empty()));
    if n == 0 {
        return Ok((Vec::new(), DMatrix::zeros(0, 0)));
    }
    let mut d = diag.to_vec();
    let mut e = Vec::with_capacity(n);
    e.extend_from_slice(off);
    e.push(T::zero());
    let mut z = DMatrix::<T>::identity(n, n);
    let eps = T::epsilon();
    let two = T::cast(2.0);

    for l in 0..n {
        let mut iter = 0usize;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= eps * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 64 {
                return Err(SolverError::TridiagonalFailure);
            }
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = pythag(g, T::one());
            g = d[m] - d[l] + e[l] / (g + sign_of(r, g));
            let mut s = T::one();
            let mut c = T::one();
            let mut p = T::zero();
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = pythag(f, g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] -= p;
                    e[m] = T::zero();
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    f = z[(k, i + 1)];
                    z[(k, i + 1)] = s * z[(k, i)] + c * f;
                    z[(k, i)] = c * z[(k, i)] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = T::zero();
        }
    }

    // Ascending order with the eigenvector permutation applied.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).expect("finite eigenvalues"));
    let values: Vec<T> = order.iter().map(|&i| d[i]).collect();
    let mut vectors = DMatrix::<T>::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        vectors.set_column(new_col, &z.column(old_col));
    }
    Ok((values, vectors))
}

/// Dense Cholesky solve of `K u = F` for systems within [`DENSE_DIM_CAP`].
pub fn solve_static_dense<T: Real>(k: &SymSparse<T>, load: &[T]) -> Result<Vec<T>, SolverError> {
    if k.dim() > DENSE_DIM_CAP {
        return Err(SolverError::DimensionCap {
            dim: k.dim(),
            cap: DENSE_DIM_CAP,
        });
    }
    if load.len() != k.dim() {
        return Err(SolverError::DimensionMismatch {
            got: load.len(),
            expected: k.dim(),
        });
    }
    let l = cholesky_factor(&k.to_dense())?;
    Ok(cholesky_solve(&l, load))
}

/// Dense LU solve of the (possibly indefinite) system `(K - omega^2 M) u = F`.
pub fn solve_shifted_dense<T: Real>(
    k: &SymSparse<T>,
    m: &SymSparse<T>,
    omega_sq: T,
    load: &[T],
) -> Result<Vec<T>, SolverError> {
    if k.dim() > DENSE_DIM_CAP {
        return Err(SolverError::DimensionCap {
            dim: k.dim(),
            cap: DENSE_DIM_CAP,
        });
    }
    if load.len() != k.dim() || m.dim() != k.dim() {
        return Err(SolverError::DimensionMismatch {
            got: load.len(),
            expected: k.dim(),
        });
    }
    let a = k.linear_comb(T::one(), m, -omega_sq).to_dense();
    let lu = a.lu();
    let b = DVector::from_column_slice(load);
    let x = lu.solve(&b).ok_or(SolverError::NotPositiveDefinite {
        context: "K - omega^2 M is singular".into(),
    })?;
    Ok(x.iter().copied().collect())
}

/// Full spectrum of `K u = lambda M u` by dense reduction: Cholesky of M,
/// then a standard symmetric eigendecomposition. Eigenvalues ascend and the
/// eigenvectors are M-orthonormal. Capped at [`DENSE_DIM_CAP`] dofs.
pub fn dense_eig_oracle<T: Real>(
    k: &SymSparse<T>,
    m: &SymSparse<T>,
) -> Result<ModeSet<T>, SolverError> {
    let n = k.dim();
    if n > DENSE_DIM_CAP {
        return Err(SolverError::DimensionCap {
            dim: n,
            cap: DENSE_DIM_CAP,
        });
    }
    if m.dim() != n {
        return Err(SolverError::DimensionMismatch {
            got: m.dim(),
            expected: n,
        });
    }
    let kd = k.to_dense();
    let md = m.to_dense();
    let chol = md.cholesky().ok_or(SolverError::NotPositiveDefinite {
        context: "mass matrix in dense oracle".into(),
    })?;
    let l = chol.l();
    // A = L^{-1} K L^{-T}, symmetrized against rounding.
    let x = l
        .solve_lower_triangular(&kd)
        .ok_or(SolverError::NotPositiveDefinite {
            context: "singular Cholesky factor".into(),
        })?;
    let a = l
        .solve_lower_triangular(&x.transpose())
        .ok_or(SolverError::NotPositiveDefinite {
            context: "singular Cholesky factor".into(),
        })?;
    let a = (&a + &a.transpose()) * T::cast(0.5);
    let eig = SymmetricEigen::new(a);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .expect("finite eigenvalues")
    });
    let lambdas: Vec<T> = order.iter().map(|&i| eig.eigenvalues[i]).collect();

    let lt = l.transpose();
    let mut modes = DMatrix::<T>::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        let y = eig.eigenvectors.column(i).into_owned();
        let u = lt
            .solve_upper_triangular(&y)
            .ok_or(SolverError::NotPositiveDefinite {
                context: "singular Cholesky factor".into(),
            })?;
        modes.set_column(col, &u);
    }
    normalize_signs(&mut modes);
    ModeSet::new(lambdas, modes, T::epsilon())
}
