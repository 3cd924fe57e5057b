//! Symmetric eigensolver (cyclic Jacobi) and the decompositions built on it.

use super::DenseMatrix;
use crate::error::{Error, Result};

/// Relative off-diagonal Frobenius norm at which the sweep loop stops.
pub const JACOBI_TOL: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Allowed asymmetry, relative to the largest entry, before rejecting input.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenvalues sorted non-ascending with matching orthonormal eigenvectors
/// stored as the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

fn check_symmetric(m: &DenseMatrix) -> Result<()> {
    if m.rows() != m.cols() {
        return Err(Error::shape(format!(
            "expected a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let asym = m.max_asymmetry();
    if asym > SYMMETRY_TOL * m.max_abs().max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j] * a[i * n + j];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi on a symmetric matrix. Returns unsorted eigenvalues and, if
/// requested, the accumulated rotations (eigenvectors in columns).
fn jacobi(m: &DenseMatrix, want_vectors: bool) -> Result<(Vec<f64>, Option<DenseMatrix>)> {
    check_symmetric(m)?;
    let n = m.rows();
    let mut a = m.symmetrized().into_vec();
    let mut v = want_vectors.then(|| DenseMatrix::identity(n).into_vec());
    let scale = m.frobenius_norm();
    let target = JACOBI_TOL * scale;

    let mut sweeps = 0;
    loop {
        let off = off_diagonal_norm(&a, n);
        if off <= target || off == 0.0 {
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence { sweeps, off_norm: off });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                // Rotation is numerically the identity; zero the entry.
                if sweeps > 4 && apq.abs() * 1e18 < app.abs().min(aqq.abs()) {
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    let new_kp = c * akp - s * akq;
                    let new_kq = s * akp + c * akq;
                    a[k * n + p] = new_kp;
                    a[p * n + k] = new_kp;
                    a[k * n + q] = new_kq;
                    a[q * n + k] = new_kq;
                }
                if let Some(v) = v.as_mut() {
                    for k in 0..n {
                        let vkp = v[k * n + p];
                        let vkq = v[k * n + q];
                        v[k * n + p] = c * vkp - s * vkq;
                        v[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }
    let values = (0..n).map(|i| a[i * n + i]).collect();
    let vectors = v.map(|v| DenseMatrix::from_vec(n, n, v).expect("n*n buffer"));
    Ok((values, vectors))
}

/// All eigenvalues of a symmetric matrix, sorted non-ascending.
pub fn sym_eigvals(m: &DenseMatrix) -> Result<Vec<f64>> {
    let (mut values, _) = jacobi(m, false)?;
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

/// Full eigendecomposition `m = Q·diag(values)·Qᵀ`, sorted non-ascending.
pub fn sym_eigen(m: &DenseMatrix) -> Result<SymEigen> {
    let (values, vectors) = jacobi(m, true)?;
    let vectors = vectors.expect("vectors requested");
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let sorted_values = order.iter().map(|&i| values[i]).collect();
    let sorted_vectors = DenseMatrix::from_fn(n, n, |r, c| vectors[(r, order[c])]);
    Ok(SymEigen {
        values: sorted_values,
        vectors: sorted_vectors,
    })
}

/// Singular values, non-ascending, `min(rows, cols)` of them, by one-sided
/// Jacobi rotations on the columns. Small values keep their relative accuracy,
/// which a Gram-matrix route loses.
pub fn singular_values(w: &DenseMatrix) -> Result<Vec<f64>> {
    let a = if w.rows() >= w.cols() { w.transpose() } else { w.clone() };
    // Rows of `a` are the vectors being orthogonalized.
    let k = a.rows();
    let mut cols: Vec<Vec<f64>> = (0..k).map(|i| a.row(i).to_vec()).collect();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let mut converged = k < 2;
    let mut off_norm: f64 = 0.0;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        converged = true;
        off_norm = 0.0;
        for p in 0..k {
            for q in p + 1..k {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                let scale = (alpha * beta).sqrt();
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * scale {
                    continue;
                }
                off_norm = off_norm.max(gamma.abs() / scale);
                converged = false;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = cols.split_at_mut(q);
                for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            sweeps: JACOBI_MAX_SWEEPS,
            off_norm,
        });
    }
    let mut sv: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// `Q·diag(f(λ))·Qᵀ` for a spectral function `f`.
pub fn spectral_apply(eig: &SymEigen, f: impl Fn(f64) -> f64) -> DenseMatrix {
    let n = eig.values.len();
    let fv: Vec<f64> = eig.values.iter().map(|&l| f(l)).collect();
    let scaled = DenseMatrix::from_fn(n, n, |r, c| eig.vectors[(r, c)] * fv[c]);
    scaled.matmul_t(&eig.vectors).expect("square factors")
}

/// Matrix exponential `exp(p·t)` of a symmetric matrix.
pub fn expm_sym(p: &DenseMatrix, t: f64) -> Result<DenseMatrix> {
    let eig = sym_eigen(p)?;
    Ok(spectral_apply(&eig, |l| (l * t).exp()))
}

/// Determinant by partial-pivot elimination; used by consistency checks.
pub fn determinant(m: &DenseMatrix) -> f64 {
    assert_eq!(m.rows(), m.cols());
    let n = m.rows();
    let mut a = m.clone();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[(i, col)].abs().total_cmp(&a[(j, col)].abs()))
            .expect("non-empty range");
        if a[(pivot, col)] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for k in 0..n {
                let tmp = a[(col, k)];
                a[(col, k)] = a[(pivot, k)];
                a[(pivot, k)] = tmp;
            }
            det = -det;
        }
        det *= a[(col, col)];
        for r in (col + 1)..n {
            let f = a[(r, col)] / a[(col, col)];
            for k in col..n {
                a[(r, k)] -= f * a[(col, k)];
            }
        }
    }
    det
}
