//! Dense symmetric positive-definite factorization.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Pivots below this multiple of the mean diagonal are treated as underflow.
const PIVOT_FLOOR: f64 = 1e-14;
/// Jitter added to the diagonal after an underflowing pivot, relative to the
/// mean diagonal.
pub const JITTER: f64 = 1e-12;

/// Lower-triangular Cholesky factor `A + jitter·I = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DMatrix<f64>,
    jitter: f64,
}

fn factor(a: &DMatrix<f64>, shift: f64, floor: f64) -> std::result::Result<DMatrix<f64>, (usize, f64)> {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)] + shift;
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > floor) {
            return Err((j, d));
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

impl Cholesky {
    /// Factors `a`, retrying once with a diagonal jitter of
    /// `1e-12·trace/n` if a pivot underflows.
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::Precondition(format!("matrix is {}×{}, not square", n, a.ncols())));
        }
        if n == 0 {
            return Ok(Cholesky { l: DMatrix::zeros(0, 0), jitter: 0.0 });
        }
        let scale = a.trace() / n as f64;
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::Factorization { row: 0, pivot: scale });
        }
        match factor(a, 0.0, PIVOT_FLOOR * scale) {
            Ok(l) => Ok(Cholesky { l, jitter: 0.0 }),
            Err(_) => {
                let jitter = JITTER * scale;
                factor(a, jitter, 0.0)
                    .map(|l| Cholesky { l, jitter })
                    .map_err(|(row, pivot)| Error::Factorization { row, pivot })
            }
        }
    }

    /// Diagonal shift that was needed, zero for a clean factorization.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Smallest diagonal entry of `L`, squared.
    pub fn min_pivot(&self) -> f64 {
        (0..self.dim()).map(|i| self.l[(i, i)].powi(2)).fold(f64::INFINITY, f64::min)
    }

    /// Solves `(A + jitter·I) x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n, "right-hand side length mismatch");
        let mut x = b.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[(i, k)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }
}

/// `A x` for a square matrix stored column-major.
pub fn mat_vec(a: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        if xj != 0.0 {
            for (o, &aij) in out.iter_mut().zip(a.column(j).iter()) {
                *o += aij * xj;
            }
        }
    }
    out
}

/// Eigen-decomposition `A = V diag(d) Vᵀ` of a symmetric matrix, polished
/// with cyclic Jacobi sweeps until the off-diagonal mass is below
/// `1e-15‖A‖_F`.
pub fn symmetric_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let start = nalgebra::SymmetricEigen::new(a.clone());
    let mut v = start.eigenvectors;
    let mut b = v.transpose() * a * &v;
    let scale = a.norm();
    let tol = 1e-15 * scale;
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for q in 0..n {
            for p in 0..q {
                off += b[(p, q)] * b[(p, q)];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for q in 1..n {
            for p in 0..q {
                let bpq = b[(p, q)];
                if bpq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (b[(q, q)] - b[(p, p)]) / (2.0 * bpq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (bkp, bkq) = (b[(k, p)], b[(k, q)]);
                    b[(k, p)] = c * bkp - s * bkq;
                    b[(k, q)] = s * bkp + c * bkq;
                }
                for k in 0..n {
                    let (bpk, bqk) = (b[(p, k)], b[(q, k)]);
                    b[(p, k)] = c * bpk - s * bqk;
                    b[(q, k)] = s * bpk + c * bqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| b[(i, i)]).collect(), v)
}

const MAX_SWEEPS: usize = 30;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn solves_small_system() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        let ch = Cholesky::new(&a).unwrap();
        let x = ch.solve(&[2.0, 1.0]);
        assert!((x[0] - 0.5).abs() < 1e-15 && x[1].abs() < 1e-15);
        assert_eq!(ch.jitter(), 0.0);
    }

    #[test]
    fn singular_matrix_gets_jitter() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let ch = Cholesky::new(&a).unwrap();
        assert!(ch.jitter() > 0.0 && ch.jitter() <= 1e-12);
    }

    #[test]
    fn indefinite_matrix_reports_pivot() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match Cholesky::new(&a) {
            Err(Error::Factorization { row, pivot }) => {
                assert_eq!(row, 1);
                assert!(pivot < 0.0);
            }
            other => panic!("expected factorization error, got {other:?}"),
        }
    }

    #[test]
    fn eigen_reconstructs() {
        let n = 60;
        let b = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 13) % 11) as f64 / 11.0 - 0.5);
        let a = &b * b.transpose();
        let (d, v) = symmetric_eigen(&a);
        let rec = &v * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d)) * v.transpose();
        assert!((rec - &a).abs().max() <= 1e-12 * a.abs().max());
        let ortho = v.transpose() * &v - DMatrix::<f64>::identity(n, n);
        assert!(ortho.abs().max() < 1e-12);
    }

    proptest! {
        #[test]
        fn residual_is_small(entries in proptest::collection::vec(-1.0f64..1.0, 36), rhs in proptest::collection::vec(-1.0f64..1.0, 6)) {
            let b = DMatrix::from_row_slice(6, 6, &entries);
            let a = &b * b.transpose() + DMatrix::identity(6, 6) * 0.1;
            let ch = Cholesky::new(&a).unwrap();
            let x = ch.solve(&rhs);
            let ax = mat_vec(&a, &x);
            let res: f64 = ax.iter().zip(&rhs).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
            prop_assert!(res <= 1e-10 * (1.0 + norm(&rhs)));
        }
    }
}
