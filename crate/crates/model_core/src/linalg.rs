//! Small dense helpers shared by the beam crates.

use nalgebra::{DMatrix, SMatrix, SVector};

use crate::{Mat3, Vec3};

/// Skew map: `skew(u) * w == u.cross(&w)`.
pub fn skew(u: &Vec3) -> Mat3 {
    Mat3::new(0.0, -u[2], u[1], u[2], 0.0, -u[0], -u[1], u[0], 0.0)
}

/// Inverse of [`skew`] applied to the skew part of `m`.
pub fn unskew(m: &Mat3) -> Vec3 {
    Vec3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Largest absolute entry.
pub fn max_abs<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>) -> f64 {
    m.iter().fold(0.0, |a, &x| a.max(x.abs()))
}

/// Max row-sum norm.
pub fn norm_inf<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>) -> f64 {
    (0..R)
        .map(|i| (0..C).map(|j| m[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn is_symmetric<const N: usize>(m: &SMatrix<f64, N, N>, tol: f64) -> bool {
    let scale = max_abs(m).max(1.0);
    max_abs(&(m - m.transpose())) <= tol * scale
}

pub fn is_diagonal<const N: usize>(m: &SMatrix<f64, N, N>) -> bool {
    (0..N).all(|i| (0..N).all(|j| i == j || m[(i, j)] == 0.0))
}

/// Symmetric eigendecomposition with ascending eigenvalues.
///
/// Each eigenvector is signed so that its largest-magnitude component is
/// positive; ties go to the first such component.
pub fn sym_eigen<const N: usize>(m: &SMatrix<f64, N, N>) -> (SVector<f64, N>, SMatrix<f64, N, N>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = DMatrix::from_column_slice(N, N, sym.as_slice()).symmetric_eigen();
    let mut v = DMatrix::from_column_slice(N, N, eig.eigenvectors.as_slice());
    let mut a = v.transpose() * DMatrix::from_column_slice(N, N, sym.as_slice()) * &v;
    jacobi_refine(&mut a, &mut v);
    let mut order: Vec<usize> = (0..N).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let mut values = SVector::<f64, N>::zeros();
    let mut vectors = SMatrix::<f64, N, N>::zeros();
    for (k, &i) in order.iter().enumerate() {
        values[k] = a[(i, i)];
        let mut col = SVector::<f64, N>::from_iterator(v.column(i).iter().copied());
        let mut big = 0;
        for r in 1..N {
            if col[r].abs() > col[big].abs() * (1.0 + 1e-12) {
                big = r;
            }
        }
        if col[big] < 0.0 {
            col = -col;
        }
        vectors.set_column(k, &col);
    }
    (values, vectors)
}

/// Cyclic Jacobi sweeps on a nearly diagonal `a = vᵀ A v`; the QR-based
/// solver alone can leave eigenpair residuals far above rounding.
fn jacobi_refine(a: &mut DMatrix<f64>, v: &mut DMatrix<f64>) {
    let n = a.nrows();
    let scale = a.amax().max(f64::MIN_POSITIVE);
    for _ in 0..30 {
        let off = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).fold(0.0, |acc: f64, (i, j)| acc.max(a[(i, j)].abs()));
        if off <= f64::EPSILON * 1e-2 * scale {
            return;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
}

/// Applies `f` to the spectrum of a symmetric matrix.
pub fn sym_fn<const N: usize>(m: &SMatrix<f64, N, N>, f: impl Fn(f64) -> f64) -> SMatrix<f64, N, N> {
    if is_diagonal(m) {
        return SMatrix::from_diagonal(&m.diagonal().map(f));
    }
    let (vals, vecs) = sym_eigen(m);
    let fd = SMatrix::<f64, N, N>::from_diagonal(&vals.map(f));
    let out = vecs * fd * vecs.transpose();
    (out + out.transpose()) * 0.5
}

pub fn sym_sqrt<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    sym_fn(m, f64::sqrt)
}

pub fn sym_inv_sqrt<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    sym_fn(m, |x| 1.0 / x.sqrt())
}

pub fn min_eigenvalue<const N: usize>(m: &SMatrix<f64, N, N>) -> f64 {
    sym_eigen(m).0[0]
}

pub fn max_eigenvalue<const N: usize>(m: &SMatrix<f64, N, N>) -> f64 {
    sym_eigen(m).0[N - 1]
}
