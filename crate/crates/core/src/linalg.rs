//! Fixed 4×4 dense helpers for the calibration code.

use crate::Scalar;

pub(crate) const N: usize = 4;

pub(crate) type Vec4<T> = [T; N];
pub(crate) type Mat4<T> = [[T; N]; N];

pub(crate) fn identity<T: Scalar>(scale: T) -> Mat4<T> {
    let mut m = [[T::zero(); N]; N];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = scale;
    }
    m
}

pub(crate) fn dot<T: Scalar>(a: &Vec4<T>, b: &Vec4<T>) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub(crate) fn mat_vec<T: Scalar>(m: &Mat4<T>, v: &Vec4<T>) -> Vec4<T> {
    std::array::from_fn(|i| dot(&m[i], v))
}

/// Lower Cholesky factor, or `None` when `a` is not positive definite.
pub(crate) fn cholesky<T: Scalar>(a: &Mat4<T>) -> Option<Mat4<T>> {
    let mut l = [[T::zero(); N]; N];
    for i in 0..N {
        for j in 0..=i {
            let s: T = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if !(d > T::zero()) || !d.is_finite() {
                    return None;
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

/// Largest eigenvalue of a symmetric positive semi-definite matrix.
pub(crate) fn max_eigenvalue<T: Scalar>(a: &Mat4<T>) -> T {
    let mut v = [T::one(); N];
    let mut lambda = T::zero();
    for _ in 0..200 {
        let w = mat_vec(a, &v);
        let norm = dot(&w, &w).sqrt();
        if norm == T::zero() {
            return T::zero();
        }
        let next = norm / dot(&v, &v).sqrt();
        v = w.map(|x| x / norm);
        if (next - lambda).abs() <= T::epsilon() * next {
            return next;
        }
        lambda = next;
    }
    lambda
}

pub(crate) struct RankDeficient {
    pub rank: usize,
}

/// Least squares via Householder QR of the `n × 4` design `rows`.
///
/// Columns whose diagonal of R falls below `sqrt(eps)` times the largest one
/// count as dependent.
pub(crate) fn qr_least_squares<T: Scalar>(rows: &[Vec4<T>], y: &[T]) -> Result<Vec4<T>, RankDeficient> {
    let n = rows.len();
    if n < N {
        return Err(RankDeficient { rank: n });
    }
    // Column-major working copy.
    let mut a: Vec<Vec<T>> = (0..N).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    let mut b = y.to_vec();
    let mut diag = [T::zero(); N];
    for k in 0..N {
        let norm = a[k][k..].iter().map(|&x| x * x).sum::<T>().sqrt();
        if norm == T::zero() {
            diag[k] = T::zero();
            continue;
        }
        let alpha = if a[k][k] > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: T = v.iter().map(|&x| x * x).sum();
        if vnorm2 == T::zero() {
            diag[k] = alpha;
            continue;
        }
        let two = T::lit(2.0);
        for col in a.iter_mut().skip(k) {
            let proj = two * v.iter().zip(&col[k..]).map(|(&p, &q)| p * q).sum::<T>() / vnorm2;
            for (c, &vi) in col[k..].iter_mut().zip(&v) {
                *c -= proj * vi;
            }
        }
        let proj = two * v.iter().zip(&b[k..]).map(|(&p, &q)| p * q).sum::<T>() / vnorm2;
        for (c, &vi) in b[k..].iter_mut().zip(&v) {
            *c -= proj * vi;
        }
        diag[k] = a[k][k];
    }
    let biggest = diag.iter().fold(T::zero(), |m, d| m.max(d.abs()));
    let tol = T::epsilon().sqrt() * biggest;
    let rank = diag.iter().filter(|d| d.abs() > tol).count();
    if biggest == T::zero() || rank < N {
        return Err(RankDeficient { rank });
    }
    let mut x = [T::zero(); N];
    for i in (0..N).rev() {
        let s: T = (i + 1..N).map(|j| a[j][i] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Ok(x)
}
