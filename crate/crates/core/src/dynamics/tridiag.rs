//! Eigen-decomposition of real symmetric matrices: Householder reduction to
//! tridiagonal form followed by implicit QL with Wilkinson-style shifts.

use crate::scalar::{lit, Real};

/// Eigenvalues and row-major eigenvectors (`z[row * n + k]` is component
/// `row` of eigenvector `k`) of the tridiagonal matrix with diagonal `diag`
/// and off-diagonal `off` (`off[i]` couples `i` and `i + 1`).
pub(crate) fn symmetric_tridiagonal_eigen<T: Real>(diag: &[T], off: &[T]) -> Option<(Vec<T>, Vec<T>)> {
    let n = diag.len();
    let mut e = vec![T::zero(); n];
    e[..n.saturating_sub(1)].copy_from_slice(&off[..n.saturating_sub(1)]);
    let mut z = vec![T::zero(); n * n];
    for i in 0..n {
        z[i * n + i] = T::one();
    }
    let d = implicit_ql(diag.to_vec(), e, &mut z)?;
    Some((d, transpose(&z, n)))
}

fn transpose<T: Real>(a: &[T], n: usize) -> Vec<T> {
    let mut t = vec![T::zero(); n * n];
    for r in 0..n {
        for c in 0..n {
            t[c * n + r] = a[r * n + c];
        }
    }
    t
}

/// Eigenvalues and eigenvectors of the dense symmetric matrix `a` (row-major,
/// only the upper triangle is read). Row `k` of the returned matrix is
/// eigenvector `k`.
pub(crate) fn symmetric_eigen<T: Real>(mut a: Vec<T>, n: usize) -> Option<(Vec<T>, Vec<T>)> {
    assert_eq!(a.len(), n * n);
    if n == 0 {
        return Some((Vec::new(), a));
    }
    let (d, e) = householder(&mut a, n);
    let d = implicit_ql(d, e, &mut a)?;
    Some((d, a))
}

/// Reduces `v` in place to `Qᵀ`, where `A = Q T Qᵀ` (the transposed layout
/// keeps every inner loop on contiguous rows); returns the diagonal and off-diagonal (`e[i]` couples `i`, `i + 1`) of `T`.
fn householder<T: Real>(v: &mut [T], n: usize) -> (Vec<T>, Vec<T>) {
    let mut d: Vec<T> = (0..n).map(|j| v[j * n + (n - 1)]).collect();
    let mut e = vec![T::zero(); n];
    for i in (1..n).rev() {
        let mut scale = T::zero();
        let mut h = T::zero();
        for &x in &d[..i] {
            scale += x.abs();
        }
        if scale == T::zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[j * n + (i - 1)];
                v[j * n + i] = T::zero();
                v[i * n + j] = T::zero();
            }
        } else {
            for x in &mut d[..i] {
                *x /= scale;
                h += *x * *x;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > T::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for x in &mut e[..i] {
                *x = T::zero();
            }
            for j in 0..i {
                f = d[j];
                v[i * n + j] = f;
                g = e[j] + v[j * n + j] * f;
                for k in j + 1..i {
                    g += v[j * n + k] * d[k];
                    e[k] += v[j * n + k] * f;
                }
                e[j] = g;
            }
            f = T::zero();
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[j * n + k] -= f * e[k] + g * d[k];
                }
                d[j] = v[j * n + (i - 1)];
                v[j * n + i] = T::zero();
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[i * n + (n - 1)] = v[i * n + i];
        v[i * n + i] = T::one();
        let h = d[i + 1];
        if h != T::zero() {
            for k in 0..=i {
                d[k] = v[(i + 1) * n + k] / h;
            }
            for j in 0..=i {
                let mut g = T::zero();
                for k in 0..=i {
                    g += v[(i + 1) * n + k] * v[j * n + k];
                }
                for k in 0..=i {
                    v[j * n + k] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[(i + 1) * n + k] = T::zero();
        }
    }
    for j in 0..n {
        d[j] = v[j * n + (n - 1)];
        v[j * n + (n - 1)] = T::zero();
    }
    v[n * n - 1] = T::one();
    // Shift so that e[i] couples i and i + 1.
    e.remove(0);
    e.push(T::zero());
    (d, e)
}

/// Implicit QL on the tridiagonal `(d, e)`, accumulating rotations into the
/// rows of `zt`; on return row `k` of `zt` is eigenvector `k`.
fn implicit_ql<T: Real>(mut d: Vec<T>, mut e: Vec<T>, zt: &mut [T]) -> Option<Vec<T>> {
    let n = d.len();
    let two = lit::<T>(2.0);

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= T::epsilon() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 100 {
                return None;
            }
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = g.hypot(T::one());
            g = d[m] - d[l] + e[l] / (g + if g >= T::zero() { r.abs() } else { -r.abs() });
            let (mut s, mut c, mut p) = (T::one(), T::one(), T::zero());
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] -= p;
                    e[m] = T::zero();
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let (lo, hi) = zt.split_at_mut((i + 1) * n);
                for (a, b) in lo[i * n..].iter_mut().zip(&mut hi[..n]) {
                    let zf = *b;
                    *b = s * *a + c * zf;
                    *a = c * *a - s * zf;
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    Some(d)
}
