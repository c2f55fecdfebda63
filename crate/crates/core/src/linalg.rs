//! Small dense symmetric-matrix helpers (row-major `Vec<f64>`).
//!
//! Parameter dimensions here are tiny (m = 2 for the Normal model), so a
//! cyclic Jacobi eigendecomposition covers everything the optimizer and the
//! covariance code need: inversion, eigenvalue clipping, PSD repair.

/// Row-major m x m identity.
pub fn identity(m: usize) -> Vec<f64> {
    let mut a = vec![0.0; m * m];
    for i in 0..m {
        a[i * m + i] = 1.0;
    }
    a
}

/// y = A x for row-major A (m x m).
pub fn mat_vec(a: &[f64], x: &[f64], m: usize) -> Vec<f64> {
    let mut y = vec![0.0; m];
    for i in 0..m {
        let mut s = 0.0;
        for j in 0..m {
            s += a[i * m + j] * x[j];
        }
        y[i] = s;
    }
    y
}

/// C = A B for row-major m x m matrices.
pub fn mat_mul(a: &[f64], b: &[f64], m: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * m];
    for i in 0..m {
        for k in 0..m {
            let aik = a[i * m + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..m {
                c[i * m + j] += aik * b[k * m + j];
            }
        }
    }
    c
}

/// Rank-one outer product x x^T scaled by `w`.
pub fn outer_scaled(x: &[f64], w: f64, m: usize, acc: &mut [f64]) {
    for i in 0..m {
        for j in 0..m {
            acc[i * m + j] += w * x[i] * x[j];
        }
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(values, vectors)` with `A = V diag(values) V^T`; `vectors` is
/// row-major with eigenvectors in columns.
pub fn sym_eigen(a_in: &[f64], m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = a_in.to_vec();
    let mut v = identity(m);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..m {
            for j in (i + 1)..m {
                off += a[i * m + j] * a[i * m + j];
            }
        }
        let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..m {
            for q in (p + 1)..m {
                let apq = a[p * m + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * m + q] - a[p * m + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let (app, aqq) = (a[p * m + p], a[q * m + q]);
                a[p * m + p] = c * c * app - 2.0 * s * c * apq + s * s * aqq;
                a[q * m + q] = s * s * app + 2.0 * s * c * apq + c * c * aqq;
                a[p * m + q] = 0.0;
                a[q * m + p] = 0.0;
                for i in 0..m {
                    if i != p && i != q {
                        let aip = a[i * m + p];
                        let aiq = a[i * m + q];
                        a[i * m + p] = c * aip - s * aiq;
                        a[p * m + i] = a[i * m + p];
                        a[i * m + q] = s * aip + c * aiq;
                        a[q * m + i] = a[i * m + q];
                    }
                }
                for i in 0..m {
                    let vip = v[i * m + p];
                    let viq = v[i * m + q];
                    v[i * m + p] = c * vip - s * viq;
                    v[i * m + q] = s * vip + c * viq;
                }
            }
        }
    }
    let vals = (0..m).map(|i| a[i * m + i]).collect();
    (vals, v)
}

/// Rebuild `V f(diag) V^T` from an eigendecomposition, applying `f` to each
/// eigenvalue.
pub fn sym_from_eigen<F: Fn(f64) -> f64>(vals: &[f64], vecs: &[f64], m: usize, f: F) -> Vec<f64> {
    let mut out = vec![0.0; m * m];
    for k in 0..m {
        let lk = f(vals[k]);
        if lk == 0.0 {
            continue;
        }
        for i in 0..m {
            let vik = vecs[i * m + k];
            for j in 0..m {
                out[i * m + j] += lk * vik * vecs[j * m + k];
            }
        }
    }
    out
}

/// Inverse of a symmetric matrix with eigenvalue magnitudes floored at `tau`
/// (sign-preserving). Keeps saddle directions pointing the way the raw
/// Newton step would, while protecting against singular matrices.
pub fn sym_inv_floored(a: &[f64], m: usize, tau: f64) -> Vec<f64> {
    let (vals, vecs) = sym_eigen(a, m);
    sym_from_eigen(&vals, &vecs, m, |l| {
        let mag = l.abs().max(tau);
        let sign = if l < 0.0 { -1.0 } else { 1.0 };
        sign / mag
    })
}

/// Project a symmetric matrix onto the PSD cone (negative eigenvalues -> 0).
pub fn sym_psd_clip(a: &[f64], m: usize) -> Vec<f64> {
    let (vals, vecs) = sym_eigen(a, m);
    sym_from_eigen(&vals, &vecs, m, |l| l.max(0.0))
}

/// Force exact symmetry: (A + A^T) / 2.
pub fn symmetrize(a: &mut [f64], m: usize) {
    for i in 0..m {
        for j in (i + 1)..m {
            let s = 0.5 * (a[i * m + j] + a[j * m + i]);
            a[i * m + j] = s;
            a[j * m + i] = s;
        }
    }
}
