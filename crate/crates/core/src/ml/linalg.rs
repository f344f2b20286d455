//! Dense kernels shared by the network layers. All matrices are row-major;
//! weight matrices are stored transposed (out x in) so every inner product
//! runs over contiguous slices.

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc0 = 0.0;
    let mut acc1 = 0.0;
    let mut acc2 = 0.0;
    let mut acc3 = 0.0;
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc0 += a[j] * b[j];
        acc1 += a[j + 1] * b[j + 1];
        acc2 += a[j + 2] * b[j + 2];
        acc3 += a[j + 3] * b[j + 3];
    }
    let mut acc = acc0 + acc1 + acc2 + acc3;
    for j in chunks * 4..a.len() {
        acc += a[j] * b[j];
    }
    acc
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// out[n x m] = x[n x d] * w^T, where w is stored as (m x d).
pub(crate) fn matmul_nt(x: &[f64], n: usize, d: usize, w: &[f64], m: usize, out: &mut [f64]) {
    debug_assert_eq!(x.len(), n * d);
    debug_assert_eq!(w.len(), m * d);
    debug_assert_eq!(out.len(), n * m);
    for i in 0..n {
        let xr = &x[i * d..(i + 1) * d];
        let or = &mut out[i * m..(i + 1) * m];
        for j in 0..m {
            or[j] = dot(xr, &w[j * d..(j + 1) * d]);
        }
    }
}

/// out[n x d] += dy[n x m] * w, where w is stored as (m x d).
pub(crate) fn matmul_nn_acc(dy: &[f64], n: usize, m: usize, w: &[f64], d: usize, out: &mut [f64]) {
    debug_assert_eq!(dy.len(), n * m);
    debug_assert_eq!(w.len(), m * d);
    debug_assert_eq!(out.len(), n * d);
    for i in 0..n {
        let dr = &dy[i * m..(i + 1) * m];
        let or = &mut out[i * d..(i + 1) * d];
        for j in 0..m {
            let g = dr[j];
            if g != 0.0 {
                axpy(g, &w[j * d..(j + 1) * d], or);
            }
        }
    }
}

/// dw[m x d] += dy[n x m]^T * x[n x d].
pub(crate) fn acc_outer(dy: &[f64], x: &[f64], n: usize, m: usize, d: usize, dw: &mut [f64]) {
    debug_assert_eq!(dy.len(), n * m);
    debug_assert_eq!(x.len(), n * d);
    debug_assert_eq!(dw.len(), m * d);
    for i in 0..n {
        let xr = &x[i * d..(i + 1) * d];
        let dr = &dy[i * m..(i + 1) * m];
        for j in 0..m {
            let g = dr[j];
            if g != 0.0 {
                axpy(g, xr, &mut dw[j * d..(j + 1) * d]);
            }
        }
    }
}

pub(crate) fn add_bias(out: &mut [f64], n: usize, m: usize, b: &[f64]) {
    debug_assert_eq!(b.len(), m);
    for i in 0..n {
        for j in 0..m {
            out[i * m + j] += b[j];
        }
    }
}

/// db[m] += column sums of dy[n x m].
pub(crate) fn acc_bias(dy: &[f64], n: usize, m: usize, db: &mut [f64]) {
    for i in 0..n {
        for j in 0..m {
            db[j] += dy[i * m + j];
        }
    }
}
