//! Tape-free numeric kernels shared by the forward and backward passes.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

/// Exact GELU, `x Φ(x)`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

/// Derivative given the forward value `y = gelu(x)`; recovers `Φ(x) = y/x`
/// instead of evaluating `erf` again.
pub fn gelu_grad_from(x: f64, y: f64) -> f64 {
    let cdf = if x.abs() > 1e-3 { y / x } else { 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2)) };
    let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    cdf + x * pdf
}

/// `ρ^p` with `0^p = 0`.
pub fn mode_factor(rho: f64, p: f64) -> f64 {
    if rho == 0.0 {
        0.0
    } else {
        rho.powf(p)
    }
}

/// Row-major `C[m,n] = A[m,k] B[k,n]` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= m * n);
    // SAFETY: the strides describe in-bounds views of `a` (m×k), `b` (k×n)
    // and `c` (m×n, row-major, contiguous) as checked by the callers' shapes.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub fn affine(x: &[f64], w: &[f64], b: Option<&[f64]>, rows: usize, din: usize, dout: usize) -> Vec<f64> {
    let mut y = vec![0.0; rows * dout];
    gemm(rows, din, dout, x, din as isize, 1, w, dout as isize, 1, &mut y);
    if let Some(b) = b {
        for row in y.chunks_exact_mut(dout) {
            row.iter_mut().zip(b).for_each(|(v, bi)| *v += bi);
        }
    }
    y
}

pub fn affine_grad_input(g: &[f64], w: &[f64], rows: usize, din: usize, dout: usize) -> Vec<f64> {
    let mut gx = vec![0.0; rows * din];
    gemm(rows, dout, din, g, dout as isize, 1, w, 1, dout as isize, &mut gx);
    gx
}

pub fn affine_grad_weight(x: &[f64], g: &[f64], rows: usize, din: usize, dout: usize) -> Vec<f64> {
    let mut gw = vec![0.0; din * dout];
    gemm(din, rows, dout, x, 1, din as isize, g, dout as isize, 1, &mut gw);
    gw
}

pub fn column_sums(g: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut s = vec![0.0; cols];
    for r in 0..rows {
        s.iter_mut().zip(&g[r * cols..(r + 1) * cols]).for_each(|(a, b)| *a += b);
    }
    s
}

/// `out[b,m,i] = Σ_j w[m,i,j] s[b,m,j]` in complex arithmetic.
pub fn mix(s: &[f64], w: &[f64], batch: usize, modes: usize, cin: usize, cout: usize) -> Vec<f64> {
    let mut out = vec![0.0; batch * modes * cout * 2];
    for b in 0..batch {
        for m in 0..modes {
            let sv = &s[(b * modes + m) * cin * 2..(b * modes + m + 1) * cin * 2];
            let wm = &w[m * cout * cin * 2..(m + 1) * cout * cin * 2];
            let o = &mut out[(b * modes + m) * cout * 2..(b * modes + m + 1) * cout * 2];
            for i in 0..cout {
                let (mut re, mut im) = (0.0, 0.0);
                let wr = &wm[i * cin * 2..(i + 1) * cin * 2];
                for j in 0..cin {
                    let (a, bb) = (wr[2 * j], wr[2 * j + 1]);
                    let (c, d) = (sv[2 * j], sv[2 * j + 1]);
                    re += a * c - bb * d;
                    im += a * d + bb * c;
                }
                o[2 * i] = re;
                o[2 * i + 1] = im;
            }
        }
    }
    out
}

pub fn mix_grad_input(g: &[f64], w: &[f64], batch: usize, modes: usize, cin: usize, cout: usize) -> Vec<f64> {
    let mut gs = vec![0.0; batch * modes * cin * 2];
    for b in 0..batch {
        for m in 0..modes {
            let gv = &g[(b * modes + m) * cout * 2..(b * modes + m + 1) * cout * 2];
            let wm = &w[m * cout * cin * 2..(m + 1) * cout * cin * 2];
            let o = &mut gs[(b * modes + m) * cin * 2..(b * modes + m + 1) * cin * 2];
            for i in 0..cout {
                let (gr, gi) = (gv[2 * i], gv[2 * i + 1]);
                for j in 0..cin {
                    let (a, bb) = (wm[(i * cin + j) * 2], wm[(i * cin + j) * 2 + 1]);
                    // conj(w) * g
                    o[2 * j] += a * gr + bb * gi;
                    o[2 * j + 1] += a * gi - bb * gr;
                }
            }
        }
    }
    gs
}

pub fn mix_grad_weight(g: &[f64], s: &[f64], batch: usize, modes: usize, cin: usize, cout: usize) -> Vec<f64> {
    let mut gw = vec![0.0; modes * cout * cin * 2];
    for b in 0..batch {
        for m in 0..modes {
            let gv = &g[(b * modes + m) * cout * 2..(b * modes + m + 1) * cout * 2];
            let sv = &s[(b * modes + m) * cin * 2..(b * modes + m + 1) * cin * 2];
            let o = &mut gw[m * cout * cin * 2..(m + 1) * cout * cin * 2];
            for i in 0..cout {
                let (gr, gi) = (gv[2 * i], gv[2 * i + 1]);
                for j in 0..cin {
                    let (c, d) = (sv[2 * j], sv[2 * j + 1]);
                    // g * conj(s)
                    o[(i * cin + j) * 2] += gr * c + gi * d;
                    o[(i * cin + j) * 2 + 1] += gi * c - gr * d;
                }
            }
        }
    }
    gw
}

/// Complex `out[m] = a[m] b[m]` for `a: [R,K]`, `b: [K,C]` blocks.
pub fn cmatmul(a: &[f64], b: &[f64], modes: usize, rows: usize, inner: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; modes * rows * cols * 2];
    for m in 0..modes {
        let am = &a[m * rows * inner * 2..(m + 1) * rows * inner * 2];
        let bm = &b[m * inner * cols * 2..(m + 1) * inner * cols * 2];
        let om = &mut out[m * rows * cols * 2..(m + 1) * rows * cols * 2];
        for i in 0..rows {
            for k in 0..inner {
                let (ar, ai) = (am[(i * inner + k) * 2], am[(i * inner + k) * 2 + 1]);
                for j in 0..cols {
                    let (br, bi) = (bm[(k * cols + j) * 2], bm[(k * cols + j) * 2 + 1]);
                    om[(i * cols + j) * 2] += ar * br - ai * bi;
                    om[(i * cols + j) * 2 + 1] += ar * bi + ai * br;
                }
            }
        }
    }
    out
}

/// `g · bᴴ`
pub fn cmatmul_grad_lhs(g: &[f64], b: &[f64], modes: usize, rows: usize, inner: usize, cols: usize) -> Vec<f64> {
    let mut ga = vec![0.0; modes * rows * inner * 2];
    for m in 0..modes {
        let gm = &g[m * rows * cols * 2..(m + 1) * rows * cols * 2];
        let bm = &b[m * inner * cols * 2..(m + 1) * inner * cols * 2];
        let om = &mut ga[m * rows * inner * 2..(m + 1) * rows * inner * 2];
        for i in 0..rows {
            for k in 0..inner {
                let (mut re, mut im) = (0.0, 0.0);
                for j in 0..cols {
                    let (gr, gi) = (gm[(i * cols + j) * 2], gm[(i * cols + j) * 2 + 1]);
                    let (br, bi) = (bm[(k * cols + j) * 2], bm[(k * cols + j) * 2 + 1]);
                    re += gr * br + gi * bi;
                    im += gi * br - gr * bi;
                }
                om[(i * inner + k) * 2] = re;
                om[(i * inner + k) * 2 + 1] = im;
            }
        }
    }
    ga
}

/// `aᴴ · g`
pub fn cmatmul_grad_rhs(g: &[f64], a: &[f64], modes: usize, rows: usize, inner: usize, cols: usize) -> Vec<f64> {
    let mut gb = vec![0.0; modes * inner * cols * 2];
    for m in 0..modes {
        let gm = &g[m * rows * cols * 2..(m + 1) * rows * cols * 2];
        let am = &a[m * rows * inner * 2..(m + 1) * rows * inner * 2];
        let om = &mut gb[m * inner * cols * 2..(m + 1) * inner * cols * 2];
        for i in 0..rows {
            for k in 0..inner {
                let (ar, ai) = (am[(i * inner + k) * 2], am[(i * inner + k) * 2 + 1]);
                for j in 0..cols {
                    let (gr, gi) = (gm[(i * cols + j) * 2], gm[(i * cols + j) * 2 + 1]);
                    om[(k * cols + j) * 2] += ar * gr + ai * gi;
                    om[(k * cols + j) * 2 + 1] += ar * gi - ai * gr;
                }
            }
        }
    }
    gb
}

/// Mean over the leading axis of `‖p_b − t_b‖ / ‖t_b‖`.
pub fn rel_l2(pred: &[f64], target: &[f64], batch: usize) -> Result<f64> {
    let inner = pred.len() / batch;
    let mut total = 0.0;
    for b in 0..batch {
        let p = &pred[b * inner..(b + 1) * inner];
        let t = &target[b * inner..(b + 1) * inner];
        let tn = t.iter().map(|v| v * v).sum::<f64>().sqrt();
        if tn == 0.0 {
            return Err(Error::DegenerateTarget);
        }
        let dn = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        total += dn / tn;
    }
    Ok(total / batch as f64)
}

pub fn rel_l2_grad(pred: &[f64], target: &[f64], batch: usize, seed: f64) -> Vec<f64> {
    let inner = pred.len() / batch;
    let mut g = vec![0.0; pred.len()];
    for b in 0..batch {
        let p = &pred[b * inner..(b + 1) * inner];
        let t = &target[b * inner..(b + 1) * inner];
        let tn = t.iter().map(|v| v * v).sum::<f64>().sqrt();
        let dn = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if dn == 0.0 || tn == 0.0 {
            continue;
        }
        let f = seed / (batch as f64 * dn * tn);
        for (gi, (a, b)) in g[b * inner..(b + 1) * inner].iter_mut().zip(p.iter().zip(t)) {
            *gi = f * (a - b);
        }
    }
    g
}
