//! Per-mode complex matrix exponential built from tape primitives.
//!
//! Scaling and squaring with a degree-8 Taylor polynomial. The squaring
//! count is chosen from the largest block 1-norm so that the scaled blocks
//! have norm at most [`SCALED_NORM_BOUND`]; the polynomial is evaluated in
//! Horner form with `cmatmul`, so gradients flow through every step.

use super::array::Tensor;
use super::tape::Var;
use crate::error::{shape_err, Result};

pub const TAYLOR_DEGREE: usize = 8;
pub const SCALED_NORM_BOUND: f64 = 0.05;

/// Identity blocks `[modes.., c, c, 2]`.
pub fn identity_blocks(mode_shape: &[usize], c: usize) -> Tensor {
    let modes: usize = mode_shape.iter().product();
    let mut shape = mode_shape.to_vec();
    shape.extend([c, c, 2]);
    let mut t = Tensor::zeros(&shape);
    let d = t.data_mut();
    for m in 0..modes {
        for i in 0..c {
            d[((m * c + i) * c + i) * 2] = 1.0;
        }
    }
    t
}

/// Largest complex 1-norm (max column sum of moduli) over the blocks.
pub fn max_block_norm(w: &Tensor) -> f64 {
    let s = w.shape();
    let c = s[s.len() - 2];
    let modes = w.len() / (c * c * 2);
    let d = w.data();
    let mut best: f64 = 0.0;
    for m in 0..modes {
        for j in 0..c {
            let mut col = 0.0;
            for i in 0..c {
                let o = ((m * c + i) * c + j) * 2;
                col += d[o].hypot(d[o + 1]);
            }
            best = best.max(col);
        }
    }
    best
}

pub fn squaring_count(norm: f64) -> u32 {
    if norm <= SCALED_NORM_BOUND || !norm.is_finite() {
        0
    } else {
        (norm / SCALED_NORM_BOUND).log2().ceil().max(0.0) as u32
    }
}

/// `exp(w)` for every `[c, c]` complex block of `w` (`[modes.., c, c, 2]`).
pub fn matrix_exp<'t>(w: &Var<'t>) -> Result<Var<'t>> {
    let shape = w.shape();
    let nd = shape.len();
    if nd < 3 || shape[nd - 1] != 2 || shape[nd - 2] != shape[nd - 3] {
        return shape_err(format!("matrix_exp needs square complex blocks, got {:?}", shape));
    }
    let c = shape[nd - 2];
    let squarings = squaring_count(max_block_norm(&w.value()));
    let tape = w.tape();
    let eye = tape.constant(identity_blocks(&shape[..nd - 3], c));
    let x = w.scale(0.5f64.powi(squarings as i32));
    // Horner: P = I + X/8; P = I + X P / k for k = 7..1
    let mut p = eye.add(&x.scale(1.0 / TAYLOR_DEGREE as f64))?;
    for k in (1..TAYLOR_DEGREE).rev() {
        p = eye.add(&x.cmatmul(&p)?.scale(1.0 / k as f64))?;
    }
    for _ in 0..squarings {
        p = p.cmatmul(&p)?;
    }
    Ok(p)
}
