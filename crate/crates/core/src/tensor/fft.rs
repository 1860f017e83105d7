//! Thin multi-dimensional wrapper over `rustfft`.
//!
//! Convention: forward is unnormalized `Σ x e^{-iκx}`, inverse is
//! unnormalized `Σ X e^{+iκx}`; callers apply the `1/N` factor.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// In-place transform of a row-major buffer with the given extents (1 or 2 axes).
pub fn fft_nd(buf: &mut [Complex64], dims: &[usize], inverse: bool) {
    match dims {
        [n] => {
            debug_assert_eq!(buf.len(), *n);
            plan(*n, inverse).process(buf);
        }
        [n1, n2] => {
            debug_assert_eq!(buf.len(), n1 * n2);
            // rows are contiguous; process() batches over chunks of the plan length
            plan(*n2, inverse).process(buf);
            let col_plan = plan(*n1, inverse);
            let mut col = vec![Complex64::new(0.0, 0.0); *n1];
            for j in 0..*n2 {
                for i in 0..*n1 {
                    col[i] = buf[i * n2 + j];
                }
                col_plan.process(&mut col);
                for i in 0..*n1 {
                    buf[i * n2 + j] = col[i];
                }
            }
        }
        _ => panic!("fft_nd supports 1 or 2 axes, got {}", dims.len()),
    }
}

/// Forward transform of a real field, full complex output.
pub fn rfft_full(field: &[f64], dims: &[usize]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&mut buf, dims, false);
    buf
}

/// Normalized inverse transform returning the real part.
pub fn irfft_full(spec: &[Complex64], dims: &[usize]) -> Vec<f64> {
    let mut buf = spec.to_vec();
    fft_nd(&mut buf, dims, true);
    let n = buf.len() as f64;
    buf.iter().map(|c| c.re / n).collect()
}

/// Signed integer wavenumber of FFT bin `i` on an axis of length `n`.
pub fn signed_index(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}
