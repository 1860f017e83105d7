//! Truncated half-space spectra of real multi-channel fields.
//!
//! Stored modes follow the conjugate-symmetry rule: for a 1d grid
//! `κ ∈ [0, K)`, for a 2d grid `κ1 ∈ (-K1, K1)`, `κ2 ∈ [0, K2)`. A real
//! field is recovered as `x = Re( (1/N) Σ_stored w_κ X_κ e^{iκ·x} )` with
//! `w_κ = 1` on the `κ_last = 0` slice and `2` elsewhere, which is exact for
//! band-limited real fields and always yields a real result.

use num_complex::Complex64;

use super::fft::fft_nd;
use crate::error::{Error, Result};

/// Spatial grid plus per-axis mode cutoffs.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralGrid {
    extents: Vec<usize>,
    cutoffs: Vec<usize>,
    positions: Vec<usize>,
    weights: Vec<f64>,
}

impl SpectralGrid {
    pub fn new(extents: &[usize], cutoffs: &[usize]) -> Result<Self> {
        if extents.is_empty() || extents.len() > 2 || extents.len() != cutoffs.len() {
            return Err(Error::Shape(format!(
                "grid extents {:?} and cutoffs {:?} must both have 1 or 2 axes",
                extents, cutoffs
            )));
        }
        for (&n, &k) in extents.iter().zip(cutoffs) {
            if k == 0 {
                return Err(Error::Shape("mode cutoff must be at least 1".into()));
            }
            if n < 2 * k {
                return Err(Error::CutoffTooLarge { cutoff: k, extent: n });
            }
        }
        let (positions, weights) = match (extents, cutoffs) {
            ([_], [k]) => {
                let pos: Vec<usize> = (0..*k).collect();
                let w = (0..*k).map(|i| if i == 0 { 1.0 } else { 2.0 }).collect();
                (pos, w)
            }
            ([n1, n2], [k1, k2]) => {
                let mut pos = Vec::new();
                let mut w = Vec::new();
                for r in 0..(2 * k1 - 1) {
                    let kappa1 = r as i64 - (*k1 as i64 - 1);
                    let row = kappa1.rem_euclid(*n1 as i64) as usize;
                    for c in 0..*k2 {
                        pos.push(row * n2 + c);
                        w.push(if c == 0 { 1.0 } else { 2.0 });
                    }
                }
                (pos, w)
            }
            _ => unreachable!(),
        };
        Ok(Self { extents: extents.to_vec(), cutoffs: cutoffs.to_vec(), positions, weights })
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn cutoffs(&self) -> &[usize] {
        &self.cutoffs
    }

    pub fn ndim(&self) -> usize {
        self.extents.len()
    }

    pub fn n_points(&self) -> usize {
        self.extents.iter().product()
    }

    /// Extents of the stored mode block, `[K]` or `[2K1-1, K2]`.
    pub fn mode_extents(&self) -> Vec<usize> {
        mode_extents(&self.cutoffs)
    }

    pub fn n_modes(&self) -> usize {
        self.positions.len()
    }

    /// Flat index into the full FFT buffer for each stored mode.
    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    /// Synthesis multiplicity of each stored mode.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Signed integer wavenumber of stored mode `m`.
    pub fn wavenumber(&self, m: usize) -> Vec<i64> {
        match self.cutoffs.as_slice() {
            [_] => vec![m as i64],
            [k1, k2] => {
                let r = m / k2;
                vec![r as i64 - (*k1 as i64 - 1), (m % k2) as i64]
            }
            _ => unreachable!(),
        }
    }

    /// Complex coefficients of the stored modes for every `(batch, channel)`.
    ///
    /// `field` is `[batch, x.., channel]`; output is `[batch, modes.., channel, 2]`
    /// multiplied per mode by `scale[m]` (or 1).
    pub fn analysis(&self, field: &[f64], batch: usize, channels: usize, scale: Option<&[f64]>) -> Vec<f64> {
        let npts = self.n_points();
        let nm = self.n_modes();
        debug_assert_eq!(field.len(), batch * npts * channels);
        let mut out = vec![0.0; batch * nm * channels * 2];
        let mut buf = vec![Complex64::new(0.0, 0.0); npts];
        for b in 0..batch {
            let fb = &field[b * npts * channels..(b + 1) * npts * channels];
            for c in 0..channels {
                for (p, slot) in buf.iter_mut().enumerate() {
                    *slot = Complex64::new(fb[p * channels + c], 0.0);
                }
                fft_nd(&mut buf, &self.extents, false);
                for (m, &pos) in self.positions.iter().enumerate() {
                    let s = scale.map_or(1.0, |s| s[m]);
                    let o = ((b * nm + m) * channels + c) * 2;
                    out[o] = buf[pos].re * s;
                    out[o + 1] = buf[pos].im * s;
                }
            }
        }
        out
    }

    /// Real field `Re Σ_m scale[m] X_m e^{iκ_m·x}` from stored coefficients.
    pub fn synthesis(&self, spec: &[f64], batch: usize, channels: usize, scale: &[f64]) -> Vec<f64> {
        let npts = self.n_points();
        let nm = self.n_modes();
        debug_assert_eq!(spec.len(), batch * nm * channels * 2);
        let mut out = vec![0.0; batch * npts * channels];
        let mut buf = vec![Complex64::new(0.0, 0.0); npts];
        for b in 0..batch {
            for c in 0..channels {
                buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
                for (m, &pos) in self.positions.iter().enumerate() {
                    let o = ((b * nm + m) * channels + c) * 2;
                    buf[pos] += Complex64::new(spec[o], spec[o + 1]) * scale[m];
                }
                fft_nd(&mut buf, &self.extents, true);
                let ob = &mut out[b * npts * channels..(b + 1) * npts * channels];
                for (p, v) in buf.iter().enumerate() {
                    ob[p * channels + c] = v.re;
                }
            }
        }
        out
    }

    /// Per-mode factors `w_m / N` used by the inverse transform.
    pub fn inverse_scale(&self) -> Vec<f64> {
        let n = self.n_points() as f64;
        self.weights.iter().map(|w| w / n).collect()
    }
}

pub fn mode_extents(cutoffs: &[usize]) -> Vec<usize> {
    match cutoffs {
        [k] => vec![*k],
        [k1, k2] => vec![2 * k1 - 1, *k2],
        _ => cutoffs.to_vec(),
    }
}

pub fn mode_count(cutoffs: &[usize]) -> usize {
    mode_extents(cutoffs).iter().product()
}
