//! Building blocks on the tape: Fourier layers, exponential Fourier layers,
//! the RevNet coupling and the lift/projection maps.

use std::rc::Rc;

use nalgebra::DMatrix;

use crate::error::{shape_err, Error, Result};
use crate::tensor::expm::identity_blocks;
use crate::tensor::{matrix_exp, SpectralGrid, Tensor, Var};

/// `αz + GELU(z w + b + F⁻¹(r · F z))`; the spectral term is zero beyond
/// the grid cutoffs.
pub fn fourier_layer<'t>(
    z: &Var<'t>,
    w: &Var<'t>,
    b: &Var<'t>,
    r: &Var<'t>,
    grid: &Rc<SpectralGrid>,
    alpha: bool,
) -> Result<Var<'t>> {
    let local = z.affine(w, Some(b))?;
    let spectral = z.fft_forward_on(grid.clone())?.spectral_mix(r)?.fft_inverse_on(grid.clone())?;
    let act = local.add(&spectral)?.gelu();
    if alpha {
        z.add(&act)
    } else {
        Ok(act)
    }
}

/// Per-mode `exp(r) − I` for weights `[modes.., d, d, 2]`.
pub fn exp_transfer<'t>(r: &Var<'t>) -> Result<Var<'t>> {
    let shape = r.shape();
    if shape.len() < 4 {
        return shape_err(format!("exp_transfer: weights {:?}", shape));
    }
    let d = shape[shape.len() - 2];
    let eye = r.tape().constant(identity_blocks(&shape[..shape.len() - 3], d));
    matrix_exp(r)?.sub(&eye)
}

/// `z + F⁻¹(T_lin F z) + (F⁻¹(T_quad F z))²` with precomputed transfers
/// `T = exp(r) − I`; the square is channel-wise.
pub fn apply_exp_layer<'t>(
    z: &Var<'t>,
    lin: &Var<'t>,
    quad: Option<&Var<'t>>,
    grid: &Rc<SpectralGrid>,
) -> Result<Var<'t>> {
    let zs = z.fft_forward_on(grid.clone())?;
    let mut out = z.add(&zs.spectral_mix(lin)?.fft_inverse_on(grid.clone())?)?;
    if let Some(q) = quad {
        let v = zs.spectral_mix(q)?.fft_inverse_on(grid.clone())?;
        out = out.add(&v.square())?;
    }
    Ok(out)
}

/// Exponential Fourier layer; `r_quad = None` is the γ = 0 case.
pub fn exp_fourier_layer<'t>(
    z: &Var<'t>,
    r_lin: &Var<'t>,
    r_quad: Option<&Var<'t>>,
    grid: &Rc<SpectralGrid>,
) -> Result<Var<'t>> {
    let lin = exp_transfer(r_lin)?;
    let quad = r_quad.map(exp_transfer).transpose()?;
    apply_exp_layer(z, &lin, quad.as_ref(), grid)
}

/// Mode ratios `κ/κmax` for `K` stored modes, `κmax = K − 1` being the
/// highest retained wavenumber.
pub fn kdv_ratios(k: usize) -> Vec<f64> {
    let top = (k.max(2) - 1) as f64;
    (0..k).map(|m| m as f64 / top).collect()
}

/// Per-mode weights `r''(κ/κmax)^p`, shape `[K, d, d, 2]`.
pub fn kdv_weights<'t>(r: &Var<'t>, p: &Var<'t>, grid: &SpectralGrid) -> Result<Var<'t>> {
    if grid.ndim() != 1 {
        return Err(Error::Unsupported("scaled KdV exponential layer in more than one dimension".into()));
    }
    r.mode_scaled(p, &kdv_ratios(grid.cutoffs()[0]))
}

/// Linear exponential layer with weights `r''(κ/κmax)^p`.
pub fn exp_fourier_layer_kdv<'t>(z: &Var<'t>, r: &Var<'t>, p: &Var<'t>, grid: &Rc<SpectralGrid>) -> Result<Var<'t>> {
    let lin = exp_transfer(&kdv_weights(r, p, grid)?)?;
    apply_exp_layer(z, &lin, None, grid)
}

fn split<'t>(z: &Var<'t>, d_a: usize) -> Result<(Var<'t>, Var<'t>)> {
    let total = z.value().channels();
    if d_a == 0 || d_a >= total {
        return shape_err(format!("revnet split {d_a} of {total} channels"));
    }
    Ok((z.slice_channels(0, d_a)?, z.slice_channels(d_a, total - d_a)?))
}

/// `a' = a + g(b + f(a))`, `b' = b + f(a)` with `a` the first `d_a` channels.
pub fn revnet_forward<'t, F, G>(z: &Var<'t>, d_a: usize, f: F, g: G) -> Result<Var<'t>>
where
    F: Fn(&Var<'t>) -> Result<Var<'t>>,
    G: Fn(&Var<'t>) -> Result<Var<'t>>,
{
    let (a, b) = split(z, d_a)?;
    let b2 = b.add(&f(&a)?)?;
    let a2 = a.add(&g(&b2)?)?;
    a2.concat_channels(&b2)
}

/// `a = a' − g(b')`, `b = b' − f(a)`.
pub fn revnet_inverse<'t, F, G>(z: &Var<'t>, d_a: usize, f: F, g: G) -> Result<Var<'t>>
where
    F: Fn(&Var<'t>) -> Result<Var<'t>>,
    G: Fn(&Var<'t>) -> Result<Var<'t>>,
{
    let (a2, b2) = split(z, d_a)?;
    let a = a2.sub(&g(&b2)?)?;
    let b = b2.sub(&f(&a)?)?;
    a.concat_channels(&b)
}

/// `(φ, 0, …, 0)` with `d_z` channels in total.
pub fn lift_zero_stack<'t>(phi: &Var<'t>, d_z: usize) -> Result<Var<'t>> {
    let mut shape = phi.shape();
    let d_v = *shape.last().unwrap_or(&0);
    if d_z < d_v {
        return shape_err(format!("cannot lift {d_v} channels to {d_z}"));
    }
    if d_z == d_v {
        return Ok(*phi);
    }
    *shape.last_mut().unwrap() = d_z - d_v;
    phi.concat_channels(&phi.tape().constant(Tensor::zeros(&shape)))
}

/// First `d_v` channels.
pub fn project_truncate<'t>(z: &Var<'t>, d_v: usize) -> Result<Var<'t>> {
    z.slice_channels(0, d_v)
}

/// Least-squares inverse of the channel-affine lift `z = φ w + b`:
/// `φ = (z − b) wᵀ (w wᵀ)⁻¹`, with `w` of shape `[d_v, d_z]`.
pub fn pseudo_inverse_project(z: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    if w.ndim() != 2 || b.shape() != [w.shape()[1]] || z.channels() != w.shape()[1] {
        return shape_err(format!("pseudo-inverse: z {:?}, w {:?}, b {:?}", z.shape(), w.shape(), b.shape()));
    }
    let (dv, dz) = (w.shape()[0], w.shape()[1]);
    let wm = DMatrix::from_row_slice(dv, dz, w.data());
    let svd = wm.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if dv > dz || !(smin > 1e-12 * smax.max(f64::MIN_POSITIVE)) {
        return Err(Error::Singular(format!("lift weight {dv}x{dz} is rank deficient")));
    }
    let gram = &wm * wm.transpose();
    let pinv = wm.transpose() * gram.try_inverse().ok_or_else(|| Error::Singular("lift Gram matrix".into()))?;
    let rows = z.len() / dz;
    let mut out = Vec::with_capacity(rows * dv);
    for r in 0..rows {
        for j in 0..dv {
            let mut acc = 0.0;
            for i in 0..dz {
                acc += (z.data()[r * dz + i] - b.data()[i]) * pinv[(i, j)];
            }
            out.push(acc);
        }
    }
    let mut shape = z.shape().to_vec();
    *shape.last_mut().unwrap() = dv;
    Tensor::new(shape, out)
}
