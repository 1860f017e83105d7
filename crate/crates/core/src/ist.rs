//! Inverse scattering tools for `φ_t + 6φφ_x + φ_xxx = 0`: the discrete
//! Schrödinger spectrum of a potential, isospectral evolution of scattering
//! data and reflectionless reconstruction through the GLM equation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dataset::soliton_sum;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `(s/2) sech²(√s/2 (x − c − s t))` sampled on `[0, length)`, argument
/// wrapped periodically.
pub fn one_soliton(s: f64, c: f64, t: f64, n: usize, length: f64) -> Result<Tensor> {
    if !(s > 0.0) {
        return Err(Error::Config(format!("soliton speed must be positive, got {s}")));
    }
    Ok(soliton_sum(n, length, &[(s, c + s * t)]))
}

/// Bound states must decay within the domain: `k · length` above this.
pub const MIN_BOUND_DECAY: f64 = 4.0;

/// Eigenvalues `λ < 0` of `−∂²_x − φ` (periodic second-order differences),
/// sorted ascending. Bound states satisfy `λ = −k²`.
///
/// The periodic closure pushes the zero-energy threshold state of a
/// reflectionless well slightly below zero; states with
/// `k · length ≤ MIN_BOUND_DECAY` are not localized and are dropped.
pub fn discrete_spectrum(potential: &Tensor, length: f64) -> Result<Vec<f64>> {
    let n = potential.len();
    if n < 3 || !potential.is_finite() {
        return Err(Error::Shape(format!("potential needs at least 3 finite samples, got {n}")));
    }
    let h = length / n as f64;
    let inv_h2 = 1.0 / (h * h);
    let phi = potential.data();
    let m = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            2.0 * inv_h2 - phi[i]
        } else if (i + 1) % n == j || (j + 1) % n == i {
            -inv_h2
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::try_new(m, 1e-14, 10_000)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let cut = -(MIN_BOUND_DECAY / length).powi(2);
    let mut neg: Vec<f64> = eig.eigenvalues.iter().copied().filter(|&l| l < cut).collect();
    neg.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(neg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatteringData {
    /// Bound-state wavenumbers `k_j > 0`, `λ_j = −k_j²`.
    pub k: Vec<f64>,
    pub c_minus: Vec<f64>,
    pub c_plus: Vec<f64>,
    /// Sample wavenumbers of the continuous spectrum.
    pub k_cont: Vec<f64>,
    pub r_minus: Vec<Complex64>,
    pub r_plus: Vec<Complex64>,
    pub transmission: Vec<Complex64>,
    pub t: f64,
}

impl ScatteringData {
    /// Reflectionless data whose `N = 1` reconstruction puts a crest of speed
    /// `s` at `x0`; for several solitons `x0` is the asymptotic position.
    pub fn solitons(params: &[(f64, f64)]) -> Result<Self> {
        let mut k = Vec::with_capacity(params.len());
        let mut c = Vec::with_capacity(params.len());
        for &(s, x0) in params {
            if !(s > 0.0) {
                return Err(Error::Config(format!("soliton speed must be positive, got {s}")));
            }
            let kj = 0.5 * s.sqrt();
            k.push(kj);
            c.push((2.0 * kj).sqrt() * (kj * x0).exp());
        }
        for i in 0..k.len() {
            for j in 0..i {
                if (k[i] - k[j]).abs() < 1e-12 {
                    return Err(Error::Config("bound-state wavenumbers must be distinct".into()));
                }
            }
        }
        Ok(Self {
            c_plus: c.iter().map(|v| 1.0 / v).collect(),
            c_minus: c,
            k,
            k_cont: Vec::new(),
            r_minus: Vec::new(),
            r_plus: Vec::new(),
            transmission: Vec::new(),
            t: 0.0,
        })
    }

    pub fn is_reflectionless(&self) -> bool {
        self.r_minus.iter().chain(&self.r_plus).all(|r| r.norm() == 0.0)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut l: Vec<f64> = self.k.iter().map(|k| -k * k).collect();
        l.sort_by(|a, b| a.partial_cmp(b).unwrap());
        l
    }
}

/// Linear evolution of the scattering data over `dt`.
pub fn evolve_scattering(data: &ScatteringData, dt: f64) -> ScatteringData {
    let mut out = data.clone();
    for (j, &k) in data.k.iter().enumerate() {
        let g = 4.0 * k.powi(3) * dt;
        out.c_minus[j] = data.c_minus[j] * g.exp();
        out.c_plus[j] = data.c_plus[j] * (-g).exp();
    }
    for (i, &k) in data.k_cont.iter().enumerate() {
        let phase = 8.0 * k.powi(3) * dt;
        out.r_minus[i] = data.r_minus[i] * Complex64::from_polar(1.0, -phase);
        out.r_plus[i] = data.r_plus[i] * Complex64::from_polar(1.0, phase);
    }
    out.t = data.t + dt;
    out
}

/// Field `φ = 2 ∂²_x log det(I + B(x))` of the separable GLM kernel
/// `F = Σ c_j² e^{−k_j x}`, evaluated at `x_i = i · length / n`.
pub fn reflectionless_reconstruct(data: &ScatteringData, n: usize, length: f64) -> Result<Tensor> {
    if !data.is_reflectionless() {
        return Err(Error::Unsupported("reconstruction with nonzero reflection coefficients".into()));
    }
    let m = data.k.len();
    let mut out = vec![0.0; n];
    if m == 0 {
        return Tensor::new(vec![n, 1], out);
    }
    let k = &data.k;
    for (i, slot) in out.iter_mut().enumerate() {
        let x = i as f64 * length / n as f64;
        let u = DVector::from_fn(m, |j, _| data.c_minus[j] * (-k[j] * x).exp());
        let a = DMatrix::from_fn(m, m, |p, q| (if p == q { 1.0 } else { 0.0 }) + u[p] * u[q] / (k[p] + k[q]));
        let y = a.lu().solve(&u).ok_or_else(|| Error::Singular(format!("GLM system at x = {x}")))?;
        let uy = u.dot(&y);
        let weighted: f64 = (0..m).map(|j| k[j] * u[j] * y[j]).sum();
        let v = 2.0 * (2.0 * weighted - uy * uy);
        if !v.is_finite() {
            return Err(Error::Singular(format!("GLM system at x = {x} is ill-conditioned")));
        }
        *slot = v;
    }
    Tensor::new(vec![n, 1], out)
}
