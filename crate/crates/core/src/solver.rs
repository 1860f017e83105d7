//! Pseudo-spectral solvers for the Michelson–Sivashinsky, Kuramoto–Sivashinsky,
//! Korteweg–de Vries and Kadomtsev–Petviashvili equations on periodic domains.
//!
//! The linear part is absorbed by an integrating factor `e^{L t}`; the
//! nonlinear part is advanced by an embedded Dormand–Prince 5(4) pair written
//! in the integrating-factor frame, so every exponential that appears has the
//! form `e^{L d h}` with `d ≥ 0`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::fft::{irfft_full, rfft_full, signed_index};
use crate::tensor::Tensor;

/// Domain length used for KdV and KP.
pub const KDV_DOMAIN_LENGTH: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Ms,
    Ks,
    Kdv,
    Kp,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Ms => "ms",
            Family::Ks => "ks",
            Family::Kdv => "kdv",
            Family::Kp => "kp",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ms" => Ok(Family::Ms),
            "ks" => Ok(Family::Ks),
            "kdv" => Ok(Family::Kdv),
            "kp" => Ok(Family::Kp),
            other => Err(Error::Config(format!("unknown equation family `{other}` (ms, ks, kdv, kp)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquationConfig {
    pub family: Family,
    /// Grid points per axis (one or two axes).
    pub grid: Vec<usize>,
    /// Periodic domain length, shared by all axes.
    pub domain_length: f64,
    /// Largest linearly unstable wavenumber (MS/KS only).
    pub beta: Option<f64>,
    /// 2/3-rule truncation of the quadratic terms.
    pub dealias: bool,
    /// Hold the spatial mean fixed (MS/KS). The mean is slaved to the
    /// gradients and never feeds back into the dynamics.
    pub pin_mean: bool,
}

impl EquationConfig {
    pub fn ms(beta: f64, grid: &[usize]) -> Self {
        Self {
            family: Family::Ms,
            grid: grid.to_vec(),
            domain_length: 2.0 * PI,
            beta: Some(beta),
            dealias: true,
            pin_mean: true,
        }
    }

    pub fn ks(beta: f64, grid: &[usize]) -> Self {
        Self { family: Family::Ks, ..Self::ms(beta, grid) }
    }

    pub fn kdv(n: usize) -> Self {
        Self {
            family: Family::Kdv,
            grid: vec![n],
            domain_length: KDV_DOMAIN_LENGTH,
            beta: None,
            dealias: true,
            pin_mean: false,
        }
    }

    pub fn kp(n1: usize, n2: usize) -> Self {
        Self { family: Family::Kp, grid: vec![n1, n2], ..Self::kdv(n1) }
    }

    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    pub fn n_points(&self) -> usize {
        self.grid.iter().product()
    }

    /// Field tensor shape `[x.., 1]`.
    pub fn field_shape(&self) -> Vec<usize> {
        let mut s = self.grid.clone();
        s.push(1);
        s
    }

    pub fn beta(&self) -> Result<f64> {
        self.beta.ok_or_else(|| Error::Config(format!("{} needs beta", self.family.name())))
    }

    /// MS time-scale factor `τ = β/10`.
    pub fn tau(&self) -> f64 {
        self.beta.unwrap_or(0.0) / 10.0
    }

    pub fn spacing(&self) -> f64 {
        self.domain_length / self.grid[0] as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() || self.grid.len() > 2 || self.grid.iter().any(|&n| n < 4) {
            return Err(Error::Config(format!("grid {:?} must have 1 or 2 axes of at least 4 points", self.grid)));
        }
        if !(self.domain_length > 0.0) {
            return Err(Error::Config("domain length must be positive".into()));
        }
        match self.family {
            Family::Ms | Family::Ks => {
                let beta = self.beta()?;
                if !(beta > 0.0) {
                    return Err(Error::Config(format!("beta must be positive, got {beta}")));
                }
                let finest = *self.grid.iter().max().unwrap();
                if self.family == Family::Ms && beta >= 50.0 && finest < 512 {
                    return Err(Error::Stiffness(format!(
                        "MS with beta = {beta} is under-resolved on {finest} points (needs at least 512)"
                    )));
                }
            }
            Family::Kdv => {
                if self.grid.len() != 1 {
                    return Err(Error::Config("KdV is one-dimensional".into()));
                }
            }
            Family::Kp => {
                if self.grid.len() != 2 {
                    return Err(Error::Config("KP is two-dimensional".into()));
                }
            }
        }
        Ok(())
    }
}

/// Linear growth rate at physical wavevector `kappa`.
pub fn linear_symbol(cfg: &EquationConfig, kappa: &[f64]) -> Complex64 {
    let k2: f64 = kappa.iter().map(|k| k * k).sum();
    let kabs = k2.sqrt();
    match cfg.family {
        Family::Ms => {
            let b = cfg.beta.unwrap_or(1.0);
            Complex64::new(cfg.tau() * (kabs / b - k2 / (b * b)), 0.0)
        }
        Family::Ks => {
            let b = cfg.beta.unwrap_or(1.0);
            Complex64::new(k2 / (b * b) - k2 * k2 / (b * b * b * b), 0.0)
        }
        Family::Kdv => Complex64::new(0.0, kappa[0].powi(3)),
        Family::Kp => {
            let (k1, k2) = (kappa[0], kappa.get(1).copied().unwrap_or(0.0));
            if k1 == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, k1.powi(3) - k2 * k2 / k1)
            }
        }
    }
}

/// Substep control for [`Solver::advance`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    /// Cap on inner substeps per output interval.
    pub max_substeps: usize,
    /// Use this many equal substeps per output interval instead of adapting.
    pub fixed_substeps: Option<usize>,
}

impl Default for StepControl {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10, max_substeps: 20_000, fixed_substeps: None }
    }
}

impl StepControl {
    pub fn fixed(substeps: usize) -> Self {
        Self { fixed_substeps: Some(substeps), ..Self::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverState {
    /// Real field, shape `[x.., 1]`.
    pub field: Tensor,
    pub t: f64,
    /// Output interval.
    pub dt: f64,
    /// Last accepted inner substep (controller memory).
    pub substep: Option<f64>,
}

impl SolverState {
    pub fn new(field: Tensor, dt: f64) -> Self {
        Self { field, t: 0.0, dt, substep: None }
    }
}

// Dormand–Prince 5(4)
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B_LOW: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// Precomputed operators for one [`EquationConfig`].
pub struct Solver {
    cfg: EquationConfig,
    control: StepControl,
    linear: Vec<Complex64>,
    /// First-derivative multipliers per axis (Nyquist mode zeroed).
    deriv: Vec<Vec<f64>>,
    keep: Vec<bool>,
    nonlinear_coef: f64,
    exp_cache: RefCell<(f64, HashMap<u64, Vec<Complex64>>)>,
}

/// Signed physical wavenumbers of one axis; `odd` zeroes the Nyquist bin.
fn axis_wavenumbers(n: usize, length: f64, odd: bool) -> Vec<f64> {
    let scale = 2.0 * PI / length;
    (0..n)
        .map(|i| if odd && n.is_multiple_of(2) && i == n / 2 { 0.0 } else { signed_index(i, n) as f64 * scale })
        .collect()
}

impl Solver {
    pub fn new(cfg: &EquationConfig, control: StepControl) -> Result<Self> {
        cfg.validate()?;
        let even: Vec<Vec<f64>> = cfg.grid.iter().map(|&n| axis_wavenumbers(n, cfg.domain_length, false)).collect();
        let odd: Vec<Vec<f64>> = cfg.grid.iter().map(|&n| axis_wavenumbers(n, cfg.domain_length, true)).collect();
        let npts = cfg.n_points();
        let index = |p: usize| -> Vec<usize> {
            match cfg.grid.as_slice() {
                [_] => vec![p],
                [_, n2] => vec![p / n2, p % n2],
                _ => unreachable!(),
            }
        };
        let mut linear = Vec::with_capacity(npts);
        let mut keep = Vec::with_capacity(npts);
        let mut deriv = vec![vec![0.0; npts]; cfg.dim()];
        for p in 0..npts {
            let ix = index(p);
            let kappa: Vec<f64> = match cfg.family {
                // dispersive symbols are odd: Nyquist bins carry no dispersion
                Family::Kdv | Family::Kp => ix.iter().enumerate().map(|(a, &i)| odd[a][i]).collect(),
                _ => ix.iter().enumerate().map(|(a, &i)| even[a][i]).collect(),
            };
            let mut l = linear_symbol(cfg, &kappa);
            if cfg.family == Family::Kp && kappa[0] == 0.0 {
                l = Complex64::new(0.0, 0.0);
            }
            linear.push(l);
            for (a, &i) in ix.iter().enumerate() {
                deriv[a][p] = odd[a][i];
            }
            keep.push(
                !cfg.dealias
                    || ix.iter().zip(&cfg.grid).all(|(&i, &n)| 3 * signed_index(i, n).unsigned_abs() as usize <= n),
            );
        }
        let nonlinear_coef = match cfg.family {
            Family::Ms => -cfg.tau() / (2.0 * cfg.beta()?.powi(2)),
            Family::Ks => -1.0 / (2.0 * cfg.beta()?.powi(2)),
            Family::Kdv | Family::Kp => -3.0,
        };
        Ok(Self {
            cfg: cfg.clone(),
            control,
            linear,
            deriv,
            keep,
            nonlinear_coef,
            exp_cache: RefCell::new((f64::NAN, HashMap::new())),
        })
    }

    pub fn config(&self) -> &EquationConfig {
        &self.cfg
    }

    pub fn control(&self) -> &StepControl {
        &self.control
    }

    fn to_spectrum(&self, field: &[f64]) -> Vec<Complex64> {
        rfft_full(field, &self.cfg.grid)
    }

    fn to_field(&self, spec: &[Complex64]) -> Vec<f64> {
        irfft_full(spec, &self.cfg.grid)
    }

    fn nonlinear(&self, spec: &[Complex64]) -> Vec<Complex64> {
        let npts = spec.len();
        let mut out = match self.cfg.family {
            Family::Ms | Family::Ks => {
                let mut grad2 = vec![0.0; npts];
                for d in &self.deriv {
                    let gs: Vec<Complex64> = spec.iter().zip(d).map(|(s, k)| s * Complex64::new(0.0, *k)).collect();
                    for (acc, g) in grad2.iter_mut().zip(self.to_field(&gs)) {
                        *acc += g * g;
                    }
                }
                let mut n = self.to_spectrum(&grad2);
                n.iter_mut().for_each(|v| *v *= self.nonlinear_coef);
                if self.cfg.pin_mean {
                    n[0] = Complex64::new(0.0, 0.0);
                }
                n
            }
            Family::Kdv | Family::Kp => {
                let phi = self.to_field(spec);
                let sq: Vec<f64> = phi.iter().map(|v| v * v).collect();
                let mut n = self.to_spectrum(&sq);
                for (v, k) in n.iter_mut().zip(&self.deriv[0]) {
                    *v *= Complex64::new(0.0, self.nonlinear_coef * k);
                }
                n
            }
        };
        for (v, &k) in out.iter_mut().zip(&self.keep) {
            if !k {
                *v = Complex64::new(0.0, 0.0);
            }
        }
        out
    }

    /// `e^{L d h}` for every mode, cached per substep size.
    fn exp_factor(&self, d: f64, h: f64) -> Vec<Complex64> {
        let mut cache = self.exp_cache.borrow_mut();
        if cache.0 != h {
            cache.0 = h;
            cache.1.clear();
        }
        cache.1.entry(d.to_bits()).or_insert_with(|| self.linear.iter().map(|l| (l * (d * h)).exp()).collect()).clone()
    }

    /// One Dormand–Prince step of size `h`; returns (5th-order solution,
    /// error estimate, nonlinear term at the new point).
    fn dp_step(&self, u0: &[Complex64], n0: &[Complex64], h: f64) -> (Vec<Complex64>, Vec<Complex64>, Vec<Complex64>) {
        let npts = u0.len();
        let mut stages: Vec<Vec<Complex64>> = Vec::with_capacity(7);
        stages.push(n0.to_vec());
        let mut sol = Vec::new();
        for i in 1..7 {
            let e0 = self.exp_factor(C[i], h);
            let mut phi: Vec<Complex64> = u0.iter().zip(&e0).map(|(u, e)| u * e).collect();
            for (j, stage) in stages.iter().enumerate().take(i) {
                let a = A[i][j];
                if a == 0.0 {
                    continue;
                }
                let e = self.exp_factor(C[i] - C[j], h);
                for k in 0..npts {
                    phi[k] += h * a * e[k] * stage[k];
                }
            }
            if i == 6 {
                sol = phi.clone();
            }
            stages.push(self.nonlinear(&phi));
        }
        let mut err = vec![Complex64::new(0.0, 0.0); npts];
        for (i, stage) in stages.iter().enumerate() {
            let b_high = if i < 6 { A[6][i] } else { 0.0 };
            let coef = b_high - B_LOW[i];
            if coef == 0.0 {
                continue;
            }
            let e = self.exp_factor(1.0 - C[i], h);
            for k in 0..npts {
                err[k] += h * coef * e[k] * stage[k];
            }
        }
        let n_new = stages.pop().unwrap();
        (sol, err, n_new)
    }

    fn error_norm(&self, u0: &[Complex64], u1: &[Complex64], err: &[Complex64]) -> f64 {
        let n = u0.len() as f64;
        let mut acc = 0.0;
        for k in 0..u0.len() {
            let scale = self.control.atol + self.control.rtol * u0[k].norm().max(u1[k].norm()) / n;
            let r = err[k].norm() / n / scale;
            acc += r * r;
        }
        (acc / n).sqrt()
    }

    /// Integrates over one output interval `dt`, starting from spectrum `u`.
    fn advance_interval(
        &self,
        mut u: Vec<Complex64>,
        t0: f64,
        dt: f64,
        h_hint: Option<f64>,
    ) -> Result<(Vec<Complex64>, f64)> {
        let mut n0 = self.nonlinear(&u);
        if let Some(m) = self.control.fixed_substeps {
            let h = dt / m as f64;
            for s in 0..m {
                let (next, _, n_new) = self.dp_step(&u, &n0, h);
                if next.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                    return Err(Error::Divergence { time: t0 + (s + 1) as f64 * h });
                }
                u = next;
                n0 = n_new;
            }
            return Ok((u, h));
        }
        let mut t = 0.0;
        let mut h = h_hint.unwrap_or(dt / 4.0).min(dt);
        let mut last_h = h;
        let mut count = 0usize;
        while t < dt {
            if count >= self.control.max_substeps {
                return Err(Error::Stiffness(format!(
                    "more than {} substeps in one output interval at t = {}",
                    self.control.max_substeps,
                    t0 + t
                )));
            }
            count += 1;
            let remaining = dt - t;
            let last = h >= remaining * (1.0 - 1e-12);
            let step = if last { remaining } else { h };
            let (next, err, n_new) = self.dp_step(&u, &n0, step);
            let finite = next.iter().all(|c| c.re.is_finite() && c.im.is_finite());
            let e = if finite { self.error_norm(&u, &next, &err) } else { f64::INFINITY };
            if e <= 1.0 {
                t = if last { dt } else { t + step };
                u = next;
                n0 = n_new;
                if !last {
                    last_h = step;
                }
                let factor = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
                h = step * factor;
            } else {
                let factor = if e.is_finite() { (0.9 * e.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
                h = step * factor;
                if h < dt * 1e-14 {
                    return Err(Error::Divergence { time: t0 + t });
                }
            }
        }
        Ok((u, last_h.max(h.min(dt))))
    }

    /// Advances `state` by `steps` output intervals.
    pub fn advance(&self, state: &SolverState, steps: usize) -> Result<SolverState> {
        self.check_field(&state.field)?;
        let mut u = self.to_spectrum(state.field.data());
        let mut t = state.t;
        let mut hint = state.substep;
        for _ in 0..steps {
            let (next, h) = self.advance_interval(u, t, state.dt, hint)?;
            u = next;
            t += state.dt;
            hint = Some(h);
            if self.cfg.family == Family::Kp {
                self.project_constraint(&mut u);
            }
            if u.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                return Err(Error::Divergence { time: t });
            }
        }
        let field = Tensor::new(self.cfg.field_shape(), self.to_field(&u))?;
        if !field.is_finite() {
            return Err(Error::Divergence { time: t });
        }
        Ok(SolverState { field, t, dt: state.dt, substep: hint })
    }

    /// Snapshots at `t0, t0 + dt, …` (`snapshots` fields including the start).
    pub fn trajectory(&self, state: &SolverState, snapshots: usize) -> Result<Vec<Tensor>> {
        let mut out = Vec::with_capacity(snapshots);
        if snapshots == 0 {
            return Ok(out);
        }
        let mut s = state.clone();
        if self.cfg.family == Family::Kp {
            s.field = kp_project(&s.field)?;
        }
        out.push(s.field.clone());
        for _ in 1..snapshots {
            s = self.advance(&s, 1)?;
            out.push(s.field.clone());
        }
        Ok(out)
    }

    fn project_constraint(&self, u: &mut [Complex64]) {
        let n2 = self.cfg.grid[1];
        for v in u.iter_mut().take(n2).skip(1) {
            *v = Complex64::new(0.0, 0.0);
        }
    }

    fn check_field(&self, field: &Tensor) -> Result<()> {
        let expect = self.cfg.field_shape();
        if field.shape() != expect.as_slice() && field.shape() != self.cfg.grid.as_slice() {
            return Err(Error::Shape(format!("field {:?} does not match grid {:?}", field.shape(), self.cfg.grid)));
        }
        if !field.is_finite() {
            return Err(Error::Divergence { time: f64::NAN });
        }
        Ok(())
    }
}

/// Convenience wrapper: builds a solver with default control and advances.
pub fn advance(cfg: &EquationConfig, state: &SolverState, steps: usize) -> Result<SolverState> {
    Solver::new(cfg, StepControl::default())?.advance(state, steps)
}

fn field_grid(field: &Tensor) -> Vec<usize> {
    let s = field.shape();
    if s.len() >= 2 && s[s.len() - 1] == 1 {
        s[..s.len() - 1].to_vec()
    } else {
        s.to_vec()
    }
}

/// `F⁻¹(|κ| F φ)` on a periodic domain of length `domain_length`.
pub fn gamma_op(field: &Tensor, domain_length: f64) -> Result<Tensor> {
    let grid = field_grid(field);
    if grid.is_empty() || grid.len() > 2 {
        return Err(Error::Shape(format!("gamma_op expects a 1d or 2d field, got {:?}", field.shape())));
    }
    let even: Vec<Vec<f64>> = grid.iter().map(|&n| axis_wavenumbers(n, domain_length, false)).collect();
    let mut buf = rfft_full(field.data(), &grid);
    for (p, v) in buf.iter_mut().enumerate() {
        let k2: f64 = match grid.as_slice() {
            [_] => even[0][p].powi(2),
            [_, n2] => even[0][p / n2].powi(2) + even[1][p % n2].powi(2),
            _ => unreachable!(),
        };
        *v *= k2.sqrt();
    }
    Tensor::new(field.shape().to_vec(), irfft_full(&buf, &grid))
}

/// Removes the `κ1 = 0, κ2 ≠ 0` spectral row so that `∫ ∂²_{x2} φ dx1 = 0`.
pub fn kp_project(field: &Tensor) -> Result<Tensor> {
    let grid = field_grid(field);
    let [n1, n2] = grid.as_slice() else {
        return Err(Error::Shape(format!("kp_project needs a 2d field, got {:?}", field.shape())));
    };
    // removing the x1-mean of every column with its x2-mean restored is the
    // same projection, done without transforms
    let (n1, n2) = (*n1, *n2);
    let d = field.data();
    let total_mean = d.iter().sum::<f64>() / (n1 * n2) as f64;
    let mut out = d.to_vec();
    for j in 0..n2 {
        let col_mean = (0..n1).map(|i| d[i * n2 + j]).sum::<f64>() / n1 as f64;
        for i in 0..n1 {
            out[i * n2 + j] += total_mean - col_mean;
        }
    }
    Tensor::new(field.shape().to_vec(), out)
}

/// Spatial mean `(1/|D|) ∫ φ dx`.
pub fn mean(field: &Tensor) -> f64 {
    field.data().iter().sum::<f64>() / field.len() as f64
}
