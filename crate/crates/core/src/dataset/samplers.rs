//! Initial-condition samplers.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::{kp_project, EquationConfig, Family};
use crate::tensor::fft::{irfft_full, signed_index};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampler {
    /// i.i.d. `U(lo, hi)` per grid point.
    UniformPhysical { lo: f64, hi: f64 },
    /// Random phases and magnitudes `ξ ∈ [amp_lo, amp_hi]` (unnormalized FFT
    /// units) on integer wavevectors with `|m| ≤ band`.
    LowwaveFourier { band: usize, amp_lo: f64, amp_hi: f64 },
    /// Sum of `M` periodically wrapped KdV solitons.
    SolitonSuperposition { m_min: usize, m_max: usize, s_lo: f64, s_hi: f64 },
}

impl Sampler {
    pub fn default_for(cfg: &EquationConfig) -> Self {
        match cfg.family {
            Family::Ms | Family::Ks => Sampler::UniformPhysical { lo: 0.0, hi: 0.03 },
            Family::Kdv => Sampler::LowwaveFourier { band: 9, amp_lo: 0.0, amp_hi: cfg.grid[0] as f64 / 2.0 },
            Family::Kp => Sampler::LowwaveFourier { band: 9, amp_lo: 0.0, amp_hi: cfg.n_points() as f64 / 15.0 },
        }
    }

    pub fn solitons() -> Self {
        Sampler::SolitonSuperposition { m_min: 3, m_max: 8, s_lo: 0.4, s_hi: 2.0 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Sampler::UniformPhysical { .. } => "uniform_physical",
            Sampler::LowwaveFourier { .. } => "lowwave_fourier",
            Sampler::SolitonSuperposition { .. } => "soliton_superposition",
        }
    }

    pub fn validate(&self, cfg: &EquationConfig) -> Result<()> {
        match *self {
            Sampler::UniformPhysical { lo, hi } => {
                if !(lo < hi) {
                    return Err(Error::Config(format!("uniform sampler needs lo < hi, got [{lo}, {hi})")));
                }
            }
            Sampler::LowwaveFourier { band, amp_lo, amp_hi } => {
                let nyquist = cfg.grid.iter().map(|n| n / 2).min().unwrap_or(0);
                if band == 0 || band >= nyquist {
                    return Err(Error::Config(format!("band {band} must lie in 1..{nyquist}")));
                }
                if !(amp_lo >= 0.0 && amp_lo <= amp_hi) {
                    return Err(Error::Config(format!("amplitude range [{amp_lo}, {amp_hi}] is invalid")));
                }
            }
            Sampler::SolitonSuperposition { m_min, m_max, s_lo, s_hi } => {
                if cfg.family != Family::Kdv {
                    return Err(Error::Unsupported(format!(
                        "soliton superposition needs the kdv family, not {}",
                        cfg.family.name()
                    )));
                }
                if m_min == 0 || m_min > m_max || !(0.0 < s_lo && s_lo <= s_hi) {
                    return Err(Error::Config("soliton count or speed range is invalid".into()));
                }
            }
        }
        Ok(())
    }

    /// Draws one initial field of shape `[x.., 1]`.
    pub fn sample(&self, cfg: &EquationConfig, rng: &mut impl Rng) -> Result<Tensor> {
        self.validate(cfg)?;
        match *self {
            Sampler::UniformPhysical { lo, hi } => Ok(init_uniform(&cfg.grid, lo, hi, rng)),
            Sampler::LowwaveFourier { band, amp_lo, amp_hi } => {
                let f = init_lowwave(&cfg.grid, band, (amp_lo, amp_hi), rng);
                if cfg.family == Family::Kp {
                    kp_project(&f)
                } else {
                    Ok(f)
                }
            }
            Sampler::SolitonSuperposition { m_min, m_max, s_lo, s_hi } => {
                init_solitons(cfg, (m_min, m_max), (s_lo, s_hi), rng).map(|(f, _)| f)
            }
        }
    }
}

fn field_shape(grid: &[usize]) -> Vec<usize> {
    let mut s = grid.to_vec();
    s.push(1);
    s
}

pub fn init_uniform(grid: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(&field_shape(grid), |_| rng.random_range(lo..hi))
}

/// Full (Hermitian) FFT-layout spectrum of a low-wavenumber sample.
pub fn lowwave_spectrum(grid: &[usize], band: usize, amp: (f64, f64), rng: &mut impl Rng) -> Vec<Complex64> {
    let npts: usize = grid.iter().product();
    let mut spec = vec![Complex64::new(0.0, 0.0); npts];
    let band = band as i64;
    let wrap = |m: i64, n: usize| m.rem_euclid(n as i64) as usize;
    let draw = |rng: &mut dyn rand::RngCore| {
        let xi = if amp.1 > amp.0 { rng.random_range(amp.0..=amp.1) } else { amp.0 };
        let theta = rng.random_range(0.0..2.0 * PI);
        Complex64::from_polar(xi, theta)
    };
    match grid {
        [n] => {
            for m in 0..=band {
                let v = draw(rng);
                if m == 0 {
                    spec[0] = Complex64::new(v.re, 0.0);
                } else {
                    spec[wrap(m, *n)] = v;
                    spec[wrap(-m, *n)] = v.conj();
                }
            }
        }
        [n1, n2] => {
            // half-space representatives: m2 > 0, or m2 = 0 and m1 >= 0
            for m1 in -band..=band {
                for m2 in 0..=band {
                    if m1 * m1 + m2 * m2 > band * band || (m2 == 0 && m1 < 0) {
                        continue;
                    }
                    let v = draw(rng);
                    if m1 == 0 && m2 == 0 {
                        spec[0] = Complex64::new(v.re, 0.0);
                        continue;
                    }
                    spec[wrap(m1, *n1) * n2 + wrap(m2, *n2)] = v;
                    spec[wrap(-m1, *n1) * n2 + wrap(-m2, *n2)] = v.conj();
                }
            }
        }
        _ => {}
    }
    spec
}

pub fn init_lowwave(grid: &[usize], band: usize, amp: (f64, f64), rng: &mut impl Rng) -> Tensor {
    let spec = lowwave_spectrum(grid, band, amp, rng);
    Tensor::new(field_shape(grid), irfft_full(&spec, grid)).expect("grid-sized buffer")
}

/// Whether FFT bin `p` of `grid` lies within the sampler band.
pub fn within_band(grid: &[usize], p: usize, band: usize) -> bool {
    let b = band as i64;
    match grid {
        [n] => signed_index(p, *n).abs() <= b,
        [n1, n2] => {
            let (m1, m2) = (signed_index(p / n2, *n1), signed_index(p % n2, *n2));
            m1 * m1 + m2 * m2 <= b * b
        }
        _ => false,
    }
}

/// `Σ (s/2) sech²(√s/2 (x − c))` summed over periodic images, so the
/// profile is smooth across the domain edge.
pub fn soliton_sum(n: usize, length: f64, solitons: &[(f64, f64)]) -> Tensor {
    Tensor::from_fn(&[n, 1], |i| {
        let x = i as f64 * length / n as f64;
        solitons
            .iter()
            .map(|&(s, c)| {
                let k = 0.5 * s.sqrt();
                let d = (x - c + 0.5 * length).rem_euclid(length) - 0.5 * length;
                // sech² < 4e^{-2|a|}; images beyond 20 decay lengths fall below 1e-17
                let images = (20.0 / (k * length)).ceil() as i64 + 1;
                (-images..=images).map(|m| 0.5 * s / (k * (d + m as f64 * length)).cosh().powi(2)).sum::<f64>()
            })
            .sum()
    })
}

/// Random soliton superposition; also returns the drawn `(s, c)` pairs.
pub fn init_solitons(
    cfg: &EquationConfig,
    count: (usize, usize),
    speed: (f64, f64),
    rng: &mut impl Rng,
) -> Result<(Tensor, Vec<(f64, f64)>)> {
    if cfg.family != Family::Kdv {
        return Err(Error::Unsupported(format!("soliton initial data for {}", cfg.family.name())));
    }
    let m = rng.random_range(count.0..=count.1);
    let l = cfg.domain_length;
    let params: Vec<(f64, f64)> =
        (0..m).map(|_| (rng.random_range(speed.0..=speed.1), rng.random_range(0.0..l))).collect();
    Ok((soliton_sum(cfg.grid[0], l, &params), params))
}
