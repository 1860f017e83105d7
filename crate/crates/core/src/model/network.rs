//! Variant compositions: FNO, kFNO and IS-FNO pipelines.

use std::rc::Rc;

use rand::Rng;

use super::layers::{
    apply_exp_layer, exp_transfer, fourier_layer, kdv_weights, lift_zero_stack, project_truncate, revnet_forward,
};
use super::params::{Bound, ParamSet};
use super::spec::{Advance, ModelSpec};
use crate::error::{shape_err, Error, Result};
use crate::tensor::{SpectralGrid, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub params: ParamSet,
}

fn finite<'t>(v: Var<'t>, stage: &str) -> Result<Var<'t>> {
    if v.value().is_finite() {
        Ok(v)
    } else {
        Err(Error::ForwardDivergence { stage: stage.to_string() })
    }
}

/// Latent advancement `A`, with any matrix exponentials computed once.
enum Advancer<'t> {
    Vanilla(Vec<(Var<'t>, Var<'t>, Var<'t>)>),
    Exp { lin: Var<'t>, quad: Option<Var<'t>> },
}

impl<'t> Advancer<'t> {
    fn apply(&self, z: &Var<'t>, grid: &Rc<SpectralGrid>) -> Result<Var<'t>> {
        match self {
            Advancer::Vanilla(layers) => {
                let mut z = *z;
                for (w, b, r) in layers {
                    z = fourier_layer(&z, w, b, r, grid, true)?;
                }
                Ok(z)
            }
            Advancer::Exp { lin, quad } => apply_exp_layer(z, lin, quad.as_ref(), grid),
        }
    }
}

impl Model {
    pub fn new(spec: ModelSpec, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let params = ParamSet::init(&spec, rng);
        Ok(Self { spec, params })
    }

    pub fn from_parts(spec: ModelSpec, params: ParamSet) -> Result<Self> {
        spec.validate()?;
        params.check_layout(&spec)?;
        if !params.is_finite() {
            return Err(Error::Format("parameters contain non-finite values".into()));
        }
        Ok(Self { spec, params })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.scalar_count()
    }

    pub fn grid_for(&self, field_shape: &[usize]) -> Result<Rc<SpectralGrid>> {
        let nd = self.spec.cutoffs.len();
        if field_shape.len() != nd + 2 || field_shape[nd + 1] != self.spec.d_v {
            return shape_err(format!(
                "input {:?} must be [batch, {} spatial axes, {} channels]",
                field_shape, nd, self.spec.d_v
            ));
        }
        Ok(Rc::new(SpectralGrid::new(&field_shape[1..=nd], &self.spec.cutoffs)?))
    }

    fn fourier<'t>(p: &Bound<'t>, prefix: &str, z: &Var<'t>, grid: &Rc<SpectralGrid>, alpha: bool) -> Result<Var<'t>> {
        fourier_layer(
            z,
            p.get(&format!("{prefix}.w"))?,
            p.get(&format!("{prefix}.b"))?,
            p.get(&format!("{prefix}.r"))?,
            grid,
            alpha,
        )
    }

    fn mlp<'t>(p: &Bound<'t>, prefix: &str, z: &Var<'t>) -> Result<Var<'t>> {
        let h = z.affine(p.get(&format!("{prefix}.l1.w"))?, Some(p.get(&format!("{prefix}.l1.b"))?))?.gelu();
        h.affine(p.get(&format!("{prefix}.l2.w"))?, Some(p.get(&format!("{prefix}.l2.b"))?))
    }

    /// RevNet sub-map `f`: adapter, Fourier layers (α = 0), perceptron.
    pub fn submap_f<'t>(&self, p: &Bound<'t>, a: &Var<'t>, grid: &Rc<SpectralGrid>) -> Result<Var<'t>> {
        let mut z = if self.spec.d_v == self.spec.width {
            *a
        } else {
            a.affine(p.get("f.adapter.w")?, Some(p.get("f.adapter.b")?))?
        };
        for i in 0..self.spec.fg_layers {
            z = Self::fourier(p, &format!("f.fl.{i}"), &z, grid, false)?;
        }
        Self::mlp(p, "f.mlp", &z)
    }

    /// RevNet sub-map `g`: Fourier layers (α = 0), perceptron.
    pub fn submap_g<'t>(&self, p: &Bound<'t>, b: &Var<'t>, grid: &Rc<SpectralGrid>) -> Result<Var<'t>> {
        let mut z = *b;
        for i in 0..self.spec.fg_layers {
            z = Self::fourier(p, &format!("g.fl.{i}"), &z, grid, false)?;
        }
        Self::mlp(p, "g.mlp", &z)
    }

    fn advancer<'t>(&self, p: &Bound<'t>, grid: &Rc<SpectralGrid>) -> Result<Advancer<'t>> {
        Ok(match self.spec.variant.advance() {
            Advance::Vanilla => Advancer::Vanilla(
                (0..self.spec.a_layers)
                    .map(|i| {
                        Ok((*p.get(&format!("a.{i}.w"))?, *p.get(&format!("a.{i}.b"))?, *p.get(&format!("a.{i}.r"))?))
                    })
                    .collect::<Result<_>>()?,
            ),
            Advance::Exponential { quadratic } => Advancer::Exp {
                lin: exp_transfer(p.get("a.r_lin")?)?,
                quad: if quadratic { Some(exp_transfer(p.get("a.r_quad")?)?) } else { None },
            },
            Advance::ScaledKdv { learn_exponent } => {
                let r = p.get("a.r_kdv")?;
                let exponent = if learn_exponent { *p.get("a.p")? } else { r.tape().constant(Tensor::full(&[1], 3.0)) };
                Advancer::Exp { lin: exp_transfer(&kdv_weights(r, &exponent, grid)?)?, quad: None }
            }
        })
    }

    /// `steps` predictions of the multi-step pipeline, each `[B, x.., d_v]`.
    fn pipeline<'t>(&self, p: &Bound<'t>, phi: &Var<'t>, steps: usize) -> Result<Vec<Var<'t>>> {
        let grid = self.grid_for(&phi.shape())?;
        let adv = self.advancer(p, &grid)?;
        let spec = &self.spec;
        let mut out = Vec::with_capacity(steps);
        if spec.variant.is_isfno() {
            let dv = spec.d_v;
            let z0 = lift_zero_stack(phi, dv + spec.width)?;
            let f = |a: &Var<'t>| self.submap_f(p, a, &grid);
            let g = |b: &Var<'t>| self.submap_g(p, b, &grid);
            let mut z = finite(revnet_forward(&z0, dv, f, g)?, "revnet")?;
            for j in 1..=steps {
                z = finite(adv.apply(&z, &grid)?, &format!("advance step {j}"))?;
                // only the leading block is needed: a = a' − g(b')
                let a2 = project_truncate(&z, dv)?;
                let b2 = z.slice_channels(dv, spec.width)?;
                let a = a2.sub(&self.submap_g(p, &b2, &grid)?)?;
                out.push(finite(a, &format!("revnet inverse step {j}"))?);
            }
        } else {
            let mut z = finite(phi.affine(p.get("lift.w")?, Some(p.get("lift.b")?))?, "lift")?;
            for i in 0..spec.h_layers {
                z = Self::fourier(p, &format!("h.{i}"), &z, &grid, true)?;
            }
            z = finite(z, "encoder")?;
            for j in 1..=steps {
                z = finite(adv.apply(&z, &grid)?, &format!("advance step {j}"))?;
                let mut q = z;
                for i in 0..spec.q_layers {
                    q = Self::fourier(p, &format!("q.{i}"), &q, &grid, true)?;
                }
                out.push(finite(Self::mlp(p, "p", &q)?, &format!("decoder step {j}"))?);
            }
        }
        Ok(out)
    }

    /// One advancement `φ(t) → φ(t + Δt)`.
    pub fn single_step<'t>(&self, p: &Bound<'t>, phi: &Var<'t>) -> Result<Var<'t>> {
        Ok(self.pipeline(p, phi, 1)?.remove(0))
    }

    /// `n` predictions stacked as `[B, n, x.., d_v]`; the baseline FNO
    /// composes `single_step` `n` times.
    pub fn forward_multi<'t>(&self, p: &Bound<'t>, phi: &Var<'t>) -> Result<Var<'t>> {
        let n = self.spec.horizon;
        let steps = if self.spec.variant.is_single_step() {
            let mut out = Vec::with_capacity(n);
            let mut cur = *phi;
            for _ in 0..n {
                cur = self.single_step(p, &cur)?;
                out.push(cur);
            }
            out
        } else {
            self.pipeline(p, phi, n)?
        };
        Var::stack(&steps)
    }

    /// Tape-free `forward_multi` on `[B, x.., d_v]`.
    pub fn predict(&self, phi: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let p = self.params.bind(&tape, false);
        let out = self.forward_multi(&p, &tape.constant(phi.clone()))?;
        Ok(out.to_tensor())
    }

    /// Tape-free `single_step`.
    pub fn predict_step(&self, phi: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let p = self.params.bind(&tape, false);
        let out = self.single_step(&p, &tape.constant(phi.clone()))?;
        Ok(out.to_tensor())
    }
}
