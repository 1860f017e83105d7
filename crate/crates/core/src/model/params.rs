//! Named parameter sets, their layout per variant, and initialization.

use rand::Rng;

use super::spec::{Advance, ModelSpec};
use crate::error::{Error, Result};
use crate::tensor::spectral::mode_extents;
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// `U(−1/√d_in, 1/√d_in)`.
    Affine {
        fan_in: usize,
    },
    /// `U(−1, 1) / d` for real and imaginary parts.
    Spectral {
        width: usize,
    },
    Zero,
    Constant(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

struct Layout<'a> {
    spec: &'a ModelSpec,
    out: Vec<ParamInfo>,
}

impl Layout<'_> {
    fn push(&mut self, name: String, shape: Vec<usize>, init: Init) {
        self.out.push(ParamInfo { name, shape, init });
    }

    fn affine(&mut self, prefix: &str, din: usize, dout: usize, init_zero: bool) {
        let init = if init_zero { Init::Zero } else { Init::Affine { fan_in: din } };
        self.push(format!("{prefix}.w"), vec![din, dout], init);
        self.push(format!("{prefix}.b"), vec![dout], init);
    }

    fn spectral_shape(&self, d: usize) -> Vec<usize> {
        let mut s = mode_extents(&self.spec.cutoffs);
        s.extend([d, d, 2]);
        s
    }

    fn fourier(&mut self, prefix: &str, d: usize) {
        self.affine(prefix, d, d, false);
        let shape = self.spectral_shape(d);
        self.push(format!("{prefix}.r"), shape, Init::Spectral { width: d });
    }

    fn mlp(&mut self, prefix: &str, din: usize, dout: usize, zero_last: bool) {
        let h = self.spec.hidden;
        self.affine(&format!("{prefix}.l1"), din, h, false);
        self.affine(&format!("{prefix}.l2"), h, dout, zero_last);
    }

    fn advance(&mut self, d: usize) {
        match self.spec.variant.advance() {
            Advance::Vanilla => {
                for i in 0..self.spec.a_layers {
                    self.fourier(&format!("a.{i}"), d);
                }
            }
            Advance::Exponential { quadratic } => {
                let shape = self.spectral_shape(d);
                self.push("a.r_lin".into(), shape.clone(), Init::Zero);
                if quadratic {
                    self.push("a.r_quad".into(), shape, Init::Zero);
                }
            }
            Advance::ScaledKdv { learn_exponent } => {
                self.push("a.r_kdv".into(), vec![d, d, 2], Init::Zero);
                if learn_exponent {
                    self.push("a.p".into(), vec![1], Init::Constant(3.0));
                }
            }
        }
    }
}

/// Ordered parameter layout of a model.
pub fn layout(spec: &ModelSpec) -> Vec<ParamInfo> {
    let mut l = Layout { spec, out: Vec::new() };
    let (dv, w) = (spec.d_v, spec.width);
    if spec.variant.is_isfno() {
        if dv != w {
            l.affine("f.adapter", dv, w, false);
        }
        for i in 0..spec.fg_layers {
            l.fourier(&format!("f.fl.{i}"), w);
        }
        l.mlp("f.mlp", w, w, true);
        for i in 0..spec.fg_layers {
            l.fourier(&format!("g.fl.{i}"), w);
        }
        l.mlp("g.mlp", w, dv, true);
        l.advance(dv + w);
    } else {
        l.affine("lift", dv, w, false);
        for i in 0..spec.h_layers {
            l.fourier(&format!("h.{i}"), w);
        }
        l.advance(w);
        for i in 0..spec.q_layers {
            l.fourier(&format!("q.{i}"), w);
        }
        l.mlp("p", w, dv, false);
    }
    l.out
}

/// Ordered named tensors.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn init(spec: &ModelSpec, rng: &mut impl Rng) -> Self {
        let mut set = ParamSet::default();
        for info in layout(spec) {
            let t = match info.init {
                Init::Affine { fan_in } => {
                    let a = 1.0 / (fan_in as f64).sqrt();
                    Tensor::from_fn(&info.shape, |_| rng.random_range(-a..=a))
                }
                Init::Spectral { width } => {
                    Tensor::from_fn(&info.shape, |_| rng.random_range(-1.0..=1.0) / width as f64)
                }
                Init::Zero => Tensor::zeros(&info.shape),
                Init::Constant(v) => Tensor::full(&info.shape, v),
            };
            set.push(info.name, t);
        }
        set
    }

    pub fn push(&mut self, name: String, tensor: Tensor) {
        self.names.push(name);
        self.tensors.push(tensor);
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.position(name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.position(name).map(move |i| &mut self.tensors[i])
    }

    /// Total number of scalars.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    /// Checks names and shapes against a layout.
    pub fn check_layout(&self, spec: &ModelSpec) -> Result<()> {
        let want = layout(spec);
        if want.len() != self.len() {
            return Err(Error::Format(format!("expected {} parameters, found {}", want.len(), self.len())));
        }
        for (info, (name, t)) in want.iter().zip(self.iter()) {
            if info.name != name || info.shape != t.shape() {
                return Err(Error::Format(format!(
                    "parameter `{name}` {:?} does not match expected `{}` {:?}",
                    t.shape(),
                    info.name,
                    info.shape
                )));
            }
        }
        Ok(())
    }

    /// Registers every tensor on `tape`, as leaves when `trainable`.
    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> Bound<'t> {
        let vars = self
            .tensors
            .iter()
            .map(|t| if trainable { tape.leaf(t.clone()) } else { tape.constant(t.clone()) })
            .collect();
        Bound { names: self.names.clone(), vars }
    }
}

/// Parameters registered on a tape.
pub struct Bound<'t> {
    names: Vec<String>,
    vars: Vec<Var<'t>>,
}

impl<'t> Bound<'t> {
    pub fn from_vars(names: Vec<String>, vars: Vec<Var<'t>>) -> Result<Self> {
        if names.len() != vars.len() {
            return Err(Error::Contract(format!("{} names for {} variables", names.len(), vars.len())));
        }
        Ok(Self { names, vars })
    }

    pub fn get(&self, name: &str) -> Result<&Var<'t>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.vars[i])
            .ok_or_else(|| Error::Contract(format!("missing parameter `{name}`")))
    }

    pub fn vars(&self) -> &[Var<'t>] {
        &self.vars
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}
