use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::spectral::mode_count;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Fno,
    KfnoS,
    KfnoO,
    KfnoP,
    IsfnoS,
    IsfnoO,
    IsfnoP,
    IsfnoPk,
    IsfnoPk3,
}

/// How the latent advancement operator `A` is built.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Advance {
    /// Stacked vanilla Fourier layers with skip connections.
    Vanilla,
    /// Exponential Fourier layer; `quadratic` is the γ flag.
    Exponential { quadratic: bool },
    /// Linear exponential layer with weights `r''(κ/κmax)^p`.
    ScaledKdv { learn_exponent: bool },
}

impl Variant {
    pub const ALL: [Variant; 9] = [
        Variant::Fno,
        Variant::KfnoS,
        Variant::KfnoO,
        Variant::KfnoP,
        Variant::IsfnoS,
        Variant::IsfnoO,
        Variant::IsfnoP,
        Variant::IsfnoPk,
        Variant::IsfnoPk3,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Fno => "fno",
            Variant::KfnoS => "kfno_s",
            Variant::KfnoO => "kfno_o",
            Variant::KfnoP => "kfno_p",
            Variant::IsfnoS => "isfno_s",
            Variant::IsfnoO => "isfno_o",
            Variant::IsfnoP => "isfno_p",
            Variant::IsfnoPk => "isfno_pk",
            Variant::IsfnoPk3 => "isfno_pk3",
        }
    }

    pub fn names() -> String {
        Self::ALL.iter().map(|v| v.name()).collect::<Vec<_>>().join(", ")
    }

    pub fn is_isfno(&self) -> bool {
        matches!(self, Variant::IsfnoS | Variant::IsfnoO | Variant::IsfnoP | Variant::IsfnoPk | Variant::IsfnoPk3)
    }

    /// Baseline FNO learns one step and is rolled out recurrently.
    pub fn is_single_step(&self) -> bool {
        *self == Variant::Fno
    }

    pub fn advance(&self) -> Advance {
        match self {
            Variant::Fno | Variant::KfnoS | Variant::IsfnoS => Advance::Vanilla,
            Variant::KfnoO | Variant::IsfnoO => Advance::Exponential { quadratic: true },
            Variant::KfnoP | Variant::IsfnoP => Advance::Exponential { quadratic: false },
            Variant::IsfnoPk => Advance::ScaledKdv { learn_exponent: true },
            Variant::IsfnoPk3 => Advance::ScaledKdv { learn_exponent: false },
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|v| v.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`; valid variants: {}", Self::names())))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    /// Channels of the physical field.
    pub d_v: usize,
    /// Latent width: `d_z` for FNO/kFNO, `d_z*` for IS-FNO (total `d_v + d_z*`).
    pub width: usize,
    /// Mode cutoffs per spatial axis.
    pub cutoffs: Vec<usize>,
    /// Prediction horizon `n`.
    pub horizon: usize,
    /// Perceptron hidden width.
    pub hidden: usize,
    pub h_layers: usize,
    pub q_layers: usize,
    pub a_layers: usize,
    pub fg_layers: usize,
}

impl ModelSpec {
    pub fn new(variant: Variant, d_v: usize, width: usize, cutoffs: &[usize], horizon: usize) -> Self {
        Self {
            variant,
            d_v,
            width,
            cutoffs: cutoffs.to_vec(),
            horizon,
            hidden: 128,
            h_layers: 3,
            q_layers: 1,
            a_layers: 2,
            fg_layers: 2,
        }
    }

    pub fn with_hidden(mut self, hidden: usize) -> Self {
        self.hidden = hidden;
        self
    }

    /// Width of the space `A` acts on.
    pub fn latent_width(&self) -> usize {
        if self.variant.is_isfno() {
            self.d_v + self.width
        } else {
            self.width
        }
    }

    pub fn n_modes(&self) -> usize {
        mode_count(&self.cutoffs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_v == 0 || self.width == 0 || self.hidden == 0 || self.horizon == 0 {
            return Err(Error::Config("d_v, width, hidden and horizon must be positive".into()));
        }
        if self.cutoffs.is_empty() || self.cutoffs.len() > 2 || self.cutoffs.contains(&0) {
            return Err(Error::Config(format!("cutoffs {:?} must have 1 or 2 positive entries", self.cutoffs)));
        }
        if matches!(self.variant.advance(), Advance::ScaledKdv { .. }) && self.cutoffs.len() != 1 {
            return Err(Error::Unsupported(format!("{} is one-dimensional", self.variant)));
        }
        if matches!(self.variant.advance(), Advance::ScaledKdv { .. }) && self.cutoffs[0] < 2 {
            return Err(Error::Config("scaled KdV layer needs at least two modes".into()));
        }
        Ok(())
    }

    /// Closed-form parameter count.
    pub fn parameter_count(&self) -> usize {
        let m = self.n_modes();
        let fl = |d: usize| d * d + d + 2 * m * d * d;
        let affine = |i: usize, o: usize| i * o + o;
        let mlp = |i: usize, o: usize| affine(i, self.hidden) + affine(self.hidden, o);
        let dz = self.latent_width();
        let a = match self.variant.advance() {
            Advance::Vanilla => self.a_layers * fl(dz),
            Advance::Exponential { quadratic } => (if quadratic { 2 } else { 1 }) * 2 * m * dz * dz,
            Advance::ScaledKdv { learn_exponent } => 2 * dz * dz + usize::from(learn_exponent),
        };
        if self.variant.is_isfno() {
            let ds = self.width;
            let adapter = if self.d_v == ds { 0 } else { affine(self.d_v, ds) };
            let f = adapter + self.fg_layers * fl(ds) + mlp(ds, ds);
            let g = self.fg_layers * fl(ds) + mlp(ds, self.d_v);
            f + g + a
        } else {
            affine(self.d_v, dz) + self.h_layers * fl(dz) + a + self.q_layers * fl(dz) + mlp(dz, self.d_v)
        }
    }
}
