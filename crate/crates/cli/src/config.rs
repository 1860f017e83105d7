//! Config files, flag overrides and fully resolved run configurations.
//!
//! A config file is TOML with one table per stage (`[data]`, `[model]`,
//! `[train]`, `[rollout]`, `[autocorr]`, `[ist]`). Every key is also a flag;
//! flags win over the file, the file wins over built-in defaults.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use isfno_core::dataset::{DatasetSpec, Header, Sampler};
use isfno_core::model::{ModelSpec, Variant};
use isfno_core::solver::{EquationConfig, Family};
use isfno_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Comma-separated list on the command line, an array in TOML.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: fmt::Display,
{
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s.trim().is_empty() {
            return Ok(List(Vec::new()));
        }
        s.split(',').map(|p| p.trim().parse().map_err(|e| format!("`{p}`: {e}"))).collect::<Result<_, _>>().map(List)
    }
}

macro_rules! layered {
    ($name:ident { $($field:ident),* $(,)? }) => {
        impl $name {
            /// Fields set here win over `base`.
            pub fn over(self, base: Self) -> Self {
                Self { $($field: self.$field.or(base.$field)),* }
            }
        }
    };
}

#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Equation family: ms, ks, kdv or kp.
    #[arg(long)]
    pub family: Option<Family>,
    /// Largest linearly unstable wavenumber (ms, ks).
    #[arg(long)]
    pub beta: Option<f64>,
    /// Grid points per axis, e.g. `128` or `32,32`.
    #[arg(long)]
    pub grid: Option<List<usize>>,
    #[arg(long)]
    pub domain_length: Option<f64>,
    /// Number of sequences.
    #[arg(long = "n-seq")]
    #[serde(alias = "n_seq")]
    pub sequences: Option<usize>,
    /// Snapshots per sequence, including the first.
    #[arg(long)]
    pub snapshots: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Output intervals integrated and discarded before the first snapshot.
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// uniform_physical, lowwave_fourier or soliton_superposition.
    #[arg(long)]
    pub sampler: Option<String>,
}

layered!(DataSection {
    family,
    beta,
    grid,
    domain_length,
    sequences,
    snapshots,
    dt,
    seed,
    val_fraction,
    burn_in,
    sampler
});

impl DataSection {
    pub fn resolve(self) -> Result<DatasetSpec, CliError> {
        let family = self.family.ok_or_else(|| CliError::usage("gen-data needs --family (ms, ks, kdv or kp)"))?;
        let grid = match self.grid {
            Some(List(g)) => g,
            None => match family {
                Family::Ms | Family::Ks => vec![128],
                Family::Kdv => vec![256],
                Family::Kp => vec![32, 32],
            },
        };
        let two_d = grid.len() == 2;
        let mut equation = match (family, grid.as_slice()) {
            (Family::Ms | Family::Ks, [_] | [_, _]) => {
                let beta = self.beta.ok_or_else(|| CliError::usage(format!("{} needs --beta", family.name())))?;
                if family == Family::Ms {
                    EquationConfig::ms(beta, &grid)
                } else {
                    EquationConfig::ks(beta, &grid)
                }
            }
            (Family::Kdv, [n]) => EquationConfig::kdv(*n),
            (Family::Kp, [n1, n2]) => EquationConfig::kp(*n1, *n2),
            _ => return Err(CliError::usage(format!("grid {grid:?} does not fit family {}", family.name()))),
        };
        if let Some(l) = self.domain_length {
            equation.domain_length = l;
        }
        let dt = self.dt.unwrap_or(match family {
            Family::Ms | Family::Ks if two_d => 0.074,
            Family::Ms | Family::Ks => 0.15,
            Family::Kdv | Family::Kp => 0.0024,
        });
        let (sequences, snapshots) = if two_d { (8, 41) } else { (32, 101) };
        let mut spec = DatasetSpec::new(
            equation,
            self.sequences.unwrap_or(sequences),
            self.snapshots.unwrap_or(snapshots),
            dt,
            self.seed.unwrap_or(0),
        );
        if let Some(name) = self.sampler {
            spec.sampler = sampler_named(&name, &spec.equation)?;
        }
        if let Some(f) = self.val_fraction {
            spec.val_fraction = f;
        }
        spec.burn_in = self.burn_in.unwrap_or(0);
        spec.validate()?;
        Ok(spec)
    }
}

fn sampler_named(name: &str, eq: &EquationConfig) -> Result<Sampler, CliError> {
    Ok(match name {
        "uniform_physical" => Sampler::UniformPhysical { lo: 0.0, hi: 0.03 },
        "lowwave_fourier" => match Sampler::default_for(eq) {
            s @ Sampler::LowwaveFourier { .. } => s,
            _ => Sampler::LowwaveFourier { band: 9, amp_lo: 0.0, amp_hi: eq.n_points() as f64 / 2.0 },
        },
        "soliton_superposition" => Sampler::solitons(),
        other => {
            return Err(CliError::usage(format!(
                "unknown sampler `{other}` (uniform_physical, lowwave_fourier, soliton_superposition)"
            )))
        }
    })
}

#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// One of fno, kfno_s, kfno_o, kfno_p, isfno_s, isfno_o, isfno_p, isfno_pk, isfno_pk3.
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Channel width (for IS-FNO the extra latent channels beyond the field).
    #[arg(long)]
    pub width: Option<usize>,
    /// Retained Fourier modes per axis.
    #[arg(long)]
    pub modes: Option<List<usize>>,
    /// Hidden width of the output MLP.
    #[arg(long)]
    pub hidden: Option<usize>,
}

layered!(ModelSection { variant, width, modes, hidden });

#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    /// Training data (ISFN file).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Prediction horizon n.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Seeds both the initialization and the batch shuffle.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Global gradient-norm bound; 0 disables clipping.
    #[arg(long)]
    pub clip: Option<f64>,
}

layered!(TrainSection { data, epochs, batch_size, lr, weight_decay, horizon, seed, val_fraction, clip });

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub data: PathBuf,
    pub model: ModelSpec,
    pub train: TrainConfig,
}

pub fn resolve_train(model: ModelSection, train: TrainSection, header: &Header) -> Result<TrainRun, CliError> {
    let variant = model.variant.ok_or_else(|| CliError::usage(variant_help("train needs --variant")))?;
    let path = train.data.ok_or_else(|| CliError::usage("train needs --data"))?;
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        epochs: train.epochs.unwrap_or(d.epochs),
        batch_size: train.batch_size.unwrap_or(d.batch_size),
        lr: train.lr.unwrap_or(d.lr),
        weight_decay: train.weight_decay.unwrap_or(d.weight_decay),
        clip: match train.clip {
            Some(c) if c <= 0.0 => None,
            Some(c) => Some(c),
            None => d.clip,
        },
        horizon: train.horizon.unwrap_or(d.horizon),
        seed: train.seed.unwrap_or(d.seed),
        val_fraction: train.val_fraction.unwrap_or(header.spec.as_ref().map_or(d.val_fraction, |s| s.val_fraction)),
        ..d
    };
    cfg.validate()?;
    let grid = &header.grid;
    let modes = match model.modes {
        Some(List(m)) => m,
        None => {
            let cap = if grid.len() == 1 { 16 } else { 8 };
            grid.iter().map(|n| cap.min(n / 2)).collect()
        }
    };
    let spec = ModelSpec::new(variant, header.channels, model.width.unwrap_or(16), &modes, cfg.horizon)
        .with_hidden(model.hidden.unwrap_or(128));
    spec.validate()?;
    Ok(TrainRun { data: path, model: spec, train: cfg })
}

pub fn variant_help(msg: &str) -> String {
    format!("{msg}; valid variants: {}", Variant::names())
}

#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutSection {
    /// Trained model (ISFM file).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Dataset whose equation, time step and sampler define the reference.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Rollout length in time steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Number of initial conditions.
    #[arg(long)]
    pub ensemble: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `sampled` draws fresh initial conditions from the dataset's sampler;
    /// `validation` takes the first snapshot of the validation sequences.
    #[arg(long)]
    pub initial: Option<String>,
}

layered!(RolloutSection { checkpoint, data, steps, ensemble, seed, initial });

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initial {
    Sampled,
    Validation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutRun {
    pub checkpoint: PathBuf,
    pub data: PathBuf,
    pub steps: usize,
    pub ensemble: usize,
    pub seed: u64,
    pub initial: Initial,
}

impl RolloutSection {
    pub fn resolve(self) -> Result<RolloutRun, CliError> {
        let initial = match self.initial.as_deref() {
            None | Some("sampled") => Initial::Sampled,
            Some("validation") => Initial::Validation,
            Some(other) => return Err(CliError::usage(format!("unknown initial-condition source `{other}`"))),
        };
        let run = RolloutRun {
            checkpoint: self.checkpoint.ok_or_else(|| CliError::usage("rollout needs --checkpoint"))?,
            data: self.data.ok_or_else(|| CliError::usage("rollout needs --data"))?,
            steps: self.steps.unwrap_or(100),
            ensemble: self.ensemble.unwrap_or(5),
            seed: self.seed.unwrap_or(0),
            initial,
        };
        if run.steps == 0 || run.ensemble == 0 {
            return Err(CliError::usage("--steps and --ensemble must be positive"));
        }
        Ok(run)
    }
}

#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutocorrSection {
    /// Trajectories (ISFN file); every sequence is one ensemble member.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// First snapshot of the averaging window.
    #[arg(long)]
    pub start: Option<usize>,
    /// One past the last snapshot of the window.
    #[arg(long)]
    pub end: Option<usize>,
}

layered!(AutocorrSection { input, start, end });

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutocorrRun {
    pub input: PathBuf,
    pub start: usize,
    pub end: usize,
}

impl AutocorrSection {
    pub fn resolve(self) -> Result<AutocorrRun, CliError> {
        let run = AutocorrRun {
            input: self.input.ok_or_else(|| CliError::usage("autocorr needs --input"))?,
            start: self.start.unwrap_or(1001),
            end: self.end.unwrap_or(4000),
        };
        if run.start >= run.end {
            return Err(CliError::usage(format!("empty window {}..{}", run.start, run.end)));
        }
        Ok(run)
    }
}

#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IstSection {
    /// Soliton speeds; an empty list gives the zero field.
    #[arg(long)]
    pub speeds: Option<List<f64>>,
    /// Asymptotic crest positions, one per speed.
    #[arg(long)]
    pub positions: Option<List<f64>>,
    /// Grid points.
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub length: Option<f64>,
    /// Last reconstruction time.
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Reconstructed snapshots on `[0, t_end]`.
    #[arg(long)]
    pub snapshots: Option<usize>,
}

layered!(IstSection { speeds, positions, points, length, t_end, snapshots });

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IstRun {
    pub speeds: Vec<f64>,
    pub positions: Vec<f64>,
    pub points: usize,
    pub length: f64,
    pub t_end: f64,
    pub snapshots: usize,
}

impl IstSection {
    pub fn resolve(self) -> Result<IstRun, CliError> {
        let speeds = self.speeds.map_or(vec![2.0], |l| l.0);
        let length = self.length.unwrap_or(40.0);
        let m = speeds.len();
        let positions =
            self.positions.map_or_else(|| (1..=m).map(|j| length * j as f64 / (m + 1) as f64).collect(), |l| l.0);
        if positions.len() != m {
            return Err(CliError::usage(format!("{m} speeds but {} positions", positions.len())));
        }
        let run = IstRun {
            speeds,
            positions,
            points: self.points.unwrap_or(512),
            length,
            t_end: self.t_end.unwrap_or(0.0),
            snapshots: self.snapshots.unwrap_or(1),
        };
        if run.snapshots == 0 || run.points < 3 || !(run.length > 0.0) || run.t_end < 0.0 {
            return Err(CliError::usage("ist-demo needs snapshots >= 1, points >= 3, length > 0 and t_end >= 0"));
        }
        if run.snapshots == 1 && run.t_end > 0.0 {
            return Err(CliError::usage("a positive --t-end needs at least two snapshots"));
        }
        Ok(run)
    }
}

/// Sections of a config file; absent tables are empty.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub rollout: RolloutSection,
    pub autocorr: AutocorrSection,
    pub ist: IstSection,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }
}
