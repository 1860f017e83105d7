//! Trajectory datasets: generation, the `ISFN` file format and 1-to-n pairs.

mod samplers;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use samplers::{init_lowwave, init_solitons, init_uniform, lowwave_spectrum, soliton_sum, within_band, Sampler};

use crate::error::{Error, Result};
use crate::solver::{EquationConfig, Solver, SolverState, StepControl};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"ISFN";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub equation: EquationConfig,
    pub sequences: usize,
    pub snapshots: usize,
    pub dt: f64,
    pub sampler: Sampler,
    pub seed: u64,
    pub val_fraction: f64,
    /// Output intervals integrated and discarded before the first snapshot.
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default)]
    pub control: StepControl,
}

impl DatasetSpec {
    pub fn new(equation: EquationConfig, sequences: usize, snapshots: usize, dt: f64, seed: u64) -> Self {
        let sampler = Sampler::default_for(&equation);
        Self {
            equation,
            sequences,
            snapshots,
            dt,
            sampler,
            seed,
            val_fraction: 0.1,
            burn_in: 0,
            control: StepControl::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.equation.validate()?;
        self.sampler.validate(&self.equation)?;
        if !(self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.sequences == 0 || self.snapshots < 2 {
            return Err(Error::Config("need at least one sequence of two snapshots".into()));
        }
        if !(0.1..1.0).contains(&self.val_fraction) {
            return Err(Error::Config(format!("validation fraction {} must lie in [0.1, 1)", self.val_fraction)));
        }
        Ok(())
    }

    /// Independent RNG stream for sequence `index`.
    pub fn rng_for(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        rng
    }
}

/// JSON header of an `ISFN` file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub sequences: usize,
    pub snapshots: usize,
    pub grid: Vec<usize>,
    pub channels: usize,
    pub dt: f64,
    pub seed: Option<u64>,
    /// What produced the data (`solver`, `rollout`, `ist`, ...).
    pub source: String,
    pub spec: Option<DatasetSpec>,
}

impl Header {
    pub fn snapshot_len(&self) -> usize {
        self.grid.iter().product::<usize>() * self.channels
    }

    pub fn sequence_len(&self) -> usize {
        self.snapshots * self.snapshot_len()
    }
}

/// A start snapshot within one sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PairIndex {
    pub sequence: usize,
    pub start: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: Header,
    /// `[sequence][time][x..][channel]`
    pub data: Vec<f64>,
}

impl Dataset {
    /// Packs equal-length trajectories of `[x.., c]` snapshots.
    pub fn from_trajectories(
        trajectories: &[Vec<Tensor>],
        dt: f64,
        source: &str,
        seed: Option<u64>,
        spec: Option<DatasetSpec>,
    ) -> Result<Self> {
        let first = trajectories
            .first()
            .and_then(|t| t.first())
            .ok_or_else(|| Error::Contract("no trajectories to pack".into()))?;
        let shape = first.shape().to_vec();
        let snapshots = trajectories[0].len();
        let mut data = Vec::with_capacity(trajectories.len() * snapshots * first.len());
        for traj in trajectories {
            if traj.len() != snapshots {
                return Err(Error::Shape("trajectories differ in length".into()));
            }
            for snap in traj {
                if snap.shape() != shape.as_slice() {
                    return Err(Error::Shape(format!("snapshot {:?} differs from {:?}", snap.shape(), shape)));
                }
                data.extend_from_slice(snap.data());
            }
        }
        let header = Header {
            sequences: trajectories.len(),
            snapshots,
            grid: shape[..shape.len() - 1].to_vec(),
            channels: shape[shape.len() - 1],
            dt,
            seed,
            source: source.to_string(),
            spec,
        };
        Ok(Self { header, data })
    }

    pub fn snapshot_shape(&self) -> Vec<usize> {
        let mut s = self.header.grid.clone();
        s.push(self.header.channels);
        s
    }

    pub fn snapshot_slice(&self, sequence: usize, time: usize) -> &[f64] {
        let len = self.header.snapshot_len();
        let off = sequence * self.header.sequence_len() + time * len;
        &self.data[off..off + len]
    }

    pub fn snapshot(&self, sequence: usize, time: usize) -> Tensor {
        Tensor::new(self.snapshot_shape(), self.snapshot_slice(sequence, time).to_vec()).expect("consistent header")
    }

    pub fn trajectory(&self, sequence: usize) -> Vec<Tensor> {
        (0..self.header.snapshots).map(|t| self.snapshot(sequence, t)).collect()
    }

    /// Training and validation sequence indices; the last
    /// `⌈fraction · Z⌉` sequences validate.
    pub fn split(&self, fraction: f64) -> Result<(Vec<usize>, Vec<usize>)> {
        split_indices(self.header.sequences, fraction)
    }

    /// All stride-1 pair starts for horizon `n` within `sequences`.
    pub fn pairs(&self, n: usize, sequences: &[usize]) -> Result<Vec<PairIndex>> {
        if n == 0 || self.header.snapshots < n + 1 {
            return Err(Error::Contract(format!(
                "horizon {n} needs at least {} snapshots, sequences have {}",
                n + 1,
                self.header.snapshots
            )));
        }
        let mut out = Vec::new();
        for &sequence in sequences {
            if sequence >= self.header.sequences {
                return Err(Error::Contract(format!("sequence {sequence} out of range")));
            }
            out.extend((0..self.header.snapshots - n).map(|start| PairIndex { sequence, start }));
        }
        Ok(out)
    }

    /// Inputs `[B, x.., c]` and targets `[B, n, x.., c]` for the given pairs.
    pub fn batch(&self, pairs: &[PairIndex], n: usize) -> Result<(Tensor, Tensor)> {
        let snap = self.header.snapshot_len();
        let mut inputs = Vec::with_capacity(pairs.len() * snap);
        let mut targets = Vec::with_capacity(pairs.len() * n * snap);
        for p in pairs {
            if p.start + n >= self.header.snapshots || p.sequence >= self.header.sequences {
                return Err(Error::Contract(format!("pair {p:?} does not fit horizon {n}")));
            }
            inputs.extend_from_slice(self.snapshot_slice(p.sequence, p.start));
            for k in 1..=n {
                targets.extend_from_slice(self.snapshot_slice(p.sequence, p.start + k));
            }
        }
        let mut ishape = vec![pairs.len()];
        ishape.extend(self.snapshot_shape());
        let mut tshape = vec![pairs.len(), n];
        tshape.extend(self.snapshot_shape());
        Ok((Tensor::new(ishape, inputs)?, Tensor::new(tshape, targets)?))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let header = serde_json::to_vec(&self.header)?;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let header = read_header(r)?;
        let total = header.sequences * header.sequence_len();
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != total * 8 {
            return Err(Error::Format(format!("expected {} data bytes, found {}", total * 8, bytes.len())));
        }
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self { header, data })
    }
}

/// Reads only the magic, version and JSON header.
pub fn read_header(r: &mut impl Read) -> Result<Header> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::Format("file too short for magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected ISFN")));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word).map_err(|_| Error::Format("truncated version".into()))?;
    let version = u32::from_le_bytes(word);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported ISFN version {version}")));
    }
    r.read_exact(&mut word).map_err(|_| Error::Format("truncated header length".into()))?;
    let len = u32::from_le_bytes(word) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(|_| Error::Format("truncated header".into()))?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| Error::Format(format!("header: {e}")))?;
    if header.grid.is_empty() || header.channels == 0 {
        return Err(Error::Format("header has an empty grid or no channels".into()));
    }
    Ok(header)
}

pub fn split_indices(sequences: usize, fraction: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_val = (fraction * sequences as f64 - 1e-9).ceil().max(0.0) as usize;
    if n_val == 0 || n_val >= sequences {
        return Err(Error::Config(format!(
            "fraction {fraction} of {sequences} sequences leaves an empty training or validation set"
        )));
    }
    let cut = sequences - n_val;
    Ok(((0..cut).collect(), (cut..sequences).collect()))
}

/// Integrates one sequence of `spec` from its sampled initial condition.
pub fn generate_sequence(spec: &DatasetSpec, solver: &Solver, index: usize) -> Result<Vec<Tensor>> {
    let mut rng = spec.rng_for(index);
    let init = spec.sampler.sample(&spec.equation, &mut rng)?;
    let mut state = SolverState::new(init, spec.dt);
    if spec.burn_in > 0 {
        state = solver.advance(&state, spec.burn_in)?;
        state.t = 0.0;
    }
    solver.trajectory(&state, spec.snapshots)
}

/// Runs every sequence (in parallel on the current rayon pool) and packs them.
pub fn generate(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let results: Vec<Result<Vec<Tensor>>> = (0..spec.sequences)
        .into_par_iter()
        .map(|i| {
            let solver = Solver::new(&spec.equation, spec.control.clone())?;
            generate_sequence(spec, &solver, i)
        })
        .collect();
    let mut trajectories = Vec::with_capacity(spec.sequences);
    for (i, r) in results.into_iter().enumerate() {
        trajectories.push(r.map_err(|e| Error::Generation { sequence: i, source: Box::new(e) })?);
    }
    Dataset::from_trajectories(&trajectories, spec.dt, "solver", Some(spec.seed), Some(spec.clone()))
}

/// Generates and writes `spec` to `path`.
pub fn generate_to(spec: &DatasetSpec, path: &Path) -> Result<Dataset> {
    let ds = generate(spec)?;
    ds.write(path)?;
    Ok(ds)
}
