//! Subcommand bodies and the run manifest.

use std::fs::{self, File};
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use isfno_core::dataset::{generate_to, read_header, split_indices, Dataset, DatasetSpec};
use isfno_core::eval::{
    autocorrelation, config_hash, export_csv, horizon_error_from, reference_ensemble, rollout_ensemble,
};
use isfno_core::ist::{discrete_spectrum, evolve_scattering, reflectionless_reconstruct, ScatteringData};
use isfno_core::model::Model;
use isfno_core::solver::{Solver, SolverState};
use isfno_core::tensor::Tensor;
use isfno_core::train::train;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{AutocorrRun, Initial, IstRun, RolloutRun, TrainRun};
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

/// A fully resolved run: everything needed to repeat it.
#[derive(Clone, Debug, PartialEq)]
pub enum Resolved {
    GenData(DatasetSpec),
    Train(TrainRun),
    Rollout(RolloutRun),
    Autocorr(AutocorrRun),
    IstDemo(IstRun),
}

impl Resolved {
    pub fn command(&self) -> &'static str {
        match self {
            Resolved::GenData(_) => "gen-data",
            Resolved::Train(_) => "train",
            Resolved::Rollout(_) => "rollout",
            Resolved::Autocorr(_) => "autocorr",
            Resolved::IstDemo(_) => "ist-demo",
        }
    }

    pub fn config(&self) -> Result<Value, CliError> {
        Ok(match self {
            Resolved::GenData(c) => serde_json::to_value(c)?,
            Resolved::Train(c) => serde_json::to_value(c)?,
            Resolved::Rollout(c) => serde_json::to_value(c)?,
            Resolved::Autocorr(c) => serde_json::to_value(c)?,
            Resolved::IstDemo(c) => serde_json::to_value(c)?,
        })
    }

    pub fn from_config(command: &str, config: Value) -> Result<Self, CliError> {
        let bad = |e: serde_json::Error| CliError::usage(format!("manifest config for `{command}`: {e}"));
        Ok(match command {
            "gen-data" => Resolved::GenData(serde_json::from_value(config).map_err(bad)?),
            "train" => Resolved::Train(serde_json::from_value(config).map_err(bad)?),
            "rollout" => Resolved::Rollout(serde_json::from_value(config).map_err(bad)?),
            "autocorr" => Resolved::Autocorr(serde_json::from_value(config).map_err(bad)?),
            "ist-demo" => Resolved::IstDemo(serde_json::from_value(config).map_err(bad)?),
            other => return Err(CliError::usage(format!("manifest names unknown command `{other}`"))),
        })
    }

    pub fn inputs(&self) -> Vec<PathBuf> {
        match self {
            Resolved::GenData(_) | Resolved::IstDemo(_) => Vec::new(),
            Resolved::Train(r) => vec![r.data.clone()],
            Resolved::Rollout(r) => vec![r.checkpoint.clone(), r.data.clone()],
            Resolved::Autocorr(r) => vec![r.input.clone()],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Completed,
    Diverged,
}

/// Written next to the outputs of every run. Holds no timings so that a
/// replay reproduces it byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub threads: Option<usize>,
    pub config: Value,
    pub inputs: Vec<InputFile>,
    pub outputs: Vec<String>,
    pub status: Status,
    pub summary: Value,
}

impl Manifest {
    pub fn new(resolved: &Resolved, threads: Option<usize>) -> Result<Self, CliError> {
        let inputs = resolved
            .inputs()
            .into_iter()
            .map(|path| Ok(InputFile { sha256: file_sha256(&path)?, path }))
            .collect::<Result<_, CliError>>()?;
        Ok(Self {
            tool: "isfno".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: resolved.command().to_string(),
            threads,
            config: resolved.config()?,
            inputs,
            outputs: Vec::new(),
            status: Status::Completed,
            summary: Value::Null,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(MANIFEST);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }

    /// Fails if an input file no longer matches its recorded digest.
    pub fn check_inputs(&self) -> Result<(), CliError> {
        for input in &self.inputs {
            let now = file_sha256(&input.path)?;
            if now != input.sha256 {
                return Err(CliError::usage(format!(
                    "input {} changed since the manifest was written",
                    input.path.display()
                )));
            }
        }
        Ok(())
    }
}

pub fn file_sha256(path: &Path) -> Result<String, CliError> {
    let mut bytes = Vec::new();
    File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| CliError::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

pub struct Outcome {
    pub outputs: Vec<String>,
    pub status: Status,
    pub summary: Value,
}

pub fn execute(resolved: &Resolved, out: &Path) -> Result<Outcome, CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    match resolved {
        Resolved::GenData(spec) => gen_data(spec, out),
        Resolved::Train(run) => train_model(run, out),
        Resolved::Rollout(run) => rollout(run, out),
        Resolved::Autocorr(run) => autocorr(run, out),
        Resolved::IstDemo(run) => ist_demo(run, out),
    }
}

fn gen_data(spec: &DatasetSpec, out: &Path) -> Result<Outcome, CliError> {
    let ds = generate_to(spec, &out.join("data.isfn"))?;
    let (train, val) = split_indices(spec.sequences, spec.val_fraction)?;
    Ok(Outcome {
        outputs: vec!["data.isfn".into()],
        status: Status::Completed,
        summary: json!({
            "sequences": ds.header.sequences,
            "snapshots": ds.header.snapshots,
            "train_sequences": train.len(),
            "validation_sequences": val.len(),
        }),
    })
}

fn train_model(run: &TrainRun, out: &Path) -> Result<Outcome, CliError> {
    let data = Dataset::load(&run.data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(run.train.seed);
    rng.set_stream(1);
    let mut model = Model::new(run.model.clone(), &mut rng)?;
    let report = train(&mut model, &data, &run.train, Some(&out.join("model.isfm")))?;
    report.write_csv(&out.join("report.csv"))?;
    let last = report.epochs.last().expect("at least one epoch");
    eprintln!(
        "{}: {} parameters, best validation loss {:.6e} at epoch {}, {:.1} s",
        run.model.variant,
        model.parameter_count(),
        report.best_val_loss,
        report.best_epoch,
        report.wall_seconds
    );
    Ok(Outcome {
        outputs: vec!["model.isfm".into(), "report.csv".into()],
        status: Status::Completed,
        summary: json!({
            "parameters": model.parameter_count(),
            "best_epoch": report.best_epoch,
            "best_val_loss": report.best_val_loss,
            "final_train_loss": last.train_loss,
        }),
    })
}

fn initial_states(run: &RolloutRun, data: &Dataset, spec: &DatasetSpec) -> Result<Vec<Tensor>, CliError> {
    match run.initial {
        Initial::Sampled => (0..run.ensemble)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
                rng.set_stream(i as u64);
                let phi = spec.sampler.sample(&spec.equation, &mut rng)?;
                if spec.burn_in == 0 {
                    return Ok(phi);
                }
                let solver = Solver::new(&spec.equation, spec.control.clone())?;
                Ok(solver.advance(&SolverState::new(phi, spec.dt), spec.burn_in)?.field)
            })
            .collect(),
        Initial::Validation => {
            let (_, val) = split_indices(data.header.sequences, spec.val_fraction)?;
            if run.ensemble > val.len() {
                return Err(CliError::usage(format!(
                    "ensemble of {} exceeds the {} validation sequences",
                    run.ensemble,
                    val.len()
                )));
            }
            Ok(val[..run.ensemble].iter().map(|&s| data.snapshot(s, 0)).collect())
        }
    }
}

fn rollout(run: &RolloutRun, out: &Path) -> Result<Outcome, CliError> {
    let model = Model::load(&run.checkpoint)?;
    let data = Dataset::load(&run.data)?;
    let spec = data
        .header
        .spec
        .clone()
        .ok_or_else(|| CliError::usage(format!("{} carries no generation spec", run.data.display())))?;
    let initial = initial_states(run, &data, &spec)?;
    let preds = rollout_ensemble(&model, &initial, run.steps)?;
    let refs = reference_ensemble(&spec.equation, &spec.control, spec.dt, &initial, run.steps)?;
    let curve = horizon_error_from(&preds, &refs, spec.sampler.name())?;

    let common = curve.values.len() + 1;
    let pack = |set: &[isfno_core::eval::Rollout], source: &str| -> Result<Dataset, CliError> {
        let trajs: Vec<Vec<Tensor>> = set.iter().map(|r| r.states[..common].to_vec()).collect();
        Ok(Dataset::from_trajectories(&trajs, spec.dt, source, Some(run.seed), None)?)
    };
    pack(&preds, "rollout")?.write(&out.join("prediction.isfn"))?;
    pack(&refs, "solver")?.write(&out.join("reference.isfn"))?;
    export_csv(&out.join("error.csv"), "J", &config_hash(run)?, 1, &curve.values)?;

    let pred_div: Vec<Option<usize>> = preds.iter().map(|r| r.diverged_at).collect();
    let ref_div: Vec<Option<usize>> = refs.iter().map(|r| r.diverged_at).collect();
    let status = if curve.truncated_members > 0 { Status::Diverged } else { Status::Completed };
    if status == Status::Diverged {
        eprintln!(
            "rollout stopped early for {} of {} members; model diverged at {:?}, solver at {:?}",
            curve.truncated_members, run.ensemble, pred_div, ref_div
        );
    }
    println!(
        "J({}) = {:.6e} over {} members",
        curve.values.len(),
        curve.values.last().copied().unwrap_or(0.0),
        run.ensemble
    );
    Ok(Outcome {
        outputs: vec!["prediction.isfn".into(), "reference.isfn".into(), "error.csv".into()],
        status,
        summary: json!({
            "completed_steps": curve.values.len(),
            "truncated_members": curve.truncated_members,
            "model_diverged_at": pred_div,
            "solver_diverged_at": ref_div,
            "final_error": curve.values.last(),
        }),
    })
}

fn autocorr(run: &AutocorrRun, out: &Path) -> Result<Outcome, CliError> {
    let data = Dataset::load(&run.input)?;
    let snaps = data.header.snapshots;
    if run.start >= snaps {
        return Err(CliError::usage(format!("window starts at snapshot {} but the file has {snaps}", run.start)));
    }
    let end = run.end.min(snaps);
    let members: Vec<Vec<Tensor>> =
        (0..data.header.sequences).map(|s| (run.start..end).map(|t| data.snapshot(s, t)).collect()).collect();
    let k = autocorrelation(&members)?;
    export_csv(&out.join("autocorr.csv"), "K", &config_hash(run)?, 0, &k)?;
    println!("autocorrelation over snapshots {}..{end} of {} members", run.start, members.len());
    Ok(Outcome {
        outputs: vec!["autocorr.csv".into()],
        status: Status::Completed,
        summary: json!({ "window": [run.start, end], "members": members.len() }),
    })
}

fn ist_demo(run: &IstRun, out: &Path) -> Result<Outcome, CliError> {
    let solitons: Vec<(f64, f64)> = run.speeds.iter().copied().zip(run.positions.iter().copied()).collect();
    let data = ScatteringData::solitons(&solitons)?;
    let dt = if run.snapshots > 1 { run.t_end / (run.snapshots - 1) as f64 } else { 0.0 };
    let fields = (0..run.snapshots)
        .map(|k| reflectionless_reconstruct(&evolve_scattering(&data, k as f64 * dt), run.points, run.length))
        .collect::<isfno_core::Result<Vec<Tensor>>>()?;
    let eigenvalues = discrete_spectrum(&fields[0], run.length)?;
    if eigenvalues.is_empty() {
        println!("no discrete eigenvalues");
    }
    for (j, l) in eigenvalues.iter().enumerate() {
        println!("lambda[{j}] = {l:.8}");
    }
    Dataset::from_trajectories(&[fields], dt, "ist", None, None)?.write(&out.join("field.isfn"))?;
    Ok(Outcome {
        outputs: vec!["field.isfn".into()],
        status: Status::Completed,
        summary: json!({ "eigenvalues": eigenvalues, "scattering_eigenvalues": data.eigenvalues() }),
    })
}

/// Header of an `ISFN` dataset or summary of an `ISFM` checkpoint as JSON.
pub fn inspect(path: &Path) -> Result<Value, CliError> {
    let mut magic = [0u8; 4];
    let mut f = File::open(path).map_err(|e| CliError::io(path, e))?;
    if f.read_exact(&mut magic).is_err() {
        return Err(CliError::Io(format!("{}: too short for an ISFN or ISFM file", path.display())));
    }
    match &magic {
        b"ISFN" => {
            let mut r = BufReader::new(File::open(path).map_err(|e| CliError::io(path, e))?);
            Ok(json!({ "format": "ISFN", "header": read_header(&mut r)? }))
        }
        b"ISFM" => {
            let model = Model::load(path)?;
            let params: Vec<Value> =
                model.params.iter().map(|(name, t)| json!({ "name": name, "shape": t.shape() })).collect();
            Ok(json!({
                "format": "ISFM",
                "spec": model.spec,
                "parameter_count": model.parameter_count(),
                "parameters": params,
            }))
        }
        _ => Err(CliError::Io(format!("{}: not an ISFN or ISFM file", path.display()))),
    }
}
