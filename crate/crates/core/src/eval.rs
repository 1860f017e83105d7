//! Long-horizon rollouts, accumulated error curves, spatial autocorrelation
//! and CSV export.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::solver::{EquationConfig, Solver, SolverState, StepControl};
use crate::tensor::fft::{fft_nd, rfft_full};
use crate::tensor::Tensor;
use crate::train::relative_l2;

/// States `φ_0 … φ_k` of one trajectory, `[x.., c]` each.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub states: Vec<Tensor>,
    pub requested: usize,
    /// First step whose state was not finite.
    pub diverged_at: Option<usize>,
}

impl Rollout {
    pub fn completed(&self) -> usize {
        self.states.len() - 1
    }
}

/// Feeds the last predicted component back as the next input; step `j`
/// is component `((j − 1) mod n) + 1` of block `⌈j/n⌉`. The baseline FNO
/// composes single steps.
pub fn rollout(model: &Model, phi0: &Tensor, total: usize) -> Result<Rollout> {
    if total == 0 {
        return Err(Error::Contract("rollout length must be at least 1".into()));
    }
    let mut states = vec![phi0.clone()];
    let mut diverged_at = None;
    let n = if model.spec.variant.is_single_step() { 1 } else { model.spec.horizon };
    'blocks: while states.len() <= total {
        let input = states.last().unwrap().unsqueeze0();
        let block = if n == 1 { model.predict_step(&input).map(|t| t.unsqueeze0()) } else { model.predict(&input) };
        let block = match block {
            Ok(b) => b.index0(0),
            Err(Error::ForwardDivergence { .. }) => {
                diverged_at = Some(states.len());
                break;
            }
            Err(e) => return Err(e),
        };
        for k in 0..n {
            if states.len() > total {
                break 'blocks;
            }
            let s = block.index0(k);
            if !s.is_finite() {
                diverged_at = Some(states.len());
                break 'blocks;
            }
            states.push(s);
        }
    }
    Ok(Rollout { states, requested: total, diverged_at })
}

/// Independent rollouts, one per initial state, in input order.
pub fn rollout_ensemble(model: &Model, initial: &[Tensor], total: usize) -> Result<Vec<Rollout>> {
    initial.par_iter().map(|phi| rollout(model, phi, total)).collect()
}

/// Solver trajectory `φ_0 … φ_k` with `k ≤ total`, stopping at divergence.
pub fn reference_trajectory(solver: &Solver, phi0: &Tensor, dt: f64, total: usize) -> Result<Rollout> {
    let mut state = SolverState::new(phi0.clone(), dt);
    let mut states = vec![phi0.clone()];
    let mut diverged_at = None;
    for j in 1..=total {
        match solver.advance(&state, 1) {
            Ok(next) => {
                states.push(next.field.clone());
                state = next;
            }
            Err(Error::Divergence { .. } | Error::Numerical(_)) => {
                diverged_at = Some(j);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Rollout { states, requested: total, diverged_at })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorCurve {
    /// `J(j)` for `j = 1 …`.
    pub values: Vec<f64>,
    pub ensemble: usize,
    pub sampler: String,
    /// Members whose prediction or reference stopped early.
    pub truncated_members: usize,
}

/// Ensemble mean of `C(prediction_j, reference_j)` over the steps every
/// member reached.
pub fn horizon_error_from(predictions: &[Rollout], references: &[Rollout], sampler: &str) -> Result<ErrorCurve> {
    if predictions.is_empty() || predictions.len() != references.len() {
        return Err(Error::Contract("need matching, non-empty prediction and reference ensembles".into()));
    }
    let mut len = usize::MAX;
    let mut truncated = 0;
    for (p, r) in predictions.iter().zip(references) {
        let m = p.completed().min(r.completed());
        if m < p.requested.max(r.requested) {
            truncated += 1;
        }
        len = len.min(m);
    }
    let mut values = vec![0.0; len];
    for (p, r) in predictions.iter().zip(references) {
        for (j, v) in values.iter_mut().enumerate() {
            *v += relative_l2(&p.states[j + 1].unsqueeze0(), &r.states[j + 1].unsqueeze0())?;
        }
    }
    for v in &mut values {
        *v /= predictions.len() as f64;
    }
    Ok(ErrorCurve { values, ensemble: predictions.len(), sampler: sampler.to_string(), truncated_members: truncated })
}

/// Accumulated error of `model` against the spectral solver from each
/// initial state.
pub fn horizon_error(
    model: &Model,
    equation: &EquationConfig,
    control: &StepControl,
    dt: f64,
    initial: &[Tensor],
    total: usize,
    sampler: &str,
) -> Result<ErrorCurve> {
    let preds = rollout_ensemble(model, initial, total)?;
    let refs = reference_ensemble(equation, control, dt, initial, total)?;
    horizon_error_from(&preds, &refs, sampler)
}

/// Solver trajectories from each initial state, one solver per member.
pub fn reference_ensemble(
    equation: &EquationConfig,
    control: &StepControl,
    dt: f64,
    initial: &[Tensor],
    total: usize,
) -> Result<Vec<Rollout>> {
    initial
        .par_iter()
        .map(|phi| reference_trajectory(&Solver::new(equation, control.clone())?, phi, dt, total))
        .collect()
}

/// Periodic shift correlation along the first spatial axis, summed over
/// the remaining axes and channels: `Σ_x φ(x) φ(x − r e₁)` for every `r`.
fn shift_products(field: &Tensor) -> Vec<f64> {
    let shape = field.shape();
    let spatial = &shape[..shape.len() - 1];
    let c = shape[shape.len() - 1];
    let n1 = spatial[0];
    let npts: usize = spatial.iter().product();
    let rest = npts / n1;
    let mut marginal = vec![Complex64::new(0.0, 0.0); n1];
    for ch in 0..c {
        let comp: Vec<f64> = (0..npts).map(|p| field.data()[p * c + ch]).collect();
        let spec = rfft_full(&comp, spatial);
        for (p, v) in spec.iter().enumerate() {
            marginal[p / rest] += v.norm_sqr();
        }
    }
    fft_nd(&mut marginal, &[n1], true);
    marginal.iter().map(|v| v.re / npts as f64).collect()
}

/// `𝔎(r)` for `r = 0 … N₁ − 1` grid shifts: per member the ratio of
/// time-summed shifted products to time-summed energy, then the ensemble
/// mean.
pub fn autocorrelation(members: &[Vec<Tensor>]) -> Result<Vec<f64>> {
    let Some(first) = members.iter().flatten().next() else {
        return Err(Error::DegenerateStatistic("empty window".into()));
    };
    let n1 = first.shape()[0];
    let mut out = vec![0.0; n1];
    for window in members {
        let mut num = vec![0.0; n1];
        for state in window {
            if state.shape() != first.shape() {
                return Err(Error::Shape(format!("state {:?} vs {:?}", state.shape(), first.shape())));
            }
            for (a, b) in num.iter_mut().zip(shift_products(state)) {
                *a += b;
            }
        }
        let den = num[0];
        if !(den > 0.0) || !den.is_finite() {
            return Err(Error::DegenerateStatistic("window has zero energy".into()));
        }
        for (o, v) in out.iter_mut().zip(&num) {
            *o += v / den;
        }
    }
    for o in &mut out {
        *o /= members.len() as f64;
    }
    Ok(out)
}

/// First 16 hex digits of the SHA-256 of the JSON form of `config`.
pub fn config_hash(config: &impl Serialize) -> Result<String> {
    let json = serde_json::to_vec(config)?;
    let digest = Sha256::digest(&json);
    Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
}

/// Two-column CSV `index,value` with header `index,{metric}#{hash}`.
pub fn export_csv(path: &Path, metric: &str, hash: &str, start: usize, values: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "index,{metric}#{hash}")?;
    for (i, v) in values.iter().enumerate() {
        writeln!(w, "{},{:?}", start + i, v)?;
    }
    w.flush()?;
    Ok(())
}

/// Header line and `(index, value)` rows of a file written by [`export_csv`].
pub fn read_csv(path: &Path) -> Result<(String, Vec<(usize, f64)>)> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header = lines.next().transpose()?.ok_or_else(|| Error::Format("empty CSV".into()))?;
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        let (i, v) = line.split_once(',').ok_or_else(|| Error::Format(format!("bad CSV row `{line}`")))?;
        let i = i.parse().map_err(|_| Error::Format(format!("bad index `{i}`")))?;
        let v = v.parse().map_err(|_| Error::Format(format!("bad value `{v}`")))?;
        rows.push((i, v));
    }
    Ok((header, rows))
}
