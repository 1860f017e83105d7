//! Multi-step training: relative L2 losses, AdamW, step schedule, clipping.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{split_indices, Dataset, PairIndex};
use crate::error::{Error, Result};
use crate::model::{Model, ParamSet};
use crate::tensor::kernels;
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub eps: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub sched_step: usize,
    pub sched_factor: f64,
    /// Global gradient-norm bound; `None` disables clipping.
    pub clip: Option<f64>,
    pub horizon: usize,
    pub seed: u64,
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 32,
            lr: 0.0025,
            weight_decay: 1e-6,
            eps: 1e-6,
            beta1: 0.9,
            beta2: 0.999,
            sched_step: 100,
            sched_factor: 0.5,
            clip: Some(10.0),
            horizon: 20,
            seed: 0,
            val_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.lr, self.eps, self.sched_factor];
        if self.epochs == 0 || self.batch_size == 0 || self.horizon == 0 || self.sched_step == 0 {
            return Err(Error::Config("epochs, batch size, horizon and scheduler step must be positive".into()));
        }
        if positive.iter().any(|v| !(*v > 0.0)) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("learning rate, epsilon and decay factor must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                return Err(Error::Config(format!("clip norm must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

/// Batch mean of `‖a − b‖ / ‖b‖` over all non-batch axes.
pub fn relative_l2(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() || a.ndim() == 0 {
        return Err(Error::Shape(format!("relative_l2: {:?} vs {:?}", a.shape(), b.shape())));
    }
    kernels::rel_l2(a.data(), b.data(), a.shape()[0])
}

fn check_horizon(pred: &Var<'_>, targets: &Tensor) -> Result<()> {
    let (p, t) = (pred.shape(), targets.shape());
    if p.len() < 2 || t.len() < 2 || p[1] != t[1] {
        return Err(Error::Contract(format!("prediction {:?} does not match targets {:?}", p, t)));
    }
    Ok(())
}

/// `C(forward(v), targets)` for a multi-step map returning `[B, n, x.., c]`.
pub fn loss_multistep<'t, F>(forward: F, input: &Var<'t>, targets: &Tensor) -> Result<Var<'t>>
where
    F: FnOnce(&Var<'t>) -> Result<Var<'t>>,
{
    let pred = forward(input)?;
    check_horizon(&pred, targets)?;
    pred.relative_l2(targets)
}

/// `C((G_θ v, …, G_θⁿ v), targets)` with `n` taken from the targets.
pub fn loss_recurrent<'t, F>(step: F, input: &Var<'t>, targets: &Tensor) -> Result<Var<'t>>
where
    F: Fn(&Var<'t>) -> Result<Var<'t>>,
{
    if targets.ndim() < 2 || targets.shape()[1] == 0 {
        return Err(Error::Contract(format!("targets {:?} have no horizon axis", targets.shape())));
    }
    let mut steps = Vec::with_capacity(targets.shape()[1]);
    let mut cur = *input;
    for _ in 0..targets.shape()[1] {
        cur = step(&cur)?;
        steps.push(cur);
    }
    let pred = Var::stack(&steps)?;
    pred.relative_l2(targets)
}

/// Training loss of a model: recurrent for the baseline FNO, multi-step
/// otherwise.
pub fn model_loss<'t>(
    model: &Model,
    params: &crate::model::Bound<'t>,
    input: &Var<'t>,
    targets: &Tensor,
) -> Result<Var<'t>> {
    if model.spec.variant.is_single_step() {
        loss_recurrent(|v| model.single_step(params, v), input, targets)
    } else {
        loss_multistep(|v| model.forward_multi(params, v), input, targets)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        let zeros: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self { m: zeros.clone(), v: zeros, step: 0 }
    }
}

/// One AdamW update with decoupled weight decay.
pub fn adam_step(
    params: &mut ParamSet,
    grads: &[Tensor],
    state: &mut AdamState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Contract("optimizer state does not match the parameters".into()));
    }
    for (name, g) in params.names().iter().zip(grads) {
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient { name: name.clone() });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (k, p) in params.tensors_mut().iter_mut().enumerate() {
        if p.shape() != grads[k].shape() {
            return Err(Error::Shape(format!("gradient {:?} for parameter {:?}", grads[k].shape(), p.shape())));
        }
        let g = grads[k].data();
        let m = state.m[k].data_mut();
        for (mi, gi) in m.iter_mut().zip(g) {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
        }
        let v = state.v[k].data_mut();
        for (vi, gi) in v.iter_mut().zip(g) {
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
        }
        let (m, v) = (state.m[k].data(), state.v[k].data());
        for (i, w) in p.data_mut().iter_mut().enumerate() {
            *w -= lr * cfg.weight_decay * *w;
            *w -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.eps);
        }
    }
    Ok(())
}

/// Rescales to global L2 norm `max_norm` when it is exceeded; returns the
/// norm before clipping.
pub fn clip_gradients(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.data().iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.data_mut() {
                *v *= s;
            }
        }
    }
    norm
}

pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.lr * cfg.sched_factor.powi((epoch / cfg.sched_step) as i32)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub wall_seconds: f64,
    pub checkpoint: Option<PathBuf>,
}

impl TrainReport {
    pub fn write_csv_to(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "epoch,train_loss,val_loss,lr")?;
        for r in &self.epochs {
            writeln!(w, "{},{:?},{:?},{:?}", r.epoch, r.train_loss, r.val_loss, r.lr)?;
        }
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv_to(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

/// Loss and parameter gradients for one batch.
pub fn loss_and_grads(model: &Model, input: &Tensor, targets: &Tensor) -> Result<(f64, Vec<Tensor>)> {
    let tape = Tape::new();
    let params = model.params.bind(&tape, true);
    let loss = model_loss(model, &params, &tape.constant(input.clone()), targets)?;
    let value = loss.value().item();
    if !value.is_finite() {
        return Ok((value, Vec::new()));
    }
    let mut grads = tape.backward(&loss)?;
    let out = params
        .vars()
        .iter()
        .zip(model.params.tensors())
        .map(|(v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    Ok((value, out))
}

/// Mean loss over `pairs`, evaluated in batches without gradients.
pub fn evaluate(model: &Model, data: &Dataset, pairs: &[PairIndex], horizon: usize, batch_size: usize) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Contract("no pairs to evaluate".into()));
    }
    let mut total = 0.0;
    for chunk in pairs.chunks(batch_size) {
        let (input, targets) = data.batch(chunk, horizon)?;
        let tape = Tape::new();
        let params = model.params.bind(&tape, false);
        let loss = match model_loss(model, &params, &tape.constant(input), &targets) {
            Err(Error::ForwardDivergence { .. }) => f64::INFINITY,
            other => other?.value().item(),
        };
        total += loss * chunk.len() as f64;
    }
    Ok(total / pairs.len() as f64)
}

/// Trains `model` in place; on return it holds the best-validation
/// parameters, which are also written to `checkpoint` when given.
pub fn train(model: &mut Model, data: &Dataset, cfg: &TrainConfig, checkpoint: Option<&Path>) -> Result<TrainReport> {
    cfg.validate()?;
    let n = cfg.horizon;
    if !model.spec.variant.is_single_step() && model.spec.horizon != n {
        return Err(Error::Contract(format!("model horizon {} differs from training horizon {n}", model.spec.horizon)));
    }
    let started = Instant::now();
    let (train_seqs, val_seqs) = split_indices(data.header.sequences, cfg.val_fraction)?;
    let mut train_pairs = data.pairs(n, &train_seqs)?;
    let val_pairs = data.pairs(n, &val_seqs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamState::new(&model.params);
    let mut best = (usize::MAX, f64::INFINITY, model.params.clone());
    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = lr_at(epoch, cfg);
        train_pairs.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in train_pairs.chunks(cfg.batch_size).enumerate() {
            let (input, targets) = data.batch(chunk, n)?;
            let (loss, mut grads) = match loss_and_grads(model, &input, &targets) {
                Err(Error::ForwardDivergence { .. }) => (f64::NAN, Vec::new()),
                other => other?,
            };
            if !loss.is_finite() {
                return Err(Error::TrainingDivergence { epoch, batch: b });
            }
            if let Some(c) = cfg.clip {
                clip_gradients(&mut grads, c);
            }
            adam_step(&mut model.params, &grads, &mut state, lr, cfg)?;
            total += loss * chunk.len() as f64;
        }
        let train_loss = total / train_pairs.len() as f64;
        let val_loss = evaluate(model, data, &val_pairs, n, cfg.batch_size)?;
        if val_loss < best.1 {
            best = (epoch, val_loss, model.params.clone());
        }
        records.push(EpochRecord { epoch, train_loss, val_loss, lr });
    }
    if best.0 == usize::MAX {
        return Err(Error::TrainingDivergence { epoch: cfg.epochs.saturating_sub(1), batch: 0 });
    }
    model.params = best.2;
    if let Some(path) = checkpoint {
        model.save(path)?;
    }
    Ok(TrainReport {
        epochs: records,
        best_epoch: best.0,
        best_val_loss: best.1,
        wall_seconds: started.elapsed().as_secs_f64(),
        checkpoint: checkpoint.map(Path::to_path_buf),
    })
}
