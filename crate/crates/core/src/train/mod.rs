//! Training loop, optimizer, losses, metrics and the robustness sweeps.

mod adam;
mod metrics;
mod sweep;

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use metrics::{mae_loss, metrics, metrics_at, Horizon, MetricsRecord, MAPE_MIN_ABS_TARGET};
pub use sweep::{
    init_ablation, perturb_sweep, AblationRow, ArmSummary, PerturbRow, RunResult, SweepBase, SweepTable,
};

use crate::data::{Norm, Windows};
use crate::error::{Error, Result};
use crate::models::{Model, ModelConfig};
use crate::params::{Bound, ParamStore};
use crate::rng::{stream_rng, Stream};
use crate::tensor::{Tape, Tensor, Var};

/// Minimum val-MAE improvement that resets the patience counter.
pub const EARLY_STOP_MIN_DELTA: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 100, batch_size: 32, adam: AdamConfig::default(), early_stop_patience: 10, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Invalid("epochs and batch_size must be >= 1".into()));
        }
        let a = &self.adam;
        if !(a.lr >= 0.0 && a.lr.is_finite()) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || a.eps <= 0.0 {
            return Err(Error::Invalid(format!("invalid optimizer settings {a:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mae: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// One row per trained epoch, numbered from 0.
    pub curve: Vec<EpochRecord>,
    /// Train loss and val MAE of the untrained model.
    pub initial: EpochRecord,
    pub best_epoch: usize,
    pub best_val_mae: f64,
    pub best_params: ParamStore<f64>,
    pub test: MetricsRecord,
    pub test_per_horizon: Vec<MetricsRecord>,
    pub model: Model,
}

const EVAL_BATCH: usize = 64;

/// Maps normalized-scale outputs back to data units.
fn denormalize(tape: &mut Tape<f64>, pred: Var, norm: &Norm) -> Result<Var> {
    let shape = tape.value(pred).shape().to_vec();
    let d = *shape.last().expect("prediction rank >= 1");
    if norm.mean.len() != d {
        return Err(Error::Invalid(format!("{} normalized channels but {d} output channels", norm.mean.len())));
    }
    if d == 1 {
        let s = tape.scale(pred, norm.std[0])?;
        return tape.add_scalar(s, norm.mean[0]);
    }
    let rows = shape.iter().product::<usize>() / d;
    let flat = tape.reshape(pred, &[rows, d])?;
    let std = tape.constant(Tensor::new(&[1, d], norm.std.clone())?);
    let mean = tape.constant(Tensor::new(&[1, d], norm.mean.clone())?);
    let std = tape.broadcast_rows(std, rows)?;
    let mean = tape.broadcast_rows(mean, rows)?;
    let scaled = tape.mul(flat, std)?;
    let shifted = tape.add(scaled, mean)?;
    tape.reshape(shifted, &shape)
}

fn forward_raw(tape: &mut Tape<f64>, model: &Model, p: &Bound, inputs: &Tensor, norm: &Norm) -> Result<Var> {
    let out = model.forward(tape, p, inputs)?;
    denormalize(tape, out, norm)
}

/// De-normalized predictions and targets over a window range.
pub fn predict(model: &Model, store: &ParamStore<f64>, data: &Windows, windows: &[usize]) -> Result<(Tensor, Tensor)> {
    let (mut preds, mut targets) = (Vec::new(), Vec::new());
    let mut shape = None;
    for chunk in windows.chunks(EVAL_BATCH) {
        let batch = data.batch(chunk)?;
        let mut tape = Tape::inference();
        let p = store.bind(&mut tape);
        let out = forward_raw(&mut tape, model, &p, &batch.inputs, &data.norm)?;
        let v = tape.value(out);
        shape.get_or_insert_with(|| v.shape()[1..].to_vec());
        preds.extend_from_slice(v.data());
        targets.extend_from_slice(batch.targets.data());
    }
    let mut full = vec![windows.len()];
    full.extend(shape.unwrap_or_default());
    Ok((Tensor::new(&full, preds)?, Tensor::new(&full, targets)?))
}

/// Sample-weighted mean MAE over the given windows.
pub fn evaluate_mae(model: &Model, store: &ParamStore<f64>, data: &Windows, windows: &[usize]) -> Result<f64> {
    let (p, t) = predict(model, store, data, windows)?;
    Ok(metrics(&p, &t)?.mae)
}

/// Trains `model_cfg` on the train windows with per-epoch shuffled
/// mini-batches, keeps the parameters of the best validation epoch and
/// evaluates them on the test windows.
pub fn train(model_cfg: &ModelConfig, data: &Windows, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    model_cfg.validate()?;
    let (n, t_in, t_out, d_in, _) = model_cfg.dims();
    let (dn, dd) = data.dims();
    if (n, d_in, t_in, t_out) != (dn, dd, data.t_in, data.t_out) {
        return Err(Error::Invalid(format!(
            "model expects n={n}, d_in={d_in}, {t_in}->{t_out} steps; data has n={dn}, d={dd}, {}->{}",
            data.t_in, data.t_out
        )));
    }
    let (model, mut store) = model_cfg.build::<f64>(cfg.seed)?;
    let mut shuffle = stream_rng(cfg.seed, Stream::Shuffle);
    let mut state = AdamState::new(&store);
    let train_idx: Vec<usize> = data.split.train().collect();
    let val_idx: Vec<usize> = data.split.val().collect();
    let test_idx: Vec<usize> = data.split.test().collect();

    let initial = EpochRecord {
        epoch: 0,
        train_loss: evaluate_mae(&model, &store, data, &train_idx)?,
        val_mae: evaluate_mae(&model, &store, data, &val_idx)?,
    };
    log::info!("initial: train_loss {:.6} val_mae {:.6}", initial.train_loss, initial.val_mae);

    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, ParamStore<f64>)> = None;
    let mut since_improved = 0;
    let mut order = train_idx.clone();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        let mut loss_sum = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = data.batch(chunk)?;
            let mut tape = Tape::new();
            let p = store.bind(&mut tape);
            let pred = forward_raw(&mut tape, &model, &p, &batch.inputs, &data.norm)?;
            let target = tape.constant(batch.targets);
            let loss = mae_loss(&mut tape, pred, target)?;
            let lv = tape.value(loss).item()?;
            if !lv.is_finite() {
                return Err(Error::Diverged { epoch, batch: bi, loss: lv });
            }
            loss_sum += lv * chunk.len() as f64;
            let mut grads = tape.backward(loss)?;
            let g = store.collect_grads(&p, &mut grads);
            drop(tape);
            adam_step(&mut store, &g, &mut state, &cfg.adam);
        }
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / train_idx.len() as f64,
            val_mae: evaluate_mae(&model, &store, data, &val_idx)?,
        };
        if !rec.val_mae.is_finite() {
            return Err(Error::Diverged { epoch, batch: usize::MAX, loss: rec.val_mae });
        }
        log::info!("epoch {epoch}: train_loss {:.6} val_mae {:.6}", rec.train_loss, rec.val_mae);
        curve.push(rec);
        match &best {
            Some((_, b, _)) if rec.val_mae > b - EARLY_STOP_MIN_DELTA => {
                if rec.val_mae < *b {
                    // Small gains still move the checkpoint, not the patience clock.
                    best = Some((epoch, rec.val_mae, store.clone()));
                }
                since_improved += 1;
                if since_improved >= cfg.early_stop_patience.max(1) {
                    log::info!("early stop after epoch {epoch}");
                    break;
                }
            }
            _ => {
                best = Some((epoch, rec.val_mae, store.clone()));
                since_improved = 0;
            }
        }
    }
    let (best_epoch, best_val_mae, best_params) = best.expect("at least one epoch");
    let (p, t) = predict(&model, &best_params, data, &test_idx)?;
    let test = metrics(&p, &t)?;
    let test_per_horizon = (0..t_out).map(|s| metrics_at(&p, &t, s)).collect::<Result<_>>()?;
    Ok(TrainOutcome { curve, initial, best_epoch, best_val_mae, best_params, test, test_per_horizon, model })
}

pub fn write_curve_csv<W: Write>(w: W, curve: &[EpochRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["epoch", "train_loss", "val_mae"])?;
    for r in curve {
        wtr.write_record([r.epoch.to_string(), r.train_loss.to_string(), r.val_mae.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_curve(path: &Path, curve: &[EpochRecord]) -> Result<()> {
    write_curve_csv(std::io::BufWriter::new(std::fs::File::create(path)?), curve)
}
