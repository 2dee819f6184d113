//! Optimizer, metrics, the mini-batch training loop and evaluation.

mod metrics;
mod optim;

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Module, Tape, Var};
use crate::data::{window_offsets, NormStats, SeriesRecord};
use crate::error::{Error, Result};
use crate::model::{Forecaster, Model, ModelKind};
use crate::tensor::Tensor;

pub use metrics::{mae, mse, ErrorSums};
pub use optim::{cosine_anneal, Adam, AdamConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    Constant,
    Cosine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    #[serde(default)]
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_schedule: LrSchedule,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Window stride over each series.
    pub stride: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-4,
            adam: AdamConfig::default(),
            batch_size: 32,
            epochs: 30,
            lr_schedule: LrSchedule::Constant,
            clip_norm: Some(1.0),
            stride: 8,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning rate {} must be ≥ 0",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.stride == 0 {
            return Err(Error::config("batch_size and stride must be ≥ 1"));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::config(format!("clip_norm {c} must be positive")));
            }
        }
        self.adam.validate()
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Cosine => cosine_anneal(self.learning_rate, epoch, self.epochs),
        }
    }
}

/// Normalized series plus the `(series, offset)` index of every window.
#[derive(Clone, Debug)]
pub struct WindowSet {
    pub input_len: usize,
    pub horizon: usize,
    inputs: Vec<Vec<f32>>,
    targets: Vec<Vec<f32>>,
    index: Vec<(usize, usize)>,
}

impl WindowSet {
    pub fn new(
        series: &[SeriesRecord],
        stats: &NormStats,
        input_len: usize,
        horizon: usize,
        stride: usize,
    ) -> Result<Self> {
        let mut index = Vec::new();
        let mut inputs = Vec::with_capacity(series.len());
        let mut targets = Vec::with_capacity(series.len());
        for (si, s) in series.iter().enumerate() {
            index.extend(
                window_offsets(s.len(), input_len, horizon, stride)?
                    .into_iter()
                    .map(|o| (si, o)),
            );
            inputs.push(
                s.mg_rpm
                    .iter()
                    .map(|&v| stats.mg_rpm.normalize(v) as f32)
                    .collect(),
            );
            targets.push(
                s.ds_torque
                    .iter()
                    .map(|&v| stats.ds_torque.normalize(v) as f32)
                    .collect(),
            );
        }
        Ok(WindowSet {
            input_len,
            horizon,
            inputs,
            targets,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// `([batch, L], [batch, T])` for the given window numbers.
    pub fn batch(&self, ids: &[usize]) -> (Tensor<f32>, Tensor<f32>) {
        let (l, t) = (self.input_len, self.horizon);
        let mut x = Vec::with_capacity(ids.len() * l);
        let mut y = Vec::with_capacity(ids.len() * t);
        for &i in ids {
            let (s, o) = self.index[i];
            x.extend_from_slice(&self.inputs[s][o..o + l]);
            y.extend_from_slice(&self.targets[s][o + l..o + l + t]);
        }
        let b = ids.len();
        (
            Tensor::new(vec![b, l], x).unwrap(),
            Tensor::new(vec![b, t], y).unwrap(),
        )
    }
}

/// Mean absolute error of the forecast against `y`, as a tape scalar.
pub fn batch_loss<M: Forecaster<f32>>(
    model: &M,
    tape: &mut Tape<f32>,
    x: &Tensor<f32>,
    y: &Tensor<f32>,
) -> Result<Var> {
    let xv = tape.constant(x.clone());
    let pred = model.forward(tape, xv)?;
    let yv = tape.constant(y.clone());
    let diff = tape.sub(pred, yv)?;
    let abs = tape.abs(diff);
    tape.mean(abs, None)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean absolute error over every training window seen in the epoch.
    pub loss: f64,
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model<f32>,
    pub history: Vec<EpochRecord>,
    /// Set when training stopped early on a non-finite loss or gradient; the
    /// returned model is then the last one that completed an epoch cleanly.
    pub aborted: Option<String>,
}

impl TrainOutcome {
    pub fn mean_epoch_seconds(&self) -> f64 {
        if self.history.is_empty() {
            return 0.0;
        }
        self.history.iter().map(|e| e.seconds).sum::<f64>() / self.history.len() as f64
    }
}

/// Mini-batch MAE training with Adam. Shuffling and dropout are seeded from
/// `cfg.seed`, so identical inputs give identical histories.
pub fn train(
    mut model: Model<f32>,
    windows: &WindowSet,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mc = model.config();
    if (mc.input_len, mc.horizon) != (windows.input_len, windows.horizon) {
        return Err(Error::config(format!(
            "model expects L={} T={}, windows have L={} T={}",
            mc.input_len, mc.horizon, windows.input_len, windows.horizon
        )));
    }
    if windows.is_empty() {
        return Err(Error::config(
            "no training windows: series shorter than L + T",
        ));
    }

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_D80B_0u64);
    let mut adam = Adam::new(cfg.adam);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut last_good = model.clone();

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut shuffle_rng);
        let mut abs_sum = 0.0f64;
        for ids in order.chunks(cfg.batch_size) {
            let (x, y) = windows.batch(ids);
            let mut tape = Tape::training(dropout_rng);
            let loss = batch_loss(&model, &mut tape, &x, &y)?;
            let value = tape.value(loss).data()[0] as f64;
            if !value.is_finite() {
                let reason = format!("non-finite training loss in epoch {}", epoch + 1);
                return Ok(TrainOutcome {
                    model: last_good,
                    history,
                    aborted: Some(reason),
                });
            }
            abs_sum += value * ids.len() as f64;
            let mut grads = tape.backward(loss)?;
            dropout_rng = tape.into_rng().expect("training tape owns an rng");
            if model.num_params() > 0 {
                if let Some(max) = cfg.clip_norm {
                    grads.clip_global_norm(max);
                }
                if let Err(e) = adam.step(model.params_mut(), &grads, lr) {
                    return Ok(TrainOutcome {
                        model: last_good,
                        history,
                        aborted: Some(e.to_string()),
                    });
                }
            }
        }
        history.push(EpochRecord {
            epoch: epoch + 1,
            loss: abs_sum / windows.len() as f64,
            lr,
            seconds: started.elapsed().as_secs_f64(),
        });
        last_good = model.clone();
    }
    Ok(TrainOutcome {
        model,
        history,
        aborted: None,
    })
}

/// Eval-mode MAE and MSE over every window, in normalized target units.
pub fn evaluate(model: &Model<f32>, windows: &WindowSet, batch_size: usize) -> Result<ErrorSums> {
    let ids: Vec<usize> = (0..windows.len()).collect();
    let mut sums = ErrorSums::default();
    for chunk in ids.chunks(batch_size.max(1)) {
        let (x, y) = windows.batch(chunk);
        let pred = model.predict(&x)?;
        sums.add(y.data(), pred.data());
    }
    if sums.n == 0 {
        return Err(Error::config(
            "no evaluation windows: series shorter than L + T",
        ));
    }
    Ok(sums)
}

/// One benchmark cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub model: ModelKind,
    pub horizon: usize,
    pub mae: f64,
    pub mse: f64,
    pub epoch_seconds: f64,
}

pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut out = String::from("epoch,loss,lr,seconds\n");
    for e in history {
        out.push_str(&format!("{},{},{},{}\n", e.epoch, e.loss, e.lr, e.seconds));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_metrics(csv_path: &Path, json_path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut out = String::from("model,horizon,mae,mse,epoch_seconds\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.model, r.horizon, r.mae, r.mse, r.epoch_seconds
        ));
    }
    fs::write(csv_path, out).map_err(|e| Error::io(csv_path, e))?;
    let json = serde_json::to_string_pretty(rows)? + "\n";
    fs::write(json_path, json).map_err(|e| Error::io(json_path, e))
}
