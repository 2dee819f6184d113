//! Forecasting models: the fused recurrent/convolutional attention model and
//! the comparison baselines, all behind one window-in, horizon-out interface.

mod baselines;
pub mod checkpoint;
mod resoformer;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Module, Param, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub use baselines::{LstmMlp, TcnHead, ZeroModel};
pub use checkpoint::Checkpoint;
pub use resoformer::Resoformer;

/// Architecture hyper-parameters shared by every model kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input_len: usize,
    pub horizon: usize,
    pub width: usize,
    pub heads: usize,
    pub dropout: f64,
    pub dilations: Vec<usize>,
    pub kernel: usize,
    /// Hidden width of the two-layer MLP heads.
    pub head_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_len: 192,
            horizon: 96,
            width: 64,
            heads: 4,
            dropout: 0.2,
            dilations: vec![16, 32, 64, 128],
            kernel: 3,
            head_hidden: 128,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_len == 0 || self.horizon == 0 {
            return Err(Error::config("input length and horizon must be ≥ 1"));
        }
        if self.width == 0 || self.width % 2 != 0 {
            return Err(Error::config(format!(
                "model width {} must be even",
                self.width
            )));
        }
        if self.heads == 0 || self.width % self.heads != 0 {
            return Err(Error::config(format!(
                "model width {} is not divisible by {} heads",
                self.width, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.head_hidden == 0 {
            return Err(Error::config("head_hidden must be ≥ 1"));
        }
        // Kernel and dilation rules are enforced by the TCN constructor.
        Ok(())
    }
}

/// Which forecaster to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Zero,
    Lstm,
    Tcn,
    Resoformer,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Zero,
        ModelKind::Lstm,
        ModelKind::Tcn,
        ModelKind::Resoformer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Zero => "zero",
            ModelKind::Lstm => "lstm",
            ModelKind::Tcn => "tcn",
            ModelKind::Resoformer => "resoformer",
        }
    }

    /// Display label used in benchmark tables.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Zero => "Zero",
            ModelKind::Lstm => "LSTM",
            ModelKind::Tcn => "TCN",
            ModelKind::Resoformer => "Resoformer",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zero" => Ok(ModelKind::Zero),
            "lstm" | "lstm_mlp" => Ok(ModelKind::Lstm),
            "tcn" | "tcn_head" => Ok(ModelKind::Tcn),
            "resoformer" => Ok(ModelKind::Resoformer),
            other => Err(Error::config(format!(
                "unknown model '{other}' (expected zero, lstm, tcn or resoformer)"
            ))),
        }
    }
}

/// Window in, horizon out. `x` is `[len]` or `[batch, len]`; the result is
/// `[horizon]` or `[batch, horizon]` respectively.
pub trait Forecaster<F: Scalar>: Module<F> {
    fn forward(&self, tape: &mut Tape<F>, x: Var) -> Result<Var>;
}

/// Reshape a `[len]` / `[batch, len]` window to `[batch, len, 1]`; returns the
/// batch size and whether the input was unbatched.
pub(crate) fn series_input<F: Scalar>(
    tape: &mut Tape<F>,
    x: Var,
    len: usize,
) -> Result<(Var, usize, bool)> {
    let shape = tape.shape(x).to_vec();
    let (batch, unbatched) = match shape[..] {
        [l] if l == len => (1, true),
        [b, l] if l == len => (b, false),
        _ => {
            return Err(Error::dim(format!(
                "model expects a window of length {len} ([{len}] or [batch, {len}]), got {shape:?}"
            )))
        }
    };
    Ok((tape.reshape(x, &[batch, len, 1])?, batch, unbatched))
}

pub(crate) fn horizon_output<F: Scalar>(
    tape: &mut Tape<F>,
    y: Var,
    unbatched: bool,
) -> Result<Var> {
    if unbatched {
        let t = tape.shape(y)[1];
        tape.reshape(y, &[t])
    } else {
        Ok(y)
    }
}

/// Any of the four forecasters.
#[derive(Clone, Debug, PartialEq)]
pub enum Model<F> {
    Zero(ZeroModel),
    Lstm(LstmMlp<F>),
    Tcn(TcnHead<F>),
    Resoformer(Resoformer<F>),
}

impl<F: Scalar> Model<F> {
    /// Freshly initialized model; deterministic in `seed`.
    pub fn init(kind: ModelKind, cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(match kind {
            ModelKind::Zero => Model::Zero(ZeroModel::new(cfg)),
            ModelKind::Lstm => Model::Lstm(LstmMlp::new(cfg, &mut rng)?),
            ModelKind::Tcn => Model::Tcn(TcnHead::new(cfg, &mut rng)?),
            ModelKind::Resoformer => Model::Resoformer(Resoformer::new(cfg, &mut rng)?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Zero(_) => ModelKind::Zero,
            Model::Lstm(_) => ModelKind::Lstm,
            Model::Tcn(_) => ModelKind::Tcn,
            Model::Resoformer(_) => ModelKind::Resoformer,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        match self {
            Model::Zero(m) => &m.config,
            Model::Lstm(m) => &m.config,
            Model::Tcn(m) => &m.config,
            Model::Resoformer(m) => &m.config,
        }
    }

    /// Eval-mode forecast for a batch of windows, returned as `[batch, horizon]`.
    pub fn predict(&self, windows: &Tensor<F>) -> Result<Tensor<F>> {
        let mut tape = Tape::new();
        let x = tape.constant(windows.clone());
        let y = self.forward(&mut tape, x)?;
        Ok(tape.value(y).clone())
    }

    /// Overwrite parameters by name. Every parameter of the model must be
    /// supplied with a matching shape.
    pub fn load_params(&mut self, named: &[(String, Tensor<F>)]) -> Result<()> {
        let mut params = self.params_mut();
        if params.len() != named.len() {
            return Err(Error::format(
                "tensors",
                format!("model has {} parameters, got {}", params.len(), named.len()),
            ));
        }
        for p in params.iter_mut() {
            let (_, t) = named
                .iter()
                .find(|(n, _)| *n == p.name)
                .ok_or_else(|| Error::format(p.name.clone(), "missing from parameter set"))?;
            if t.shape() != p.value.shape() {
                return Err(Error::format(
                    p.name.clone(),
                    format!(
                        "shape {:?} does not match model shape {:?}",
                        t.shape(),
                        p.value.shape()
                    ),
                ));
            }
            p.value = t.clone();
        }
        Ok(())
    }
}

impl<F: Scalar> Module<F> for Model<F> {
    fn params(&self) -> Vec<&Param<F>> {
        match self {
            Model::Zero(m) => m.params(),
            Model::Lstm(m) => m.params(),
            Model::Tcn(m) => m.params(),
            Model::Resoformer(m) => m.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        match self {
            Model::Zero(m) => Module::<F>::params_mut(m),
            Model::Lstm(m) => m.params_mut(),
            Model::Tcn(m) => m.params_mut(),
            Model::Resoformer(m) => m.params_mut(),
        }
    }
}

impl<F: Scalar> Forecaster<F> for Model<F> {
    fn forward(&self, tape: &mut Tape<F>, x: Var) -> Result<Var> {
        match self {
            Model::Zero(m) => m.forward(tape, x),
            Model::Lstm(m) => m.forward(tape, x),
            Model::Tcn(m) => m.forward(tape, x),
            Model::Resoformer(m) => m.forward(tape, x),
        }
    }
}
