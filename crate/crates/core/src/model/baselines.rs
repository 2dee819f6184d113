use rand_chacha::ChaCha8Rng;

use super::{horizon_output, series_input, Forecaster, ModelConfig};
use crate::autograd::{Module, Param, Tape, Var};
use crate::error::Result;
use crate::nn::{lstm_forward, tcn_forward, Linear, LstmParams, TcnParams};
use crate::tensor::{Scalar, Tensor};

/// Predicts zeros for every horizon step. Has no parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ZeroModel {
    pub config: ModelConfig,
}

impl ZeroModel {
    pub fn new(cfg: &ModelConfig) -> Self {
        ZeroModel {
            config: cfg.clone(),
        }
    }
}

impl<F: Scalar> Module<F> for ZeroModel {
    fn params(&self) -> Vec<&Param<F>> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        Vec::new()
    }
}

impl<F: Scalar> Forecaster<F> for ZeroModel {
    fn forward(&self, tape: &mut Tape<F>, x: Var) -> Result<Var> {
        let (_, batch, unbatched) = series_input(tape, x, self.config.input_len)?;
        let y = tape.constant(Tensor::zeros(&[batch, self.config.horizon]));
        horizon_output(tape, y, unbatched)
    }
}

/// LSTM over the raw window; the final hidden state goes through a
/// two-layer MLP.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmMlp<F> {
    pub config: ModelConfig,
    pub lstm: LstmParams<F>,
    pub hidden: Linear<F>,
    pub out: Linear<F>,
}

impl<F: Scalar> LstmMlp<F> {
    pub fn new(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        Ok(LstmMlp {
            config: cfg.clone(),
            lstm: LstmParams::new("lstm", 1, cfg.width, rng),
            hidden: Linear::new("mlp.hidden", cfg.width, cfg.head_hidden, true, rng),
            out: Linear::new("mlp.out", cfg.head_hidden, cfg.horizon, true, rng),
        })
    }
}

impl<F: Scalar> Module<F> for LstmMlp<F> {
    fn params(&self) -> Vec<&Param<F>> {
        let mut v = self.lstm.params();
        v.extend(self.hidden.params());
        v.extend(self.out.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        let mut v = self.lstm.params_mut();
        v.extend(self.hidden.params_mut());
        v.extend(self.out.params_mut());
        v
    }
}

impl<F: Scalar> Forecaster<F> for LstmMlp<F> {
    fn forward(&self, tape: &mut Tape<F>, x: Var) -> Result<Var> {
        let l = self.config.input_len;
        let (x, _, unbatched) = series_input(tape, x, l)?;
        let hs = lstm_forward(tape, x, &self.lstm, None, None)?;
        let last = tape.slice(hs, 1, l - 1, 1)?;
        let s = tape.shape(last).to_vec();
        let last = tape.reshape(last, &[s[0], s[2]])?;
        let h = self.hidden.forward(tape, last)?;
        let h = tape.relu(h);
        let y = self.out.forward(tape, h)?;
        horizon_output(tape, y, unbatched)
    }
}

/// TCN trunk over the raw window with an affine head on the last time
/// step's features.
#[derive(Clone, Debug, PartialEq)]
pub struct TcnHead<F> {
    pub config: ModelConfig,
    pub tcn: TcnParams<F>,
    pub head: Linear<F>,
}

impl<F: Scalar> TcnHead<F> {
    pub fn new(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        Ok(TcnHead {
            config: cfg.clone(),
            tcn: TcnParams::new("tcn", 1, cfg.width, cfg.kernel, &cfg.dilations, rng)?,
            head: Linear::new("head", cfg.width, cfg.horizon, true, rng),
        })
    }
}

impl<F: Scalar> Module<F> for TcnHead<F> {
    fn params(&self) -> Vec<&Param<F>> {
        let mut v = self.tcn.params();
        v.extend(self.head.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        let mut v = self.tcn.params_mut();
        v.extend(self.head.params_mut());
        v
    }
}

impl<F: Scalar> Forecaster<F> for TcnHead<F> {
    fn forward(&self, tape: &mut Tape<F>, x: Var) -> Result<Var> {
        let l = self.config.input_len;
        let (x, _, unbatched) = series_input(tape, x, l)?;
        let feats = tcn_forward(tape, x, &self.tcn, self.config.dropout)?;
        let last = tape.slice(feats, 1, l - 1, 1)?;
        let s = tape.shape(last).to_vec();
        let last = tape.reshape(last, &[s[0], s[2]])?;
        let y = self.head.forward(tape, last)?;
        horizon_output(tape, y, unbatched)
    }
}
