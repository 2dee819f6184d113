use rand_chacha::ChaCha8Rng;

use super::{horizon_output, series_input, Forecaster, ModelConfig};
use crate::autograd::{Module, Param, Tape, Var};
use crate::error::Result;
use crate::nn::{
    glu, lstm_forward, positional_encoding, tcn_forward, transformer_block, GluParams,
    LayerNormParams, Linear, LstmParams, TcnParams, TransformerBlockParams,
};
use crate::tensor::Scalar;

/// Parallel LSTM and TCN branches fused by co-attention, self-attention and
/// GLU gates, followed by a two-layer MLP over the flattened sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Resoformer<F> {
    pub config: ModelConfig,
    pub embed: Linear<F>,
    pub lstm: LstmParams<F>,
    pub tcn: TcnParams<F>,
    pub proj_rnn: Linear<F>,
    pub proj_tcn: Linear<F>,
    pub co_attention: TransformerBlockParams<F>,
    pub self_attention: TransformerBlockParams<F>,
    pub glu_u: GluParams<F>,
    pub glu_w: GluParams<F>,
    pub norm_u: LayerNormParams<F>,
    pub norm_v: LayerNormParams<F>,
    pub norm_w: LayerNormParams<F>,
    pub norm_o: LayerNormParams<F>,
    pub head_hidden: Linear<F>,
    pub head_out: Linear<F>,
}

impl<F: Scalar> Resoformer<F> {
    pub fn new(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let w = cfg.width;
        Ok(Resoformer {
            config: cfg.clone(),
            embed: Linear::new("embed", 1, w, true, rng),
            lstm: LstmParams::new("lstm", w, w, rng),
            tcn: TcnParams::new("tcn", w, w, cfg.kernel, &cfg.dilations, rng)?,
            proj_rnn: Linear::new("proj_rnn", w, w, true, rng),
            proj_tcn: Linear::new("proj_tcn", w, w, true, rng),
            co_attention: TransformerBlockParams::new("co_attention", w, cfg.heads, rng)?,
            self_attention: TransformerBlockParams::new("self_attention", w, cfg.heads, rng)?,
            glu_u: GluParams::new("glu_u", w, rng),
            glu_w: GluParams::new("glu_w", w, rng),
            norm_u: LayerNormParams::new("norm_u", w),
            norm_v: LayerNormParams::new("norm_v", w),
            norm_w: LayerNormParams::new("norm_w", w),
            norm_o: LayerNormParams::new("norm_o", w),
            head_hidden: Linear::new("head.hidden", cfg.input_len * w, cfg.head_hidden, true, rng),
            head_out: Linear::new("head.out", cfg.head_hidden, cfg.horizon, true, rng),
        })
    }

    /// Forward pass with the branch skip terms in the U and W fusions
    /// switchable; `false` drops `+ X_rnn + X_tcn` from both.
    pub fn forward_with_skips(
        &self,
        tape: &mut Tape<F>,
        x: Var,
        branch_skips: bool,
    ) -> Result<Var> {
        let cfg = &self.config;
        let (l, w) = (cfg.input_len, cfg.width);
        let (x, batch, unbatched) = series_input(tape, x, l)?;
        let dropout = cfg.dropout;

        let e = self.embed.forward(tape, x)?;
        let pe = tape.constant(positional_encoding(l, w)?);

        let r = lstm_forward(tape, e, &self.lstm, None, None)?;
        let r = self.proj_rnn.forward(tape, r)?;
        let x_rnn = tape.add(r, pe)?;

        let c = tcn_forward(tape, e, &self.tcn, dropout)?;
        let c = self.proj_tcn.forward(tape, c)?;
        let x_tcn = tape.add(c, pe)?;

        let branches = tape.add(x_rnn, x_tcn)?;

        let u = transformer_block(tape, x_rnn, x_tcn, &self.co_attention, dropout)?;
        let u = if branch_skips {
            tape.add(u, branches)?
        } else {
            u
        };
        let u = self.norm_u.forward(tape, u)?;

        let g = glu(tape, u, &self.glu_u)?;
        let v = tape.add(u, g)?;
        let v = self.norm_v.forward(tape, v)?;

        let s = transformer_block(tape, v, v, &self.self_attention, dropout)?;
        let s = tape.add(s, v)?;
        let s = if branch_skips {
            tape.add(s, branches)?
        } else {
            s
        };
        let w_fused = self.norm_w.forward(tape, s)?;

        let g = glu(tape, w_fused, &self.glu_w)?;
        let o = tape.add(w_fused, g)?;
        let o = self.norm_o.forward(tape, o)?;

        let flat = tape.reshape(o, &[batch, l * w])?;
        let h = self.head_hidden.forward(tape, flat)?;
        let h = tape.relu(h);
        let y = self.head_out.forward(tape, h)?;
        horizon_output(tape, y, unbatched)
    }
}

impl<F: Scalar> Module<F> for Resoformer<F> {
    fn params(&self) -> Vec<&Param<F>> {
        let mut v = self.embed.params();
        v.extend(self.lstm.params());
        v.extend(self.tcn.params());
        v.extend(self.proj_rnn.params());
        v.extend(self.proj_tcn.params());
        v.extend(self.co_attention.params());
        v.extend(self.self_attention.params());
        v.extend(self.glu_u.params());
        v.extend(self.glu_w.params());
        for n in [&self.norm_u, &self.norm_v, &self.norm_w, &self.norm_o] {
            v.extend(n.params());
        }
        v.extend(self.head_hidden.params());
        v.extend(self.head_out.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        let mut v = self.embed.params_mut();
        v.extend(self.lstm.params_mut());
        v.extend(self.tcn.params_mut());
        v.extend(self.proj_rnn.params_mut());
        v.extend(self.proj_tcn.params_mut());
        v.extend(self.co_attention.params_mut());
        v.extend(self.self_attention.params_mut());
        v.extend(self.glu_u.params_mut());
        v.extend(self.glu_w.params_mut());
        v.extend(self.norm_u.params_mut());
        v.extend(self.norm_v.params_mut());
        v.extend(self.norm_w.params_mut());
        v.extend(self.norm_o.params_mut());
        v.extend(self.head_hidden.params_mut());
        v.extend(self.head_out.params_mut());
        v
    }
}

impl<F: Scalar> Forecaster<F> for Resoformer<F> {
    fn forward(&self, tape: &mut Tape<F>, x: Var) -> Result<Var> {
        self.forward_with_skips(tape, x, true)
    }
}
