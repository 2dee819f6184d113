//! Sequence-model building blocks over the autograd tape.
//!
//! Every layer is a plain parameter struct plus a forward function that binds
//! the parameters onto a [`Tape`]. Layers accept `[len, width]` or
//! `[batch, len, width]` inputs.

mod attention;
mod glu;
mod lstm;
mod positional;
mod tcn;
mod transformer;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Module, Param, Tape, Var};
use crate::error::Result;
use crate::tensor::{Scalar, Tensor};

pub use attention::{multi_head_attention, multi_head_attention_with_weights, AttentionParams};
pub use glu::{glu, GluParams};
pub use lstm::{lstm_forward, LstmParams};
pub use positional::positional_encoding;
pub use tcn::{receptive_field, tcn_forward, TcnBlock, TcnParams};
pub use transformer::{transformer_block, FeedForward, TransformerBlockParams};

/// Layer-norm epsilon used throughout the models.
pub const LN_EPS: f64 = 1e-5;

/// Glorot-uniform draw in `±√(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<F: Scalar>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut ChaCha8Rng,
) -> Tensor<F> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| F::of(rng.random_range(-limit..limit)))
}

/// Affine map `x·W + b` over the last axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<F> {
    pub weight: Param<F>,
    pub bias: Option<Param<F>>,
}

impl<F: Scalar> Linear<F> {
    pub fn new(
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Linear {
            weight: Param::new(
                format!("{name}.weight"),
                glorot_uniform(&[fan_in, fan_out], fan_in, fan_out, rng),
            ),
            bias: bias.then(|| Param::new(format!("{name}.bias"), Tensor::zeros(&[fan_out]))),
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn out_features(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn forward(&self, tape: &mut Tape<F>, x: Var) -> Result<Var> {
        let w = tape.param(&self.weight);
        let y = tape.matmul(x, w)?;
        match &self.bias {
            Some(b) => {
                let b = tape.param(b);
                tape.add(y, b)
            }
            None => Ok(y),
        }
    }
}

impl<F: Scalar> Module<F> for Linear<F> {
    fn params(&self) -> Vec<&Param<F>> {
        std::iter::once(&self.weight)
            .chain(self.bias.as_ref())
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        std::iter::once(&mut self.weight)
            .chain(self.bias.as_mut())
            .collect()
    }
}

/// Gain and bias of a layer normalization, initialized to ones and zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerNormParams<F> {
    pub gain: Param<F>,
    pub bias: Param<F>,
}

impl<F: Scalar> LayerNormParams<F> {
    pub fn new(name: &str, width: usize) -> Self {
        LayerNormParams {
            gain: Param::new(format!("{name}.gain"), Tensor::ones(&[width])),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[width])),
        }
    }

    pub fn forward(&self, tape: &mut Tape<F>, x: Var) -> Result<Var> {
        let g = tape.param(&self.gain);
        let b = tape.param(&self.bias);
        tape.layer_norm(x, g, b, LN_EPS)
    }
}

impl<F: Scalar> Module<F> for LayerNormParams<F> {
    fn params(&self) -> Vec<&Param<F>> {
        vec![&self.gain, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        vec![&mut self.gain, &mut self.bias]
    }
}

/// Lift `[len, width]` to `[1, len, width]`; returns whether it did.
pub(crate) fn ensure_batched<F: Scalar>(tape: &mut Tape<F>, x: Var) -> Result<(Var, bool)> {
    let shape = tape.shape(x).to_vec();
    if shape.len() == 2 {
        Ok((tape.reshape(x, &[1, shape[0], shape[1]])?, true))
    } else {
        Ok((x, false))
    }
}

/// Undo [`ensure_batched`].
pub(crate) fn restore_unbatched<F: Scalar>(
    tape: &mut Tape<F>,
    x: Var,
    lifted: bool,
) -> Result<Var> {
    if lifted {
        let s = tape.shape(x).to_vec();
        tape.reshape(x, &s[1..])
    } else {
        Ok(x)
    }
}
