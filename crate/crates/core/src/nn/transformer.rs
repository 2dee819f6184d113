use rand_chacha::ChaCha8Rng;

use super::{multi_head_attention, AttentionParams, LayerNormParams, Linear};
use crate::autograd::{Module, Param, Tape, Var};
use crate::error::Result;
use crate::tensor::Scalar;

/// Position-wise `FF(ReLU(FF(x)))` with inner width `4 × width`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedForward<F> {
    pub inner: Linear<F>,
    pub outer: Linear<F>,
}

impl<F: Scalar> FeedForward<F> {
    pub fn new(name: &str, width: usize, rng: &mut ChaCha8Rng) -> Self {
        FeedForward {
            inner: Linear::new(&format!("{name}.inner"), width, 4 * width, true, rng),
            outer: Linear::new(&format!("{name}.outer"), 4 * width, width, true, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape<F>, x: Var, dropout: f64) -> Result<Var> {
        let h = self.inner.forward(tape, x)?;
        let h = tape.relu(h);
        let h = tape.dropout(h, dropout)?;
        self.outer.forward(tape, h)
    }
}

impl<F: Scalar> Module<F> for FeedForward<F> {
    fn params(&self) -> Vec<&Param<F>> {
        let mut v = self.inner.params();
        v.extend(self.outer.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        let mut v = self.inner.params_mut();
        v.extend(self.outer.params_mut());
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransformerBlockParams<F> {
    pub attention: AttentionParams<F>,
    pub ffn: FeedForward<F>,
    pub norm_attention: LayerNormParams<F>,
    pub norm_ffn: LayerNormParams<F>,
}

impl<F: Scalar> TransformerBlockParams<F> {
    pub fn new(name: &str, width: usize, heads: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(TransformerBlockParams {
            attention: AttentionParams::new(&format!("{name}.attention"), width, heads, rng)?,
            ffn: FeedForward::new(&format!("{name}.ffn"), width, rng),
            norm_attention: LayerNormParams::new(&format!("{name}.norm_attention"), width),
            norm_ffn: LayerNormParams::new(&format!("{name}.norm_ffn"), width),
        })
    }
}

impl<F: Scalar> Module<F> for TransformerBlockParams<F> {
    fn params(&self) -> Vec<&Param<F>> {
        let mut v = self.attention.params();
        v.extend(self.ffn.params());
        v.extend(self.norm_attention.params());
        v.extend(self.norm_ffn.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        let mut v = self.attention.params_mut();
        v.extend(self.ffn.params_mut());
        v.extend(self.norm_attention.params_mut());
        v.extend(self.norm_ffn.params_mut());
        v
    }
}

/// Post-norm transformer block:
///
/// ```text
/// A = LN(Q + Att(Q, KV, KV))
/// O = LN(A + FFN(A))
/// ```
///
/// Passing the same tensor as `q_src` and `kv_src` gives self-attention;
/// distinct tensors give co-attention. Dropout is applied to the attention
/// output and inside the FFN on training tapes.
pub fn transformer_block<F: Scalar>(
    tape: &mut Tape<F>,
    q_src: Var,
    kv_src: Var,
    p: &TransformerBlockParams<F>,
    dropout: f64,
) -> Result<Var> {
    let att = multi_head_attention(tape, q_src, kv_src, kv_src, &p.attention)?;
    let att = tape.dropout(att, dropout)?;
    let a = tape.add(q_src, att)?;
    let a = p.norm_attention.forward(tape, a)?;
    let ff = p.ffn.forward(tape, a, dropout)?;
    let o = tape.add(a, ff)?;
    p.norm_ffn.forward(tape, o)
}
