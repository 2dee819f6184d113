use rand_chacha::ChaCha8Rng;

use super::{ensure_batched, restore_unbatched, Linear};
use crate::autograd::{Module, Param, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Scalar;

/// Multi-head attention projections. The per-head query/key/value matrices
/// are stored side by side as `[width, heads·head_dim]` column blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams<F> {
    pub heads: usize,
    pub query: Linear<F>,
    pub key: Linear<F>,
    pub value: Linear<F>,
    pub output: Linear<F>,
}

impl<F: Scalar> AttentionParams<F> {
    pub fn new(name: &str, width: usize, heads: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if heads == 0 || width % heads != 0 {
            return Err(Error::config(format!(
                "width {width} is not divisible by {heads} heads"
            )));
        }
        Ok(AttentionParams {
            heads,
            query: Linear::new(&format!("{name}.query"), width, width, false, rng),
            key: Linear::new(&format!("{name}.key"), width, width, false, rng),
            value: Linear::new(&format!("{name}.value"), width, width, false, rng),
            output: Linear::new(&format!("{name}.output"), width, width, false, rng),
        })
    }

    pub fn width(&self) -> usize {
        self.query.in_features()
    }

    pub fn head_dim(&self) -> usize {
        self.width() / self.heads
    }
}

impl<F: Scalar> Module<F> for AttentionParams<F> {
    fn params(&self) -> Vec<&Param<F>> {
        [&self.query, &self.key, &self.value, &self.output]
            .into_iter()
            .flat_map(|l| l.params())
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        [
            &mut self.query,
            &mut self.key,
            &mut self.value,
            &mut self.output,
        ]
        .into_iter()
        .flat_map(|l| l.params_mut())
        .collect()
    }
}

/// `[batch, len, heads·d]` → `[batch, heads, len, d]`
fn split_heads<F: Scalar>(tape: &mut Tape<F>, x: Var, heads: usize) -> Result<Var> {
    let s = tape.shape(x).to_vec();
    let x = tape.reshape(x, &[s[0], s[1], heads, s[2] / heads])?;
    tape.permute(x, &[0, 2, 1, 3])
}

/// Scaled dot-product attention over `heads` heads, without masking.
///
/// Returns the attended output `[.., len_q, width]` and the attention
/// weights `[batch, heads, len_q, len_kv]`, each weight row summing to one.
pub fn multi_head_attention_with_weights<F: Scalar>(
    tape: &mut Tape<F>,
    q_in: Var,
    k_in: Var,
    v_in: Var,
    p: &AttentionParams<F>,
) -> Result<(Var, Var)> {
    let width = p.width();
    for v in [q_in, k_in, v_in] {
        if tape.shape(v).last() != Some(&width) {
            return Err(Error::dim(format!(
                "attention expects width {width}, got input shape {:?}",
                tape.shape(v)
            )));
        }
    }
    let (q_in, lifted) = ensure_batched(tape, q_in)?;
    let (k_in, _) = ensure_batched(tape, k_in)?;
    let (v_in, _) = ensure_batched(tape, v_in)?;
    let (batch, len_q) = (tape.shape(q_in)[0], tape.shape(q_in)[1]);
    if tape.shape(k_in)[..2] != tape.shape(v_in)[..2] || tape.shape(k_in)[0] != batch {
        return Err(Error::dim(format!(
            "attention key {:?} / value {:?} / query {:?} shapes disagree",
            tape.shape(k_in),
            tape.shape(v_in),
            tape.shape(q_in)
        )));
    }

    let q = p.query.forward(tape, q_in)?;
    let q = split_heads(tape, q, p.heads)?;
    let k = p.key.forward(tape, k_in)?;
    let k = split_heads(tape, k, p.heads)?;
    let v = p.value.forward(tape, v_in)?;
    let v = split_heads(tape, v, p.heads)?;

    let kt = tape.transpose(k)?;
    let scores = tape.matmul(q, kt)?;
    let scores = tape.scale(scores, F::of(1.0 / (p.head_dim() as f64).sqrt()));
    let weights = tape.softmax(scores, 3)?;
    let mixed = tape.matmul(weights, v)?;
    let mixed = tape.permute(mixed, &[0, 2, 1, 3])?;
    let mixed = tape.reshape(mixed, &[batch, len_q, width])?;
    let out = p.output.forward(tape, mixed)?;
    Ok((restore_unbatched(tape, out, lifted)?, weights))
}

pub fn multi_head_attention<F: Scalar>(
    tape: &mut Tape<F>,
    q_in: Var,
    k_in: Var,
    v_in: Var,
    p: &AttentionParams<F>,
) -> Result<Var> {
    multi_head_attention_with_weights(tape, q_in, k_in, v_in, p).map(|(out, _)| out)
}
