use rand_chacha::ChaCha8Rng;

use super::{ensure_batched, glorot_uniform, restore_unbatched};
use crate::autograd::{Module, Param, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Four-gate LSTM weights. Gate blocks along the last axis are ordered
/// input, forget, candidate, output.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams<F> {
    /// `[input_dim, 4·hidden]`
    pub w_input: Param<F>,
    /// `[hidden, 4·hidden]`
    pub w_hidden: Param<F>,
    /// `[4·hidden]`, forget block initialized to 1.
    pub bias: Param<F>,
    pub hidden: usize,
}

impl<F: Scalar> LstmParams<F> {
    pub fn new(name: &str, input_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let gates = 4 * hidden;
        let bias = Tensor::from_fn(&[gates], |i| {
            if (hidden..2 * hidden).contains(&i) {
                F::one()
            } else {
                F::zero()
            }
        });
        LstmParams {
            w_input: Param::new(
                format!("{name}.w_input"),
                glorot_uniform(&[input_dim, gates], input_dim, gates, rng),
            ),
            w_hidden: Param::new(
                format!("{name}.w_hidden"),
                glorot_uniform(&[hidden, gates], hidden, gates, rng),
            ),
            bias: Param::new(format!("{name}.bias"), bias),
            hidden,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.value.shape()[0]
    }
}

impl<F: Scalar> Module<F> for LstmParams<F> {
    fn params(&self) -> Vec<&Param<F>> {
        vec![&self.w_input, &self.w_hidden, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        vec![&mut self.w_input, &mut self.w_hidden, &mut self.bias]
    }
}

/// Run the LSTM recursion over `input` (`[len, width]` or
/// `[batch, len, width]`) and return every hidden state, shaped like the
/// input with the last axis replaced by `hidden`.
///
/// `h0`/`c0` default to zeros and must be `[batch, hidden]` when given.
/// Step `t` reads only inputs at positions `≤ t`.
pub fn lstm_forward<F: Scalar>(
    tape: &mut Tape<F>,
    input: Var,
    p: &LstmParams<F>,
    h0: Option<Var>,
    c0: Option<Var>,
) -> Result<Var> {
    let (x, lifted) = ensure_batched(tape, input)?;
    let shape = tape.shape(x).to_vec();
    if shape.len() != 3 || shape[2] != p.input_dim() {
        return Err(Error::dim(format!(
            "lstm expects [.., len, {}] input, got {:?}",
            p.input_dim(),
            tape.shape(input)
        )));
    }
    let (batch, len, hid) = (shape[0], shape[1], p.hidden);
    let w_in = tape.param(&p.w_input);
    let w_h = tape.param(&p.w_hidden);
    let bias = tape.param(&p.bias);

    // Input contributions for all steps at once.
    let xw = tape.matmul(x, w_in)?;
    let xw = tape.add(xw, bias)?;

    let init = |tape: &mut Tape<F>, given: Option<Var>, what: &str| -> Result<Var> {
        match given {
            Some(v) if tape.shape(v) == [batch, hid] => Ok(v),
            Some(v) => Err(Error::dim(format!(
                "lstm {what} must be [{batch}, {hid}], got {:?}",
                tape.shape(v)
            ))),
            None => Ok(tape.constant(Tensor::zeros(&[batch, hid]))),
        }
    };
    let mut h = init(tape, h0, "h0")?;
    let mut c = init(tape, c0, "c0")?;

    let mut states = Vec::with_capacity(len);
    for t in 0..len {
        let xt = tape.slice(xw, 1, t, 1)?;
        let xt = tape.reshape(xt, &[batch, 4 * hid])?;
        let hw = tape.matmul(h, w_h)?;
        let gates = tape.add(xt, hw)?;

        let i = tape.slice(gates, 1, 0, hid)?;
        let i = tape.sigmoid(i);
        let f = tape.slice(gates, 1, hid, hid)?;
        let f = tape.sigmoid(f);
        let g = tape.slice(gates, 1, 2 * hid, hid)?;
        let g = tape.tanh(g);
        let o = tape.slice(gates, 1, 3 * hid, hid)?;
        let o = tape.sigmoid(o);

        let keep = tape.mul(f, c)?;
        let write = tape.mul(i, g)?;
        c = tape.add(keep, write)?;
        let squashed = tape.tanh(c);
        h = tape.mul(o, squashed)?;
        states.push(tape.reshape(h, &[batch, 1, hid])?);
    }
    let out = tape.concat(&states, 1)?;
    restore_unbatched(tape, out, lifted)
}
