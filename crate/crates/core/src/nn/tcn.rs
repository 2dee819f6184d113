use rand_chacha::ChaCha8Rng;

use super::{ensure_batched, glorot_uniform, restore_unbatched, Linear};
use crate::autograd::{Module, Param, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// One residual block: causal dilated conv → ReLU → dropout → residual add.
#[derive(Clone, Debug, PartialEq)]
pub struct TcnBlock<F> {
    pub dilation: usize,
    /// `[kernel, c_in, c_out]`
    pub filters: Param<F>,
    pub bias: Param<F>,
    /// Present when `c_in != c_out`.
    pub residual: Option<Linear<F>>,
}

impl<F: Scalar> Module<F> for TcnBlock<F> {
    fn params(&self) -> Vec<&Param<F>> {
        let mut v = vec![&self.filters, &self.bias];
        v.extend(self.residual.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        let mut v = vec![&mut self.filters, &mut self.bias];
        v.extend(self.residual.params_mut());
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TcnParams<F> {
    pub blocks: Vec<TcnBlock<F>>,
    pub kernel: usize,
    pub channels: usize,
}

impl<F: Scalar> TcnParams<F> {
    /// Stack one block per dilation. Dilations must be strictly increasing
    /// powers of two.
    pub fn new(
        name: &str,
        input_dim: usize,
        channels: usize,
        kernel: usize,
        dilations: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        validate_dilations(kernel, dilations)?;
        let mut blocks = Vec::with_capacity(dilations.len());
        let mut c_in = input_dim;
        for (i, &dilation) in dilations.iter().enumerate() {
            let prefix = format!("{name}.block{i}");
            let fan_in = kernel * c_in;
            let fan_out = kernel * channels;
            blocks.push(TcnBlock {
                dilation,
                filters: Param::new(
                    format!("{prefix}.filters"),
                    glorot_uniform(&[kernel, c_in, channels], fan_in, fan_out, rng),
                ),
                bias: Param::new(format!("{prefix}.bias"), Tensor::zeros(&[channels])),
                residual: (c_in != channels).then(|| {
                    Linear::new(&format!("{prefix}.residual"), c_in, channels, false, rng)
                }),
            });
            c_in = channels;
        }
        Ok(TcnParams {
            blocks,
            kernel,
            channels,
        })
    }

    pub fn dilations(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.dilation).collect()
    }
}

impl<F: Scalar> Module<F> for TcnParams<F> {
    fn params(&self) -> Vec<&Param<F>> {
        self.blocks.iter().flat_map(|b| b.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        self.blocks
            .iter_mut()
            .flat_map(|b| b.params_mut())
            .collect()
    }
}

fn validate_dilations(kernel: usize, dilations: &[usize]) -> Result<()> {
    if kernel == 0 {
        return Err(Error::config("tcn kernel size must be ≥ 1"));
    }
    if dilations.is_empty() {
        return Err(Error::config("tcn needs at least one dilation"));
    }
    if dilations.iter().any(|d| !d.is_power_of_two()) {
        return Err(Error::config(format!(
            "tcn dilations {dilations:?} must be powers of two"
        )));
    }
    if dilations.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config(format!(
            "tcn dilations {dilations:?} must be strictly increasing"
        )));
    }
    Ok(())
}

/// Number of input positions that can influence one output position:
/// `1 + (kernel − 1)·Σ dilations`.
pub fn receptive_field(kernel: usize, dilations: &[usize]) -> usize {
    1 + (kernel - 1) * dilations.iter().sum::<usize>()
}

/// Apply the block stack in order of increasing dilation. The output at
/// position `t` depends only on inputs at positions `≤ t`.
pub fn tcn_forward<F: Scalar>(
    tape: &mut Tape<F>,
    input: Var,
    p: &TcnParams<F>,
    dropout: f64,
) -> Result<Var> {
    let (mut x, lifted) = ensure_batched(tape, input)?;
    for block in &p.blocks {
        let filters = tape.param(&block.filters);
        let bias = tape.param(&block.bias);
        let y = tape.conv1d_causal(x, filters, block.dilation)?;
        let y = tape.add(y, bias)?;
        let y = tape.relu(y);
        let y = tape.dropout(y, dropout)?;
        let skip = match &block.residual {
            Some(proj) => proj.forward(tape, x)?,
            None => x,
        };
        x = tape.add(y, skip)?;
    }
    restore_unbatched(tape, x, lifted)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::autograd::{grad_check_module, SHADOW_EPS};

    #[test]
    fn receptive_field_of_default_stack() {
        assert_eq!(receptive_field(3, &[16, 32, 64, 128]), 481);
        assert_eq!(receptive_field(1, &[1, 2]), 1);
    }

    #[test]
    fn rejects_bad_dilations() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(TcnParams::<f32>::new("t", 1, 4, 3, &[2, 1], &mut rng).is_err());
        assert!(TcnParams::<f32>::new("t", 1, 4, 3, &[3], &mut rng).is_err());
        assert!(TcnParams::<f32>::new("t", 1, 4, 0, &[1], &mut rng).is_err());
        assert!(TcnParams::<f32>::new("t", 1, 4, 3, &[16, 32, 64, 128], &mut rng).is_ok());
    }

    #[test]
    fn single_block_with_zero_residual_is_relu_of_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = TcnParams::<f64>::new("t", 2, 3, 1, &[1], &mut rng).unwrap();
        let res = p.blocks[0].residual.as_mut().unwrap();
        res.weight
            .value
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = 0.0);
        let w = p.blocks[0].filters.value.clone();
        let x = Tensor::from_fn(&[4, 2], |i| (i as f64 * 0.9).sin());
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let y = tcn_forward(&mut tape, xv, &p, 0.0).unwrap();
        for t in 0..4 {
            for o in 0..3 {
                let pre: f64 = (0..2)
                    .map(|i| x.data()[t * 2 + i] * w.data()[i * 3 + o])
                    .sum();
                let got = tape.value(y).data()[t * 3 + o];
                assert!((got - pre.max(0.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = TcnParams::<f64>::new("t", 2, 3, 3, &[1, 2], &mut rng).unwrap();
        let x = Tensor::from_fn(&[2, 6, 2], |i| (i as f64 * 0.77).sin());
        let w = Tensor::from_fn(&[2, 6, 3], |i| (i as f64 * 0.53).cos());
        let err = grad_check_module(&p, SHADOW_EPS, |tape, p| {
            let xv = tape.constant(x.clone());
            let y = tcn_forward(tape, xv, p, 0.0)?;
            let wv = tape.constant(w.clone());
            let prod = tape.mul(y, wv)?;
            tape.sum(prod, None)
        })
        .unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }
}
