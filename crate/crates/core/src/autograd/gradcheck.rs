//! Central finite-difference gradient checking in `f64`.

use super::{Module, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default central-difference step in `f64`. Truncation error falls as ε²,
/// and at 1e-3 it already reaches 1e-4 relative on small-gradient entries.
pub const SHADOW_EPS: f64 = 1e-5;

/// `|analytic − numeric| / (|analytic| + |numeric| + 1e-12)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs() + 1e-12)
}

fn scalar_of(tape: &Tape<f64>, loss: Var) -> Result<f64> {
    tape.value(loss)
        .item()
        .ok_or_else(|| Error::Contract("gradient check needs a scalar objective".into()))
}

/// Maximum relative error between reverse-mode gradients of `forward` with
/// respect to every element of `inputs` and central differences
/// `(f(x + ε) − f(x − ε)) / 2ε`.
pub fn grad_check<G>(inputs: &[Tensor<f64>], eps: f64, forward: G) -> Result<f64>
where
    G: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let loss = forward(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| {
            tape.grad(v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; t.numel()])
        })
        .collect();

    let eval = |perturbed: &[Tensor<f64>]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = perturbed.iter().map(|x| t.leaf(x.clone(), false)).collect();
        let l = forward(&mut t, &vs)?;
        scalar_of(&t, l)
    };

    let mut worst = 0.0f64;
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for i in 0..inputs.len() {
        for j in 0..inputs[i].numel() {
            let orig = inputs[i].data()[j];
            work[i].data_mut()[j] = orig + eps;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = orig - eps;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(relative_error(analytic[i][j], numeric));
        }
    }
    Ok(worst)
}

/// Gradient check over every parameter of a module. `forward` must bind the
/// module's parameters through [`Tape::param`] and return a scalar.
pub fn grad_check_module<M, G>(module: &M, eps: f64, forward: G) -> Result<f64>
where
    M: Module<f64> + Clone,
    G: Fn(&mut Tape<f64>, &M) -> Result<Var>,
{
    let mut tape = Tape::new();
    let loss = forward(&mut tape, module)?;
    let grads = tape.backward(loss)?;

    let mut work = module.clone();
    let n_params = work.params().len();
    let mut worst = 0.0f64;
    for p in 0..n_params {
        let (name, numel) = {
            let params = work.params();
            (params[p].name.clone(), params[p].value.numel())
        };
        let analytic = grads
            .get(&name)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; numel]);
        for j in 0..numel {
            let orig = work.params()[p].value.data()[j];
            let mut eval = |value: f64| -> Result<f64> {
                work.params_mut()[p].value.data_mut()[j] = value;
                let mut t = Tape::new();
                let l = forward(&mut t, &work)?;
                scalar_of(&t, l)
            };
            let plus = eval(orig + eps)?;
            let minus = eval(orig - eps)?;
            eval(orig)?;
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(relative_error(analytic[j], numeric));
        }
    }
    Ok(worst)
}
