use rand_chacha::ChaCha8Rng;

use super::Linear;
use crate::autograd::{Module, Param, Tape, Var};
use crate::error::Result;
use crate::tensor::Scalar;

/// Gated linear unit: a sigmoid gate `σ(X·W₁ + b₁)` multiplied elementwise
/// with the value path `X·W₂ + b₂`.
#[derive(Clone, Debug, PartialEq)]
pub struct GluParams<F> {
    pub gate: Linear<F>,
    pub value: Linear<F>,
}

impl<F: Scalar> GluParams<F> {
    pub fn new(name: &str, width: usize, rng: &mut ChaCha8Rng) -> Self {
        GluParams {
            gate: Linear::new(&format!("{name}.gate"), width, width, true, rng),
            value: Linear::new(&format!("{name}.value"), width, width, true, rng),
        }
    }
}

impl<F: Scalar> Module<F> for GluParams<F> {
    fn params(&self) -> Vec<&Param<F>> {
        let mut v = self.gate.params();
        v.extend(self.value.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        let mut v = self.gate.params_mut();
        v.extend(self.value.params_mut());
        v
    }
}

pub fn glu<F: Scalar>(tape: &mut Tape<F>, x: Var, p: &GluParams<F>) -> Result<Var> {
    let gate = p.gate.forward(tape, x)?;
    let gate = tape.sigmoid(gate);
    let value = p.value.forward(tape, x)?;
    tape.mul(gate, value)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::autograd::{grad_check_module, SHADOW_EPS};
    use crate::tensor::Tensor;

    fn run(p: &GluParams<f64>, x: &Tensor<f64>) -> (Vec<f64>, Vec<f64>) {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let y = glu(&mut tape, xv, p).unwrap();
        let v = p.value.forward(&mut tape, xv).unwrap();
        (tape.value(y).data().to_vec(), tape.value(v).data().to_vec())
    }

    #[test]
    fn zero_gate_halves_value_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = GluParams::<f64>::new("glu", 3, &mut rng);
        for q in p.gate.params_mut() {
            q.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let x = Tensor::from_fn(&[4, 3], |i| i as f64 * 0.25 - 1.0);
        let (y, v) = run(&p, &x);
        for (a, b) in y.iter().zip(&v) {
            assert_eq!(*a, 0.5 * b);
        }
    }

    #[test]
    fn saturated_gate_passes_value_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = GluParams::<f64>::new("glu", 3, &mut rng);
        p.gate
            .weight
            .value
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = 0.0);
        let b = p.gate.bias.as_mut().unwrap();
        b.value.data_mut().iter_mut().for_each(|v| *v = 30.0);
        let x = Tensor::from_fn(&[2, 3], |i| i as f64 - 2.0);
        let (y, v) = run(&p, &x);
        for (a, b) in y.iter().zip(&v) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn hand_evaluated_single_row() {
        // width 2, one row
        let p = GluParams {
            gate: Linear {
                weight: Param::new(
                    "g.w",
                    Tensor::new(vec![2, 2], vec![0.3, -0.2, 0.5, 0.1]).unwrap(),
                ),
                bias: Some(Param::new(
                    "g.b",
                    Tensor::new(vec![2], vec![0.1, -0.4]).unwrap(),
                )),
            },
            value: Linear {
                weight: Param::new(
                    "v.w",
                    Tensor::new(vec![2, 2], vec![1.2, 0.7, -0.8, 0.4]).unwrap(),
                ),
                bias: Some(Param::new(
                    "v.b",
                    Tensor::new(vec![2], vec![0.05, 0.2]).unwrap(),
                )),
            },
        };
        let (x0, x1) = (0.6, -1.1);
        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        let want = [
            sig(x0 * 0.3 + x1 * 0.5 + 0.1) * (x0 * 1.2 + x1 * -0.8 + 0.05),
            sig(x0 * -0.2 + x1 * 0.1 - 0.4) * (x0 * 0.7 + x1 * 0.4 + 0.2),
        ];
        let (y, _) = run(&p, &Tensor::new(vec![1, 2], vec![x0, x1]).unwrap());
        for (a, b) in y.iter().zip(want) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = GluParams::<f64>::new("glu", 3, &mut rng);
        let x = Tensor::from_fn(&[2, 3, 3], |i| (i as f64 * 0.41).sin());
        let w = Tensor::from_fn(&[2, 3, 3], |i| (i as f64 * 0.93).cos());
        let err = grad_check_module(&p, SHADOW_EPS, |tape, p| {
            let xv = tape.constant(x.clone());
            let y = glu(tape, xv, p)?;
            let wv = tape.constant(w.clone());
            let prod = tape.mul(y, wv)?;
            tape.sum(prod, None)
        })
        .unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }
}
