//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends a node holding its output value and the ids of its
//! inputs, so node order is already a topological order. `backward` replays
//! the tape in reverse, accumulating gradients into every node that requires
//! one.

mod backward;
pub mod gradcheck;
mod ops;

use indexmap::IndexMap;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub use gradcheck::{grad_check, grad_check_module, relative_error, SHADOW_EPS};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named trainable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<F> {
    pub name: String,
    pub value: Tensor<F>,
}

impl<F: Scalar> Param<F> {
    pub fn new(name: impl Into<String>, value: Tensor<F>) -> Self {
        Param {
            name: name.into(),
            value,
        }
    }
}

/// Anything that owns named trainable parameters.
pub trait Module<F: Scalar> {
    fn params(&self) -> Vec<&Param<F>>;

    fn params_mut(&mut self) -> Vec<&mut Param<F>>;

    /// Total number of trainable scalars.
    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.value.numel()).sum()
    }
}

impl<F: Scalar, M: Module<F>> Module<F> for Option<M> {
    fn params(&self) -> Vec<&Param<F>> {
        self.as_ref().map(M::params).unwrap_or_default()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        self.as_mut().map(M::params_mut).unwrap_or_default()
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Op<F> {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Sub {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        factor: F,
    },
    Sigmoid {
        x: Var,
    },
    Tanh {
        x: Var,
    },
    Relu {
        x: Var,
    },
    Abs {
        x: Var,
    },
    Softmax {
        x: Var,
        axis: usize,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<F>,
        rstd: Vec<F>,
    },
    Conv {
        x: Var,
        filters: Var,
        dilation: usize,
    },
    Sum {
        x: Var,
        axis: Option<usize>,
    },
    Mean {
        x: Var,
        axis: Option<usize>,
    },
    Mask {
        x: Var,
        mask: Vec<F>,
    },
    Reshape {
        x: Var,
    },
    Permute {
        x: Var,
        axes: Vec<usize>,
    },
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
    Concat {
        xs: Vec<Var>,
        axis: usize,
    },
}

#[derive(Clone, Debug)]
pub(crate) struct Node<F> {
    pub value: Tensor<F>,
    pub op: Op<F>,
    pub requires_grad: bool,
    pub grad: Option<Vec<F>>,
}

/// Gradients of a scalar loss keyed by parameter name, in binding order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients<F> {
    pub by_name: IndexMap<String, Vec<F>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn get(&self, name: &str) -> Option<&[F]> {
        self.by_name.get(name).map(Vec::as_slice)
    }

    pub fn is_empty(&self) -> bool {
        self.by_name.is_empty()
    }

    pub fn global_norm(&self) -> f64 {
        self.by_name
            .values()
            .flat_map(|g| g.iter())
            .map(|v| v.as_f64() * v.as_f64())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescale every gradient so the global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            let factor = F::of(max_norm / norm);
            for g in self.by_name.values_mut() {
                g.iter_mut().for_each(|v| *v = *v * factor);
            }
        }
        norm
    }

    pub fn all_finite(&self) -> bool {
        self.by_name
            .values()
            .all(|g| g.iter().all(|v| v.is_finite()))
    }
}

/// Records a forward pass for later differentiation.
///
/// A tape built with [`Tape::training`] applies dropout using its own seeded
/// generator; an evaluation tape treats dropout as the identity.
#[derive(Debug)]
pub struct Tape<F> {
    pub(crate) nodes: Vec<Node<F>>,
    params: IndexMap<String, Var>,
    dropout_rng: Option<ChaCha8Rng>,
}

impl<F: Scalar> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Tape<F> {
    /// Evaluation tape: dropout disabled.
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: IndexMap::new(),
            dropout_rng: None,
        }
    }

    /// Training tape: dropout draws masks from `rng`.
    pub fn training(rng: ChaCha8Rng) -> Self {
        Tape {
            nodes: Vec::new(),
            params: IndexMap::new(),
            dropout_rng: Some(rng),
        }
    }

    pub fn is_training(&self) -> bool {
        self.dropout_rng.is_some()
    }

    /// Hand the dropout generator back, e.g. to continue its stream.
    pub fn into_rng(self) -> Option<ChaCha8Rng> {
        self.dropout_rng
    }

    pub(crate) fn rng_mut(&mut self) -> Option<&mut ChaCha8Rng> {
        self.dropout_rng.as_mut()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub(crate) fn push(&mut self, value: Tensor<F>, op: Op<F>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf, optionally tracked for gradients.
    pub fn leaf(&mut self, value: Tensor<F>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// An untracked constant.
    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.leaf(value, false)
    }

    /// Bind a parameter as a gradient-tracked leaf. Binding the same name
    /// twice returns the first binding.
    pub fn param(&mut self, p: &Param<F>) -> Var {
        if let Some(&v) = self.params.get(&p.name) {
            return v;
        }
        let v = self.leaf(p.value.clone(), true);
        self.params.insert(p.name.clone(), v);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of a leaf after [`Tape::backward`].
    pub fn grad(&self, v: Var) -> Option<&[F]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn param_vars(&self) -> impl Iterator<Item = (&str, Var)> {
        self.params.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub(crate) fn check_var(&self, v: Var) -> Result<()> {
        if v.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::Contract(format!(
                "variable {} is not on this tape",
                v.0
            )))
        }
    }
}
