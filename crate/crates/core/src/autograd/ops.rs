use rand::Rng;

use super::{Op, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{broadcast_shape, contiguous_strides, gemm, BroadcastIter, Scalar, Tensor};

/// Batched matrix-product layout shared by the forward and backward passes.
pub(crate) struct MatmulPlan {
    pub m: usize,
    pub k: usize,
    pub n: usize,
    /// (output block, lhs block, rhs block) triples.
    pub blocks: Vec<(usize, usize, usize)>,
    pub out_shape: Vec<usize>,
}

pub(crate) fn matmul_plan(a: &[usize], b: &[usize]) -> Result<MatmulPlan> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::dim(format!(
            "matmul needs rank ≥ 2 operands, got {a:?} and {b:?}"
        )));
    }
    let (na, nb) = (a.len(), b.len());
    let (m, k, k2, n) = (a[na - 2], a[na - 1], b[nb - 2], b[nb - 1]);
    if k != k2 {
        return Err(Error::dim(format!(
            "matmul inner dimensions differ: {a:?} · {b:?}"
        )));
    }
    let a_batch = &a[..na - 2];
    let b_batch = &b[..nb - 2];
    if b_batch.is_empty() {
        // Fold the lhs batch into its rows.
        let rows = a_batch.iter().product::<usize>() * m;
        let mut out_shape = a_batch.to_vec();
        out_shape.extend([m, n]);
        return Ok(MatmulPlan {
            m: rows,
            k,
            n,
            blocks: vec![(0, 0, 0)],
            out_shape,
        });
    }
    let a_b: Vec<usize> = if a_batch.is_empty() {
        vec![1]
    } else {
        a_batch.to_vec()
    };
    let batch = broadcast_shape(&a_b, b_batch)
        .map_err(|_| Error::dim(format!("matmul batch dimensions differ: {a:?} · {b:?}")))?;
    let blocks = BroadcastIter::new(&batch, &a_b, b_batch).collect();
    let mut out_shape = batch;
    out_shape.extend([m, n]);
    Ok(MatmulPlan {
        m,
        k,
        n,
        blocks,
        out_shape,
    })
}

fn binary_forward<F: Scalar>(
    a: &Tensor<F>,
    b: &Tensor<F>,
    f: impl Fn(F, F) -> F,
) -> Result<Tensor<F>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa == sb {
        let data = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        return Tensor::new(sa.to_vec(), data);
    }
    let out = broadcast_shape(sa, sb)?;
    let (da, db) = (a.data(), b.data());
    let data: Vec<F> = if out == sa && sb.len() <= sa.len() && sa[sa.len() - sb.len()..] == *sb {
        let nb = db.len();
        da.iter()
            .enumerate()
            .map(|(i, &x)| f(x, db[i % nb]))
            .collect()
    } else if out == sb && sa.len() <= sb.len() && sb[sb.len() - sa.len()..] == *sa {
        let na = da.len();
        db.iter()
            .enumerate()
            .map(|(i, &y)| f(da[i % na], y))
            .collect()
    } else {
        BroadcastIter::new(&out, sa, sb)
            .map(|(_, ia, ib)| f(da[ia], db[ib]))
            .collect()
    };
    Tensor::new(out, data)
}

/// Split a shape around `axis` into (outer, axis length, inner).
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn reduced_shape(shape: &[usize], axis: Option<usize>) -> Vec<usize> {
    match axis {
        None => vec![1],
        Some(ax) => {
            let mut s: Vec<usize> = shape.to_vec();
            s.remove(ax);
            if s.is_empty() {
                vec![1]
            } else {
                s
            }
        }
    }
}

pub(crate) fn sum_axis<F: Scalar>(x: &Tensor<F>, axis: Option<usize>) -> Vec<F> {
    match axis {
        None => vec![x.data().iter().copied().sum()],
        Some(ax) => {
            let (outer, n, inner) = split_axis(x.shape(), ax);
            let d = x.data();
            let mut out = vec![F::zero(); outer * inner];
            for o in 0..outer {
                for j in 0..n {
                    let row = &d[(o * n + j) * inner..(o * n + j + 1) * inner];
                    for (acc, &v) in out[o * inner..(o + 1) * inner].iter_mut().zip(row) {
                        *acc += v;
                    }
                }
            }
            out
        }
    }
}

/// Gather a tensor into a permuted layout: `out.shape[i] = shape[axes[i]]`.
pub(crate) fn permute_data<F: Scalar>(data: &[F], shape: &[usize], axes: &[usize]) -> Vec<F> {
    let in_strides = contiguous_strides(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let total = data.len();
    let mut out = Vec::with_capacity(total);
    let mut counter = vec![0usize; out_shape.len()];
    let mut src = 0usize;
    for _ in 0..total {
        out.push(data[src]);
        for ax in (0..out_shape.len()).rev() {
            counter[ax] += 1;
            src += src_strides[ax];
            if counter[ax] < out_shape[ax] {
                break;
            }
            src -= src_strides[ax] * out_shape[ax];
            counter[ax] = 0;
        }
    }
    out
}

/// Causal dilated convolution kernel over `[batch, len, c_in]` input with
/// `[taps, c_in, c_out]` filters; taps reaching before the start read zeros.
pub(crate) fn conv_forward<F: Scalar>(
    x: &[F],
    filters: &[F],
    batch: usize,
    len: usize,
    c_in: usize,
    c_out: usize,
    taps: usize,
    dilation: usize,
) -> Vec<F> {
    let mut out = vec![F::zero(); batch * len * c_out];
    for b in 0..batch {
        let xb = &x[b * len * c_in..(b + 1) * len * c_in];
        let ob = &mut out[b * len * c_out..(b + 1) * len * c_out];
        for j in 0..taps {
            let shift = j * dilation;
            if shift >= len {
                break;
            }
            let rows = len - shift;
            let w = &filters[j * c_in * c_out..(j + 1) * c_in * c_out];
            gemm(
                rows,
                c_in,
                c_out,
                &xb[..rows * c_in],
                false,
                w,
                false,
                &mut ob[shift * c_out..],
                true,
            );
        }
    }
    out
}

impl<F: Scalar> Tape<F> {
    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|&v| self.nodes[v.0].requires_grad)
    }

    /// Matrix product over the last two axes; leading axes broadcast.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let plan = matmul_plan(self.shape(a), self.shape(b))?;
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let (m, k, n) = (plan.m, plan.k, plan.n);
        let numel: usize = plan.out_shape.iter().product();
        let mut out = vec![F::zero(); numel];
        for &(o, ia, ib) in &plan.blocks {
            gemm(
                m,
                k,
                n,
                &av[ia * m * k..(ia + 1) * m * k],
                false,
                &bv[ib * k * n..(ib + 1) * k * n],
                false,
                &mut out[o * m * n..(o + 1) * m * n],
                false,
            );
        }
        let value = Tensor::new(plan.out_shape, out)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::MatMul { a, b }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = binary_forward(self.value(a), self.value(b), |x, y| x + y)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Add { a, b }, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = binary_forward(self.value(a), self.value(b), |x, y| x - y)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Sub { a, b }, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = binary_forward(self.value(a), self.value(b), |x, y| x * y)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Mul { a, b }, rg))
    }

    pub fn scale(&mut self, x: Var, factor: F) -> Var {
        let v = self.value(x);
        let value = Tensor::from_fn(v.shape(), |i| v.data()[i] * factor);
        let rg = self.any_grad(&[x]);
        self.push(value, Op::Scale { x, factor }, rg)
    }

    fn unary(&mut self, x: Var, f: impl Fn(F) -> F, op: Op<F>) -> Var {
        let v = self.value(x);
        let value = Tensor::from_fn(v.shape(), |i| f(v.data()[i]));
        let rg = self.any_grad(&[x]);
        self.push(value, op, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid { x })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.tanh(), Op::Tanh { x })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(
            x,
            |v| if v > F::zero() { v } else { F::zero() },
            Op::Relu { x },
        )
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.abs(), Op::Abs { x })
    }

    /// Softmax along `axis`, stabilized by subtracting the slice maximum.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let v = self.value(x);
        if axis >= v.ndim() {
            return Err(Error::dim(format!(
                "softmax axis {axis} out of range for {:?}",
                v.shape()
            )));
        }
        let (outer, n, inner) = split_axis(v.shape(), axis);
        let d = v.data();
        let mut out = vec![F::zero(); d.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * n + j) * inner + i;
                let max = (0..n).map(|j| d[idx(j)]).fold(F::neg_infinity(), F::max);
                let mut total = F::zero();
                for j in 0..n {
                    let e = (d[idx(j)] - max).exp();
                    out[idx(j)] = e;
                    total += e;
                }
                for j in 0..n {
                    out[idx(j)] = out[idx(j)] / total;
                }
            }
        }
        let value = Tensor::new(v.shape().to_vec(), out)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(value, Op::Softmax { x, axis }, rg))
    }

    /// Normalize each last-axis slice to zero mean and unit (population)
    /// variance, then apply `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let d = *xs.last().expect("tensor rank ≥ 1");
        if self.shape(gain) != [d] || self.shape(bias) != [d] {
            return Err(Error::dim(format!(
                "layer_norm over last axis {d} of {xs:?} got gain {:?} and bias {:?}",
                self.shape(gain),
                self.shape(bias)
            )));
        }
        let (xv, gv, bv) = (
            self.value(x).data(),
            self.value(gain).data(),
            self.value(bias).data(),
        );
        let rows = xv.len() / d;
        let inv_d = F::of(1.0 / d as f64);
        let eps = F::of(eps);
        let mut xhat = vec![F::zero(); xv.len()];
        let mut rstd = vec![F::zero(); rows];
        let mut out = vec![F::zero(); xv.len()];
        for r in 0..rows {
            let row = &xv[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<F>() * inv_d;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() * inv_d;
            let s = (var + eps).sqrt().recip();
            rstd[r] = s;
            for j in 0..d {
                let h = (row[j] - mean) * s;
                xhat[r * d + j] = h;
                out[r * d + j] = h * gv[j] + bv[j];
            }
        }
        let value = Tensor::new(xs, out)?;
        let rg = self.any_grad(&[x, gain, bias]);
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    /// Causal dilated 1-D convolution.
    ///
    /// `x` is `[len, c_in]` or `[batch, len, c_in]`, `filters` is
    /// `[taps, c_in, c_out]`. Output position `t` sums `filters[j]` applied to
    /// `x[t - j·dilation]`, with positions before the start read as zero, so the
    /// output keeps the input length.
    pub fn conv1d_causal(&mut self, x: Var, filters: Var, dilation: usize) -> Result<Var> {
        if dilation == 0 {
            return Err(Error::config("dilation must be ≥ 1"));
        }
        let xs = self.shape(x).to_vec();
        let fs = self.shape(filters).to_vec();
        let (batch, len, c_in) = match xs[..] {
            [l, c] => (1, l, c),
            [b, l, c] => (b, l, c),
            _ => {
                return Err(Error::dim(format!(
                    "conv input must be [L, C] or [B, L, C], got {xs:?}"
                )))
            }
        };
        if fs.len() != 3 || fs[1] != c_in {
            return Err(Error::dim(format!(
                "conv filters {fs:?} incompatible with input {xs:?}"
            )));
        }
        let (taps, c_out) = (fs[0], fs[2]);
        let out = conv_forward(
            self.value(x).data(),
            self.value(filters).data(),
            batch,
            len,
            c_in,
            c_out,
            taps,
            dilation,
        );
        let mut shape = xs.clone();
        *shape.last_mut().expect("rank ≥ 2") = c_out;
        let value = Tensor::new(shape, out)?;
        let rg = self.any_grad(&[x, filters]);
        Ok(self.push(
            value,
            Op::Conv {
                x,
                filters,
                dilation,
            },
            rg,
        ))
    }

    fn check_axis(&self, x: Var, axis: Option<usize>) -> Result<()> {
        match axis {
            Some(ax) if ax >= self.value(x).ndim() => Err(Error::dim(format!(
                "axis {ax} out of range for shape {:?}",
                self.shape(x)
            ))),
            _ => Ok(()),
        }
    }

    /// Sum over one axis (removed from the shape) or over everything.
    pub fn sum(&mut self, x: Var, axis: Option<usize>) -> Result<Var> {
        self.check_axis(x, axis)?;
        let v = self.value(x);
        let value = Tensor::new(reduced_shape(v.shape(), axis), sum_axis(v, axis))?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(value, Op::Sum { x, axis }, rg))
    }

    pub fn mean(&mut self, x: Var, axis: Option<usize>) -> Result<Var> {
        self.check_axis(x, axis)?;
        let v = self.value(x);
        let count = match axis {
            None => v.numel(),
            Some(ax) => v.shape()[ax],
        };
        let inv = F::of(1.0 / count as f64);
        let data = sum_axis(v, axis).into_iter().map(|s| s * inv).collect();
        let value = Tensor::new(reduced_shape(v.shape(), axis), data)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(value, Op::Mean { x, axis }, rg))
    }

    /// Inverted dropout: on a training tape each element is zeroed with
    /// probability `rate` and survivors are scaled by `1 / (1 - rate)`. On an
    /// evaluation tape (or with `rate == 0`) this returns `x` unchanged.
    pub fn dropout(&mut self, x: Var, rate: f64) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::config(format!("dropout rate {rate} outside [0, 1)")));
        }
        let n = self.value(x).numel();
        let keep = F::of(1.0 / (1.0 - rate));
        let mask: Vec<F> = match self.rng_mut() {
            Some(rng) if rate > 0.0 => (0..n)
                .map(|_| {
                    if rng.random::<f64>() < rate {
                        F::zero()
                    } else {
                        keep
                    }
                })
                .collect(),
            _ => return Ok(x),
        };
        let v = self.value(x);
        let value = Tensor::from_fn(v.shape(), |i| v.data()[i] * mask[i]);
        let rg = self.any_grad(&[x]);
        Ok(self.push(value, Op::Mask { x, mask }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(value, Op::Reshape { x }, rg))
    }

    /// Reorder axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len()
            || axes
                .iter()
                .any(|&a| a >= shape.len() || std::mem::replace(&mut seen[a], true))
        {
            return Err(Error::dim(format!(
                "{axes:?} is not a permutation of the axes of {shape:?}"
            )));
        }
        let data = permute_data(self.value(x).data(), &shape, axes);
        let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
        let value = Tensor::new(out_shape, data)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(
            value,
            Op::Permute {
                x,
                axes: axes.to_vec(),
            },
            rg,
        ))
    }

    /// Swap the last two axes.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).ndim();
        if n < 2 {
            return Err(Error::dim("transpose needs rank ≥ 2"));
        }
        let mut axes: Vec<usize> = (0..n).collect();
        axes.swap(n - 2, n - 1);
        self.permute(x, &axes)
    }

    /// `len` consecutive entries along `axis` starting at `start`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::dim(format!(
                "slice [{start}, {}) on axis {axis} out of range for {shape:?}",
                start + len
            )));
        }
        let (outer, n, inner) = split_axis(&shape, axis);
        let d = self.value(x).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            out.extend_from_slice(&d[(o * n + start) * inner..(o * n + start + len) * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let value = Tensor::new(out_shape, out)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(value, Op::Slice { x, axis, start }, rg))
    }

    /// Join tensors along `axis`; all other axes must agree.
    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = xs.first().ok_or_else(|| Error::dim("concat of nothing"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::dim(format!(
                "concat axis {axis} out of range for {base:?}"
            )));
        }
        let mut total = 0;
        for &v in xs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::dim(format!(
                    "concat shapes {base:?} and {s:?} differ off axis {axis}"
                )));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in xs {
                let n = self.shape(v)[axis];
                out.extend_from_slice(&self.value(v).data()[o * n * inner..(o + 1) * n * inner]);
            }
        }
        let mut out_shape = base;
        out_shape[axis] = total;
        let value = Tensor::new(out_shape, out)?;
        let rg = self.any_grad(xs);
        Ok(self.push(
            value,
            Op::Concat {
                xs: xs.to_vec(),
                axis,
            },
            rg,
        ))
    }
}

pub(crate) fn sigmoid<F: Scalar>(v: F) -> F {
    // Split by sign so exp never overflows.
    if v >= F::zero() {
        (F::one() + (-v).exp()).recip()
    } else {
        let e = v.exp();
        e / (F::one() + e)
    }
}
