use super::ops::{matmul_plan, permute_data, split_axis};
use super::{Gradients, Op, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{broadcast_shape, gemm, reduce_to_shape, BroadcastIter, Scalar};

fn accumulate<F: Scalar>(grads: &mut [Option<Vec<F>>], v: Var, contribution: Vec<F>) {
    match &mut grads[v.0] {
        Some(g) => g.iter_mut().zip(contribution).for_each(|(a, c)| *a += c),
        slot => *slot = Some(contribution),
    }
}

/// Gradient for one side of a broadcast product: sum over broadcast axes of
/// `g ⊙ other`, reduced to `target`.
fn mul_side_grad<F: Scalar>(
    g: &[F],
    out: &[usize],
    other: &[F],
    other_shape: &[usize],
    target: &[usize],
) -> Vec<F> {
    if other_shape == out && target == out {
        return g.iter().zip(other).map(|(&a, &b)| a * b).collect();
    }
    let n: usize = target.iter().product();
    let mut acc = vec![F::zero(); n];
    for (o, io, it) in BroadcastIter::new(out, other_shape, target) {
        acc[it] += g[o] * other[io];
    }
    acc
}

impl<F: Scalar> Tape<F> {
    /// Reverse-mode sweep from a scalar `loss`.
    ///
    /// Populates the gradient of every reachable leaf that requires one and
    /// returns the gradients of bound parameters by name. Parameters the loss
    /// does not depend on receive zeros.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<F>> {
        self.check_var(loss)?;
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<F>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![F::one()]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads)?;
        }

        for (i, g) in grads.into_iter().enumerate() {
            if let (Some(g), true) = (g, matches!(self.nodes[i].op, Op::Leaf)) {
                if self.nodes[i].requires_grad {
                    self.nodes[i].grad = Some(g);
                }
            }
        }

        let mut out = Gradients::default();
        for (name, v) in self.param_vars() {
            let g = match &self.nodes[v.0].grad {
                Some(g) => g.clone(),
                None => vec![F::zero(); self.nodes[v.0].value.numel()],
            };
            out.by_name.insert(name.to_string(), g);
        }
        Ok(out)
    }

    fn backprop_node(&self, i: usize, g: &[F], grads: &mut [Option<Vec<F>>]) -> Result<()> {
        let node = &self.nodes[i];
        let out_shape = node.value.shape();
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let plan = matmul_plan(self.shape(*a), self.shape(*b))?;
                let (m, k, n) = (plan.m, plan.k, plan.n);
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if wants(*a) {
                    let mut ga = vec![F::zero(); av.len()];
                    for &(o, ia, ib) in &plan.blocks {
                        gemm(
                            m,
                            n,
                            k,
                            &g[o * m * n..(o + 1) * m * n],
                            false,
                            &bv[ib * k * n..(ib + 1) * k * n],
                            true,
                            &mut ga[ia * m * k..(ia + 1) * m * k],
                            true,
                        );
                    }
                    accumulate(grads, *a, ga);
                }
                if wants(*b) {
                    let mut gb = vec![F::zero(); bv.len()];
                    for &(o, ia, ib) in &plan.blocks {
                        gemm(
                            k,
                            m,
                            n,
                            &av[ia * m * k..(ia + 1) * m * k],
                            true,
                            &g[o * m * n..(o + 1) * m * n],
                            false,
                            &mut gb[ib * k * n..(ib + 1) * k * n],
                            true,
                        );
                    }
                    accumulate(grads, *b, gb);
                }
            }
            Op::Add { a, b } | Op::Sub { a, b } => {
                let negate_b = matches!(node.op, Op::Sub { .. });
                if wants(*a) {
                    accumulate(grads, *a, reduce_to_shape(g, out_shape, self.shape(*a)));
                }
                if wants(*b) {
                    let mut gb = reduce_to_shape(g, out_shape, self.shape(*b));
                    if negate_b {
                        gb.iter_mut().for_each(|v| *v = -*v);
                    }
                    accumulate(grads, *b, gb);
                }
            }
            Op::Mul { a, b } => {
                let (va, vb) = (self.value(*a), self.value(*b));
                debug_assert_eq!(broadcast_shape(va.shape(), vb.shape())?, out_shape);
                if wants(*a) {
                    let ga = mul_side_grad(g, out_shape, vb.data(), vb.shape(), va.shape());
                    accumulate(grads, *a, ga);
                }
                if wants(*b) {
                    let gb = mul_side_grad(g, out_shape, va.data(), va.shape(), vb.shape());
                    accumulate(grads, *b, gb);
                }
            }
            Op::Scale { x, factor } => {
                if wants(*x) {
                    accumulate(grads, *x, g.iter().map(|&v| v * *factor).collect());
                }
            }
            Op::Sigmoid { x } => {
                let y = node.value.data();
                let gx = g
                    .iter()
                    .zip(y)
                    .map(|(&g, &y)| g * y * (F::one() - y))
                    .collect();
                accumulate(grads, *x, gx);
            }
            Op::Tanh { x } => {
                let y = node.value.data();
                let gx = g
                    .iter()
                    .zip(y)
                    .map(|(&g, &y)| g * (F::one() - y * y))
                    .collect();
                accumulate(grads, *x, gx);
            }
            Op::Relu { x } => {
                let y = node.value.data();
                let gx = g
                    .iter()
                    .zip(y)
                    .map(|(&g, &y)| if y > F::zero() { g } else { F::zero() })
                    .collect();
                accumulate(grads, *x, gx);
            }
            Op::Abs { x } => {
                let xv = self.value(*x).data();
                let gx = g
                    .iter()
                    .zip(xv)
                    .map(|(&g, &v)| {
                        if v > F::zero() {
                            g
                        } else if v < F::zero() {
                            -g
                        } else {
                            F::zero()
                        }
                    })
                    .collect();
                accumulate(grads, *x, gx);
            }
            Op::Softmax { x, axis } => {
                let y = node.value.data();
                let (outer, n, inner) = split_axis(out_shape, *axis);
                let mut gx = vec![F::zero(); y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| (o * n + j) * inner + i;
                        let dot: F = (0..n).map(|j| g[idx(j)] * y[idx(j)]).sum();
                        for j in 0..n {
                            gx[idx(j)] = y[idx(j)] * (g[idx(j)] - dot);
                        }
                    }
                }
                accumulate(grads, *x, gx);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let d = *out_shape.last().expect("rank ≥ 1");
                let rows = xhat.len() / d;
                let gv = self.value(*gain).data();
                if wants(*x) {
                    let inv_d = F::of(1.0 / d as f64);
                    let mut gx = vec![F::zero(); xhat.len()];
                    for r in 0..rows {
                        let span = r * d..(r + 1) * d;
                        let (gr, hr) = (&g[span.clone()], &xhat[span.clone()]);
                        let mut mean_dh = F::zero();
                        let mut mean_dh_h = F::zero();
                        for j in 0..d {
                            let dh = gr[j] * gv[j];
                            mean_dh += dh;
                            mean_dh_h += dh * hr[j];
                        }
                        mean_dh = mean_dh * inv_d;
                        mean_dh_h = mean_dh_h * inv_d;
                        for j in 0..d {
                            let dh = gr[j] * gv[j];
                            gx[r * d + j] = rstd[r] * (dh - mean_dh - hr[j] * mean_dh_h);
                        }
                    }
                    accumulate(grads, *x, gx);
                }
                if wants(*gain) {
                    let mut gg = vec![F::zero(); d];
                    for r in 0..rows {
                        for j in 0..d {
                            gg[j] += g[r * d + j] * xhat[r * d + j];
                        }
                    }
                    accumulate(grads, *gain, gg);
                }
                if wants(*bias) {
                    let mut gb = vec![F::zero(); d];
                    for r in 0..rows {
                        for j in 0..d {
                            gb[j] += g[r * d + j];
                        }
                    }
                    accumulate(grads, *bias, gb);
                }
            }
            Op::Conv {
                x,
                filters,
                dilation,
            } => {
                let xs = self.shape(*x);
                let (batch, len, c_in) = match xs[..] {
                    [l, c] => (1, l, c),
                    [b, l, c] => (b, l, c),
                    _ => unreachable!("validated in forward"),
                };
                let fs = self.shape(*filters);
                let (taps, c_out) = (fs[0], fs[2]);
                let (xv, fv) = (self.value(*x).data(), self.value(*filters).data());
                let mut gx = wants(*x).then(|| vec![F::zero(); xv.len()]);
                let mut gf = wants(*filters).then(|| vec![F::zero(); fv.len()]);
                for b in 0..batch {
                    let xb = &xv[b * len * c_in..(b + 1) * len * c_in];
                    let gb = &g[b * len * c_out..(b + 1) * len * c_out];
                    for j in 0..taps {
                        let shift = j * dilation;
                        if shift >= len {
                            break;
                        }
                        let rows = len - shift;
                        let w = &fv[j * c_in * c_out..(j + 1) * c_in * c_out];
                        let g_rows = &gb[shift * c_out..];
                        if let Some(gx) = gx.as_mut() {
                            let dst = &mut gx[b * len * c_in..b * len * c_in + rows * c_in];
                            gemm(rows, c_out, c_in, g_rows, false, w, true, dst, true);
                        }
                        if let Some(gf) = gf.as_mut() {
                            let dst = &mut gf[j * c_in * c_out..(j + 1) * c_in * c_out];
                            gemm(
                                c_in,
                                rows,
                                c_out,
                                &xb[..rows * c_in],
                                true,
                                g_rows,
                                false,
                                dst,
                                true,
                            );
                        }
                    }
                }
                if let Some(gx) = gx {
                    accumulate(grads, *x, gx);
                }
                if let Some(gf) = gf {
                    accumulate(grads, *filters, gf);
                }
            }
            Op::Sum { x, axis } | Op::Mean { x, axis } => {
                let xs = self.shape(*x);
                let scale = if matches!(node.op, Op::Mean { .. }) {
                    let count = match axis {
                        None => self.value(*x).numel(),
                        Some(ax) => xs[*ax],
                    };
                    F::of(1.0 / count as f64)
                } else {
                    F::one()
                };
                let gx = match axis {
                    None => vec![g[0] * scale; self.value(*x).numel()],
                    Some(ax) => {
                        let (outer, n, inner) = split_axis(xs, *ax);
                        let mut gx = Vec::with_capacity(outer * n * inner);
                        for o in 0..outer {
                            for _ in 0..n {
                                gx.extend(g[o * inner..(o + 1) * inner].iter().map(|&v| v * scale));
                            }
                        }
                        gx
                    }
                };
                accumulate(grads, *x, gx);
            }
            Op::Mask { x, mask } => {
                accumulate(
                    grads,
                    *x,
                    g.iter().zip(mask).map(|(&g, &m)| g * m).collect(),
                );
            }
            Op::Reshape { x } => accumulate(grads, *x, g.to_vec()),
            Op::Permute { x, axes } => {
                let mut inverse = vec![0; axes.len()];
                for (i, &a) in axes.iter().enumerate() {
                    inverse[a] = i;
                }
                accumulate(grads, *x, permute_data(g, out_shape, &inverse));
            }
            Op::Slice { x, axis, start } => {
                let xs = self.shape(*x);
                let (outer, n, inner) = split_axis(xs, *axis);
                let len = out_shape[*axis];
                let mut gx = vec![F::zero(); outer * n * inner];
                for o in 0..outer {
                    gx[(o * n + start) * inner..(o * n + start + len) * inner]
                        .copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
                }
                accumulate(grads, *x, gx);
            }
            Op::Concat { xs, axis } => {
                let (outer, total, inner) = split_axis(out_shape, *axis);
                let mut offset = 0;
                for &v in xs {
                    let n = self.shape(v)[*axis];
                    if wants(v) {
                        let mut gv = Vec::with_capacity(outer * n * inner);
                        for o in 0..outer {
                            let base = (o * total + offset) * inner;
                            gv.extend_from_slice(&g[base..base + n * inner]);
                        }
                        accumulate(grads, v, gv);
                    }
                    offset += n;
                }
            }
        }
        Ok(())
    }
}
