use super::{contiguous_strides, Scalar};
use crate::error::{Error, Result};

/// Numpy-style broadcast of two shapes aligned at the trailing axis.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let da = if i + a.len() >= n {
            a[i + a.len() - n]
        } else {
            1
        };
        let db = if i + b.len() >= n {
            b[i + b.len() - n]
        } else {
            1
        };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(Error::dim(format!(
                    "shapes {a:?} and {b:?} do not broadcast"
                )));
            }
        };
    }
    Ok(out)
}

/// Strides that read an `input`-shaped buffer as if it had shape `out`;
/// broadcast axes get stride 0.
pub fn broadcast_strides(input: &[usize], out: &[usize]) -> Vec<usize> {
    let base = contiguous_strides(input);
    let offset = out.len() - input.len();
    (0..out.len())
        .map(|i| {
            if i < offset || input[i - offset] == 1 {
                0
            } else {
                base[i - offset]
            }
        })
        .collect()
}

/// Walks every flat index of an output shape alongside the matching flat
/// indices of two broadcast inputs.
pub struct BroadcastIter {
    shape: Vec<usize>,
    sa: Vec<usize>,
    sb: Vec<usize>,
    counter: Vec<usize>,
    ia: usize,
    ib: usize,
    pos: usize,
    total: usize,
}

impl BroadcastIter {
    pub fn new(out: &[usize], a: &[usize], b: &[usize]) -> Self {
        BroadcastIter {
            shape: out.to_vec(),
            sa: broadcast_strides(a, out),
            sb: broadcast_strides(b, out),
            counter: vec![0; out.len()],
            ia: 0,
            ib: 0,
            pos: 0,
            total: out.iter().product(),
        }
    }
}

impl Iterator for BroadcastIter {
    type Item = (usize, usize, usize);

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.total {
            return None;
        }
        let item = (self.pos, self.ia, self.ib);
        self.pos += 1;
        for ax in (0..self.shape.len()).rev() {
            self.counter[ax] += 1;
            self.ia += self.sa[ax];
            self.ib += self.sb[ax];
            if self.counter[ax] < self.shape[ax] {
                break;
            }
            self.ia -= self.sa[ax] * self.shape[ax];
            self.ib -= self.sb[ax] * self.shape[ax];
            self.counter[ax] = 0;
        }
        Some(item)
    }
}

/// Sum a gradient of shape `out` down to the broadcast source shape `input`.
pub fn reduce_to_shape<F: Scalar>(grad: &[F], out: &[usize], input: &[usize]) -> Vec<F> {
    let n_in: usize = input.iter().product();
    if out == input {
        return grad.to_vec();
    }
    let mut acc = vec![F::zero(); n_in];
    // Suffix broadcast (bias-style): input equals the trailing axes of out.
    if input.len() <= out.len() && out[out.len() - input.len()..] == *input {
        for chunk in grad.chunks(n_in) {
            for (a, &g) in acc.iter_mut().zip(chunk) {
                *a += g;
            }
        }
        return acc;
    }
    for (o, i, _) in BroadcastIter::new(out, input, &[1]) {
        acc[i] += grad[o];
    }
    acc
}
