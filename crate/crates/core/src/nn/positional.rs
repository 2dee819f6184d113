use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Sinusoidal position table, `[len, width]`:
/// `PE(pos, 2i) = sin(pos / 10000^(2i/width))`,
/// `PE(pos, 2i+1) = cos(pos / 10000^(2i/width))`.
pub fn positional_encoding<F: Scalar>(len: usize, width: usize) -> Result<Tensor<F>> {
    if width == 0 || width % 2 != 0 {
        return Err(Error::config(format!(
            "positional encoding width {width} must be even and positive"
        )));
    }
    if len == 0 {
        return Err(Error::config("positional encoding length must be ≥ 1"));
    }
    Ok(Tensor::from_fn(&[len, width], |idx| {
        let (pos, col) = (idx / width, idx % width);
        let pair = (col / 2) as f64;
        let angle = pos as f64 / 10000f64.powf(2.0 * pair / width as f64);
        F::of(if col % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        })
    }))
}
