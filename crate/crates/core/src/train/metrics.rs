use crate::error::{Error, Result};

fn check(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::dim(format!(
            "metric inputs differ in length: {} vs {}",
            y.len(),
            y_hat.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::dim("metric inputs are empty"));
    }
    Ok(())
}

/// Mean absolute error `(1/n)·Σ|y − ŷ|`.
pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check(y, y_hat)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

/// Mean squared error `(1/n)·Σ(y − ŷ)²`.
pub fn mse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check(y, y_hat)?;
    Ok(y.iter()
        .zip(y_hat)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / y.len() as f64)
}

/// Running absolute and squared error sums; merge-able across chunks.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorSums {
    pub abs: f64,
    pub sq: f64,
    pub n: usize,
}

impl ErrorSums {
    pub fn add<A: Into<f64> + Copy, B: Into<f64> + Copy>(&mut self, y: &[A], y_hat: &[B]) {
        for (&a, &b) in y.iter().zip(y_hat) {
            let d = a.into() - b.into();
            self.abs += d.abs();
            self.sq += d * d;
        }
        self.n += y.len().min(y_hat.len());
    }

    pub fn mae(&self) -> f64 {
        self.abs / self.n as f64
    }

    pub fn mse(&self) -> f64 {
        self.sq / self.n as f64
    }
}
