//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Frequency (Hz) of the largest spectral peak above `min_hz`, refined by
/// parabolic interpolation on a Hann-windowed, 16× zero-padded spectrum.
pub fn dominant_frequency(signal: &[f64], sample_rate: f64, min_hz: f64) -> f64 {
    let n = signal.len();
    let mean = signal.iter().sum::<f64>() / n as f64;
    let padded = (16 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = (0..padded)
        .map(|i| {
            if i < n {
                let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos();
                Complex::new((signal[i] - mean) * w, 0.0)
            } else {
                Complex::new(0.0, 0.0)
            }
        })
        .collect();
    FftPlanner::new().plan_fft_forward(padded).process(&mut buf);
    let df = sample_rate / padded as f64;
    let lo = (min_hz / df).ceil() as usize;
    let mags: Vec<f64> = buf[..padded / 2].iter().map(|c| c.norm()).collect();
    let k = (lo..padded / 2 - 1)
        .max_by(|&a, &b| mags[a].total_cmp(&mags[b]))
        .unwrap();
    let (a, b, c) = (mags[k - 1], mags[k], mags[k + 1]);
    let shift = 0.5 * (a - c) / (a - 2.0 * b + c);
    (k as f64 + shift) * df
}

/// Direct evaluation of a causal dilated convolution,
/// `y[t][o] = Σ_j Σ_i w[j][i][o]·x[t − j·d][i]` with zero left padding.
pub fn causal_conv_oracle(x: &[Vec<f64>], w: &[Vec<Vec<f64>>], dilation: usize) -> Vec<Vec<f64>> {
    let c_out = w[0][0].len();
    (0..x.len())
        .map(|t| {
            (0..c_out)
                .map(|o| {
                    let mut acc = 0.0;
                    for (j, tap) in w.iter().enumerate() {
                        if let Some(src) = t.checked_sub(j * dilation) {
                            for (i, row) in tap.iter().enumerate() {
                                acc += row[o] * x[src][i];
                            }
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect()
}
