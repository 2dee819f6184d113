//! Synthetic torsional-drivetrain series, normalization and sliding-window
//! supervised pairs.

mod dataset;
mod norm;
mod simulator;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dataset::{
    generate_dataset, load_dataset, load_manifest, plan_dataset, series_seed, Dataset,
    DatasetConfig, Grid, Manifest, ManifestEntry, MANIFEST_FILE, MANIFEST_VERSION,
};
pub use norm::{ChannelStats, NormStats};
pub use simulator::{simulate_sequence, SimConstants};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotorPosition {
    Front,
    Rear,
}

impl fmt::Display for MotorPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MotorPosition::Front => "front",
            MotorPosition::Rear => "rear",
        })
    }
}

/// Parameters of one simulated series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimParams {
    /// Torsional shaft stiffness, N·m/rad.
    pub stiffness: f64,
    /// Brake onset, seconds from the start of the series.
    pub brake_time: f64,
    pub road_friction: f64,
    pub motor_position: MotorPosition,
    pub seed: u64,
}

impl SimParams {
    pub fn validate(&self, duration: f64) -> Result<()> {
        if !(self.stiffness > 0.0 && self.stiffness.is_finite()) {
            return Err(Error::config(format!(
                "stiffness must be positive, got {}",
                self.stiffness
            )));
        }
        if !(self.road_friction > 0.0 && self.road_friction <= 1.0) {
            return Err(Error::config(format!(
                "road friction {} outside (0, 1]",
                self.road_friction
            )));
        }
        if !(self.brake_time >= 0.0 && self.brake_time <= duration) {
            return Err(Error::config(format!(
                "brake time {} s outside the series duration {duration} s",
                self.brake_time
            )));
        }
        Ok(())
    }
}

/// One simulated series: motor speed (model input) and shaft torque (target).
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesRecord {
    pub series_id: String,
    pub params: SimParams,
    pub sample_rate: f64,
    pub mg_rpm: Vec<f64>,
    pub ds_torque: Vec<f64>,
}

impl SeriesRecord {
    pub fn len(&self) -> usize {
        self.mg_rpm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mg_rpm.is_empty()
    }
}

/// `x = mg_rpm[offset .. offset+L]`, `y = ds_torque[offset+L .. offset+L+T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowPair {
    pub series_id: String,
    pub offset: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// `⌊(len − L − T) / stride⌋ + 1`, or 0 when the series is shorter than `L + T`.
pub fn window_count(len: usize, input_len: usize, horizon: usize, stride: usize) -> usize {
    match len.checked_sub(input_len + horizon) {
        Some(room) if stride > 0 => room / stride + 1,
        _ => 0,
    }
}

/// Window start offsets `0, stride, 2·stride, …`.
pub fn window_offsets(
    len: usize,
    input_len: usize,
    horizon: usize,
    stride: usize,
) -> Result<Vec<usize>> {
    if stride == 0 {
        return Err(Error::config("window stride must be ≥ 1"));
    }
    if input_len == 0 || horizon == 0 {
        return Err(Error::config("window input length and horizon must be ≥ 1"));
    }
    Ok((0..window_count(len, input_len, horizon, stride))
        .map(|i| i * stride)
        .collect())
}

pub fn window_pairs(
    s: &SeriesRecord,
    input_len: usize,
    horizon: usize,
    stride: usize,
) -> Result<Vec<WindowPair>> {
    Ok(window_offsets(s.len(), input_len, horizon, stride)?
        .into_iter()
        .map(|o| WindowPair {
            series_id: s.series_id.clone(),
            offset: o,
            x: s.mg_rpm[o..o + input_len].to_vec(),
            y: s.ds_torque[o + input_len..o + input_len + horizon].to_vec(),
        })
        .collect())
}
