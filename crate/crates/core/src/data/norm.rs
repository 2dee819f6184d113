use serde::{Deserialize, Serialize};

use super::SeriesRecord;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelStats {
    pub mean: f64,
    pub std: f64,
}

impl ChannelStats {
    /// Population mean and standard deviation over all values.
    pub fn fit<'a>(name: &str, channels: impl Iterator<Item = &'a [f64]> + Clone) -> Result<Self> {
        let (mut n, mut sum) = (0usize, 0.0f64);
        for c in channels.clone() {
            n += c.len();
            sum += c.iter().sum::<f64>();
        }
        if n == 0 {
            return Err(Error::config(format!(
                "cannot fit normalization for {name}: no samples"
            )));
        }
        let mean = sum / n as f64;
        let var = channels
            .flat_map(|c| c.iter())
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / n as f64;
        let std = var.sqrt();
        if !(std > 0.0) || !std.is_finite() {
            return Err(Error::config(format!(
                "channel {name} has zero variance on the training split"
            )));
        }
        Ok(ChannelStats { mean, std })
    }

    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Per-channel z-score statistics, fitted on the training split only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormStats {
    pub mg_rpm: ChannelStats,
    pub ds_torque: ChannelStats,
}

impl NormStats {
    pub fn fit(train: &[SeriesRecord]) -> Result<Self> {
        Ok(NormStats {
            mg_rpm: ChannelStats::fit("mg_rpm", train.iter().map(|s| s.mg_rpm.as_slice()))?,
            ds_torque: ChannelStats::fit(
                "ds_torque",
                train.iter().map(|s| s.ds_torque.as_slice()),
            )?,
        })
    }

    pub fn apply(&self, s: &SeriesRecord) -> SeriesRecord {
        SeriesRecord {
            mg_rpm: s.mg_rpm.iter().map(|&v| self.mg_rpm.normalize(v)).collect(),
            ds_torque: s
                .ds_torque
                .iter()
                .map(|&v| self.ds_torque.normalize(v))
                .collect(),
            ..s.clone()
        }
    }

    pub fn invert(&self, s: &SeriesRecord) -> SeriesRecord {
        SeriesRecord {
            mg_rpm: s
                .mg_rpm
                .iter()
                .map(|&v| self.mg_rpm.denormalize(v))
                .collect(),
            ds_torque: s
                .ds_torque
                .iter()
                .map(|&v| self.ds_torque.denormalize(v))
                .collect(),
            ..s.clone()
        }
    }
}
