use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{simulate_sequence, MotorPosition, SeriesRecord, SimConstants, SimParams};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

/// Cartesian parameter grid; series are enumerated stiffness-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub stiffness: Vec<f64>,
    pub brake_times: Vec<f64>,
    pub road_friction: Vec<f64>,
    pub motor_positions: Vec<MotorPosition>,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.stiffness.len()
            * self.brake_times.len()
            * self.road_friction.len()
            * self.motor_positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn combinations(&self) -> Vec<(f64, f64, f64, MotorPosition)> {
        let mut out = Vec::with_capacity(self.len());
        for &k in &self.stiffness {
            for &b in &self.brake_times {
                for &mu in &self.road_friction {
                    for &pos in &self.motor_positions {
                        out.push((k, b, mu, pos));
                    }
                }
            }
        }
        out
    }
}

const PAPER_TRAIN_STIFFNESS: [f64; 10] = [
    2662.0, 3771.2, 4880.3, 5989.5, 7542.3, 9095.2, 10648.0, 12644.7, 14641.3, 16638.0,
];
const PAPER_TEST_STIFFNESS: [f64; 3] = [1500.0, 6800.0, 18000.0];
const PAPER_BRAKE_TIMES: [f64; 20] = [
    2.1, 2.2, 2.3, 2.4, 2.5, 2.6, 2.7, 2.8, 2.9, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0,
    12.0, 13.0,
];
const PAPER_ROAD_FRICTION: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];
const BOTH_POSITIONS: [MotorPosition; 2] = [MotorPosition::Front, MotorPosition::Rear];

/// Everything needed to regenerate a dataset bit-for-bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub seed: u64,
    pub sample_rate: f64,
    pub duration: f64,
    #[serde(default)]
    pub constants: SimConstants,
    pub train: Grid,
    pub test: Grid,
}

impl DatasetConfig {
    /// Full parameter grid: 2,000 training and 600 test series of 20 s.
    pub fn paper() -> Self {
        let shared = |stiffness: &[f64]| Grid {
            stiffness: stiffness.to_vec(),
            brake_times: PAPER_BRAKE_TIMES.to_vec(),
            road_friction: PAPER_ROAD_FRICTION.to_vec(),
            motor_positions: BOTH_POSITIONS.to_vec(),
        };
        DatasetConfig {
            seed: 7,
            sample_rate: 100.0,
            duration: 20.0,
            constants: SimConstants::default(),
            train: shared(&PAPER_TRAIN_STIFFNESS),
            test: shared(&PAPER_TEST_STIFFNESS),
        }
    }

    /// Small grid for single-core runs: 40 training and 12 test series of 4 s.
    pub fn desk() -> Self {
        DatasetConfig {
            seed: 7,
            sample_rate: 100.0,
            duration: 4.0,
            constants: SimConstants::default(),
            train: Grid {
                stiffness: vec![2662.0, 16638.0],
                brake_times: vec![2.1, 2.2, 2.3, 2.4, 2.5],
                road_friction: vec![0.6, 1.0],
                motor_positions: BOTH_POSITIONS.to_vec(),
            },
            test: Grid {
                stiffness: PAPER_TEST_STIFFNESS.to_vec(),
                brake_times: vec![2.2, 2.4],
                road_friction: vec![0.6],
                motor_positions: BOTH_POSITIONS.to_vec(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train.is_empty() || self.test.is_empty() {
            return Err(Error::config("train and test grids must both be non-empty"));
        }
        if let Some(k) = self
            .test
            .stiffness
            .iter()
            .find(|k| self.train.stiffness.contains(k))
        {
            return Err(Error::config(format!(
                "stiffness {k} appears in both train and test grids; the splits must differ in stiffness"
            )));
        }
        self.constants.validate()
    }

    pub fn samples_per_series(&self) -> usize {
        (self.duration * self.sample_rate).round() as usize
    }
}

/// Deterministic per-series seed (splitmix64 over base seed, split and index).
pub fn series_seed(base: u64, split: &str, index: usize) -> u64 {
    let tag = split
        .bytes()
        .fold(0u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64));
    let mut z = base ^ tag.rotate_left(32) ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn plan_split(cfg: &DatasetConfig, grid: &Grid, split: &str) -> Result<Vec<(String, SimParams)>> {
    grid.combinations()
        .into_iter()
        .enumerate()
        .map(
            |(i, (stiffness, brake_time, road_friction, motor_position))| {
                let p = SimParams {
                    stiffness,
                    brake_time,
                    road_friction,
                    motor_position,
                    seed: series_seed(cfg.seed, split, i),
                };
                p.validate(cfg.duration)?;
                Ok((format!("{split}_{i:04}"), p))
            },
        )
        .collect()
}

/// Series ids and parameters for both splits, without simulating anything.
#[allow(clippy::type_complexity)]
pub fn plan_dataset(
    cfg: &DatasetConfig,
) -> Result<(Vec<(String, SimParams)>, Vec<(String, SimParams)>)> {
    cfg.validate()?;
    Ok((
        plan_split(cfg, &cfg.train, "train")?,
        plan_split(cfg, &cfg.test, "test")?,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    /// Path of the CSV relative to the manifest.
    pub file: String,
    pub samples: usize,
    pub params: SimParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub seed: u64,
    pub sample_rate: f64,
    pub duration: f64,
    pub constants: SimConstants,
    pub train_grid: Grid,
    pub test_grid: Grid,
    pub train: Vec<ManifestEntry>,
    pub test: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn config(&self) -> DatasetConfig {
        DatasetConfig {
            seed: self.seed,
            sample_rate: self.sample_rate,
            duration: self.duration,
            constants: self.constants.clone(),
            train: self.train_grid.clone(),
            test: self.test_grid.clone(),
        }
    }
}

fn write_series(path: &Path, s: &SeriesRecord) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["t", "mg_rpm", "ds_torque"])
        .map_err(|e| csv_error(path, e))?;
    for (i, (mg, ds)) in s.mg_rpm.iter().zip(&s.ds_torque).enumerate() {
        w.serialize((i as f64 / s.sample_rate, mg, ds))
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_series(path: &Path, entry: &ManifestEntry, sample_rate: f64) -> Result<SeriesRecord> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?;
    if header != vec!["t", "mg_rpm", "ds_torque"] {
        return Err(Error::format(
            path.display().to_string(),
            format!("unexpected CSV header {header:?}"),
        ));
    }
    let (mut mg_rpm, mut ds_torque) = (
        Vec::with_capacity(entry.samples),
        Vec::with_capacity(entry.samples),
    );
    for row in r.deserialize::<(f64, f64, f64)>() {
        let (_, mg, ds) = row.map_err(|e| csv_error(path, e))?;
        mg_rpm.push(mg);
        ds_torque.push(ds);
    }
    if mg_rpm.len() != entry.samples {
        return Err(Error::format(
            path.display().to_string(),
            format!("{} rows, manifest says {}", mg_rpm.len(), entry.samples),
        ));
    }
    Ok(SeriesRecord {
        series_id: entry.id.clone(),
        params: entry.params.clone(),
        sample_rate,
        mg_rpm,
        ds_torque,
    })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path.display().to_string(), format!("{other:?}")),
    }
}

fn is_non_empty_dir(dir: &Path) -> bool {
    fs::read_dir(dir)
        .map(|mut d| d.next().is_some())
        .unwrap_or(false)
}

/// Simulate every series and write `train/*.csv`, `test/*.csv` and
/// `manifest.json` under `out_dir`.
pub fn generate_dataset(cfg: &DatasetConfig, out_dir: &Path, force: bool) -> Result<Manifest> {
    let (train_plan, test_plan) = plan_dataset(cfg)?;
    if is_non_empty_dir(out_dir) && !force {
        return Err(Error::config(format!(
            "output directory {} is not empty (use --force to overwrite)",
            out_dir.display()
        )));
    }
    let mut entries = [Vec::new(), Vec::new()];
    for (slot, (split, plan)) in entries
        .iter_mut()
        .zip([("train", &train_plan), ("test", &test_plan)])
    {
        let dir = out_dir.join(split);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (id, p) in plan {
            let s = simulate_sequence(id, p, &cfg.constants, cfg.duration, cfg.sample_rate)?;
            let file = format!("{split}/{id}.csv");
            write_series(&out_dir.join(&file), &s)?;
            slot.push(ManifestEntry {
                id: id.clone(),
                file,
                samples: s.len(),
                params: p.clone(),
            });
        }
    }
    let [train, test] = entries;
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        seed: cfg.seed,
        sample_rate: cfg.sample_rate,
        duration: cfg.duration,
        constants: cfg.constants.clone(),
        train_grid: cfg.train.clone(),
        test_grid: cfg.test.clone(),
        train,
        test,
    };
    let path = out_dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// A manifest plus its loaded (raw, unnormalized) series.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub train: Vec<SeriesRecord>,
    pub test: Vec<SeriesRecord>,
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::format(
            "version",
            format!(
                "manifest version {} (expected {MANIFEST_VERSION})",
                manifest.version
            ),
        ));
    }
    Ok(manifest)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = load_manifest(dir)?;
    let load = |entries: &[ManifestEntry]| -> Result<Vec<SeriesRecord>> {
        entries
            .iter()
            .map(|e| read_series(&dir.join(&e.file), e, manifest.sample_rate))
            .collect()
    };
    let train = load(&manifest.train)?;
    let test = load(&manifest.test)?;
    Ok(Dataset {
        root: dir.to_path_buf(),
        manifest,
        train,
        test,
    })
}
