use std::fs;
use std::path::{Path, PathBuf};

use super::plot::{render, ForecastPlot};
use super::report::{build_table, Metric};
use super::{create_dir, RunConfig};
use crate::data::{
    generate_dataset, load_dataset, Dataset, NormStats, SeriesRecord, MANIFEST_FILE,
};
use crate::error::{Error, Result};
use crate::model::{Checkpoint, Model, ModelKind};
use crate::tensor::Tensor;
use crate::train::{
    evaluate, train, write_history_csv, write_metrics, EpochRecord, ErrorSums, MetricsRow,
    WindowSet,
};

const EVAL_BATCH: usize = 256;

/// Simulate the configured grids into the data directory.
pub fn cmd_generate(cfg: &RunConfig, force: bool) -> Result<PathBuf> {
    let dir = cfg.data_dir();
    create_dir(&dir)?;
    generate_dataset(&cfg.dataset, &dir, force)?;
    Ok(dir.join(MANIFEST_FILE))
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub checkpoint: PathBuf,
    pub history_csv: PathBuf,
    pub history: Vec<EpochRecord>,
    pub test: ErrorSums,
    pub epoch_seconds: f64,
    pub aborted: Option<String>,
}

fn test_windows(
    cfg: &RunConfig,
    data: &Dataset,
    stats: &NormStats,
    horizon: usize,
) -> Result<WindowSet> {
    let ws = WindowSet::new(
        &data.test,
        stats,
        cfg.model_config.input_len,
        horizon,
        cfg.eval_stride,
    )?;
    if ws.is_empty() {
        return Err(Error::config(format!(
            "test series of {} samples are shorter than L + T = {}",
            data.test.first().map_or(0, |s| s.len()),
            cfg.model_config.input_len + horizon
        )));
    }
    Ok(ws)
}

fn train_on(cfg: &RunConfig, data: &Dataset, kind: ModelKind) -> Result<TrainReport> {
    let mc = &cfg.model_config;
    let stats = NormStats::fit(&data.train)?;
    let windows = WindowSet::new(
        &data.train,
        &stats,
        mc.input_len,
        mc.horizon,
        cfg.train.stride,
    )?;
    if windows.is_empty() {
        return Err(Error::config(format!(
            "training series of {} samples are shorter than L + T = {}",
            data.train.first().map_or(0, |s| s.len()),
            mc.input_len + mc.horizon
        )));
    }
    let model = Model::init(kind, mc, cfg.seed)?;
    let outcome = train(model, &windows, &cfg.train)?;
    let test = evaluate(
        &outcome.model,
        &test_windows(cfg, data, &stats, mc.horizon)?,
        EVAL_BATCH,
    )?;

    let checkpoint = cfg.checkpoint_path(kind, mc.horizon);
    let history = cfg.history_path(kind, mc.horizon);
    for p in [&checkpoint, &history] {
        create_dir(p.parent().expect("artifact paths have a parent"))?;
    }
    Checkpoint::from_model(&outcome.model, stats).save(&checkpoint)?;
    write_history_csv(&history, &outcome.history)?;
    Ok(TrainReport {
        checkpoint,
        history_csv: history,
        epoch_seconds: outcome.mean_epoch_seconds(),
        history: outcome.history,
        test,
        aborted: outcome.aborted,
    })
}

/// Train `cfg.model` at `cfg.model_config.horizon` and save checkpoint and
/// loss history. An aborted run still saves its last good checkpoint and
/// reports the reason in `aborted`.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainReport> {
    let data = load_dataset(&cfg.data_dir())?;
    train_on(cfg, &data, cfg.model)
}

#[derive(Clone, Debug)]
pub struct BenchmarkReport {
    pub rows: Vec<MetricsRow>,
    pub missing: Vec<(ModelKind, usize)>,
    /// MAE, MSE and seconds-per-epoch tables.
    pub text: String,
    pub artifacts: Vec<PathBuf>,
}

fn mean_epoch_seconds(history: &Path) -> Result<f64> {
    let mut r = csv::Reader::from_path(history)
        .map_err(|e| Error::format(history.display().to_string(), e.to_string()))?;
    let mut secs = Vec::new();
    for row in r.deserialize::<(usize, f64, f64, f64)>() {
        let (_, _, _, s) =
            row.map_err(|e| Error::format(history.display().to_string(), e.to_string()))?;
        secs.push(s);
    }
    Ok(if secs.is_empty() {
        0.0
    } else {
        secs.iter().sum::<f64>() / secs.len() as f64
    })
}

fn evaluate_checkpoint(
    cfg: &RunConfig,
    data: &Dataset,
    path: &Path,
    kind: ModelKind,
    horizon: usize,
) -> Result<(ErrorSums, f64)> {
    let ckpt = Checkpoint::load(path)?;
    if ckpt.kind != kind
        || ckpt.config.horizon != horizon
        || ckpt.config.input_len != cfg.model_config.input_len
    {
        return Err(Error::format(
            path.display().to_string(),
            format!(
                "checkpoint holds {} with L={} T={}, expected {} with L={} T={horizon}",
                ckpt.kind,
                ckpt.config.input_len,
                ckpt.config.horizon,
                kind,
                cfg.model_config.input_len
            ),
        ));
    }
    let model = ckpt.to_model()?;
    let sums = evaluate(
        &model,
        &test_windows(cfg, data, &ckpt.stats, horizon)?,
        EVAL_BATCH,
    )?;
    let history = cfg.history_path(kind, horizon);
    let secs = if history.exists() {
        mean_epoch_seconds(&history)?
    } else {
        0.0
    };
    Ok((sums, secs))
}

/// Fill the model × horizon grid from saved checkpoints. The parameter-free
/// Zero model needs none. Missing cells are trained when `train_missing`
/// is set and otherwise left as flagged gaps.
pub fn cmd_benchmark(cfg: &RunConfig, train_missing: bool) -> Result<BenchmarkReport> {
    let data = load_dataset(&cfg.data_dir())?;
    let stats = NormStats::fit(&data.train)?;
    let mut rows = Vec::new();
    let mut missing = Vec::new();
    for &kind in &cfg.models {
        for &h in &cfg.horizons {
            let path = cfg.checkpoint_path(kind, h);
            let cell = if path.exists() {
                Some(evaluate_checkpoint(cfg, &data, &path, kind, h)?)
            } else if kind == ModelKind::Zero {
                let model = Model::init(kind, &cfg.with_horizon(h).model_config, cfg.seed)?;
                Some((
                    evaluate(&model, &test_windows(cfg, &data, &stats, h)?, EVAL_BATCH)?,
                    0.0,
                ))
            } else if train_missing {
                let r = train_on(&cfg.with_horizon(h), &data, kind)?;
                if let Some(reason) = r.aborted {
                    return Err(Error::Training(format!("{} T={h}: {reason}", kind.label())));
                }
                Some((r.test, r.epoch_seconds))
            } else {
                None
            };
            match cell {
                Some((sums, epoch_seconds)) => rows.push(MetricsRow {
                    model: kind,
                    horizon: h,
                    mae: sums.mae(),
                    mse: sums.mse(),
                    epoch_seconds,
                }),
                None => missing.push((kind, h)),
            }
        }
    }

    let text = [Metric::Mae, Metric::Mse, Metric::EpochSeconds]
        .into_iter()
        .map(|m| build_table(m, &cfg.models, &cfg.horizons, &rows).render())
        .collect::<Vec<_>>()
        .join("\n");
    create_dir(&cfg.out)?;
    let csv = cfg.out.join("metrics.csv");
    let json = cfg.out.join("metrics.json");
    let txt = cfg.out.join("benchmark.txt");
    write_metrics(&csv, &json, &rows)?;
    fs::write(&txt, &text).map_err(|e| Error::io(&txt, e))?;
    Ok(BenchmarkReport {
        rows,
        missing,
        text,
        artifacts: vec![csv, json, txt],
    })
}

#[derive(Clone, Debug, Default)]
pub struct PredictArgs {
    pub checkpoint: Option<PathBuf>,
    pub series: Option<String>,
    pub offset: usize,
}

#[derive(Clone, Debug)]
pub struct PredictReport {
    pub csv: PathBuf,
    pub svg: PathBuf,
    /// Denormalized forecast, `T` values.
    pub prediction: Vec<f64>,
}

fn find_series<'a>(data: &'a Dataset, id: Option<&str>) -> Result<&'a SeriesRecord> {
    match id {
        None => data
            .test
            .first()
            .ok_or_else(|| Error::config("dataset has no test series")),
        Some(id) => data
            .test
            .iter()
            .chain(&data.train)
            .find(|s| s.series_id == id)
            .ok_or_else(|| Error::config(format!("no series '{id}' in {}", data.root.display()))),
    }
}

/// Forecast the window starting at `offset` and write `t,truth,prediction`
/// (L + T rows, prediction empty over the input window) plus an SVG plot.
pub fn cmd_predict(cfg: &RunConfig, args: &PredictArgs) -> Result<PredictReport> {
    let path = args
        .checkpoint
        .clone()
        .unwrap_or_else(|| cfg.checkpoint_path(cfg.model, cfg.model_config.horizon));
    let ckpt = Checkpoint::load(&path)?;
    let model = ckpt.to_model()?;
    let (l, t) = (ckpt.config.input_len, ckpt.config.horizon);
    let data = load_dataset(&cfg.data_dir())?;
    let series = find_series(&data, args.series.as_deref())?;
    if args.offset + l + t > series.len() {
        return Err(Error::config(format!(
            "offset {} out of range: window of {} samples does not fit series '{}' of {} samples (max offset {})",
            args.offset,
            l + t,
            series.series_id,
            series.len(),
            series.len().saturating_sub(l + t)
        )));
    }
    let range = args.offset..args.offset + l + t;
    let x: Vec<f32> = series.mg_rpm[args.offset..args.offset + l]
        .iter()
        .map(|&v| ckpt.stats.mg_rpm.normalize(v) as f32)
        .collect();
    let pred = model.predict(&Tensor::new(vec![l], x)?)?;
    let prediction: Vec<f64> = pred
        .data()
        .iter()
        .map(|&z| ckpt.stats.ds_torque.denormalize(z as f64))
        .collect();

    let times: Vec<f64> = range
        .clone()
        .map(|i| i as f64 / series.sample_rate)
        .collect();
    let truth = &series.ds_torque[range.clone()];
    let mut text = String::from("t,truth,prediction\n");
    for (i, (&ti, &yi)) in times.iter().zip(truth).enumerate() {
        match i.checked_sub(l) {
            Some(j) => text.push_str(&format!("{ti},{yi},{}\n", prediction[j])),
            None => text.push_str(&format!("{ti},{yi},\n")),
        }
    }

    let dir = cfg.out.join("predictions");
    create_dir(&dir)?;
    let stem = format!(
        "{}_T{t}_{}_{}",
        ckpt.kind.name(),
        series.series_id,
        args.offset
    );
    let csv = dir.join(format!("{stem}.csv"));
    let svg = dir.join(format!("{stem}.svg"));
    fs::write(&csv, text).map_err(|e| Error::io(&csv, e))?;
    let title = format!(
        "{} forecast, {} from t = {:.2} s, L = {l}, T = {t}",
        ckpt.kind.label(),
        series.series_id,
        times[0]
    );
    let plot = ForecastPlot {
        title: &title,
        t: &times,
        input: &series.mg_rpm[args.offset..args.offset + l],
        truth,
        prediction: &prediction,
    };
    fs::write(&svg, render(&plot)).map_err(|e| Error::io(&svg, e))?;
    Ok(PredictReport {
        csv,
        svg,
        prediction,
    })
}
