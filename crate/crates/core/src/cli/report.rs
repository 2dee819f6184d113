//! Benchmark tables: one row per model, one column per horizon (longest
//! first), best cell in bold and second-best underlined per column.

use std::collections::HashMap;

use crate::model::ModelKind;
use crate::train::MetricsRow;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mark {
    None,
    Best,
    Second,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Mae,
    Mse,
    EpochSeconds,
}

impl Metric {
    fn title(self) -> &'static str {
        match self {
            Metric::Mae => "MAE",
            Metric::Mse => "MSE",
            Metric::EpochSeconds => "Seconds per epoch",
        }
    }

    fn of(self, r: &MetricsRow) -> f64 {
        match self {
            Metric::Mae => r.mae,
            Metric::Mse => r.mse,
            Metric::EpochSeconds => r.epoch_seconds,
        }
    }
}

/// A rendered metric grid; `cells[row][col]` is `None` for missing results.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub metric: Metric,
    pub models: Vec<ModelKind>,
    pub horizons: Vec<usize>,
    pub cells: Vec<Vec<Option<(f64, Mark)>>>,
}

/// Mark the smallest value in each column as best and the next distinct
/// value as second. Equal values share a mark.
pub fn mark_column(values: &[Option<f64>]) -> Vec<Mark> {
    let mut distinct: Vec<f64> = values
        .iter()
        .flatten()
        .copied()
        .filter(|v| v.is_finite())
        .collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    values
        .iter()
        .map(|v| match v {
            Some(v) if distinct.first() == Some(v) => Mark::Best,
            Some(v) if distinct.get(1) == Some(v) => Mark::Second,
            _ => Mark::None,
        })
        .collect()
}

pub fn build_table(
    metric: Metric,
    models: &[ModelKind],
    horizons: &[usize],
    rows: &[MetricsRow],
) -> Table {
    let mut horizons = horizons.to_vec();
    horizons.sort_unstable_by(|a, b| b.cmp(a));
    horizons.dedup();
    let lookup: HashMap<(ModelKind, usize), f64> = rows
        .iter()
        .map(|r| ((r.model, r.horizon), metric.of(r)))
        .collect();
    let mut cells = vec![vec![None; horizons.len()]; models.len()];
    for (c, &h) in horizons.iter().enumerate() {
        let column: Vec<Option<f64>> = models
            .iter()
            .map(|&m| lookup.get(&(m, h)).copied())
            .collect();
        let marks = if metric == Metric::EpochSeconds {
            vec![Mark::None; models.len()]
        } else {
            mark_column(&column)
        };
        for (r, (v, mark)) in column.into_iter().zip(marks).enumerate() {
            cells[r][c] = v.map(|v| (v, mark));
        }
    }
    Table {
        metric,
        models: models.to_vec(),
        horizons,
        cells,
    }
}

impl Table {
    pub fn missing(&self) -> usize {
        self.cells.iter().flatten().filter(|c| c.is_none()).count()
    }

    /// Markdown table; best is `**bold**`, second is `<u>underlined</u>`,
    /// missing cells read `missing`.
    pub fn render(&self) -> String {
        let decimals = if self.metric == Metric::EpochSeconds {
            2
        } else {
            3
        };
        let header: Vec<String> = std::iter::once("Model".to_string())
            .chain(self.horizons.iter().enumerate().map(|(i, h)| {
                if i == 0 {
                    format!("T={h}")
                } else {
                    h.to_string()
                }
            }))
            .collect();
        let mut rows = vec![header];
        for (m, cells) in self.models.iter().zip(&self.cells) {
            let mut row = vec![m.label().to_string()];
            for cell in cells {
                row.push(match cell {
                    None => "missing".to_string(),
                    Some((v, Mark::Best)) => format!("**{v:.decimals$}**"),
                    Some((v, Mark::Second)) => format!("<u>{v:.decimals$}</u>"),
                    Some((v, Mark::None)) => format!("{v:.decimals$}"),
                });
            }
            rows.push(row);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let line = |r: &[String]| {
            let cols: Vec<String> = r
                .iter()
                .zip(&widths)
                .map(|(s, w)| format!("{s:<w$}"))
                .collect();
            format!("| {} |\n", cols.join(" | "))
        };
        let mut out = format!("{}\n\n", self.metric.title());
        out.push_str(&line(&rows[0]));
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        out.push_str(&format!("| {} |\n", rule.join(" | ")));
        for r in &rows[1..] {
            out.push_str(&line(r));
        }
        if self.missing() > 0 {
            out.push_str(&format!(
                "\n{} cell(s) missing: no checkpoint for that model and horizon.\n",
                self.missing()
            ));
        }
        out
    }
}
