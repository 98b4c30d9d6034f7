//! Per-trial rows, per-sweep-point aggregates and their CSV form.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 7] = ["trial", "sweep_value", "regret", "optimal_value", "achieved_value", "bound", "seed"];

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub trial: usize,
    pub sweep_value: Option<f64>,
    pub regret: f64,
    pub optimal_value: f64,
    pub achieved_value: f64,
    pub bound: Option<f64>,
    pub seed: u64,
    /// Not written to CSV, so reruns stay byte-identical.
    pub wall_time: f64,
    /// Environment-specific extras, reported as summary means.
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub sweep_value: Option<f64>,
    pub trials: usize,
    pub mean: f64,
    /// Sample standard deviation (`n - 1`), 0 for one trial.
    pub std: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub mean_optimal: f64,
    pub mean_achieved: f64,
    /// Largest bound across the point's trials.
    pub bound: Option<f64>,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegretReport {
    pub rows: Vec<TrialRow>,
    pub summaries: Vec<SweepSummary>,
}

fn same_point(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => x.to_bits() == y.to_bits(),
        (None, None) => true,
        _ => false,
    }
}

fn summarize(value: Option<f64>, rows: &[&TrialRow]) -> SweepSummary {
    let n = rows.len() as f64;
    let mean = rows.iter().map(|r| r.regret).sum::<f64>() / n;
    let std = if rows.len() > 1 {
        (rows.iter().map(|r| (r.regret - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let half = 1.96 * std / n.sqrt();
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in rows {
        for (key, v) in &r.metrics {
            let e = sums.entry(key.clone()).or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    SweepSummary {
        sweep_value: value,
        trials: rows.len(),
        mean,
        std,
        ci95_low: mean - half,
        ci95_high: mean + half,
        mean_optimal: rows.iter().map(|r| r.optimal_value).sum::<f64>() / n,
        mean_achieved: rows.iter().map(|r| r.achieved_value).sum::<f64>() / n,
        bound: rows.iter().filter_map(|r| r.bound).reduce(f64::max),
        metrics: sums.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect(),
    }
}

impl RegretReport {
    /// Aggregates rows per sweep value, in order of first appearance.
    pub fn from_rows(rows: Vec<TrialRow>) -> Self {
        let mut keys: Vec<Option<f64>> = Vec::new();
        for r in &rows {
            if !keys.iter().any(|k| same_point(*k, r.sweep_value)) {
                keys.push(r.sweep_value);
            }
        }
        let summaries = keys
            .into_iter()
            .map(|k| {
                let group: Vec<&TrialRow> = rows.iter().filter(|r| same_point(r.sweep_value, k)).collect();
                summarize(k, &group)
            })
            .collect();
        Self { rows, summaries }
    }

    pub fn summary_for(&self, value: Option<f64>) -> Option<&SweepSummary> {
        self.summaries.iter().find(|s| same_point(s.sweep_value, value))
    }

    /// Metric names present in any summary.
    fn metric_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.summaries.iter().flat_map(|s| s.metrics.keys().cloned()).collect();
        names.sort();
        names.dedup();
        names
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `results/run.csv` becomes `results/run.summary.csv`.
pub fn summary_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.summary.csv"))
}

fn csv_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Csv { path: path.to_owned(), detail: e.to_string() }
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_owned(), source })?;
    }
    let file = File::create(path).map_err(|source| Error::Io { path: path.to_owned(), source })?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

/// Writes the per-trial CSV at `path` and the aggregates next to it.
pub fn emit_csv(report: &RegretReport, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(CSV_HEADER).map_err(|e| csv_error(path, e))?;
    for r in &report.rows {
        w.write_record([
            r.trial.to_string(),
            opt(r.sweep_value),
            r.regret.to_string(),
            r.optimal_value.to_string(),
            r.achieved_value.to_string(),
            opt(r.bound),
            r.seed.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|source| Error::Io { path: path.to_owned(), source })?;

    let spath = summary_path(path);
    let mut w = create(&spath)?;
    let metrics = report.metric_names();
    let mut header: Vec<String> =
        ["sweep_value", "trials", "mean", "std", "ci95_low", "ci95_high", "mean_optimal", "mean_achieved", "bound"]
            .iter()
            .map(|s| s.to_string())
            .collect();
    header.extend(metrics.iter().map(|m| format!("mean_{m}")));
    w.write_record(&header).map_err(|e| csv_error(&spath, e))?;
    for s in &report.summaries {
        let mut rec = vec![
            opt(s.sweep_value),
            s.trials.to_string(),
            s.mean.to_string(),
            s.std.to_string(),
            s.ci95_low.to_string(),
            s.ci95_high.to_string(),
            s.mean_optimal.to_string(),
            s.mean_achieved.to_string(),
            opt(s.bound),
        ];
        rec.extend(metrics.iter().map(|m| opt(s.metrics.get(m).copied())));
        w.write_record(&rec).map_err(|e| csv_error(&spath, e))?;
    }
    w.flush().map_err(|source| Error::Io { path: spath.clone(), source })?;
    Ok(())
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, name: &str, raw: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse().map_err(|e| Error::Parse { path: path.to_owned(), detail: format!("line {line}, {name}: {e}") })
}

fn optional(path: &Path, line: usize, name: &str, raw: &str) -> Result<Option<f64>> {
    if raw.is_empty() {
        Ok(None)
    } else {
        field(path, line, name, raw).map(Some)
    }
}

/// Reads a per-trial CSV written by [`emit_csv`] and recomputes the aggregates.
pub fn read_csv(path: &Path) -> Result<RegretReport> {
    let file = File::open(path).map_err(|source| Error::Io { path: path.to_owned(), source })?;
    let mut reader = csv::Reader::from_reader(file);
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Parse { path: path.to_owned(), detail: format!("unexpected header {header:?}") });
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = i + 2;
        rows.push(TrialRow {
            trial: field(path, line, "trial", &rec[0])?,
            sweep_value: optional(path, line, "sweep_value", &rec[1])?,
            regret: field(path, line, "regret", &rec[2])?,
            optimal_value: field(path, line, "optimal_value", &rec[3])?,
            achieved_value: field(path, line, "achieved_value", &rec[4])?,
            bound: optional(path, line, "bound", &rec[5])?,
            seed: field(path, line, "seed", &rec[6])?,
            wall_time: 0.0,
            metrics: BTreeMap::new(),
        });
    }
    Ok(RegretReport::from_rows(rows))
}
