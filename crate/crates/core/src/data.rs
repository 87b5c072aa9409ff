//! Hourly series ingestion, min-max scaling, sliding windows and fold splits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDateTime, Timelike};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CaretsError, Result};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Scaler column names; lag features and targets share the `value` column.
pub const FEATURE_COLUMNS: [&str; 4] = ["month", "weekday", "hour", "value"];

/// Number of calendar features preceding the lags in every input window.
pub const CALENDAR_FEATURES: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesRecord {
    pub timestamp: NaiveDateTime,
    pub value: f64,
}

impl SeriesRecord {
    /// Raw calendar features `(month, weekday, hour)` with Monday = 0.
    pub fn calendar(&self) -> [f64; 3] {
        [
            self.timestamp.month() as f64,
            self.timestamp.weekday().num_days_from_monday() as f64,
            self.timestamp.hour() as f64,
        ]
    }
}

/// Reads a `timestamp,value` CSV from disk.
pub fn load_series(path: impl AsRef<Path>) -> Result<Vec<SeriesRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| CaretsError::io(path, e))?;
    parse_series(file)
}

/// Parses a `timestamp,value` CSV. Row numbers in errors are 1-based file
/// lines, so the first data row is row 2.
pub fn parse_series(reader: impl Read) -> Result<Vec<SeriesRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| CaretsError::Parse {
        row: 1,
        message: e.to_string(),
    })?;
    if headers.len() != 2 || &headers[0] != "timestamp" || &headers[1] != "value" {
        return Err(CaretsError::Parse {
            row: 1,
            message: format!("expected header `timestamp,value`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| CaretsError::Parse {
            row,
            message: e.to_string(),
        })?;
        if rec.len() != 2 {
            return Err(CaretsError::Parse {
                row,
                message: format!("expected 2 fields, found {}", rec.len()),
            });
        }
        let timestamp =
            NaiveDateTime::parse_from_str(&rec[0], TIMESTAMP_FORMAT).map_err(|e| {
                CaretsError::Parse {
                    row,
                    message: format!("bad timestamp `{}`: {e}", &rec[0]),
                }
            })?;
        let value: f64 = rec[1].parse().map_err(|_| CaretsError::Parse {
            row,
            message: format!("bad value `{}`", &rec[1]),
        })?;
        if !value.is_finite() {
            return Err(CaretsError::Parse {
                row,
                message: format!("non-finite value `{}`", &rec[1]),
            });
        }
        rows.push((row, SeriesRecord { timestamp, value }));
    }

    rows.sort_by_key(|(_, r)| r.timestamp);
    for pair in rows.windows(2) {
        let expected = pair[0].1.timestamp + Duration::hours(1);
        if pair[1].1.timestamp != expected {
            return Err(CaretsError::Continuity {
                row: pair[1].0,
                expected: expected.format(TIMESTAMP_FORMAT).to_string(),
                found: pair[1].1.timestamp.format(TIMESTAMP_FORMAT).to_string(),
            });
        }
    }
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

pub fn write_series(path: impl AsRef<Path>, series: &[SeriesRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("timestamp,value\n");
    for r in series {
        let _ = writeln!(out, "{},{}", r.timestamp.format(TIMESTAMP_FORMAT), r.value);
    }
    std::fs::write(path, out).map_err(|e| CaretsError::io(path, e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalerColumn {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

impl ScalerColumn {
    pub fn is_constant(&self) -> bool {
        self.max == self.min
    }

    pub fn apply(&self, v: f64) -> f64 {
        if self.is_constant() {
            0.0
        } else {
            (v - self.min) / (self.max - self.min)
        }
    }

    pub fn invert(&self, v: f64) -> f64 {
        if self.is_constant() {
            self.min
        } else {
            v * (self.max - self.min) + self.min
        }
    }
}

/// Per-column min-max parameters. Values outside the fitted range are mapped
/// linearly, without clipping.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalerParams {
    pub columns: Vec<ScalerColumn>,
}

/// Fits min/max per named column.
pub fn fit_scaler(columns: &[(&str, &[f64])]) -> Result<ScalerParams> {
    let mut out = Vec::with_capacity(columns.len());
    for (name, values) in columns {
        if values.is_empty() {
            return Err(CaretsError::Empty("scaler column"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CaretsError::NonFinite(format!("scaler column `{name}`")));
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        out.push(ScalerColumn {
            name: name.to_string(),
            min,
            max,
        });
    }
    Ok(ScalerParams { columns: out })
}

/// Scales one row holding a value per column.
pub fn apply_scaler(values: &[f64], params: &ScalerParams) -> Result<Vec<f64>> {
    params.check_width(values.len())?;
    Ok(values
        .iter()
        .zip(&params.columns)
        .map(|(v, c)| c.apply(*v))
        .collect())
}

/// Inverse of [`apply_scaler`]; constant columns map back to their stored value.
pub fn invert_scaler(values: &[f64], params: &ScalerParams) -> Result<Vec<f64>> {
    params.check_width(values.len())?;
    Ok(values
        .iter()
        .zip(&params.columns)
        .map(|(v, c)| c.invert(*v))
        .collect())
}

impl ScalerParams {
    fn check_width(&self, n: usize) -> Result<()> {
        if n != self.columns.len() {
            return Err(CaretsError::Dimension(format!(
                "scaler has {} columns, got {n} values",
                self.columns.len()
            )));
        }
        Ok(())
    }

    pub fn column(&self, name: &str) -> Result<&ScalerColumn> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| CaretsError::Config(format!("scaler has no column `{name}`")))
    }

    /// Key-value text: a `columns` line, then `<name>.min` / `<name>.max`.
    pub fn to_kv(&self) -> String {
        let names: Vec<&str> = self.columns.iter().map(|c| c.name.as_str()).collect();
        let mut out = format!("columns = {}\n", names.join(","));
        for c in &self.columns {
            let _ = writeln!(out, "{}.min = {}", c.name, c.min);
            let _ = writeln!(out, "{}.max = {}", c.name, c.max);
        }
        out
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let map = crate::kv::parse(text)?;
        let names = map
            .get("columns")
            .ok_or_else(|| CaretsError::Config("scaler file lacks `columns`".into()))?;
        let get = |key: String| -> Result<f64> {
            map.get(&key)
                .ok_or_else(|| CaretsError::Config(format!("scaler file lacks `{key}`")))?
                .parse()
                .map_err(|_| CaretsError::Config(format!("scaler `{key}` is not a number")))
        };
        let mut columns = Vec::new();
        for name in names.split(',').map(str::trim) {
            columns.push(ScalerColumn {
                name: name.to_string(),
                min: get(format!("{name}.min"))?,
                max: get(format!("{name}.max"))?,
            });
        }
        Ok(Self { columns })
    }

    /// Maps scaled target-variable values back to native units.
    pub fn invert_values(&self, values: &[f64]) -> Result<Vec<f64>> {
        let col = self.column("value")?;
        Ok(values.iter().map(|v| col.invert(*v)).collect())
    }
}

/// Fits the scaler on raw calendar features and values of `records`.
pub fn fit_feature_scaler(records: &[SeriesRecord]) -> Result<ScalerParams> {
    let mut cols: [Vec<f64>; 4] = Default::default();
    for r in records {
        for (c, v) in cols.iter_mut().zip(r.calendar()) {
            c.push(v);
        }
        cols[3].push(r.value);
    }
    let named: Vec<(&str, &[f64])> = FEATURE_COLUMNS
        .iter()
        .zip(cols.iter())
        .map(|(n, c)| (*n, c.as_slice()))
        .collect();
    fit_scaler(&named)
}

/// One supervised example; all quantities are in scaled units.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSample {
    /// `[month, weekday, hour, lag_{n-1}, ..., lag_0]`; the last entry is `x_n`.
    pub features: Vec<f64>,
    pub x_n: f64,
    pub targets: Vec<f64>,
    pub trend_labels: Vec<u8>,
    pub dev_abs: Vec<f64>,
    pub dev_up: Vec<f64>,
    pub dev_down: Vec<f64>,
}

impl WindowSample {
    /// Assembles a sample from its features and targets, deriving labels and
    /// deviations.
    pub fn from_parts(features: Vec<f64>, targets: Vec<f64>) -> Self {
        let x_n = *features.last().expect("features must be non-empty");
        let trend_labels = make_trend_labels(&targets, x_n);
        let dev = make_deviation_targets(&targets, x_n);
        Self {
            features,
            x_n,
            targets,
            trend_labels,
            dev_abs: dev.abs,
            dev_up: dev.up,
            dev_down: dev.down,
        }
    }

    pub fn horizon(&self) -> usize {
        self.targets.len()
    }
}

/// `1` where the future value is at or above `x_n` (ties count as upward).
pub fn make_trend_labels(y: &[f64], x_n: f64) -> Vec<u8> {
    y.iter().map(|v| u8::from(*v >= x_n)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeviationTargets {
    pub abs: Vec<f64>,
    pub up: Vec<f64>,
    pub down: Vec<f64>,
}

pub fn make_deviation_targets(y: &[f64], x_n: f64) -> DeviationTargets {
    DeviationTargets {
        abs: y.iter().map(|v| (v - x_n).abs()).collect(),
        up: y.iter().map(|v| (v - x_n).max(0.0)).collect(),
        down: y.iter().map(|v| (x_n - v).max(0.0)).collect(),
    }
}

/// Number of windows a series of length `len` yields.
pub fn window_count(len: usize, n_lags: usize, horizon: usize) -> usize {
    (len + 1).saturating_sub(n_lags + horizon)
}

/// Sliding windows: one per anchor `a` with `n_lags - 1 <= a <= len - horizon - 1`.
/// Calendar features come from the anchor (most recent observation).
pub fn build_windows(
    series: &[SeriesRecord],
    n_lags: usize,
    horizon: usize,
    scaler: &ScalerParams,
) -> Result<Vec<WindowSample>> {
    if n_lags == 0 || horizon == 0 {
        return Err(CaretsError::Config("n_lags and horizon must be >= 1".into()));
    }
    let needed = n_lags + horizon;
    if series.len() < needed {
        return Err(CaretsError::TooShort {
            len: series.len(),
            needed,
        });
    }
    let calendar: Vec<&ScalerColumn> = FEATURE_COLUMNS[..3]
        .iter()
        .map(|c| scaler.column(c))
        .collect::<Result<_>>()?;
    let value = scaler.column("value")?;
    let scaled: Vec<f64> = series.iter().map(|r| value.apply(r.value)).collect();

    let mut out = Vec::with_capacity(window_count(series.len(), n_lags, horizon));
    for anchor in (n_lags - 1)..(series.len() - horizon) {
        let mut features: Vec<f64> = series[anchor]
            .calendar()
            .iter()
            .zip(&calendar)
            .map(|(v, c)| c.apply(*v))
            .collect();
        features.extend_from_slice(&scaled[anchor + 1 - n_lags..=anchor]);
        let targets = scaled[anchor + 1..=anchor + horizon].to_vec();
        out.push(WindowSample::from_parts(features, targets));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldSplit {
    /// 1-based.
    pub fold_id: usize,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Random k-fold assignment over the training pool. Indices are shuffled with
/// `seed`, then dealt into contiguous chunks whose sizes differ by at most one.
pub fn make_folds(
    num_pool_windows: usize,
    num_test_windows: usize,
    num_folds: usize,
    seed: u64,
) -> Result<Vec<FoldSplit>> {
    if num_folds < 2 {
        return Err(CaretsError::Config("at least 2 folds are required".into()));
    }
    if num_pool_windows < num_folds {
        return Err(CaretsError::Config(format!(
            "{num_pool_windows} windows cannot fill {num_folds} folds"
        )));
    }
    let mut order: Vec<usize> = (0..num_pool_windows).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let base = num_pool_windows / num_folds;
    let extra = num_pool_windows % num_folds;
    let mut assignment = vec![0usize; num_pool_windows];
    let mut start = 0;
    for fold in 0..num_folds {
        let size = base + usize::from(fold < extra);
        for &idx in &order[start..start + size] {
            assignment[idx] = fold;
        }
        start += size;
    }

    let test_indices: Vec<usize> = (0..num_test_windows).collect();
    Ok((0..num_folds)
        .map(|fold| {
            let (val, train): (Vec<usize>, Vec<usize>) =
                (0..num_pool_windows).partition(|i| assignment[*i] == fold);
            FoldSplit {
                fold_id: fold + 1,
                train_indices: train,
                val_indices: val,
                test_indices: test_indices.clone(),
            }
        })
        .collect())
}

/// Fold assignment file: one `fold_<id> = i,j,k` line of validation indices per fold.
pub fn folds_to_kv(folds: &[FoldSplit]) -> String {
    let mut out = String::new();
    for f in folds {
        let idx: Vec<String> = f.val_indices.iter().map(|i| i.to_string()).collect();
        let _ = writeln!(out, "fold_{} = {}", f.fold_id, idx.join(","));
    }
    out
}

/// Chronological train/test segments plus their windows and the scaler fitted
/// on the training segment.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub scaler: ScalerParams,
    pub pool: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
    pub n_lags: usize,
    pub horizon: usize,
}

impl PreparedData {
    pub fn input_len(&self) -> usize {
        self.n_lags + CALENDAR_FEATURES
    }
}

/// Training-segment length used when none is configured: the 6,048 / 8,784
/// proportion, so a one-year hourly series splits at exactly 6,048 points.
pub fn default_train_points(len: usize) -> usize {
    ((len as f64) * 6048.0 / 8784.0).round() as usize
}

/// Splits at `train_points`, fits the scaler on the first segment only, and
/// windows each segment independently.
pub fn prepare(
    series: &[SeriesRecord],
    n_lags: usize,
    horizon: usize,
    train_points: usize,
) -> Result<PreparedData> {
    if train_points >= series.len() {
        return Err(CaretsError::Config(format!(
            "train_points {train_points} leaves no test segment in a {}-point series",
            series.len()
        )));
    }
    let (train, test) = series.split_at(train_points);
    let scaler = fit_feature_scaler(train)?;
    Ok(PreparedData {
        pool: build_windows(train, n_lags, horizon, &scaler)?,
        test: build_windows(test, n_lags, horizon, &scaler)?,
        scaler,
        n_lags,
        horizon,
    })
}

/// Window store CSV: features `f_1..f_n` then targets `y_1..y_K`.
pub fn windows_to_csv(samples: &[WindowSample]) -> String {
    let mut out = String::new();
    if let Some(first) = samples.first() {
        let mut header: Vec<String> = (1..=first.features.len()).map(|i| format!("f_{i}")).collect();
        header.extend((1..=first.horizon()).map(|k| format!("y_{k}")));
        let _ = writeln!(out, "{}", header.join(","));
    }
    for s in samples {
        let cells: Vec<String> = s
            .features
            .iter()
            .chain(&s.targets)
            .map(|v| v.to_string())
            .collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

pub fn windows_from_csv(text: &str, horizon: usize) -> Result<Vec<WindowSample>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let values: Vec<f64> = line
            .split(',')
            .map(|c| {
                c.parse::<f64>().map_err(|_| CaretsError::Parse {
                    row: i + 1,
                    message: format!("bad number `{c}`"),
                })
            })
            .collect::<Result<_>>()?;
        if values.len() <= horizon {
            return Err(CaretsError::Parse {
                row: i + 1,
                message: "too few columns".into(),
            });
        }
        let split = values.len() - horizon;
        out.push(WindowSample::from_parts(
            values[..split].to_vec(),
            values[split..].to_vec(),
        ));
    }
    Ok(out)
}

/// Counts of validation indices per fold, keyed by fold id.
pub fn fold_sizes(folds: &[FoldSplit]) -> BTreeMap<usize, usize> {
    folds.iter().map(|f| (f.fold_id, f.val_indices.len())).collect()
}
