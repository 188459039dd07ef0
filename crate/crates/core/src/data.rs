//! Series ingestion, rolling windows and normalisation.

use std::ops::Range;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, TimeDelta};
use serde::{Deserialize, Serialize};

use crate::error::{io, Error, Result};

/// Lower bound applied to every standard deviation used as a divisor.
pub const SCALE_FLOOR: f64 = 1e-8;

const TIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Which columns of a CSV file make up the series.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub timestamp: String,
    pub target: String,
    /// Exogenous columns in order; all remaining columns when absent.
    #[serde(default)]
    pub exogenous: Option<Vec<String>>,
    /// Average rows into buckets of this many seconds before the uniform-step check.
    #[serde(default)]
    pub resample_seconds: Option<i64>,
}

/// Target series plus `C` exogenous series on a uniform time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesTable {
    pub timestamp_name: String,
    pub target_name: String,
    pub exog_names: Vec<String>,
    pub timestamps: Vec<NaiveDateTime>,
    pub target: Vec<f64>,
    /// Row-major `N × C`.
    pub exog: Vec<f64>,
}

impl SeriesTable {
    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn n_exog(&self) -> usize {
        self.exog_names.len()
    }

    pub fn exog_row(&self, i: usize) -> &[f64] {
        let c = self.n_exog();
        &self.exog[i * c..(i + 1) * c]
    }

    /// Spacing of the time grid, `None` for fewer than two rows.
    pub fn step(&self) -> Option<TimeDelta> {
        (self.len() >= 2).then(|| self.timestamps[1] - self.timestamps[0])
    }
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    for fmt in [TIME_FORMAT, "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M:%S%.f"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t);
        }
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.naive_utc());
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
}

fn parse_cell(s: &str) -> std::result::Result<Option<f64>, ()> {
    let s = s.trim();
    match s {
        "" | "NA" | "N/A" | "NaN" | "nan" | "null" => Ok(None),
        _ => s.parse::<f64>().map(Some).map_err(|_| ()),
    }
}

/// Fills interior gaps by linear interpolation and edge gaps with the nearest value.
pub fn fill_gaps(col: &[Option<f64>]) -> Option<Vec<f64>> {
    let known: Vec<usize> = (0..col.len()).filter(|&i| col[i].is_some()).collect();
    let (&first, &last) = (known.first()?, known.last()?);
    let mut out = vec![0.0; col.len()];
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = match col[i] {
            Some(v) => v,
            None if i < first => col[first].unwrap(),
            None if i > last => col[last].unwrap(),
            None => {
                let hi = known.partition_point(|&k| k < i);
                let (a, b) = (known[hi - 1], known[hi]);
                let (va, vb) = (col[a].unwrap(), col[b].unwrap());
                va + (vb - va) * (i - a) as f64 / (b - a) as f64
            }
        };
    }
    Some(out)
}

/// Reads a headered CSV with an ISO-8601 timestamp column.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<SeriesTable> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let file = std::fs::File::open(path).map_err(io(path))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Data(format!("{shown}: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("{shown}: column {name:?} not found (have {header:?})")))
    };
    let ts_col = find(&schema.timestamp)?;
    let target_col = find(&schema.target)?;
    let exog_names: Vec<String> = match &schema.exogenous {
        Some(names) => names.clone(),
        None => header
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != ts_col && i != target_col)
            .map(|(_, h)| h.clone())
            .collect(),
    };
    let exog_cols = exog_names.iter().map(|n| find(n)).collect::<Result<Vec<_>>>()?;

    let mut times = Vec::new();
    let mut cols: Vec<Vec<Option<f64>>> = vec![Vec::new(); 1 + exog_cols.len()];
    for (row, rec) in rdr.records().enumerate() {
        let line = row + 2;
        let rec = rec.map_err(|e| Error::Data(format!("{shown}: line {line}: {e}")))?;
        let cell = |c: usize| rec.get(c).unwrap_or("");
        let t = parse_timestamp(cell(ts_col)).ok_or_else(|| {
            Error::Data(format!("{shown}: line {line}: cannot parse timestamp {:?}", cell(ts_col)))
        })?;
        times.push(t);
        for (slot, &c) in cols.iter_mut().zip(std::iter::once(&target_col).chain(&exog_cols)) {
            let v = parse_cell(cell(c)).map_err(|_| {
                Error::Data(format!("{shown}: line {line}: cannot parse {:?} in column {:?}", cell(c), header[c]))
            })?;
            slot.push(v);
        }
    }
    if times.is_empty() {
        return Err(Error::Data(format!("{shown}: no data rows")));
    }
    for i in 1..times.len() {
        if times[i] <= times[i - 1] {
            return Err(Error::Data(format!("{shown}: timestamps not strictly increasing at line {}", i + 2)));
        }
    }
    if let Some(step) = schema.resample_seconds {
        (times, cols) = resample(&times, &cols, step)?;
    } else if times.len() > 2 {
        let step = times[1] - times[0];
        if let Some(i) = (2..times.len()).find(|&i| times[i] - times[i - 1] != step) {
            return Err(Error::Data(format!(
                "{shown}: non-uniform timestamps at line {} (step {} vs {})",
                i + 2,
                times[i] - times[i - 1],
                step
            )));
        }
    }

    let names: Vec<&str> = std::iter::once(schema.target.as_str()).chain(exog_names.iter().map(String::as_str)).collect();
    let mut filled = Vec::with_capacity(cols.len());
    for (col, name) in cols.iter().zip(&names) {
        filled.push(fill_gaps(col).ok_or_else(|| Error::Data(format!("{shown}: column {name:?} has no values")))?);
    }
    let n = times.len();
    let c = exog_names.len();
    let mut exog = vec![0.0; n * c];
    for (j, col) in filled[1..].iter().enumerate() {
        for i in 0..n {
            exog[i * c + j] = col[i];
        }
    }
    Ok(SeriesTable {
        timestamp_name: schema.timestamp.clone(),
        target_name: schema.target.clone(),
        exog_names,
        timestamps: times,
        target: filled.swap_remove(0),
        exog,
    })
}

type Columns = Vec<Vec<Option<f64>>>;

/// Bucket means on a grid of `step` seconds anchored at the first timestamp.
fn resample(times: &[NaiveDateTime], cols: &Columns, step: i64) -> Result<(Vec<NaiveDateTime>, Columns)> {
    if step <= 0 {
        return Err(Error::Config(format!("resample_seconds must be positive, got {step}")));
    }
    let t0 = times[0];
    let bucket = |t: NaiveDateTime| ((t - t0).num_seconds() / step) as usize;
    let n = bucket(*times.last().unwrap()) + 1;
    let grid = (0..n).map(|b| t0 + TimeDelta::seconds(b as i64 * step)).collect();
    let out = cols
        .iter()
        .map(|col| {
            let mut sum = vec![0.0; n];
            let mut cnt = vec![0usize; n];
            for (t, v) in times.iter().zip(col) {
                if let Some(v) = v {
                    sum[bucket(*t)] += v;
                    cnt[bucket(*t)] += 1;
                }
            }
            (0..n).map(|b| (cnt[b] > 0).then(|| sum[b] / cnt[b] as f64)).collect()
        })
        .collect();
    Ok((grid, out))
}

/// Writes the table with the timestamp column first, then target, then exogenous.
pub fn save_csv(table: &SeriesTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
    let mut header = vec![table.timestamp_name.clone(), table.target_name.clone()];
    header.extend(table.exog_names.iter().cloned());
    w.write_record(&header).map_err(err)?;
    for i in 0..table.len() {
        let mut rec = vec![table.timestamps[i].format(TIME_FORMAT).to_string(), table.target[i].to_string()];
        rec.extend(table.exog_row(i).iter().map(f64::to_string));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(io(path))
}

/// One rolling-window sample anchored at row `t` (0-based).
#[derive(Clone, Debug, PartialEq)]
pub struct WindowInstance {
    pub anchor: usize,
    /// Rows `t-L+1 ..= t`, row-major `L × C`.
    pub x: Vec<f64>,
    /// Target rows `t-δ-L+1 ..= t-δ`.
    pub y_lagged: Vec<f64>,
    /// Target rows `t+1 ..= t+H`.
    pub target: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowSet {
    pub windows: Vec<WindowInstance>,
    /// Set when no window fits.
    pub warning: Option<String>,
}

/// Anchors whose inputs lie inside the series and whose whole target block
/// lies inside `range` (0-based, half-open row indices).
pub fn window_anchors(n: usize, l: usize, h: usize, delay: usize, range: &Range<usize>) -> Range<usize> {
    let lo = (delay + l).saturating_sub(1).max(range.start.saturating_sub(1));
    let hi = range.end.min(n).saturating_sub(h);
    if l == 0 || h == 0 || lo >= hi {
        0..0
    } else {
        lo..hi
    }
}

/// Every window of stride 1 whose targets fall inside `range`.
pub fn make_windows(table: &SeriesTable, l: usize, h: usize, delay: usize, range: Range<usize>) -> WindowSet {
    let anchors = window_anchors(table.len(), l, h, delay, &range);
    let c = table.n_exog();
    let windows: Vec<WindowInstance> = anchors
        .map(|t| WindowInstance {
            anchor: t,
            x: table.exog[(t + 1 - l) * c..(t + 1) * c].to_vec(),
            y_lagged: table.target[t + 1 - l - delay..t + 1 - delay].to_vec(),
            target: table.target[t + 1..t + 1 + h].to_vec(),
        })
        .collect();
    let warning = windows.is_empty().then(|| {
        format!(
            "no window fits: N = {}, L = {l}, H = {h}, delay = {delay}, rows {}..{}",
            table.len(),
            range.start,
            range.end
        )
    });
    WindowSet { windows, warning }
}

/// Per-column mean and standard deviation, target first then exogenous.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZScoreParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Fits z-score statistics on rows in `train` only (population deviation, floored).
pub fn zscore_fit(table: &SeriesTable, train: Range<usize>) -> Result<ZScoreParams> {
    if train.is_empty() || train.end > table.len() {
        return Err(Error::Config(format!(
            "training rows {}..{} are empty or exceed the {} available",
            train.start,
            train.end,
            table.len()
        )));
    }
    let c = table.n_exog();
    let n = train.len() as f64;
    let column = |j: usize| -> Vec<f64> {
        train
            .clone()
            .map(|i| if j == 0 { table.target[i] } else { table.exog[i * c + j - 1] })
            .collect()
    };
    let (mut mean, mut std) = (Vec::with_capacity(c + 1), Vec::with_capacity(c + 1));
    for j in 0..=c {
        let v = column(j);
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        mean.push(m);
        std.push(var.sqrt().max(SCALE_FLOOR));
    }
    Ok(ZScoreParams { mean, std })
}

impl ZScoreParams {
    pub fn apply_value(&self, col: usize, v: f64) -> f64 {
        (v - self.mean[col]) / self.std[col]
    }

    pub fn invert_value(&self, col: usize, v: f64) -> f64 {
        v * self.std[col] + self.mean[col]
    }

    /// Normalises every column of a table.
    pub fn apply(&self, table: &SeriesTable) -> SeriesTable {
        self.map(table, Self::apply_value)
    }

    pub fn invert(&self, table: &SeriesTable) -> SeriesTable {
        self.map(table, Self::invert_value)
    }

    fn map(&self, table: &SeriesTable, f: fn(&Self, usize, f64) -> f64) -> SeriesTable {
        let c = table.n_exog();
        let mut out = table.clone();
        for v in &mut out.target {
            *v = f(self, 0, *v);
        }
        for (i, v) in out.exog.iter_mut().enumerate() {
            *v = f(self, 1 + i % c, *v);
        }
        out
    }

    /// Target values back to original units.
    pub fn invert_target(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&v| self.invert_value(0, v)).collect()
    }
}

/// Window mean and floored population deviation.
pub fn instance_stats(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let m = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt().max(SCALE_FLOOR))
}

/// Per-window standardisation: returns `(y', shift, scale)`.
pub fn instance_normalize(y: &[f64]) -> (Vec<f64>, f64, f64) {
    let (shift, scale) = instance_stats(y);
    (y.iter().map(|v| (v - shift) / scale).collect(), shift, scale)
}

pub fn instance_denormalize(y: &[f64], shift: f64, scale: f64) -> Vec<f64> {
    y.iter().map(|v| v * scale + shift).collect()
}
