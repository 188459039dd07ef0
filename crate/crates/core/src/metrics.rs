//! Forecast scores and the persistence baselines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Offset of the weather sMAPE denominator.
pub const WEATHER_OFFSET: f64 = 30.0;

fn check(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.len() != y_hat.len() || y.is_empty() {
        return Err(Error::Metric(format!(
            "series lengths {} and {} must match and be non-zero",
            y.len(),
            y_hat.len()
        )));
    }
    Ok(())
}

pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check(y, y_hat)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

/// `(100/n) Σ 2|y-ŷ| / (|y|+|ŷ|)` in percent, with `0/0` terms counted as 0.
pub fn smape(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check(y, y_hat)?;
    let total: f64 = y
        .iter()
        .zip(y_hat)
        .map(|(a, b)| {
            let den = a.abs() + b.abs();
            if den == 0.0 { 0.0 } else { 2.0 * (a - b).abs() / den }
        })
        .sum();
    Ok(100.0 * total / y.len() as f64)
}

/// `(100/n) Σ 2|y-ŷ| / (|y-ξ| + |ŷ-ξ| + 2a)` for a given floor `ξ`.
pub fn smape_weather_with(y: &[f64], y_hat: &[f64], xi: f64, a: f64) -> Result<f64> {
    check(y, y_hat)?;
    let total: f64 = y
        .iter()
        .zip(y_hat)
        .map(|(t, p)| 2.0 * (t - p).abs() / ((t - xi).abs() + (p - xi).abs() + 2.0 * a))
        .sum();
    Ok(100.0 * total / y.len() as f64)
}

/// Weather sMAPE with `ξ` the minimum of the evaluated ground truth.
pub fn smape_weather(y: &[f64], y_hat: &[f64], a: f64) -> Result<f64> {
    check(y, y_hat)?;
    let xi = y.iter().copied().fold(f64::INFINITY, f64::min);
    smape_weather_with(y, y_hat, xi, a)
}

/// Sample correlation; `None` when either series has zero variance.
pub fn pearson_r(y: &[f64], y_hat: &[f64]) -> Result<Option<f64>> {
    check(y, y_hat)?;
    let n = y.len() as f64;
    let (my, mp) = (y.iter().sum::<f64>() / n, y_hat.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in y.iter().zip(y_hat) {
        let (da, db) = (a - my, b - mp);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

/// Repeats the last observed value `h` times.
pub fn persistence(history: &[f64], h: usize) -> Result<Vec<f64>> {
    let last = history
        .last()
        .ok_or_else(|| Error::Metric("persistence needs at least one observation".into()))?;
    Ok(vec![*last; h])
}

/// Step `h` takes the value one (or more) whole periods before `t+h`.
pub fn seasonal_persistence(history: &[f64], h: usize, period: usize) -> Result<Vec<f64>> {
    if period == 0 || history.len() < period {
        return Err(Error::Metric(format!(
            "seasonal persistence needs {period} observations, got {}",
            history.len()
        )));
    }
    let t = history.len() - 1;
    Ok((1..=h)
        .map(|step| history[t + step - period * step.div_ceil(period)])
        .collect())
}

/// Which part of each forecast is scored.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    /// Only the final element `t+H` of every forecast.
    TargetStep,
    /// All `H` elements of every forecast.
    FullSequence,
}

impl EvalMode {
    pub fn name(self) -> &'static str {
        match self {
            EvalMode::TargetStep => "target-step",
            EvalMode::FullSequence => "full-sequence",
        }
    }

    /// Flattens `(truth, forecast)` pairs into the scored elements.
    pub fn select(self, truth: &[Vec<f64>], pred: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        match self {
            EvalMode::TargetStep => (
                truth.iter().filter_map(|t| t.last().copied()).collect(),
                pred.iter().filter_map(|p| p.last().copied()).collect(),
            ),
            EvalMode::FullSequence => (truth.concat(), pred.concat()),
        }
    }
}

/// Which sMAPE family to report.
#[derive(Copy, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmapeKind {
    #[default]
    Standard,
    Weather,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub season: String,
    pub model: String,
    pub mode: EvalMode,
    pub horizon: usize,
    pub n: usize,
    pub mae: f64,
    pub smape: f64,
    pub r: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalRow {
    /// Scores one model on one season in one mode (values in original units).
    pub fn score(
        season: &str,
        model: &str,
        mode: EvalMode,
        truth: &[Vec<f64>],
        pred: &[Vec<f64>],
        kind: SmapeKind,
    ) -> Result<Self> {
        let (y, p) = mode.select(truth, pred);
        let horizon = truth.first().map_or(0, Vec::len);
        let smape = match kind {
            SmapeKind::Standard => smape(&y, &p)?,
            SmapeKind::Weather => smape_weather(&y, &p, WEATHER_OFFSET)?,
        };
        Ok(Self {
            season: season.into(),
            model: model.into(),
            mode,
            horizon,
            n: y.len(),
            mae: mae(&y, &p)?,
            smape,
            r: pearson_r(&y, &p)?,
        })
    }
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("season,model,mode,horizon,n,mae,smape,r\n");
        for r in &self.rows {
            let corr = r.r.map(|v| v.to_string()).unwrap_or_default();
            out += &format!(
                "{},{},{},{},{},{},{},{}\n",
                r.season,
                r.model,
                r.mode.name(),
                r.horizon,
                r.n,
                r.mae,
                r.smape,
                corr
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}
