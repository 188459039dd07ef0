//! Shared plumbing between commands: load, normalise, window, train, score.

use chrono::NaiveDateTime;
use sonnet_core::data::{load_csv, make_windows, zscore_fit, SeriesTable, WindowInstance, ZScoreParams};
use sonnet_core::metrics::{persistence, seasonal_persistence, EvalMode, EvalReport, EvalRow};
use sonnet_core::trainer::{evaluate_loss, predict_all, Dataset, TrainConfig, TrainHistory, Trainer};
use sonnet_core::{ModelConfig, SonnetModel};
use sonnet_numerics::Real;

use crate::config::{range, EvalSection, ExperimentConfig};
use crate::error::{usage, CliResult};

/// Series, normalisation and windows for one experiment.
pub struct Prepared {
    pub raw: SeriesTable,
    pub zscore: ZScoreParams,
    pub model: ModelConfig,
    pub train: Vec<WindowInstance>,
    pub val: Vec<WindowInstance>,
    /// `(season name, windows)` in config order.
    pub tests: Vec<(String, Vec<WindowInstance>)>,
}

pub fn prepare(cfg: &ExperimentConfig) -> CliResult<Prepared> {
    let raw = load_csv(&cfg.data.path, &cfg.data.schema())?;
    cfg.splits.validate(Some(raw.len()))?;
    let model = cfg.model.resolve(raw.n_exog())?;
    let zscore = zscore_fit(&raw, range(cfg.splits.train))?;
    let norm = zscore.apply(&raw);
    let (l, h, delay) = (model.seq_len, model.horizon, model.delay);
    let split = |name: &str, r: [usize; 2]| -> CliResult<Vec<WindowInstance>> {
        let set = make_windows(&norm, l, h, delay, range(r));
        match set.warning {
            Some(w) => Err(usage(format!("split {name}: {w}"))),
            None => Ok(set.windows),
        }
    };
    let train = split("train", cfg.splits.train)?;
    let val = split("val", cfg.splits.val)?;
    let tests = cfg
        .splits
        .test
        .iter()
        .map(|s| Ok((s.name.clone(), split(&s.name, s.range)?)))
        .collect::<CliResult<_>>()?;
    Ok(Prepared {
        raw,
        zscore,
        model,
        train,
        val,
        tests,
    })
}

impl Prepared {
    /// Ground truth in original units for each window.
    pub fn truth(&self, windows: &[WindowInstance]) -> Vec<Vec<f64>> {
        let h = self.model.horizon;
        windows
            .iter()
            .map(|w| self.raw.target[w.anchor + 1..w.anchor + 1 + h].to_vec())
            .collect()
    }

    pub fn timestamps(&self, w: &WindowInstance) -> &[NaiveDateTime] {
        &self.raw.timestamps[w.anchor + 1..w.anchor + 1 + self.model.horizon]
    }
}

/// Trains `model` on the prepared windows.
pub fn fit<T: Real>(
    p: &Prepared,
    model: ModelConfig,
    train: &TrainConfig,
) -> CliResult<(SonnetModel<T>, TrainHistory)> {
    let tr = Dataset::from_windows(&p.train)?;
    let va = Dataset::from_windows(&p.val)?;
    let trainer = Trainer::new(SonnetModel::<T>::new(model)?, train.clone())?;
    Ok(trainer.fit(&tr, &va)?)
}

/// Validation loss of a trained model, in normalised units.
pub fn val_loss<T: Real>(p: &Prepared, model: &SonnetModel<T>, batch: usize) -> CliResult<f64> {
    Ok(evaluate_loss(model, &Dataset::from_windows(&p.val)?, batch)?)
}

/// Forecasts in original units, one row per window.
pub fn forecasts<T: Real>(
    p: &Prepared,
    model: &SonnetModel<T>,
    windows: &[WindowInstance],
    batch: usize,
) -> CliResult<Vec<Vec<f64>>> {
    let preds = predict_all(model, &Dataset::from_windows(windows)?, batch)?;
    Ok(preds.iter().map(|r| p.zscore.invert_target(r)).collect())
}

/// Baseline forecasts from the target history visible at each anchor.
pub fn baseline(p: &Prepared, windows: &[WindowInstance], period: Option<usize>) -> CliResult<Vec<Vec<f64>>> {
    let (h, delay) = (p.model.horizon, p.model.delay);
    windows
        .iter()
        .map(|w| {
            let seen = &p.raw.target[..=w.anchor - delay];
            Ok(match period {
                None => persistence(seen, h)?,
                Some(s) => seasonal_persistence(seen, h + delay, s)
                    .map_err(|e| usage(format!("eval.seasonal_period: {e}")))?[delay..]
                    .to_vec(),
            })
        })
        .collect()
}

/// One forecast element of the predictions CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionRow {
    pub timestamp: NaiveDateTime,
    pub y_true: f64,
    pub y_pred: f64,
    pub season: String,
    /// Step `1..=H` of the forecast.
    pub horizon: usize,
}

pub const PREDICTIONS_HEADER: &str = "timestamp,y_true,y_pred,season,horizon";

impl PredictionRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.timestamp.format("%Y-%m-%dT%H:%M:%S"),
            self.y_true,
            self.y_pred,
            self.season,
            self.horizon
        )
    }
}

/// Scores a model (and the configured baselines) on every test season in both modes.
pub fn evaluate<T: Real>(
    p: &Prepared,
    model: &SonnetModel<T>,
    eval: &EvalSection,
    batch: usize,
) -> CliResult<(EvalReport, Vec<PredictionRow>)> {
    let mut report = EvalReport::default();
    let mut rows = Vec::new();
    for (season, windows) in &p.tests {
        let truth = p.truth(windows);
        let pred = forecasts(p, model, windows, batch)?;
        let mut entries = vec![("sonnet".to_string(), pred.clone())];
        if eval.persistence {
            entries.push(("persistence".into(), baseline(p, windows, None)?));
        }
        if let Some(s) = eval.seasonal_period {
            entries.push((format!("seasonal-persistence-{s}"), baseline(p, windows, Some(s))?));
        }
        for mode in [EvalMode::TargetStep, EvalMode::FullSequence] {
            for (name, f) in &entries {
                report.rows.push(EvalRow::score(season, name, mode, &truth, f, eval.smape)?);
            }
        }
        for ((w, t), f) in windows.iter().zip(&truth).zip(&pred) {
            for (step, ((ts, y), yh)) in p.timestamps(w).iter().zip(t).zip(f).enumerate() {
                rows.push(PredictionRow {
                    timestamp: *ts,
                    y_true: *y,
                    y_pred: *yh,
                    season: season.clone(),
                    horizon: step + 1,
                });
            }
        }
    }
    Ok((report, rows))
}
