//! One function per subcommand. Each writes its files under `output_dir` and
//! returns what it wrote so callers can inspect results without re-reading.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sonnet_core::data::{save_csv, WindowInstance};
use sonnet_core::metrics::{mae, EvalMode, EvalReport};
use sonnet_core::trainer::{evaluate_loss, grid_search, predict_all, train, Dataset, GridOutcome, TrainConfig, TrainHistory};
use sonnet_core::{Ablation, ModelConfig, SonnetModel};
use sonnet_numerics::Real;

use crate::config::{ExperimentConfig, Precision};
use crate::error::{usage, write_output, CliResult};
use crate::pipeline::{self, prepare, Prepared, PredictionRow, PREDICTIONS_HEADER};
use crate::synth::{generate, SynthSpec};

pub const CHECKPOINT_FILE: &str = "model.ckpt";

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub history: TrainHistory,
}

pub fn cmd_train(cfg: &ExperimentConfig) -> CliResult<TrainOutcome> {
    let p = prepare(cfg)?;
    let tc = cfg.train.resolve()?;
    let (bytes, history) = match cfg.train.precision {
        Precision::F32 => {
            let (m, h) = pipeline::fit::<f32>(&p, p.model.clone(), &tc)?;
            (m.to_bytes(), h)
        }
        Precision::F64 => {
            let (m, h) = pipeline::fit::<f64>(&p, p.model.clone(), &tc)?;
            (m.to_bytes(), h)
        }
    };
    let out = &cfg.output_dir;
    let checkpoint = out.join(CHECKPOINT_FILE);
    write_output(&checkpoint, bytes)?;
    write_output(&out.join("history.csv"), history.to_csv())?;
    write_output(&out.join("config.resolved.toml"), cfg.to_toml())?;
    write_output(
        &out.join("zscore.json"),
        serde_json::to_string_pretty(&p.zscore).expect("z-score serialises"),
    )?;
    Ok(TrainOutcome { checkpoint, history })
}

fn load_checked<T: Real>(path: &Path, p: &Prepared) -> CliResult<SonnetModel<T>> {
    let model = SonnetModel::<T>::load(path)?;
    let (a, b) = (&model.config, &p.model);
    let differing: Vec<String> = [
        ("seq_len", a.seq_len, b.seq_len),
        ("horizon", a.horizon, b.horizon),
        ("n_exog", a.n_exog, b.n_exog),
        ("delay", a.delay, b.delay),
    ]
    .iter()
    .filter(|(_, x, y)| x != y)
    .map(|(n, x, y)| format!("{n} (checkpoint {x}, config {y})"))
    .collect();
    if !differing.is_empty() {
        return Err(usage(format!(
            "checkpoint {} is incompatible with the configuration: {}",
            path.display(),
            differing.join(", ")
        )));
    }
    Ok(model)
}

#[derive(Debug)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub predictions: Vec<PredictionRow>,
}

pub fn cmd_evaluate(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> CliResult<EvalOutcome> {
    let p = prepare(cfg)?;
    let path = checkpoint.map_or_else(|| cfg.output_dir.join(CHECKPOINT_FILE), Path::to_path_buf);
    let batch = cfg.train.batch_size;
    let (report, predictions) = match cfg.train.precision {
        Precision::F32 => pipeline::evaluate(&p, &load_checked::<f32>(&path, &p)?, &cfg.eval, batch)?,
        Precision::F64 => pipeline::evaluate(&p, &load_checked::<f64>(&path, &p)?, &cfg.eval, batch)?,
    };
    let out = &cfg.output_dir;
    write_output(&out.join("report.csv"), report.to_csv())?;
    write_output(&out.join("report.json"), report.to_json())?;
    let mut csv = String::from(PREDICTIONS_HEADER);
    csv.push('\n');
    for r in &predictions {
        csv += &r.csv_line();
        csv.push('\n');
    }
    write_output(&out.join("predictions.csv"), csv)?;
    Ok(EvalOutcome { report, predictions })
}

/// Forecasts the `H` steps after the last row of the dataset.
pub fn cmd_forecast(cfg: &ExperimentConfig, checkpoint: Option<&Path>, out: Option<&Path>) -> CliResult<Vec<f64>> {
    let p = prepare(cfg)?;
    let path = checkpoint.map_or_else(|| cfg.output_dir.join(CHECKPOINT_FILE), Path::to_path_buf);
    let norm = p.zscore.apply(&p.raw);
    let (l, delay, c) = (p.model.seq_len, p.model.delay, p.raw.n_exog());
    let n = norm.len();
    if n < l + delay {
        return Err(usage(format!("forecast needs {} rows, the series has {n}", l + delay)));
    }
    let t = n - 1;
    let window = WindowInstance {
        anchor: t,
        x: norm.exog[(t + 1 - l) * c..(t + 1) * c].to_vec(),
        y_lagged: norm.target[t + 1 - l - delay..t + 1 - delay].to_vec(),
        target: vec![0.0; p.model.horizon],
    };
    let windows = [window];
    let values = match cfg.train.precision {
        Precision::F32 => pipeline::forecasts(&p, &load_checked::<f32>(&path, &p)?, &windows, 1)?,
        Precision::F64 => pipeline::forecasts(&p, &load_checked::<f64>(&path, &p)?, &windows, 1)?,
    }
    .remove(0);
    let step = p
        .raw
        .step()
        .ok_or_else(|| usage("forecast needs at least two rows to know the time step"))?;
    let last = p.raw.timestamps[t];
    let mut csv = String::from("timestamp,y_pred,horizon\n");
    for (i, v) in values.iter().enumerate() {
        let ts = last + step * (i as i32 + 1);
        csv += &format!("{},{v},{}\n", ts.format("%Y-%m-%dT%H:%M:%S"), i + 1);
    }
    let dest = out.map_or_else(|| cfg.output_dir.join("forecast.csv"), Path::to_path_buf);
    write_output(&dest, csv)?;
    Ok(values)
}

fn grid_loss<T: Real>(p: &Prepared, model: ModelConfig, tc: &TrainConfig) -> sonnet_core::Result<f64> {
    let tr = Dataset::from_windows(&p.train)?;
    let va = Dataset::from_windows(&p.val)?;
    let (m, _) = train(SonnetModel::<T>::new(model)?, &tr, &va, tc)?;
    evaluate_loss(&m, &va, tc.batch_size)
}

pub fn cmd_grid_search(cfg: &ExperimentConfig) -> CliResult<GridOutcome> {
    let p = prepare(cfg)?;
    let tc = cfg.train.resolve()?;
    let outcome = grid_search(&cfg.grid, cfg.train.workers, |point| {
        let (model, train) = point.apply(&p.model, &tc);
        match cfg.train.precision {
            Precision::F32 => grid_loss::<f32>(&p, model, &train),
            Precision::F64 => grid_loss::<f64>(&p, model, &train),
        }
    })?;
    let mut best = cfg.clone();
    best.model.alpha = outcome.best.alpha;
    best.model.n_atoms = outcome.best.n_atoms;
    best.model.dropout = outcome.best.dropout;
    best.train.lr = outcome.best.lr;
    let out = &cfg.output_dir;
    write_output(&out.join("leaderboard.csv"), outcome.to_csv())?;
    write_output(
        &out.join("grid.json"),
        serde_json::to_string_pretty(&outcome).expect("grid outcome serialises"),
    )?;
    write_output(&out.join("best.toml"), best.to_toml())?;
    Ok(outcome)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub parameters: usize,
    pub season: String,
    /// Target-step MAE in original units.
    pub mae: f64,
    /// `(MAE_variant - MAE_full) / MAE_full · 100`.
    pub delta_pct: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquivalenceCheck {
    pub variant: String,
    /// Predictions of the trained variant and of its neutral full-model
    /// counterpart agree bit for bit on every test window.
    pub bitwise_equal: bool,
    pub max_abs_diff: f64,
}

#[derive(Debug)]
pub struct AblationOutcome {
    pub rows: Vec<AblationRow>,
    pub equivalences: Vec<EquivalenceCheck>,
    /// Forecast length of every variant, for the shape contract.
    pub horizons: Vec<(String, usize)>,
}

fn equivalence<T: Real>(name: &str, m: &SonnetModel<T>, windows: &[WindowInstance], batch: usize) -> CliResult<EquivalenceCheck> {
    let data = Dataset::from_windows(windows)?;
    let a = predict_all(m, &data, batch)?;
    let b = predict_all(&m.neutral_full()?, &data, batch)?;
    let (mut equal, mut worst) = (true, 0.0f64);
    for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
        equal &= x.to_bits() == y.to_bits();
        worst = worst.max((x - y).abs());
    }
    Ok(EquivalenceCheck {
        variant: name.into(),
        bitwise_equal: equal,
        max_abs_diff: worst,
    })
}

fn ablate_as<T: Real>(cfg: &ExperimentConfig, p: &Prepared) -> CliResult<AblationOutcome> {
    let tc = cfg.train.resolve()?;
    let batch = tc.batch_size;
    let mut variants = vec![("full", Ablation::default())];
    variants.extend(Ablation::variants());
    let mut maes: Vec<(String, usize, Vec<f64>)> = Vec::new();
    let mut equivalences = Vec::new();
    let mut horizons = Vec::new();
    let all_test: Vec<WindowInstance> = p.tests.iter().flat_map(|(_, w)| w.iter().cloned()).collect();
    for (name, ablation) in variants {
        let model_cfg = ModelConfig {
            ablation,
            ..p.model.clone()
        };
        let (m, _) = pipeline::fit::<T>(p, model_cfg, &tc)?;
        let mut per_season = Vec::new();
        for (_, windows) in &p.tests {
            let f = pipeline::forecasts(p, &m, windows, batch)?;
            horizons.extend(f.iter().map(|r| (name.to_string(), r.len())));
            let (y, yh) = EvalMode::TargetStep.select(&p.truth(windows), &f);
            per_season.push(mae(&y, &yh)?);
        }
        if ablation.no_mlp || ablation.no_koop {
            equivalences.push(equivalence(name, &m, &all_test, batch)?);
        }
        maes.push((name.to_string(), m.parameter_count(), per_season));
    }
    let full = maes[0].2.clone();
    let mut rows = Vec::new();
    for (variant, parameters, per_season) in &maes {
        for (((season, _), v), f) in p.tests.iter().zip(per_season).zip(&full) {
            rows.push(AblationRow {
                variant: variant.clone(),
                parameters: *parameters,
                season: season.clone(),
                mae: *v,
                delta_pct: (v - f) / f * 100.0,
            });
        }
    }
    Ok(AblationOutcome {
        rows,
        equivalences,
        horizons,
    })
}

pub fn cmd_ablate(cfg: &ExperimentConfig) -> CliResult<AblationOutcome> {
    let p = prepare(cfg)?;
    let outcome = match cfg.train.precision {
        Precision::F32 => ablate_as::<f32>(cfg, &p)?,
        Precision::F64 => ablate_as::<f64>(cfg, &p)?,
    };
    let mut table = String::from("variant,parameters,season,mae,delta_pct\n");
    for r in &outcome.rows {
        table += &format!("{},{},{},{},{}\n", r.variant, r.parameters, r.season, r.mae, r.delta_pct);
    }
    let mut eq = String::from("variant,bitwise_equal,max_abs_diff\n");
    for e in &outcome.equivalences {
        eq += &format!("{},{},{}\n", e.variant, e.bitwise_equal, e.max_abs_diff);
    }
    let out = &cfg.output_dir;
    write_output(&out.join("ablation.csv"), table)?;
    write_output(&out.join("ablation_equivalence.csv"), eq)?;
    Ok(outcome)
}

pub fn cmd_synth(spec: &SynthSpec, out: &Path) -> CliResult<()> {
    if spec.n == 0 {
        return Err(usage("synthetic series needs n >= 1"));
    }
    save_csv(&generate(spec), out).map_err(|e| crate::error::CliError::Runtime(e.to_string()))
}
