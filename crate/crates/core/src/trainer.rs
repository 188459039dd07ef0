//! Training loop, early stopping, learning-rate schedule, grid search and seeds.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sonnet_numerics::rng::{derive_seed, stream_rng};
use sonnet_numerics::{adam_step, AdamConfig, AdamState, DropoutKey, Real, Tape, Tensor};

use crate::checkpoint::{decode, encode, STATE_MAGIC};
use crate::data::WindowInstance;
use crate::error::{Error, Result};
use crate::model::{mse_loss, ForwardCtx, ModelConfig, ParamStore, SonnetModel, MVCA_LAYER};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            patience: 5,
            lr: 1e-3,
            batch_size: 64,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("max_epochs and batch_size must be positive".into()));
        }
        if self.patience == 0 || self.patience >= self.max_epochs {
            return Err(Error::Config(format!(
                "patience {} must be in 1..{}",
                self.patience, self.max_epochs
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }
}

/// Independent roots for every stochastic source of a run.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct SeedRoots {
    /// Root of the per-parameter initialisation streams.
    pub init: u64,
    pub dropout: u64,
    pub shuffle: u64,
}

pub fn set_seed(seed: u64) -> SeedRoots {
    SeedRoots {
        init: seed,
        dropout: derive_seed(seed, "dropout"),
        shuffle: derive_seed(seed, "shuffle"),
    }
}

/// Learning rate for 0-based `epoch`: `lr0 · (1 - epoch / max_epochs)`.
pub fn lr_at(lr0: f64, epoch: usize, max_epochs: usize) -> f64 {
    lr0 * (1.0 - epoch as f64 / max_epochs as f64)
}

/// Patience counter over validation losses; improvement means strictly lower.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: Option<f64>,
    /// 1-based epoch of the best loss.
    pub best_epoch: usize,
    pub since_best: usize,
    seen: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            best_epoch: 0,
            since_best: 0,
            seen: 0,
        }
    }

    /// Records the next epoch's loss; returns whether it is a new best.
    pub fn observe(&mut self, loss: f64) -> bool {
        self.seen += 1;
        if self.best.is_none_or(|b| loss < b) {
            self.best = Some(loss);
            self.best_epoch = self.seen;
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since_best >= self.patience
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stop_reason: Option<StopReason>,
}

impl TrainHistory {
    pub fn best_val_loss(&self) -> Option<f64> {
        self.epochs.get(self.best_epoch.checked_sub(1)?).map(|r| r.val_loss)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,lr\n");
        for r in &self.epochs {
            out += &format!("{},{},{},{}\n", r.epoch, r.train_loss, r.val_loss, r.lr);
        }
        out
    }
}

/// Windows packed into contiguous tensors: `x [N, L, C]`, `y [N, L]`, `target [N, H]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub x: Option<Tensor<T>>,
    pub y: Tensor<T>,
    pub target: Tensor<T>,
}

impl<T: Real> Dataset<T> {
    pub fn from_windows(windows: &[WindowInstance]) -> Result<Self> {
        let first = windows
            .first()
            .ok_or_else(|| Error::Data("no windows to build a dataset from".into()))?;
        let (n, l, h) = (windows.len(), first.y_lagged.len(), first.target.len());
        let c = first.x.len() / l.max(1);
        let cast = |v: &[f64]| v.iter().map(|&a| T::of_f64(a)).collect::<Vec<T>>();
        let x = (c > 0)
            .then(|| Tensor::new(&[n, l, c], cast(&windows.iter().flat_map(|w| w.x.iter().copied()).collect::<Vec<_>>())))
            .transpose()?;
        let y = Tensor::new(&[n, l], cast(&windows.iter().flat_map(|w| w.y_lagged.iter().copied()).collect::<Vec<_>>()))?;
        let target = Tensor::new(&[n, h], cast(&windows.iter().flat_map(|w| w.target.iter().copied()).collect::<Vec<_>>()))?;
        Ok(Self { x, y, target })
    }

    pub fn len(&self) -> usize {
        self.y.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn gather(t: &Tensor<T>, rows: &[usize]) -> Tensor<T> {
        let width = t.numel() / t.shape()[0];
        let mut data = Vec::with_capacity(rows.len() * width);
        for &r in rows {
            data.extend_from_slice(&t.data()[r * width..(r + 1) * width]);
        }
        let mut shape = t.shape().to_vec();
        shape[0] = rows.len();
        Tensor::new(&shape, data).expect("gathered rows keep the row width")
    }

    /// Rows `rows` as `(x, y, target)`.
    pub fn batch(&self, rows: &[usize]) -> (Option<Tensor<T>>, Tensor<T>, Tensor<T>) {
        (
            self.x.as_ref().map(|x| Self::gather(x, rows)),
            Self::gather(&self.y, rows),
            Self::gather(&self.target, rows),
        )
    }
}

/// Forecasts for every row, in row order, dropout off.
pub fn predict_all<T: Real>(model: &SonnetModel<T>, data: &Dataset<T>, batch: usize) -> Result<Vec<Vec<f64>>> {
    let h = model.config.horizon;
    let mut out = Vec::with_capacity(data.len());
    let rows: Vec<usize> = (0..data.len()).collect();
    for chunk in rows.chunks(batch.max(1)) {
        let (x, y, _) = data.batch(chunk);
        let pred = model.predict(x.as_ref(), &y)?;
        out.extend(pred.data().chunks(h).map(|r| r.iter().map(|v| v.as_f64()).collect()));
    }
    Ok(out)
}

/// Mean squared error over all rows and all `H` steps, dropout off.
pub fn evaluate_loss<T: Real>(model: &SonnetModel<T>, data: &Dataset<T>, batch: usize) -> Result<f64> {
    let preds = predict_all(model, data, batch)?;
    let target = data.target.data();
    let sse: f64 = preds
        .iter()
        .flatten()
        .zip(target)
        .map(|(p, t)| (p - t.as_f64()).powi(2))
        .sum();
    Ok(sse / target.len() as f64)
}

/// Resumable training state.
pub struct Trainer<T> {
    pub model: SonnetModel<T>,
    pub config: TrainConfig,
    adam: AdamState<T>,
    stopper: EarlyStopping,
    history: TrainHistory,
    best: ParamStore<T>,
    step: u64,
    roots: SeedRoots,
}

#[derive(Serialize, Deserialize)]
struct StateMeta {
    model: ModelConfig,
    train: TrainConfig,
    stopper: EarlyStopping,
    history: TrainHistory,
    step: u64,
    adam_step: u64,
}

impl<T: Real> Trainer<T> {
    pub fn new(model: SonnetModel<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = {
            let refs: Vec<&Tensor<T>> = model.params.iter().map(|(_, t)| t).collect();
            AdamState::new(&refs)
        };
        Ok(Self {
            roots: set_seed(model.config.seed),
            best: model.params.clone(),
            stopper: EarlyStopping::new(config.patience),
            history: TrainHistory::default(),
            adam,
            step: 0,
            model,
            config,
        })
    }

    pub fn history(&self) -> &TrainHistory {
        &self.history
    }

    pub fn epochs_done(&self) -> usize {
        self.history.epochs.len()
    }

    pub fn finished(&self) -> bool {
        self.history.stop_reason.is_some()
    }

    /// Row order of 0-based `epoch`, reshuffled from an epoch-keyed stream.
    fn order(&self, epoch: usize, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        if self.config.shuffle {
            idx.shuffle(&mut stream_rng(self.roots.shuffle, epoch as u64));
        }
        idx
    }

    /// One Adam step on a batch; returns the batch loss.
    fn train_batch(&mut self, data: &Dataset<T>, rows: &[usize], lr: f64, epoch: usize) -> Result<f64> {
        let (x, y, target) = data.batch(rows);
        let mut tape = Tape::new();
        let bound = self.model.bind(&mut tape, true);
        let xv = x.map(|x| tape.constant(x));
        let yv = tape.constant(y);
        let tv = tape.constant(target);
        let ctx = ForwardCtx {
            training: true,
            key: DropoutKey::new(self.roots.dropout, MVCA_LAYER, self.step),
        };
        let pred = self.model.forward(&mut tape, &bound, xv, yv, &ctx).map_err(|e| match e {
            Error::NonFinite { layer } => Error::NonFinite {
                layer: format!("{layer} during epoch {epoch}"),
            },
            other => other,
        })?;
        let loss = mse_loss(&mut tape, pred, tv)?;
        let value = tape.value(loss).item().as_f64();
        if !value.is_finite() {
            return Err(Error::Divergence { epoch, loss: value });
        }
        tape.backward(loss)?;
        let grads: Vec<Tensor<T>> = bound.vars().iter().map(|&v| tape.grad_tensor(v)).collect();
        let grad_refs: Vec<&[T]> = grads.iter().map(|g| g.data()).collect();
        let mut params: Vec<&mut Tensor<T>> = self.model.params.tensors_mut().collect();
        adam_step(&mut params, &grad_refs, &mut self.adam, lr, AdamConfig::default())?;
        self.step += 1;
        Ok(value)
    }

    /// Runs one epoch; returns false once training has stopped.
    pub fn run_epoch(&mut self, train: &Dataset<T>, val: &Dataset<T>) -> Result<bool> {
        if self.finished() {
            return Ok(false);
        }
        if train.is_empty() || val.is_empty() {
            return Err(Error::Data("training and validation sets must be non-empty".into()));
        }
        let e0 = self.epochs_done();
        let epoch = e0 + 1;
        let lr = lr_at(self.config.lr, e0, self.config.max_epochs);
        let order = self.order(e0, train.len());
        let mut total = 0.0;
        for rows in order.chunks(self.config.batch_size) {
            total += self.train_batch(train, rows, lr, epoch)? * rows.len() as f64;
        }
        let train_loss = total / train.len() as f64;
        let val_loss = evaluate_loss(&self.model, val, self.config.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence { epoch, loss: val_loss });
        }
        self.history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
        });
        if self.stopper.observe(val_loss) {
            self.best = self.model.params.clone();
        }
        self.history.best_epoch = self.stopper.best_epoch;
        if self.stopper.should_stop() {
            self.history.stop_reason = Some(StopReason::Patience);
        } else if epoch >= self.config.max_epochs {
            self.history.stop_reason = Some(StopReason::MaxEpochs);
        }
        Ok(!self.finished())
    }

    /// Trains to completion and returns the lowest-validation-loss model.
    pub fn fit(mut self, train: &Dataset<T>, val: &Dataset<T>) -> Result<(SonnetModel<T>, TrainHistory)> {
        while self.run_epoch(train, val)? {}
        Ok(self.into_best())
    }

    pub fn into_best(self) -> (SonnetModel<T>, TrainHistory) {
        let model = SonnetModel {
            config: self.model.config,
            params: self.best,
        };
        (model, self.history)
    }

    /// Serialises everything needed to continue training bit-for-bit.
    pub fn state_bytes(&self) -> Vec<u8> {
        let meta = StateMeta {
            model: self.model.config.clone(),
            train: self.config.clone(),
            stopper: self.stopper.clone(),
            history: self.history.clone(),
            step: self.step,
            adam_step: self.adam.step,
        };
        let meta = serde_json::to_string(&meta).expect("state serialises");
        let mut owned: Vec<(String, Tensor<T>)> = Vec::new();
        for (i, (name, t)) in self.model.params.iter().enumerate() {
            owned.push((format!("param.{name}"), t.clone()));
            owned.push((format!("best.{name}"), self.best.iter().nth(i).expect("aligned").1.clone()));
            owned.push((format!("adam.m.{name}"), Tensor::new(t.shape(), self.adam.m[i].clone()).expect("moment")));
            owned.push((format!("adam.v.{name}"), Tensor::new(t.shape(), self.adam.v[i].clone()).expect("moment")));
        }
        let refs: Vec<(&str, &Tensor<T>)> = owned.iter().map(|(n, t)| (n.as_str(), t)).collect();
        encode(STATE_MAGIC, &meta, &refs)
    }

    pub fn from_state_bytes(bytes: &[u8]) -> Result<Self> {
        let c = decode(STATE_MAGIC, bytes)?;
        if c.scalar_bytes as usize != T::BYTES {
            return Err(Error::Checkpoint(format!(
                "state holds {}-byte scalars, trainer uses {}",
                c.scalar_bytes,
                T::BYTES
            )));
        }
        let meta: StateMeta =
            serde_json::from_str(&c.meta).map_err(|e| Error::Checkpoint(format!("state header: {e}")))?;
        let lookup = |key: String| -> Result<Tensor<T>> {
            c.tensors
                .iter()
                .find(|(n, _)| *n == key)
                .map(|(_, t)| t.cast())
                .ok_or_else(|| Error::Checkpoint(format!("state lacks {key}")))
        };
        let template = SonnetModel::<T>::new(meta.model.clone())?;
        let names: Vec<String> = template.params.names().map(str::to_string).collect();
        let mut params = Vec::new();
        let mut best = Vec::new();
        let (mut m, mut v) = (Vec::new(), Vec::new());
        for name in &names {
            params.push((name.clone(), lookup(format!("param.{name}"))?));
            best.push((name.clone(), lookup(format!("best.{name}"))?));
            m.push(lookup(format!("adam.m.{name}"))?.into_data());
            v.push(lookup(format!("adam.v.{name}"))?.into_data());
        }
        let model = SonnetModel::from_params(meta.model, ParamStore::new(params))?;
        Ok(Self {
            roots: set_seed(model.config.seed),
            model,
            config: meta.train,
            adam: AdamState {
                step: meta.adam_step,
                m,
                v,
            },
            stopper: meta.stopper,
            history: meta.history,
            best: ParamStore::new(best),
            step: meta.step,
        })
    }
}

/// Trains `model` and returns the best checkpoint with its history.
pub fn train<T: Real>(
    model: SonnetModel<T>,
    train: &Dataset<T>,
    val: &Dataset<T>,
    cfg: &TrainConfig,
) -> Result<(SonnetModel<T>, TrainHistory)> {
    Trainer::new(model, cfg.clone())?.fit(train, val)
}

/// Hyperparameter axes searched exhaustively.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub alpha: Vec<f64>,
    pub n_atoms: Vec<usize>,
    pub dropout: Vec<f64>,
    pub lr: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            alpha: vec![0.0, 0.1, 0.25, 0.75],
            n_atoms: vec![8, 16, 32],
            dropout: vec![0.0, 0.1, 0.2],
            lr: vec![2e-3, 1e-3, 5e-4, 2e-4, 1e-4, 5e-5],
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub alpha: f64,
    pub n_atoms: usize,
    pub dropout: f64,
    pub lr: f64,
}

impl GridPoint {
    pub fn apply(&self, model: &ModelConfig, train: &TrainConfig) -> (ModelConfig, TrainConfig) {
        let m = ModelConfig {
            alpha: self.alpha,
            n_atoms: self.n_atoms,
            dropout: self.dropout,
            ..model.clone()
        };
        let t = TrainConfig {
            lr: self.lr,
            ..train.clone()
        };
        (m, t)
    }
}

impl GridSpec {
    /// Cartesian product in axis order alpha, n_atoms, dropout, lr (lr fastest).
    pub fn points(&self) -> Result<Vec<GridPoint>> {
        for (name, len) in [
            ("alpha", self.alpha.len()),
            ("n_atoms", self.n_atoms.len()),
            ("dropout", self.dropout.len()),
            ("lr", self.lr.len()),
        ] {
            if len == 0 {
                return Err(Error::Config(format!("grid axis {name} is empty")));
            }
        }
        let mut out = Vec::new();
        for &alpha in &self.alpha {
            for &n_atoms in &self.n_atoms {
                for &dropout in &self.dropout {
                    for &lr in &self.lr {
                        out.push(GridPoint {
                            alpha,
                            n_atoms,
                            dropout,
                            lr,
                        });
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub index: usize,
    pub point: GridPoint,
    pub val_loss: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridOutcome {
    pub best: GridPoint,
    pub best_index: usize,
    pub leaderboard: Vec<LeaderboardRow>,
}

impl GridOutcome {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,alpha,n_atoms,dropout,lr,val_loss,error\n");
        for r in &self.leaderboard {
            let p = r.point;
            let loss = r.val_loss.map(|v| v.to_string()).unwrap_or_default();
            let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
            out += &format!("{},{},{},{},{},{},{}\n", r.index, p.alpha, p.n_atoms, p.dropout, p.lr, loss, err);
        }
        out
    }
}

/// Evaluates every grid point on a pool of `workers` threads and selects the
/// lowest validation loss, breaking ties by grid order. Points whose
/// evaluation fails are kept on the leaderboard with their error.
pub fn grid_search<F>(spec: &GridSpec, workers: usize, eval: F) -> Result<GridOutcome>
where
    F: Fn(&GridPoint) -> Result<f64> + Sync,
{
    let points = spec.points()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let results: Vec<Result<f64>> = pool.install(|| points.par_iter().map(&eval).collect());
    let leaderboard: Vec<LeaderboardRow> = points
        .iter()
        .zip(results)
        .enumerate()
        .map(|(index, (&point, r))| match r {
            Ok(loss) if loss.is_finite() => LeaderboardRow { index, point, val_loss: Some(loss), error: None },
            Ok(loss) => LeaderboardRow { index, point, val_loss: None, error: Some(format!("non-finite loss {loss}")) },
            Err(e) => LeaderboardRow { index, point, val_loss: None, error: Some(e.to_string()) },
        })
        .collect();
    let best = leaderboard
        .iter()
        .filter_map(|r| r.val_loss.map(|l| (r.index, l)))
        .fold(None, |acc: Option<(usize, f64)>, (i, l)| match acc {
            Some((_, bl)) if bl <= l => acc,
            _ => Some((i, l)),
        })
        .ok_or_else(|| Error::Config("every grid point failed".into()))?;
    Ok(GridOutcome {
        best: points[best.0],
        best_index: best.0,
        leaderboard,
    })
}
