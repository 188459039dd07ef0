use sonnet_core::model::{ModelConfig, SonnetModel};
use sonnet_core::trainer::*;
use sonnet_core::Error;
use sonnet_numerics::Tensor;

fn config(seed: u64) -> ModelConfig {
    ModelConfig {
        seq_len: 8,
        horizon: 2,
        n_exog: 1,
        alpha: 0.5,
        d_model: 8,
        n_atoms: 4,
        dropout: 0.1,
        seed,
        ..ModelConfig::default()
    }
}

/// Windows over a noiseless sinusoid with a phase-shifted exogenous copy.
fn sine_set(n: usize, offset: usize, l: usize, h: usize) -> Dataset<f64> {
    let f = |t: usize| (t as f64 * 0.4).sin();
    let (mut x, mut y, mut target) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..n {
        let a = offset + i + l - 1;
        for t in a + 1 - l..=a {
            y.push(f(t));
            x.push(f(t + 2));
        }
        target.extend((a + 1..=a + h).map(f));
    }
    Dataset {
        x: Some(Tensor::new(&[n, l, 1], x).unwrap()),
        y: Tensor::new(&[n, l], y).unwrap(),
        target: Tensor::new(&[n, h], target).unwrap(),
    }
}

fn short(epochs: usize) -> TrainConfig {
    TrainConfig {
        max_epochs: epochs,
        patience: 5.min(epochs - 1).max(1),
        lr: 5e-3,
        batch_size: 8,
        shuffle: true,
    }
}

fn stop_epoch(losses: &[f64], patience: usize) -> (Option<usize>, usize) {
    let mut es = EarlyStopping::new(patience);
    for (i, &l) in losses.iter().enumerate() {
        es.observe(l);
        if es.should_stop() {
            return (Some(i + 1), es.best_epoch);
        }
    }
    (None, es.best_epoch)
}

#[test]
fn scripted_validation_sequences() {
    assert_eq!(stop_epoch(&[1.0, 0.9, 0.91, 0.92, 0.93, 0.94, 0.95], 5), (Some(7), 2));
    let falling: Vec<f64> = (0..100).map(|i| 1.0 / (1.0 + i as f64)).collect();
    assert_eq!(stop_epoch(&falling, 5), (None, 100));
    // equal losses are not improvements
    assert_eq!(stop_epoch(&[2.0, 2.0, 2.0, 2.0, 2.0, 2.0], 5), (Some(6), 1));
    // a late improvement resets the counter
    assert_eq!(stop_epoch(&[1.0, 1.1, 1.2, 1.3, 1.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0], 5), (Some(11), 6));
    assert_eq!(stop_epoch(&[3.0, 4.0, 5.0], 2), (Some(3), 1));
}

#[test]
fn linear_decay_schedule() {
    assert_eq!(lr_at(1e-3, 0, 100), 1e-3);
    assert_eq!(lr_at(2e-3, 50, 100), 1e-3);
    assert!((lr_at(1e-3, 99, 100) - 1e-5).abs() < 1e-18);
    assert_eq!(lr_at(1e-3, 100, 100), 0.0);
}

#[test]
fn config_validation() {
    assert!(TrainConfig::default().validate().is_ok());
    for bad in [
        TrainConfig { patience: 100, ..TrainConfig::default() },
        TrainConfig { patience: 0, ..TrainConfig::default() },
        TrainConfig { batch_size: 0, ..TrainConfig::default() },
        TrainConfig { lr: 0.0, ..TrainConfig::default() },
        TrainConfig { lr: f64::NAN, ..TrainConfig::default() },
    ] {
        assert!(matches!(bad.validate(), Err(Error::Config(_))), "{bad:?}");
    }
}

#[test]
fn seed_roots_are_distinct_and_stable() {
    let r = set_seed(42);
    assert_eq!(r, set_seed(42));
    assert_eq!(r.init, 42);
    assert_ne!(r.dropout, r.shuffle);
    assert_ne!(set_seed(43).dropout, r.dropout);
}

fn small_grid() -> GridSpec {
    GridSpec {
        alpha: vec![0.25, 0.75],
        n_atoms: vec![8],
        dropout: vec![0.0],
        lr: vec![1e-3, 5e-4],
    }
}

#[test]
fn grid_returns_scripted_argmin() {
    let table = |p: &GridPoint| match (p.alpha == 0.25, p.lr == 1e-3) {
        (true, true) => 0.4,
        (true, false) => 0.3,
        (false, true) => 0.1,
        (false, false) => 0.2,
    };
    for workers in [1, 3] {
        let out = grid_search(&small_grid(), workers, |p| Ok(table(p))).unwrap();
        assert_eq!(out.best_index, 2);
        assert_eq!((out.best.alpha, out.best.lr), (0.75, 1e-3));
        assert_eq!(out.leaderboard.len(), 4);
        let losses: Vec<f64> = out.leaderboard.iter().map(|r| r.val_loss.unwrap()).collect();
        assert_eq!(losses, vec![0.4, 0.3, 0.1, 0.2]);
    }
}

#[test]
fn grid_ties_go_to_the_earlier_point() {
    let out = grid_search(&small_grid(), 2, |p| Ok(if p.alpha == 0.25 && p.lr == 1e-3 { 0.9 } else { 0.5 })).unwrap();
    assert_eq!(out.best_index, 1);
}

#[test]
fn grid_counts_and_failures() {
    let spec = GridSpec::default();
    let out = grid_search(&spec, 2, |p| Ok(p.lr)).unwrap();
    assert_eq!(out.leaderboard.len(), 4 * 3 * 3 * 6);
    assert_eq!(out.best.lr, 5e-5);
    assert_eq!(out.to_csv().lines().count(), 1 + 216);

    let single = GridSpec {
        alpha: vec![0.5],
        n_atoms: vec![4],
        dropout: vec![0.1],
        lr: vec![1e-3],
    };
    let calls = std::sync::atomic::AtomicUsize::new(0);
    let out = grid_search(&single, 1, |_| {
        calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        Ok(1.0)
    })
    .unwrap();
    assert_eq!(calls.into_inner(), 1);
    assert_eq!(out.best, single.points().unwrap()[0]);

    let out = grid_search(&small_grid(), 1, |p| {
        if p.alpha == 0.25 {
            Err(Error::Config("alpha·d is not an integer".into()))
        } else if p.lr == 1e-3 {
            Ok(f64::NAN)
        } else {
            Ok(2.0)
        }
    })
    .unwrap();
    assert_eq!(out.best_index, 3);
    assert!(out.leaderboard[0].error.as_ref().unwrap().contains("alpha"));
    assert!(out.leaderboard[2].error.is_some());
    let csv = out.to_csv();
    assert!(csv.lines().nth(1).unwrap().ends_with("alpha·d is not an integer"));

    assert!(grid_search(&small_grid(), 1, |_| Err(Error::Config("no".into()))).is_err());
    let empty = GridSpec { lr: vec![], ..small_grid() };
    assert!(matches!(grid_search(&empty, 1, |_| Ok(0.0)), Err(Error::Config(_))));
}

fn run(seed: u64, epochs: usize) -> (SonnetModel<f64>, TrainHistory) {
    let (tr, va) = (sine_set(24, 0, 8, 2), sine_set(8, 40, 8, 2));
    train(SonnetModel::new(config(seed)).unwrap(), &tr, &va, &short(epochs)).unwrap()
}

#[test]
fn identical_seeds_give_identical_runs() {
    let (m1, h1) = run(42, 3);
    let (m2, h2) = run(42, 3);
    assert_eq!(h1.to_csv(), h2.to_csv());
    for ((_, a), (_, b)) in m1.params.iter().zip(m2.params.iter()) {
        assert_eq!(a, b);
    }
    let (_, h3) = run(1234, 3);
    assert_ne!(h1.epochs[0].train_loss, h3.epochs[0].train_loss);
}

#[test]
fn history_tracks_the_best_epoch() {
    let (model, h) = run(7, 6);
    assert_eq!(h.epochs.len(), 6);
    assert_eq!(h.stop_reason, Some(StopReason::MaxEpochs));
    let min = h.epochs.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(h.best_val_loss(), Some(min));
    for (i, r) in h.epochs.iter().enumerate() {
        assert_eq!(r.epoch, i + 1);
        assert_eq!(r.lr, lr_at(5e-3, i, 6));
    }
    // the returned model is the best checkpoint, not the last
    let va = sine_set(8, 40, 8, 2);
    assert_eq!(evaluate_loss(&model, &va, 3).unwrap(), min);
    assert!(h.to_csv().starts_with("epoch,train_loss,val_loss,lr\n"));
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let (tr, va) = (sine_set(20, 0, 8, 2), sine_set(6, 40, 8, 2));
    let mut straight = Trainer::new(SonnetModel::new(config(5)).unwrap(), short(4)).unwrap();
    let mut split = Trainer::new(SonnetModel::new(config(5)).unwrap(), short(4)).unwrap();
    for _ in 0..4 {
        straight.run_epoch(&tr, &va).unwrap();
    }
    for _ in 0..2 {
        split.run_epoch(&tr, &va).unwrap();
    }
    let bytes = split.state_bytes();
    drop(split);
    let mut resumed = Trainer::<f64>::from_state_bytes(&bytes).unwrap();
    assert_eq!(resumed.epochs_done(), 2);
    while resumed.run_epoch(&tr, &va).unwrap() {}
    assert_eq!(resumed.history(), straight.history());
    assert_eq!(resumed.state_bytes(), straight.state_bytes());
    assert!(Trainer::<f32>::from_state_bytes(&bytes).is_err());
    assert!(Trainer::<f64>::from_state_bytes(&bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn single_step_loss_is_target_only_mse() {
    let cfg = ModelConfig { horizon: 1, ..config(3) };
    let model = SonnetModel::<f64>::new(cfg).unwrap();
    let va = sine_set(10, 5, 8, 1);
    let preds = predict_all(&model, &va, 4).unwrap();
    let mse: f64 = preds
        .iter()
        .zip(va.target.data())
        .map(|(p, t)| (p[0] - t).powi(2))
        .sum::<f64>()
        / 10.0;
    assert!((evaluate_loss(&model, &va, 4).unwrap() - mse).abs() < 1e-15);
}

#[test]
fn training_fits_a_sinusoid() {
    let tr = sine_set(24, 0, 8, 2);
    let cfg = TrainConfig {
        max_epochs: 80,
        patience: 79,
        lr: 1e-2,
        batch_size: 8,
        shuffle: true,
    };
    let model = SonnetModel::new(ModelConfig { dropout: 0.0, ..config(42) }).unwrap();
    let (_, h) = train(model, &tr, &tr, &cfg).unwrap();
    let first = h.epochs[0].train_loss;
    let best = h.best_val_loss().unwrap();
    assert!(best < 0.05 * first, "{first} -> {best}\n{}", h.to_csv());
}

#[test]
fn bad_data_aborts() {
    let tr = sine_set(8, 0, 8, 2);
    let mut poisoned = tr.clone();
    poisoned.target.data_mut()[3] = f64::NAN;
    let err = train(SonnetModel::new(config(1)).unwrap(), &poisoned, &tr, &short(3)).unwrap_err();
    assert!(matches!(err, Error::Divergence { epoch: 1, .. }), "{err}");

    let empty = Dataset {
        x: Some(Tensor::zeros(&[0, 8, 1])),
        y: Tensor::zeros(&[0, 8]),
        target: Tensor::zeros(&[0, 2]),
    };
    let err = train(SonnetModel::new(config(1)).unwrap(), &tr, &empty, &short(3)).unwrap_err();
    assert!(matches!(err, Error::Data(_)));
}
