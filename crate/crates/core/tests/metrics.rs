use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sonnet_core::metrics::*;

fn pair(n: usize, seed: u64, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || (0..n).map(|_| r.random_range(lo..hi)).collect::<Vec<f64>>();
    (draw(), draw())
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + b.abs())
}

#[test]
fn hand_examples() {
    assert_eq!(mae(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 1.0);
    assert_eq!(mae(&[3.0, -1.0], &[3.0, -1.0]).unwrap(), 0.0);
    assert_eq!(smape(&[1.0], &[3.0]).unwrap(), 100.0);
    assert_eq!(smape(&[4.0, 5.0], &[4.0, 5.0]).unwrap(), 0.0);
    assert_eq!(smape(&[0.0, 1.0], &[0.0, -1.0]).unwrap(), 100.0);
    assert_eq!(smape_weather(&[300.0], &[301.0], WEATHER_OFFSET).unwrap(), 200.0 / 61.0);
    assert!((smape_weather(&[300.0], &[301.0], WEATHER_OFFSET).unwrap() - 3.2787).abs() < 1e-4);
    assert_eq!(smape_weather(&[7.0, 9.0], &[7.0, 9.0], 30.0).unwrap(), 0.0);
}

#[test]
fn mismatched_or_empty_inputs_rejected() {
    assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
    assert!(smape(&[], &[]).is_err());
    assert!(smape_weather(&[1.0], &[], 30.0).is_err());
    assert!(pearson_r(&[], &[]).is_err());
    assert!(persistence(&[], 3).is_err());
    assert!(seasonal_persistence(&[1.0, 2.0], 1, 3).is_err());
    assert!(seasonal_persistence(&[1.0, 2.0], 1, 0).is_err());
}

#[test]
fn scores_match_loop_oracles() {
    for seed in 0..20 {
        let (y, p) = pair(50 + seed as usize, seed, 0.1, 500.0);
        let n = y.len() as f64;
        let (mut abs, mut sm, mut sw) = (0.0, 0.0, 0.0);
        let xi = y.iter().cloned().fold(f64::INFINITY, f64::min);
        for i in 0..y.len() {
            abs += (y[i] - p[i]).abs();
            sm += 2.0 * (y[i] - p[i]).abs() / (y[i].abs() + p[i].abs());
            sw += 2.0 * (y[i] - p[i]).abs() / ((y[i] - xi).abs() + (p[i] - xi).abs() + 60.0);
        }
        assert!(close(mae(&y, &p).unwrap(), abs / n));
        assert!(close(smape(&y, &p).unwrap(), 100.0 * sm / n));
        assert!(close(smape_weather(&y, &p, 30.0).unwrap(), 100.0 * sw / n));

        let (my, mp) = (y.iter().sum::<f64>() / n, p.iter().sum::<f64>() / n);
        let cov: f64 = y.iter().zip(&p).map(|(a, b)| (a - my) * (b - mp)).sum();
        let vy: f64 = y.iter().map(|a| (a - my).powi(2)).sum();
        let vp: f64 = p.iter().map(|b| (b - mp).powi(2)).sum();
        assert!(close(pearson_r(&y, &p).unwrap().unwrap(), cov / (vy * vp).sqrt()));
    }
}

#[test]
fn correlation_extremes() {
    let y: Vec<f64> = (0..20).map(|i| (i as f64 * 0.3).sin()).collect();
    let up: Vec<f64> = y.iter().map(|v| 2.0 * v + 3.0).collect();
    let down: Vec<f64> = y.iter().map(|v| -v).collect();
    assert!((pearson_r(&y, &up).unwrap().unwrap() - 1.0).abs() < 1e-12);
    assert!((pearson_r(&y, &down).unwrap().unwrap() + 1.0).abs() < 1e-12);
    assert_eq!(pearson_r(&y, &vec![4.0; 20]).unwrap(), None);
}

proptest! {
    #[test]
    fn ranges_hold(seed in any::<u64>(), n in 1usize..40) {
        let (y, p) = pair(n, seed, -100.0, 100.0);
        prop_assert!(mae(&y, &p).unwrap() >= 0.0);
        let s = smape(&y, &p).unwrap();
        prop_assert!((0.0..=200.0).contains(&s));
        let w = smape_weather(&y, &p, 30.0).unwrap();
        prop_assert!((0.0..=200.0).contains(&w));
        if let Some(r) = pearson_r(&y, &p).unwrap() {
            prop_assert!((-1.0..=1.0).contains(&r));
        }
    }

    #[test]
    fn weather_smape_ignores_translation(seed in any::<u64>(), shift in -1e3f64..1e3) {
        let (y, p) = pair(25, seed, 250.0, 320.0);
        let ys: Vec<f64> = y.iter().map(|v| v + shift).collect();
        let ps: Vec<f64> = p.iter().map(|v| v + shift).collect();
        let a = smape_weather(&y, &p, 30.0).unwrap();
        let b = smape_weather(&ys, &ps, 30.0).unwrap();
        prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn persistence_baselines() {
    assert_eq!(persistence(&[1.0, 4.0, 5.0], 3).unwrap(), vec![5.0, 5.0, 5.0]);

    // hourly history with a weekly season: step h reads the value at t + h - 168
    let history: Vec<f64> = (0..400).map(|i| i as f64).collect();
    let t = history.len() - 1;
    let f = seasonal_persistence(&history, 24, 168).unwrap();
    for (h, v) in (1..=24).zip(&f) {
        assert_eq!(*v, (t + h - 168) as f64);
    }
    // beyond one period the lookup wraps by whole periods
    let f = seasonal_persistence(&history, 10, 4).unwrap();
    assert_eq!(f[3], history[t]);
    assert_eq!(f[4], history[t - 3]);

    let periodic: Vec<f64> = (0..200).map(|i| [3.0, 1.0, 4.0, 1.0, 5.0][i % 5]).collect();
    let future: Vec<f64> = (200..212).map(|i| [3.0, 1.0, 4.0, 1.0, 5.0][i % 5]).collect();
    let f = seasonal_persistence(&periodic, 12, 5).unwrap();
    assert_eq!(mae(&future, &f).unwrap(), 0.0);
}

#[test]
fn persistence_on_a_random_walk_is_reproducible() {
    let walk = |seed| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut v = 0.0;
        (0..500)
            .map(|_| {
                v += r.random_range(-1.0..1.0);
                v
            })
            .collect::<Vec<f64>>()
    };
    let score = |w: &[f64]| {
        let (mut truth, mut pred) = (Vec::new(), Vec::new());
        for t in 50..w.len() - 5 {
            truth.extend_from_slice(&w[t + 1..t + 6]);
            pred.extend(persistence(&w[..=t], 5).unwrap());
        }
        mae(&truth, &pred).unwrap()
    };
    let (a, b) = (score(&walk(9)), score(&walk(9)));
    assert!(a > 0.0);
    assert_eq!(a, b);
}

#[test]
fn evaluation_modes_select_elements() {
    let truth = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]];
    let pred = vec![vec![1.0, 2.0, 4.0], vec![4.0, 7.0, 6.0]];
    assert_eq!(EvalMode::TargetStep.select(&truth, &pred), (vec![3.0, 6.0], vec![4.0, 6.0]));
    let (y, p) = EvalMode::FullSequence.select(&truth, &pred);
    assert_eq!(y.len(), 6);
    assert_eq!(p, vec![1.0, 2.0, 4.0, 4.0, 7.0, 6.0]);

    let target = EvalRow::score("s1", "sonnet", EvalMode::TargetStep, &truth, &pred, SmapeKind::Standard).unwrap();
    assert_eq!((target.n, target.horizon, target.mae), (2, 3, 0.5));
    let full = EvalRow::score("s1", "sonnet", EvalMode::FullSequence, &truth, &pred, SmapeKind::Weather).unwrap();
    assert_eq!(full.n, 6);
    assert_eq!(full.mae, 0.5);
}

#[test]
fn report_serialisations() {
    let truth = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
    let flat = vec![vec![2.0, 2.0], vec![2.0, 2.0]];
    let report = EvalReport {
        rows: vec![
            EvalRow::score("2019", "sonnet", EvalMode::TargetStep, &truth, &truth, SmapeKind::Standard).unwrap(),
            EvalRow::score("2019", "persistence", EvalMode::FullSequence, &truth, &flat, SmapeKind::Standard).unwrap(),
        ],
    };
    let csv = report.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "season,model,mode,horizon,n,mae,smape,r");
    assert_eq!(lines[1], "2019,sonnet,target-step,2,2,0,0,1");
    // a constant forecast has no correlation; the field stays empty
    assert!(lines[2].starts_with("2019,persistence,full-sequence,2,4,1,"));
    assert!(lines[2].ends_with(','));
    let back: EvalReport = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(back, report);
}
