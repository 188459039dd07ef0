mod common;

use common::*;
use proptest::prelude::*;
use sonnet_core::model::{param_specs, parameter_count, Ablation, ForwardCtx, ModelConfig, SonnetModel, MVCA_LAYER};
use sonnet_core::Error;
use sonnet_numerics::{DropoutKey, Real, Tape, Tensor};

fn config(l: usize, h: usize, c: usize, d: usize, k: usize) -> ModelConfig {
    ModelConfig {
        seq_len: l,
        horizon: h,
        n_exog: c,
        alpha: 0.5,
        d_model: d,
        n_atoms: k,
        dropout: 0.0,
        ..Default::default()
    }
}

fn inputs(lead: &[usize], l: usize, c: usize, seed: u64) -> (Tensor<f64>, Tensor<f64>) {
    let mut r = rng(seed);
    let mut xs = lead.to_vec();
    xs.extend([l, c]);
    let mut ys = lead.to_vec();
    ys.push(l);
    (random(&xs, &mut r), random(&ys, &mut r))
}

#[test]
fn validation_rejects_bad_configs() {
    let ok = config(8, 2, 2, 8, 4);
    assert!(ok.validate().is_ok());
    let cases = [
        ModelConfig { alpha: 0.3, ..ok.clone() },
        ModelConfig { alpha: 1.5, ..ok.clone() },
        ModelConfig { dropout: 1.0, ..ok.clone() },
        ModelConfig { d_model: 1, alpha: 0.0, ..ok.clone() },
        ModelConfig { n_atoms: 0, ..ok.clone() },
        ModelConfig { seq_len: 0, ..ok.clone() },
        ModelConfig { horizon: 0, ..ok.clone() },
        ModelConfig { n_exog: 0, ..ok.clone() },
    ];
    for cfg in cases {
        assert!(matches!(SonnetModel::<f64>::new(cfg.clone()), Err(Error::Config(_))), "{cfg:?}");
    }
    // no exogenous series is fine once the exogenous block has zero width
    assert!(ModelConfig { n_exog: 0, alpha: 0.0, ..ok }.validate().is_ok());
}

#[test]
fn embedding_blocks_match_loops() {
    let cfg = config(5, 2, 3, 8, 2);
    let model = SonnetModel::<f64>::new(cfg.clone()).unwrap();
    let (x, y) = inputs(&[2], 5, 3, 1);
    let mut tape = Tape::new();
    let b = model.bind(&mut tape, false);
    let (xv, yv) = (tape.constant(x.clone()), tape.constant(y.clone()));
    let e = model.embed(&mut tape, &b, Some(xv), yv).unwrap();
    let e = tape.value(e);
    assert_eq!(e.shape(), &[2, 5, 8]);
    let wx = model.params.get("embed.w_x").unwrap();
    let wy = model.params.get("embed.w_y").unwrap();
    for bb in 0..2 {
        for t in 0..5 {
            for j in 0..4 {
                let want: f64 = (0..3).map(|c| x.at(&[bb, t, c]) * wx.at(&[c, j])).sum();
                assert!((e.at(&[bb, t, j]) - want).abs() < 1e-14);
                assert!((e.at(&[bb, t, 4 + j]) - y.at(&[bb, t]) * wy.at(&[0, j])).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn joint_embedding_variant_matches_loops() {
    let cfg = ModelConfig {
        ablation: Ablation { no_embed: true, ..Default::default() },
        ..config(4, 2, 2, 6, 2)
    };
    let model = SonnetModel::<f64>::new(cfg).unwrap();
    let (x, y) = inputs(&[3], 4, 2, 2);
    let mut tape = Tape::new();
    let b = model.bind(&mut tape, false);
    let (xv, yv) = (tape.constant(x.clone()), tape.constant(y.clone()));
    let e = model.embed(&mut tape, &b, Some(xv), yv).unwrap();
    let e = tape.value(e);
    let wz = model.params.get("embed.w_z").unwrap();
    assert_eq!(wz.shape(), &[3, 6]);
    for bb in 0..3 {
        for t in 0..4 {
            for j in 0..6 {
                let want = x.at(&[bb, t, 0]) * wz.at(&[0, j]) + x.at(&[bb, t, 1]) * wz.at(&[1, j]) + y.at(&[bb, t]) * wz.at(&[2, j]);
                assert!((e.at(&[bb, t, j]) - want).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn zero_alpha_ignores_exogenous_input() {
    let cfg = ModelConfig { alpha: 0.0, dropout: 0.0, ..config(12, 3, 4, 8, 3) };
    let model = SonnetModel::<f64>::new(cfg).unwrap();
    assert!(model.params.get("embed.w_x").is_none());
    let (x, y) = inputs(&[2], 12, 4, 3);
    let base = model.predict(Some(&x), &y).unwrap();
    let other = x.map(|v| 1e3 * v.sin() - 7.0);
    assert_eq!(model.predict(Some(&other), &y).unwrap(), base);
    assert_eq!(model.predict(None, &y).unwrap(), base);
}

#[test]
fn unit_alpha_ignores_endogenous_input() {
    let cfg = ModelConfig { alpha: 1.0, ..config(10, 2, 2, 8, 2) };
    let model = SonnetModel::<f64>::new(cfg).unwrap();
    assert!(model.params.get("embed.w_y").is_none());
    let (x, y) = inputs(&[2], 10, 2, 4);
    let base = model.predict(Some(&x), &y).unwrap();
    assert_eq!(model.predict(Some(&x), &y.map(|v| v * 9.0 + 1.0)).unwrap(), base);
}

fn conv_oracle(x: &[Vec<f64>], w: &Tensor<f64>, b: &Tensor<f64>, pad: usize) -> Vec<Vec<f64>> {
    let (cout, cin, width) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    let t_in = x[0].len();
    let t_out = t_in + 2 * pad + 1 - width;
    (0..cout)
        .map(|o| {
            (0..t_out)
                .map(|t| {
                    let mut acc = b.data()[o];
                    for c in 0..cin {
                        for s in 0..width {
                            let src = t as isize + s as isize - pad as isize;
                            if src >= 0 && (src as usize) < t_in {
                                acc += w.at(&[o, c, s]) * x[c][src as usize];
                            }
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

fn gelu(v: f64) -> f64 {
    0.5 * v * (1.0 + Real::erf(v / 2f64.sqrt()))
}

#[test]
fn decoder_matches_loops() {
    let cfg = config(9, 4, 1, 6, 2);
    let mut model = SonnetModel::<f64>::new(cfg).unwrap();
    let mut r = rng(5);
    for i in 1..=3 {
        let name = format!("decoder.conv{i}.b");
        let n = model.params.get(&name).unwrap().numel();
        model.params.set(&name, random(&[n], &mut r)).unwrap();
    }
    let rin = random(&[2, 9, 6], &mut r);
    let mut tape = Tape::new();
    let b = model.bind(&mut tape, false);
    let rv = tape.constant(rin.clone());
    let out = model.decode(&mut tape, &b, rv).unwrap();
    let out = tape.value(out);
    assert_eq!(out.shape(), &[2, 4]);
    let p = |n: &str| model.params.get(n).unwrap();
    for bb in 0..2 {
        // [d, L] channels-first view
        let x: Vec<Vec<f64>> = (0..6).map(|j| (0..9).map(|t| rin.at(&[bb, t, j])).collect()).collect();
        let act = |m: Vec<Vec<f64>>| -> Vec<Vec<f64>> { m.into_iter().map(|row| row.into_iter().map(gelu).collect()).collect() };
        let h1 = act(conv_oracle(&x, p("decoder.conv1.w"), p("decoder.conv1.b"), 2));
        let h2 = act(conv_oracle(&h1, p("decoder.conv2.w"), p("decoder.conv2.b"), 1));
        let h3 = conv_oracle(&h2, p("decoder.conv3.w"), p("decoder.conv3.b"), 1);
        assert_eq!(h3.len(), 4);
        assert_eq!(h3[0].len(), 9);
        let wz = p("decoder.w_z");
        for (i, row) in h3.iter().enumerate() {
            let pooled: Vec<f64> = (0..4)
                .map(|j| {
                    let (s, e): (usize, usize) = (j * 9 / 4, ((j + 1) * 9usize).div_ceil(4));
                    row[s..e].iter().sum::<f64>() / (e - s) as f64
                })
                .collect();
            let want: f64 = pooled.iter().zip(wz.data()).map(|(a, w)| a * w).sum();
            assert!((out.at(&[bb, i]) - want).abs() < 1e-12, "{} vs {want}", out.at(&[bb, i]));
        }
    }
}

#[test]
fn zero_reconstruction_decodes_to_zero() {
    for h in [1, 2, 7, 24] {
        let model = SonnetModel::<f64>::new(config(30, h, 1, 8, 2)).unwrap();
        let mut tape = Tape::new();
        let b = model.bind(&mut tape, false);
        let rv = tape.constant(Tensor::zeros(&[3, 30, 8]));
        let out = model.decode(&mut tape, &b, rv).unwrap();
        assert_eq!(tape.value(out).shape(), &[3, h]);
        assert!(tape.value(out).data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn forward_shapes_with_any_leading_axes() {
    for (l, h) in [(1, 1), (2, 5), (7, 7), (24, 24), (28, 7)] {
        let model = SonnetModel::<f64>::new(config(l, h, 2, 8, 3)).unwrap();
        for lead in [vec![], vec![4], vec![2, 3]] {
            let (x, y) = inputs(&lead, l, 2, 6);
            let out = model.predict(Some(&x), &y).unwrap();
            let mut want = lead.clone();
            want.push(h);
            assert_eq!(out.shape(), want.as_slice());
            assert!(out.is_finite());
        }
    }
}

#[test]
fn wrong_input_shapes_rejected() {
    let model = SonnetModel::<f64>::new(config(8, 2, 2, 8, 2)).unwrap();
    let (x, y) = inputs(&[2], 8, 2, 7);
    let (x3, _) = inputs(&[2], 8, 3, 7);
    let (_, y9) = inputs(&[2], 9, 2, 7);
    assert!(matches!(model.predict(Some(&x3), &y), Err(Error::Shape { .. })));
    assert!(matches!(model.predict(Some(&x), &y9), Err(Error::Shape { .. })));
    assert!(matches!(model.predict(None, &y), Err(Error::Shape { .. })));
}

#[test]
fn every_ablation_runs_and_allocates_only_what_it_uses() {
    let base = config(10, 3, 2, 8, 4);
    let (x, y) = inputs(&[3], 10, 2, 8);
    for (name, ab) in Ablation::variants().into_iter().chain([("all", Ablation::all())]) {
        let cfg = ModelConfig { ablation: ab, ..base.clone() };
        let model = SonnetModel::<f64>::new(cfg.clone()).unwrap();
        let names: Vec<&str> = model.params.names().collect();
        let has = |p: &str| names.iter().any(|n| n.starts_with(p));
        assert_eq!(has("mvca.w_q"), !ab.no_coher && !ab.no_mvca, "{name}");
        assert_eq!(has("mvca.mlp"), !ab.no_mlp && !ab.no_mvca, "{name}");
        assert_eq!(has("mvca.w_v"), !ab.no_mvca, "{name}");
        assert_eq!(has("koopman"), !ab.no_koop, "{name}");
        assert_eq!(has("embed.w_z"), ab.no_embed, "{name}");
        assert_eq!(model.parameter_count(), parameter_count(&cfg), "{name}");
        let out = model.predict(Some(&x), &y).unwrap();
        assert_eq!(out.shape(), &[3, 3], "{name}");
        assert!(out.is_finite(), "{name}");
    }
}

#[test]
fn shared_parameters_do_not_depend_on_the_variant() {
    let full = SonnetModel::<f64>::new(config(8, 2, 2, 8, 3)).unwrap();
    for (name, ab) in Ablation::variants() {
        let cfg = ModelConfig { ablation: ab, ..config(8, 2, 2, 8, 3) };
        let m = SonnetModel::<f64>::new(cfg).unwrap();
        for (p, t) in m.params.iter() {
            if let Some(f) = full.params.get(p) {
                assert_eq!(f, t, "{name}: {p}");
            }
        }
    }
    let other = SonnetModel::<f64>::new(ModelConfig { seed: 7, ..config(8, 2, 2, 8, 3) }).unwrap();
    assert_ne!(other.params, full.params);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn closed_form_count_matches_allocation(
        h in 1usize..9, c in 1usize..5, half_d in 1usize..9, k in 1usize..6, mask in 0u8..32, alpha_half in any::<bool>()
    ) {
        let ab = Ablation {
            no_coher: mask & 1 != 0,
            no_mlp: mask & 2 != 0,
            no_mvca: mask & 4 != 0,
            no_embed: mask & 8 != 0,
            no_koop: mask & 16 != 0,
        };
        let cfg = ModelConfig {
            alpha: if alpha_half { 0.5 } else { 0.0 },
            ablation: ab,
            ..config(4, h, c, 2 * half_d, k)
        };
        let model = SonnetModel::<f64>::new(cfg.clone()).unwrap();
        prop_assert_eq!(model.parameter_count(), parameter_count(&cfg));
        let specs: usize = param_specs(&cfg).iter().map(|s| s.shape.iter().product::<usize>()).sum();
        prop_assert_eq!(specs, parameter_count(&cfg));
    }
}

#[test]
fn neutral_full_model_reproduces_ablations_bitwise() {
    let (x, y) = inputs(&[4], 12, 2, 9);
    for ab in [
        Ablation { no_mlp: true, ..Default::default() },
        Ablation { no_koop: true, ..Default::default() },
        Ablation { no_mlp: true, no_koop: true, ..Default::default() },
    ] {
        let cfg = ModelConfig { ablation: ab, ..config(12, 3, 2, 8, 4) };
        let ablated = SonnetModel::<f64>::new(cfg).unwrap();
        let full = ablated.neutral_full().unwrap();
        assert_eq!(full.config.ablation, Ablation::default());
        let a = ablated.predict(Some(&x), &y).unwrap();
        let f = full.predict(Some(&x), &y).unwrap();
        assert_eq!(a.data(), f.data(), "{ab:?}");
    }
    for (_, ab) in Ablation::variants().into_iter().filter(|(n, _)| matches!(*n, "no_coher" | "no_mvca" | "no_embed")) {
        let m = SonnetModel::<f64>::new(ModelConfig { ablation: ab, ..config(8, 2, 2, 8, 2) }).unwrap();
        assert!(m.neutral_full().is_err());
    }
}

#[test]
fn non_finite_values_report_their_layer() {
    let model = SonnetModel::<f64>::new(config(8, 2, 2, 8, 2)).unwrap();
    let (x, mut y) = inputs(&[1], 8, 2, 10);
    y.data_mut()[3] = f64::NAN;
    match model.predict(Some(&x), &y) {
        Err(Error::NonFinite { layer }) => assert_eq!(layer, "endogenous input"),
        other => panic!("{other:?}"),
    }
    let (x, y) = inputs(&[1], 8, 2, 10);
    let mut broken = model.clone();
    broken.params.set("wavelet.alpha", Tensor::full(&[2, 8], -1e6)).unwrap();
    match broken.predict(Some(&x), &y) {
        Err(Error::NonFinite { layer }) => assert_eq!(layer, "wavelet atoms"),
        other => panic!("{other:?}"),
    }
    let mut broken = model.clone();
    broken.params.set("embed.w_y", Tensor::full(&[1, 4], f64::MAX)).unwrap();
    let y = y.map(|v| v + 10.0);
    match broken.predict(Some(&x), &y) {
        Err(Error::NonFinite { layer }) => assert_eq!(layer, "embedding"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn instance_norm_is_affine_equivariant() {
    let cfg = ModelConfig { alpha: 0.0, instance_norm: true, ..config(16, 4, 1, 8, 3) };
    let model = SonnetModel::<f64>::new(cfg).unwrap();
    let (_, y) = inputs(&[3], 16, 1, 11);
    let base = model.predict(None, &y).unwrap();
    let moved = model.predict(None, &y.map(|v| 25.0 * v - 40.0)).unwrap();
    for (a, b) in base.data().iter().zip(moved.data()) {
        assert!((25.0 * a - 40.0 - b).abs() < 1e-9 * (1.0 + b.abs()), "{a} {b}");
    }
    // a constant window is shifted back to its level
    let flat = Tensor::full(&[1, 16], 3.5);
    let out = model.predict(None, &flat).unwrap();
    let zero = model.predict(None, &Tensor::zeros(&[1, 16])).unwrap();
    for (a, b) in out.data().iter().zip(zero.data()) {
        assert!((a - b - 3.5).abs() < 1e-9);
    }
}

#[test]
fn dropout_follows_the_forward_key() {
    let cfg = ModelConfig { dropout: 0.3, ..config(10, 2, 2, 8, 3) };
    let model = SonnetModel::<f64>::new(cfg).unwrap();
    let (x, y) = inputs(&[4], 10, 2, 12);
    let run = |ctx: ForwardCtx| {
        let mut tape = Tape::new();
        let b = model.bind(&mut tape, false);
        let (xv, yv) = (tape.constant(x.clone()), tape.constant(y.clone()));
        let out = model.forward(&mut tape, &b, Some(xv), yv, &ctx).unwrap();
        tape.value(out).clone()
    };
    let train = |step| ForwardCtx {
        training: true,
        key: DropoutKey::new(5, MVCA_LAYER, step),
    };
    assert_eq!(run(train(3)), run(train(3)));
    assert_ne!(run(train(3)), run(train(4)));
    assert_eq!(run(ForwardCtx::eval()), model.predict(Some(&x), &y).unwrap());
}

#[test]
fn checkpoints_round_trip() {
    let cfg = ModelConfig { ablation: Ablation { no_mlp: true, ..Default::default() }, ..config(8, 3, 2, 8, 2) };
    let model = SonnetModel::<f64>::new(cfg).unwrap();
    let bytes = model.to_bytes();
    assert_eq!(&bytes[..8], b"SONNETCK");
    assert_eq!(SonnetModel::<f64>::from_bytes(&bytes).unwrap(), model);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    model.save(&path).unwrap();
    assert_eq!(SonnetModel::<f64>::load(&path).unwrap(), model);
    let narrow = SonnetModel::<f32>::load(&path).unwrap();
    assert_eq!(narrow, model.cast::<f32>());

    let mut extra = bytes.clone();
    extra.push(0);
    assert!(matches!(SonnetModel::<f64>::from_bytes(&extra), Err(Error::Checkpoint(_))));
    assert!(SonnetModel::<f64>::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(SonnetModel::<f64>::from_bytes(&magic).is_err());
    assert!(SonnetModel::<f64>::load(dir.path().join("missing.ckpt")).is_err());
}

#[test]
fn from_params_checks_names_and_shapes() {
    let model = SonnetModel::<f64>::new(config(8, 2, 2, 8, 2)).unwrap();
    let other = ModelConfig { ablation: Ablation { no_koop: true, ..Default::default() }, ..model.config.clone() };
    assert!(SonnetModel::from_params(other, model.params.clone()).is_err());
    let mut params = model.params.clone();
    assert!(params.set("decoder.w_z", Tensor::zeros(&[3])).is_err());
    params.set("decoder.w_z", Tensor::zeros(&[2])).unwrap();
    assert!(SonnetModel::from_params(model.config.clone(), params).is_ok());
}

#[test]
fn gradients_of_every_parameter() {
    let mut model = SonnetModel::<f64>::new(config(6, 2, 2, 4, 2)).unwrap();
    let mut r = rng(50);
    // away from p = 0, where K = I for every S and the S gradient vanishes
    model.params.set("koopman.p", random(&[2], &mut r).map(|v| 2.0 * v)).unwrap();
    let (x, y) = inputs(&[2], 6, 2, 51);
    let names: Vec<String> = model.params.names().map(String::from).collect();
    let values: Vec<Tensor<f64>> = model.params.iter().map(|(_, t)| t.clone()).collect();
    let cfg = model.config.clone();
    let report = grad_report(&values, 1e-6, |tape, vars| {
        let m = SonnetModel::<f64>::new(cfg.clone()).unwrap();
        let b = sonnet_core::model::Bound::new(names.clone(), vars.to_vec()).unwrap();
        let (xv, yv) = (tape.constant(x.clone()), tape.constant(y.clone()));
        let out = m.forward(tape, &b, Some(xv), yv, &ForwardCtx::eval()).unwrap();
        weighted_sum(tape, out)
    });
    for (name, rel) in names.iter().zip(&report.relative) {
        assert!(*rel < 1e-5, "{name}: {rel}");
    }
}
