#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sonnet_numerics::{Tape, Tensor, Var};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Reduces any node to a scalar with fixed pseudo-random weights so every
/// output element contributes a distinct cotangent.
pub fn weighted_sum(tape: &mut Tape<f64>, v: Var) -> Var {
    let shape = tape.shape(v).to_vec();
    let mut r = rng(0xC0FFEE);
    let w = tape.constant(random(&shape, &mut r));
    let p = tape.mul(v, w).unwrap();
    tape.sum_all(p)
}

/// Largest per-tensor relative error `‖analytic - numeric‖∞ / max(‖numeric‖∞, floor)`
/// between reverse-mode gradients and central differences.
pub fn grad_check<F>(inputs: &[Tensor<f64>], step: f64, f: F) -> f64
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&mut tape, &vars);
    tape.backward(loss).unwrap();
    let analytic: Vec<Vec<f64>> = vars.iter().map(|&v| tape.grad_tensor(v).into_data()).collect();

    let eval = |perturbed: &[Tensor<f64>]| -> f64 {
        let mut t = Tape::new();
        let vs: Vec<Var> = perturbed.iter().map(|x| t.leaf(x.clone())).collect();
        let l = f(&mut t, &vs);
        t.value(l).item()
    };

    let mut worst: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        let mut numeric = vec![0.0; input.numel()];
        for j in 0..input.numel() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[j] += step;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[j] -= step;
            numeric[j] = (eval(&plus) - eval(&minus)) / (2.0 * step);
        }
        let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-8);
        let err = analytic[k]
            .iter()
            .zip(&numeric)
            .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
        worst = worst.max(err / scale);
    }
    worst
}
