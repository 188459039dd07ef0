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

pub fn weighted_sum(tape: &mut Tape<f64>, v: Var) -> Var {
    let shape = tape.shape(v).to_vec();
    let mut r = rng(0xC0FFEE);
    let w = tape.constant(random(&shape, &mut r));
    let p = tape.mul(v, w).unwrap();
    tape.sum_all(p)
}

/// Per-input relative error `‖analytic - numeric‖₂ / max(‖analytic‖₂, ‖numeric‖₂)`
/// of reverse-mode gradients against central differences, plus the largest
/// elementwise absolute error.
pub struct GradReport {
    pub relative: Vec<f64>,
    pub max_abs: f64,
}

pub fn grad_report<F>(inputs: &[Tensor<f64>], step: f64, f: F) -> GradReport
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&mut tape, &vars);
    tape.backward(loss).unwrap();
    let analytic: Vec<Vec<f64>> = vars.iter().map(|&v| tape.grad_tensor(v).into_data()).collect();
    let eval = |p: &[Tensor<f64>]| -> f64 {
        let mut t = Tape::new();
        let vs: Vec<Var> = p.iter().map(|x| t.constant(x.clone())).collect();
        let l = f(&mut t, &vs);
        t.value(l).item()
    };
    let mut relative = Vec::new();
    let mut max_abs: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        let (mut diff2, mut a2, mut n2) = (0.0, 0.0, 0.0);
        for j in 0..input.numel() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[j] += step;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[j] -= step;
            let num = (eval(&plus) - eval(&minus)) / (2.0 * step);
            let a = analytic[k][j];
            diff2 += (a - num).powi(2);
            a2 += a * a;
            n2 += num * num;
            max_abs = max_abs.max((a - num).abs());
        }
        let scale = a2.sqrt().max(n2.sqrt());
        relative.push(if scale == 0.0 { 0.0 } else { diff2.sqrt() / scale });
    }
    GradReport { relative, max_abs }
}
