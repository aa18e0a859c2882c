//! Central finite-difference gradient checks in f64.

use dcsrn_core::autodiff::{ops::RunningStats, Mode, Tape, Tensor, Var};
use dcsrn_core::models::ModelGraph;
use dcsrn_core::Architecture;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-3;
pub const TOLERANCE: f64 = 1e-3;

/// Relative error of one gradient tensor, `‖a − n‖₂ / max(‖a‖₂, ‖n‖₂)`.
/// Entry-wise ratios are dominated by the O(h²) truncation term on entries
/// that are orders of magnitude below the tensor's typical gradient.
pub fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n) * (a - n)).sum::<f64>().sqrt();
    let denom = norm(analytic).max(norm(numeric));
    if denom == 0.0 {
        0.0
    } else {
        diff / denom
    }
}

pub type Build<'a> = dyn Fn(&mut Tape<f64>, &[Var]) -> Var + 'a;

fn eval(leaves: &[Tensor<f64>], f: &Build<'_>) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = leaves.iter().map(|t| tape.leaf(t.clone(), false)).collect();
    let loss = f(&mut tape, &vars);
    tape.value(loss).data()[0]
}

/// Max relative error between reverse-mode and finite-difference gradients
/// of the scalar `f` with respect to every entry of every leaf.
pub fn check_leaves(leaves: &[Tensor<f64>], f: &Build<'_>) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = leaves.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let loss = f(&mut tape, &vars);
    tape.backward(loss).expect("backward");
    let mut worst = 0.0f64;
    for (i, &v) in vars.iter().enumerate() {
        let analytic = tape.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(leaves[i].shape()));
        let mut numeric = vec![0.0; leaves[i].numel()];
        for (j, n) in numeric.iter_mut().enumerate() {
            let mut plus = leaves.to_vec();
            plus[i].data_mut()[j] += STEP;
            let mut minus = leaves.to_vec();
            minus[i].data_mut()[j] -= STEP;
            *n = (eval(&plus, f) - eval(&minus, f)) / (2.0 * STEP);
        }
        worst = worst.max(rel_error(analytic.data(), &numeric));
    }
    worst
}

pub fn randn(shape: [usize; 5], seed: u64) -> Tensor<f64> {
    Tensor::randn(shape, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// MSE against a fixed random target: gives every output entry a
/// different upstream gradient.
fn loss_vs_target(tape: &mut Tape<f64>, out: Var, seed: u64) -> Var {
    let target = randn(tape.value(out).shape(), seed ^ 0xA5A5);
    let t = tape.input(target);
    tape.mse_loss(out, t).expect("mse")
}

pub fn conv3d(seed: u64, kernel: [usize; 3], input: [usize; 5]) -> f64 {
    let [_, cin, ..] = input;
    let cout = 3;
    let leaves = vec![
        randn(input, seed),
        randn([cout, cin, kernel[0], kernel[1], kernel[2]], seed + 1000),
        randn([cout, 1, 1, 1, 1], seed + 2000),
    ];
    check_leaves(&leaves, &|t, v| {
        let y = t.conv3d(v[0], v[1], v[2]).expect("conv");
        loss_vs_target(t, y, seed)
    })
}

pub fn batch_norm(seed: u64) -> f64 {
    let leaves = vec![
        randn([2, 3, 3, 4, 4], seed),
        randn([3, 1, 1, 1, 1], seed + 1000),
        randn([3, 1, 1, 1, 1], seed + 2000),
    ];
    check_leaves(&leaves, &|t, v| {
        let mut running = RunningStats::new(3);
        let y = t.batch_norm(v[0], v[1], v[2], &mut running, Mode::Train).expect("bn");
        loss_vs_target(t, y, seed)
    })
}

pub fn elu(seed: u64) -> f64 {
    // Keep samples away from the kink so the central difference never
    // straddles it.
    let mut x = randn([2, 2, 3, 3, 3], seed);
    for v in x.data_mut() {
        if v.abs() < 10.0 * STEP {
            *v += 0.05f64.copysign(*v);
        }
    }
    check_leaves(&[x], &|t, v| {
        let y = t.elu(v[0]);
        loss_vs_target(t, y, seed)
    })
}

pub fn concat(seed: u64) -> f64 {
    let leaves = vec![
        randn([2, 1, 3, 3, 3], seed),
        randn([2, 2, 3, 3, 3], seed + 1000),
        randn([2, 3, 3, 3, 3], seed + 2000),
    ];
    check_leaves(&leaves, &|t, v| {
        let y = t.concat_channels(v).expect("concat");
        loss_vs_target(t, y, seed)
    })
}

pub fn mse(seed: u64) -> f64 {
    let leaves = vec![randn([2, 2, 3, 3, 3], seed), randn([2, 2, 3, 3, 3], seed + 1000)];
    check_leaves(&leaves, &|t, v| t.mse_loss(v[0], v[1]).expect("mse"))
}

/// End-to-end check over every parameter of a small DCSRN on a random
/// 8³ input in train mode.
pub fn dcsrn_end_to_end(seed: u64, growth_rate: usize) -> f64 {
    let arch: Architecture = format!("dcsrn:k={growth_rate}").parse().expect("arch");
    let mut model: ModelGraph<f64> = arch.build(seed).expect("build");
    let input = randn([1, 1, 8, 8, 8], seed + 1);
    let target = randn([1, 1, 8, 8, 8], seed + 2);
    let loss_of = |model: &mut ModelGraph<f64>, tape: &mut Tape<f64>| -> (Var, Vec<Var>) {
        let x = tape.input(input.clone());
        let y = tape.input(target.clone());
        let (out, params) = model.forward(tape, x, Mode::Train).expect("forward");
        (tape.mse_loss(out, y).expect("mse"), params)
    };
    let mut tape = Tape::new();
    let (loss, params) = loss_of(&mut model, &mut tape);
    tape.backward(loss).expect("backward");
    let analytic: Vec<Tensor<f64>> = params
        .iter()
        .zip(model.params())
        .map(|(&v, p)| tape.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(p.value.shape())))
        .collect();
    let eval = |model: &mut ModelGraph<f64>| {
        let mut t = Tape::new();
        let (l, _) = loss_of(model, &mut t);
        t.value(l).data()[0]
    };
    let mut worst = 0.0f64;
    for (i, g) in analytic.iter().enumerate() {
        let mut numeric = vec![0.0; g.numel()];
        for (j, n) in numeric.iter_mut().enumerate() {
            let orig = model.params()[i].value.data()[j];
            model.params_mut()[i].value.data_mut()[j] = orig + STEP;
            let lp = eval(&mut model);
            model.params_mut()[i].value.data_mut()[j] = orig - STEP;
            let lm = eval(&mut model);
            model.params_mut()[i].value.data_mut()[j] = orig;
            *n = (lp - lm) / (2.0 * STEP);
        }
        worst = worst.max(rel_error(g.data(), &numeric));
    }
    worst
}
