//! Central finite-difference checks of every backward pass in 64-bit mode.
//!
//! Each trial draws a random small shape, random inputs and parameters, and
//! the scalar loss `L = sum(r * y)` for a fixed random `r` (the softmax check
//! uses the cross-entropy itself). Every input and parameter entry is
//! perturbed by `+-STEP` and compared with the analytic gradient.

use rand::seq::SliceRandom;
use rand::Rng;

use super::layers::{softmax_cross_entropy, Conv2d, Dense, Layer, MaxPool2, Relu};
use super::Tensor;
use crate::rng::{self, StreamRng};

pub const STEP: f64 = 1e-5;
/// Denominator floor of the relative error, so exact zeros compare absolutely.
pub const FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    Conv,
    Dense,
    Relu,
    MaxPool,
    SoftmaxCrossEntropy,
}

impl Check {
    pub const ALL: [Check; 5] = [Check::Conv, Check::Dense, Check::Relu, Check::MaxPool, Check::SoftmaxCrossEntropy];

    pub fn name(self) -> &'static str {
        match self {
            Check::Conv => "conv2d",
            Check::Dense => "dense",
            Check::Relu => "relu",
            Check::MaxPool => "maxpool2",
            Check::SoftmaxCrossEntropy => "softmax_cross_entropy",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub check: Check,
    pub trials: usize,
    /// Gradient entries compared over all trials.
    pub entries: usize,
    pub max_rel_error: f64,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

fn uniform(rng: &mut StreamRng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Compare analytic input and parameter gradients of `layer` at `x`.
fn check_layer(mut layer: Layer<f64>, x: Tensor<f64>, rng: &mut StreamRng) -> (usize, f64) {
    let y = layer.forward(&x, true).expect("valid shape");
    let r = Tensor { shape: y.shape.clone(), data: uniform(rng, y.len(), 1.0) };
    layer.zero_grad();
    let dx = layer.backward(&r, true).expect("input gradient");
    let grads: Vec<Vec<f64>> = layer.parameters_mut().into_iter().map(|(_, g)| g.to_vec()).collect();

    let mut probe = layer.clone();
    let loss = |probe: &mut Layer<f64>, x: &Tensor<f64>| dot(&probe.forward(x, false).expect("valid shape").data, &r.data);
    let (mut entries, mut worst) = (0, 0.0f64);
    let mut xp = x.clone();
    for i in 0..x.len() {
        xp.data[i] = x.data[i] + STEP;
        let plus = loss(&mut probe, &xp);
        xp.data[i] = x.data[i] - STEP;
        let minus = loss(&mut probe, &xp);
        xp.data[i] = x.data[i];
        worst = worst.max(relative_error(dx.data[i], (plus - minus) / (2.0 * STEP)));
        entries += 1;
    }
    for (t, analytic) in grads.iter().enumerate() {
        for i in 0..analytic.len() {
            let original = probe.parameters()[t][i];
            probe.parameters_mut()[t].0[i] = original + STEP;
            let plus = loss(&mut probe, &x);
            probe.parameters_mut()[t].0[i] = original - STEP;
            let minus = loss(&mut probe, &x);
            probe.parameters_mut()[t].0[i] = original;
            worst = worst.max(relative_error(analytic[i], (plus - minus) / (2.0 * STEP)));
            entries += 1;
        }
    }
    (entries, worst)
}

fn random_params(layer: &mut Layer<f64>, rng: &mut StreamRng) {
    for (p, _) in layer.parameters_mut() {
        p.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    }
}

fn conv_trial(rng: &mut StreamRng) -> (usize, f64) {
    let (n, c, f) = (rng.gen_range(1..=2), rng.gen_range(1..=3), rng.gen_range(1..=3));
    let (h, w) = (rng.gen_range(3..=6), rng.gen_range(3..=6));
    let mut layer = Layer::Conv(Conv2d::new(c, f));
    random_params(&mut layer, rng);
    let x = Tensor { shape: vec![n, c, h, w], data: uniform(rng, n * c * h * w, 1.0) };
    check_layer(layer, x, rng)
}

fn dense_trial(rng: &mut StreamRng) -> (usize, f64) {
    let n = rng.gen_range(1..=3);
    let shape = if rng.gen_bool(0.5) {
        vec![n, rng.gen_range(1..=12)]
    } else {
        vec![n, rng.gen_range(1..=2), rng.gen_range(1..=3), rng.gen_range(1..=3)]
    };
    let inputs = shape[1..].iter().product();
    let mut layer = Layer::Dense(Dense::new(inputs, rng.gen_range(1..=6)));
    random_params(&mut layer, rng);
    let x = Tensor { data: uniform(rng, shape.iter().product(), 1.0), shape };
    check_layer(layer, x, rng)
}

fn relu_trial(rng: &mut StreamRng) -> (usize, f64) {
    let shape = vec![rng.gen_range(1..=2), rng.gen_range(1..=3), rng.gen_range(1..=4), rng.gen_range(1..=4)];
    // stay clear of the kink so both probes sit on the same linear piece
    let data = (0..shape.iter().product())
        .map(|_| {
            let v: f64 = rng.gen_range(0.05..1.0);
            if rng.gen_bool(0.5) { v } else { -v }
        })
        .collect();
    check_layer(Layer::Relu(Relu::default()), Tensor { shape, data }, rng)
}

fn maxpool_trial(rng: &mut StreamRng) -> (usize, f64) {
    let shape = vec![rng.gen_range(1..=2), rng.gen_range(1..=3), rng.gen_range(2..=7), rng.gen_range(2..=7)];
    // distinct values 0.01 apart: no ties within a window, even after perturbation
    let len: usize = shape.iter().product();
    let mut data: Vec<f64> = (0..len).map(|i| i as f64 * 0.01 - 0.5).collect();
    data.shuffle(rng);
    check_layer(Layer::Pool(MaxPool2::default()), Tensor { shape, data }, rng)
}

fn softmax_trial(rng: &mut StreamRng) -> (usize, f64) {
    let (n, k) = (rng.gen_range(1..=4), rng.gen_range(2..=10));
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
    let x = Tensor { shape: vec![n, k], data: uniform(rng, n * k, 3.0) };
    let (_, _, grad) = softmax_cross_entropy(&x, &labels).expect("valid shape");
    let mut xp = x.clone();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        xp.data[i] = x.data[i] + STEP;
        let plus = softmax_cross_entropy(&xp, &labels).expect("valid shape").0;
        xp.data[i] = x.data[i] - STEP;
        let minus = softmax_cross_entropy(&xp, &labels).expect("valid shape").0;
        xp.data[i] = x.data[i];
        worst = worst.max(relative_error(grad.data[i], (plus - minus) / (2.0 * STEP)));
    }
    (x.len(), worst)
}

/// Run `trials` randomized finite-difference trials for one component.
pub fn run(check: Check, trials: usize, seed: u64) -> GradReport {
    let mut rng = rng::stream(seed, "gradcheck", &[check as u64]);
    let trial = match check {
        Check::Conv => conv_trial,
        Check::Dense => dense_trial,
        Check::Relu => relu_trial,
        Check::MaxPool => maxpool_trial,
        Check::SoftmaxCrossEntropy => softmax_trial,
    };
    let mut report = GradReport { check, trials, entries: 0, max_rel_error: 0.0 };
    for _ in 0..trials {
        let (entries, worst) = trial(&mut rng);
        report.entries += entries;
        report.max_rel_error = report.max_rel_error.max(worst);
    }
    report
}
