//! Analytic gradients against central finite differences, in `f64`.
//!
//! For a layer the scalar probe is `L = Σ r ⊙ layer(x)` for a random
//! projection `r`, so `∂L/∂y = r`. Every input element and every parameter
//! is perturbed by ±[`STEP`]. The error of a gradient vector is
//! `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`, or the absolute
//! difference when both norms are below 1e-8.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{seeded_init, Layer, LayerKind, LayerParams, LayerSpec, Mode, Shape, Tensor};

pub const STEP: f64 = 1e-4;

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    // gradients that vanish analytically, such as a bias feeding batchnorm
    let scale = norm(analytic).max(norm(numeric));
    if scale < 1e-8 {
        diff
    } else {
        diff / scale
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: Shape) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Values bounded away from zero so ReLU never flips under perturbation.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: Shape) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m = rng.gen_range(0.05..1.0);
        if rng.gen_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// Distinct values spaced 0.01 apart so pooling maxima never swap.
fn distinct(rng: &mut ChaCha8Rng, shape: Shape) -> Tensor<f64> {
    let n = shape.numel();
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 0.01).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        v.swap(i, j);
    }
    Tensor::from_vec(shape, v).expect("length matches shape")
}

fn probe(layer: &Layer<f64>, x: &[Tensor<f64>], r: &[Tensor<f64>]) -> f64 {
    let mut l = layer.clone();
    let y = l.forward(x.to_vec(), Mode::Train).expect("probe forward");
    y.iter()
        .zip(r)
        .map(|(a, b)| a.data().iter().zip(b.data()).map(|(p, q)| p * q).sum::<f64>())
        .sum()
}

/// Worst error over the input gradient and every parameter gradient.
pub fn check_layer(layer: &Layer<f64>, x: &[Tensor<f64>], seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut live = layer.clone();
    let y = live.forward(x.to_vec(), Mode::Train).expect("forward");
    let r: Vec<Tensor<f64>> = y.iter().map(|t| random_tensor(&mut rng, t.shape())).collect();
    let dx = live.backward(r.clone()).expect("backward");

    let analytic: Vec<f64> = dx.iter().flat_map(|t| t.data().to_vec()).collect();
    let mut numeric = Vec::with_capacity(analytic.len());
    for s in 0..x.len() {
        for i in 0..x[s].len() {
            let mut plus = x.to_vec();
            plus[s].data_mut()[i] += STEP;
            let mut minus = x.to_vec();
            minus[s].data_mut()[i] -= STEP;
            numeric.push((probe(layer, &plus, &r) - probe(layer, &minus, &r)) / (2.0 * STEP));
        }
    }
    let mut worst = relative_error(&analytic, &numeric);

    for pi in 0..layer.params().len() {
        let analytic = live.params()[pi].grad.clone();
        let mut numeric = Vec::with_capacity(analytic.len());
        for i in 0..analytic.len() {
            let mut plus = layer.clone();
            plus.params_mut()[pi].value[i] += STEP;
            let mut minus = layer.clone();
            minus.params_mut()[pi].value[i] -= STEP;
            numeric.push((probe(&plus, x, &r) - probe(&minus, x, &r)) / (2.0 * STEP));
        }
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    worst
}

fn small_shape(rng: &mut ChaCha8Rng, channels: usize) -> Shape {
    Shape::new(channels, rng.gen_range(2..5), rng.gen_range(3..6), rng.gen_range(3..6))
}

/// A random small layer of `kind` with non-trivial parameters and an input
/// batch that keeps the layer differentiable under perturbation.
pub fn random_case(kind: LayerKind, trial: u64, seed: u64) -> (Layer<f64>, Vec<Tensor<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ trial.wrapping_mul(7919));
    let rng = &mut rng;
    let (spec, x) = match kind {
        LayerKind::Conv => {
            let (cin, cout) = (rng.gen_range(1..3), rng.gen_range(1..3));
            let spec = match trial % 3 {
                0 => LayerSpec::conv(cin, cout, [3, 3, 3], [1, 1, 1], [1, 1, 1]),
                1 => LayerSpec::conv(cin, cout, [1, 3, 3], [1, 1, 1], [0, 1, 1]),
                _ => LayerSpec::conv(cin, cout, [2, 3, 2], [2, 2, 1], [0, 1, 1]),
            };
            let s = small_shape(rng, cin);
            (spec, vec![random_tensor(rng, s), random_tensor(rng, s)])
        }
        LayerKind::Deconv => {
            let (cin, cout) = (rng.gen_range(1..3), rng.gen_range(1..3));
            let spec = match trial % 3 {
                0 => LayerSpec::deconv(cin, cout, [3, 3, 3], [1, 1, 1], [1, 1, 1], [0, 0, 0]),
                1 => LayerSpec::deconv(cin, cout, [1, 3, 3], [1, 2, 2], [0, 1, 1], [0, 1, 1]),
                _ => LayerSpec::deconv(cin, cout, [3, 3, 3], [3, 2, 2], [0, 1, 1], [0, 1, 1]),
            };
            let s = Shape::new(cin, rng.gen_range(1..4), rng.gen_range(2..4), rng.gen_range(2..4));
            (spec, vec![random_tensor(rng, s), random_tensor(rng, s)])
        }
        LayerKind::BatchNorm => {
            let c = rng.gen_range(1..4);
            let s = small_shape(rng, c);
            let x = (0..rng.gen_range(1..4)).map(|_| random_tensor(rng, s)).collect();
            (LayerSpec::batchnorm(c), x)
        }
        LayerKind::Relu => {
            let c = rng.gen_range(1..3);
            let s = small_shape(rng, c);
            (LayerSpec::relu(c), vec![away_from_zero(rng, s), away_from_zero(rng, s)])
        }
        LayerKind::MaxPool => {
            let c = rng.gen_range(1..3);
            let pool = if trial % 2 == 0 { [1, 2, 2] } else { [3, 2, 2] };
            let s = Shape::new(c, pool[0] * rng.gen_range(1..3), 2 * rng.gen_range(1..4), 2 * rng.gen_range(1..4));
            (LayerSpec::maxpool(c, pool), vec![distinct(rng, s), distinct(rng, s)])
        }
        LayerKind::Sigmoid => {
            let c = rng.gen_range(1..3);
            let s = small_shape(rng, c);
            (LayerSpec::sigmoid(c), vec![Tensor::from_fn(s, |_| rng.gen_range(-4.0..4.0))])
        }
    };
    let mut p: LayerParams<f64> = seeded_init(&spec, rng.gen()).expect("valid spec");
    p.bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
    if kind == LayerKind::BatchNorm {
        p.weight.iter_mut().for_each(|g| *g = rng.gen_range(0.5..1.5));
    }
    (Layer::from_params(&spec, p).expect("valid params"), x)
}

/// Worst error of `kind` over `trials` random cases.
pub fn check_kind(kind: LayerKind, trials: u64, seed: u64) -> f64 {
    (0..trials)
        .map(|t| {
            let (layer, x) = random_case(kind, t, seed);
            check_layer(&layer, &x, seed.wrapping_add(t))
        })
        .fold(0.0, f64::max)
}
