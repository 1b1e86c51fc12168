//! Analytic gradients against central finite differences, in `f64`.

use cae_engine::gradcheck::{check_kind, relative_error as rel_err, STEP as H};
use cae_engine::{Layer, LayerKind, LayerParams, LayerSpec, Mode, Sequential, Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-3;
const TRIALS: u64 = 20;

fn assert_kind(kind: LayerKind) {
    let err = check_kind(kind, TRIALS, 0xC0FFEE);
    assert!(err < TOL, "{kind:?}: worst relative error {err:e}");
}

#[test]
fn conv3d_gradients() {
    assert_kind(LayerKind::Conv);
}

#[test]
fn conv_transpose3d_gradients() {
    assert_kind(LayerKind::Deconv);
}

#[test]
fn batchnorm_gradients() {
    assert_kind(LayerKind::BatchNorm);
}

#[test]
fn relu_gradients() {
    assert_kind(LayerKind::Relu);
}

#[test]
fn maxpool_gradients() {
    assert_kind(LayerKind::MaxPool);
}

#[test]
fn sigmoid_gradients() {
    assert_kind(LayerKind::Sigmoid);
}

#[test]
fn whole_stack_parameter_gradients() {
    // conv → BN → ReLU → pool → deconv → sigmoid, MSE to a target.
    let specs = vec![
        LayerSpec::conv(1, 2, [1, 3, 3], [1, 1, 1], [0, 1, 1]),
        LayerSpec::batchnorm(2),
        LayerSpec::relu(2),
        LayerSpec::maxpool(2, [1, 2, 2]),
        LayerSpec::deconv(2, 1, [1, 3, 3], [1, 2, 2], [0, 1, 1], [0, 1, 1]),
        LayerSpec::sigmoid(1),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = Shape::new(1, 2, 4, 4);
    let x: Vec<Tensor<f64>> = (0..2).map(|_| Tensor::from_fn(s, |_| rng.gen_range(0.0..1.0))).collect();
    let net = Sequential::<f64>::init(specs, 17).unwrap();

    let loss = |n: &Sequential<f64>| {
        let mut n = n.clone();
        let y = n.forward(x.clone(), Mode::Train).unwrap();
        cae_engine::batch_mse(&x, &y).unwrap().0
    };

    let mut live = net.clone();
    let y = live.forward(x.clone(), Mode::Train).unwrap();
    let (_, _, g) = cae_engine::batch_mse(&x, &y).unwrap();
    live.backward(g).unwrap();
    let analytic: Vec<Vec<f64>> = live.named_params_mut().into_iter().map(|(_, p)| p.grad.clone()).collect();

    for (pi, a) in analytic.iter().enumerate() {
        let mut numeric = Vec::new();
        for i in 0..a.len() {
            let mut plus = net.clone();
            plus.named_params_mut()[pi].1.value[i] += H;
            let mut minus = net.clone();
            minus.named_params_mut()[pi].1.value[i] -= H;
            numeric.push((loss(&plus) - loss(&minus)) / (2.0 * H));
        }
        let err = rel_err(a, &numeric);
        assert!(err < TOL, "param {pi}: relative error {err:e}");
    }
}

#[test]
fn linear_map_gradient_matches_hand_derivation() {
    // A 1×1×1 convolution on two channels is y = W x + b. With
    // L = (1/N) Σ (y - t)², dL/dW = 2 (W x + b - t) xᵀ / N.
    let spec = LayerSpec::conv(2, 2, [1, 1, 1], [1, 1, 1], [0, 0, 0]);
    let w = vec![0.5, -1.0, 2.0, 0.25];
    let x = Tensor::from_vec(Shape::new(2, 1, 1, 1), vec![1.5, -2.0]).unwrap();
    let target = Tensor::from_vec(Shape::new(2, 1, 1, 1), vec![0.0, 1.0]).unwrap();
    let mut layer = Layer::from_params(&spec, LayerParams::affine(w.clone(), vec![0.0, 0.0])).unwrap();
    let y = layer.forward(vec![x.clone()], Mode::Train).unwrap();
    let g = cae_engine::mse_loss_grad(&target, &y[0], 1.0).unwrap();
    layer.backward(vec![g]).unwrap();

    let xv = [1.5, -2.0];
    let yv = [w[0] * xv[0] + w[1] * xv[1], w[2] * xv[0] + w[3] * xv[1]];
    let tv = [0.0, 1.0];
    let mut want = vec![0.0f64; 4];
    for i in 0..2 {
        for j in 0..2 {
            want[i * 2 + j] = 2.0 * (yv[i] - tv[i]) * xv[j] / 2.0;
        }
    }
    let got = &layer.params()[0].grad;
    for (a, b) in got.iter().zip(&want) {
        assert!((a - b).abs() < 1e-12, "{got:?} vs {want:?}");
    }
}

#[test]
fn zero_loss_gives_zero_gradients() {
    let spec = LayerSpec::conv(1, 1, [1, 3, 3], [1, 1, 1], [0, 1, 1]);
    let mut w = vec![0.0; 9];
    w[4] = 1.0;
    let mut layer = Layer::from_params(&spec, LayerParams::affine(w, vec![0.0])).unwrap();
    let x = Tensor::from_fn(Shape::new(1, 2, 3, 3), |i| i as f64 * 0.1);
    let y = layer.forward(vec![x.clone()], Mode::Train).unwrap();
    assert_eq!(y[0], x);
    let g = cae_engine::mse_loss_grad(&x, &y[0], 1.0).unwrap();
    layer.backward(vec![g]).unwrap();
    assert!(layer.params().iter().all(|p| p.grad.iter().all(|&v| v == 0.0)));
}
