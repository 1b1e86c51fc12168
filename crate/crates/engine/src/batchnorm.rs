use rayon::prelude::*;

use crate::error::{EngineError, Result};
use crate::layer::Mode;
use crate::param::Param;
use crate::scalar::Scalar;
use crate::tensor::{ensure_batch, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel batch normalization over `batch × time × height × width`.
///
/// Training mode normalizes with the biased batch variance and updates the
/// running statistics with the unbiased one; evaluation mode uses the
/// running statistics only.
#[derive(Clone, Debug)]
pub struct BatchNorm3d<T> {
    pub channels: usize,
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub eps: f64,
    pub momentum: f64,
    cache: Option<Cache<T>>,
}

#[derive(Clone, Debug)]
struct Cache<T> {
    normalized: Vec<Tensor<T>>,
    inv_std: Vec<f64>,
}

impl<T: Scalar> BatchNorm3d<T> {
    pub fn new(gamma: Vec<T>, beta: Vec<T>) -> Result<Self> {
        if gamma.len() != beta.len() || gamma.is_empty() {
            return Err(EngineError::shape("batchnorm gamma/beta", gamma.len(), beta.len()));
        }
        let channels = gamma.len();
        Ok(BatchNorm3d {
            channels,
            gamma: Param::new("gamma", gamma),
            beta: Param::new("beta", beta),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
            cache: None,
        })
    }

    pub fn forward(&mut self, mut input: Vec<Tensor<T>>, mode: Mode) -> Result<Vec<Tensor<T>>> {
        let shape = ensure_batch("batchnorm", &input)?;
        if shape.channels != self.channels {
            return Err(EngineError::shape("batchnorm channels", self.channels, shape.channels));
        }
        let vol = shape.volume();
        if vol == 0 {
            return Err(EngineError::EmptyBatch("batchnorm"));
        }
        let n = (input.len() * vol) as f64;

        let (mean, inv_std): (Vec<f64>, Vec<f64>) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; self.channels];
                let mut var = vec![0.0; self.channels];
                for c in 0..self.channels {
                    let sum: f64 = input
                        .iter()
                        .map(|x| x.channel(c).iter().map(|v| v.as_f64()).sum::<f64>())
                        .sum();
                    let m = sum / n;
                    let ss: f64 = input
                        .iter()
                        .map(|x| {
                            x.channel(c)
                                .iter()
                                .map(|v| {
                                    let d = v.as_f64() - m;
                                    d * d
                                })
                                .sum::<f64>()
                        })
                        .sum();
                    mean[c] = m;
                    var[c] = ss / n;
                }
                let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
                for c in 0..self.channels {
                    let rm = self.running_mean[c].as_f64();
                    let rv = self.running_var[c].as_f64();
                    self.running_mean[c] = T::from_f64_lossy((1.0 - self.momentum) * rm + self.momentum * mean[c]);
                    self.running_var[c] =
                        T::from_f64_lossy((1.0 - self.momentum) * rv + self.momentum * var[c] * unbias);
                }
                let inv = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
                (mean, inv)
            }
            Mode::Eval => (
                self.running_mean.iter().map(|v| v.as_f64()).collect(),
                self.running_var
                    .iter()
                    .map(|v| 1.0 / (v.as_f64() + self.eps).sqrt())
                    .collect(),
            ),
        };

        let gamma = &self.gamma.value;
        let beta = &self.beta.value;
        let normalized: Option<Vec<Tensor<T>>> = match mode {
            Mode::Train => Some(
                input
                    .par_iter()
                    .map(|x| {
                        let mut xh = x.clone();
                        for c in 0..shape.channels {
                            let (m, s) = (T::from_f64_lossy(mean[c]), T::from_f64_lossy(inv_std[c]));
                            xh.channel_mut(c).iter_mut().for_each(|v| *v = (*v - m) * s);
                        }
                        xh
                    })
                    .collect(),
            ),
            Mode::Eval => None,
        };

        match &normalized {
            Some(xh) => {
                for (x, h) in input.iter_mut().zip(xh) {
                    for c in 0..shape.channels {
                        let (g, b) = (gamma[c], beta[c]);
                        for (o, &v) in x.channel_mut(c).iter_mut().zip(h.channel(c)) {
                            *o = g * v + b;
                        }
                    }
                }
            }
            None => {
                input.par_iter_mut().for_each(|x| {
                    for c in 0..shape.channels {
                        let (m, s) = (T::from_f64_lossy(mean[c]), T::from_f64_lossy(inv_std[c]));
                        let (g, b) = (gamma[c], beta[c]);
                        x.channel_mut(c).iter_mut().for_each(|v| *v = g * ((*v - m) * s) + b);
                    }
                });
            }
        }
        self.cache = normalized.map(|normalized| Cache { normalized, inv_std });
        Ok(input)
    }

    pub fn backward(&mut self, mut grad_out: Vec<Tensor<T>>) -> Result<Vec<Tensor<T>>> {
        let cache = self.cache.take().ok_or_else(|| EngineError::BackwardBeforeForward {
            layer: "batchnorm".into(),
        })?;
        if grad_out.len() != cache.normalized.len() {
            return Err(EngineError::shape(
                "batchnorm backward batch",
                cache.normalized.len(),
                grad_out.len(),
            ));
        }
        let shape = cache.normalized[0].shape();
        if let Some(bad) = grad_out.iter().find(|g| g.shape() != shape) {
            return Err(EngineError::shape("batchnorm backward", shape, bad.shape()));
        }
        let n = (grad_out.len() * shape.volume()) as f64;
        let mut sum_dy = vec![0.0; self.channels];
        let mut sum_dy_xh = vec![0.0; self.channels];
        for (dy, xh) in grad_out.iter().zip(&cache.normalized) {
            for c in 0..self.channels {
                let (mut a, mut b) = (0.0, 0.0);
                for (&g, &h) in dy.channel(c).iter().zip(xh.channel(c)) {
                    let g = g.as_f64();
                    a += g;
                    b += g * h.as_f64();
                }
                sum_dy[c] += a;
                sum_dy_xh[c] += b;
            }
        }
        let dbeta: Vec<T> = sum_dy.iter().map(|&v| T::from_f64_lossy(v)).collect();
        let dgamma: Vec<T> = sum_dy_xh.iter().map(|&v| T::from_f64_lossy(v)).collect();
        self.beta.accumulate(&dbeta);
        self.gamma.accumulate(&dgamma);

        let gamma = &self.gamma.value;
        let inv_std = &cache.inv_std;
        grad_out
            .par_iter_mut()
            .zip(cache.normalized.par_iter())
            .for_each(|(dy, xh)| {
                for c in 0..shape.channels {
                    let scale = T::from_f64_lossy(gamma[c].as_f64() * inv_std[c]);
                    let mean_dy = T::from_f64_lossy(sum_dy[c] / n);
                    let mean_dy_xh = T::from_f64_lossy(sum_dy_xh[c] / n);
                    for (g, &h) in dy.channel_mut(c).iter_mut().zip(xh.channel(c)) {
                        *g = scale * (*g - mean_dy - h * mean_dy_xh);
                    }
                }
            });
        Ok(grad_out)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn bn(c: usize) -> BatchNorm3d<f64> {
        BatchNorm3d::new(vec![1.0; c], vec![0.0; c]).unwrap()
    }

    #[test]
    fn already_normalized_channel_is_nearly_unchanged() {
        // values ±1 have mean 0 and biased variance 1
        let x = Tensor::from_fn(Shape::new(1, 2, 2, 2), |i| if i % 2 == 0 { 1.0 } else { -1.0 });
        let y = bn(1).forward(vec![x.clone()], Mode::Train).unwrap().remove(0);
        let scale = 1.0 / (1.0 + BN_EPS).sqrt();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b * scale).abs() < 1e-15);
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn constant_channel_maps_to_zero() {
        let x = Tensor::full(Shape::new(2, 3, 2, 2), 4.2);
        let y = bn(2).forward(vec![x.clone(), x], Mode::Train).unwrap();
        assert!(y.iter().flat_map(|t| t.data()).all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn zero_gamma_outputs_beta() {
        let mut layer = BatchNorm3d::new(vec![0.0, 0.0], vec![0.3, -0.7]).unwrap();
        let x = Tensor::from_fn(Shape::new(2, 2, 3, 3), |i| (i as f64).sin() * 5.0);
        let y = layer.forward(vec![x], Mode::Train).unwrap().remove(0);
        assert!(y.channel(0).iter().all(|&v| v == 0.3));
        assert!(y.channel(1).iter().all(|&v| v == -0.7));
    }

    #[test]
    fn running_stats_follow_momentum_and_drive_eval() {
        let mut layer = bn(1);
        let x = Tensor::from_fn(Shape::new(1, 1, 1, 4), |i| i as f64); // mean 1.5, unbiased var 5/3
        layer.forward(vec![x.clone()], Mode::Train).unwrap();
        assert!((layer.running_mean[0] - 0.15).abs() < 1e-15);
        assert!((layer.running_var[0] - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-15);
        let y = layer.forward(vec![x], Mode::Eval).unwrap().remove(0);
        let s = 1.0 / (layer.running_var[0] + BN_EPS).sqrt();
        assert!((y.data()[3] - (3.0 - 0.15) * s).abs() < 1e-12);
    }

    #[test]
    fn empty_batch_is_rejected() {
        assert!(matches!(
            bn(1).forward(vec![], Mode::Train),
            Err(EngineError::EmptyBatch(_))
        ));
    }
}
