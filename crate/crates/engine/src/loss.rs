use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Geometry of the windowed reconstruction loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossSpec {
    /// Frames per window.
    pub window_size: usize,
    pub height: usize,
    pub width: usize,
}

impl LossSpec {
    /// 75 frames of 64×64.
    pub const WINDOW_75X64X64: LossSpec = LossSpec {
        window_size: 75,
        height: 64,
        width: 64,
    };

    /// Total pixels per window (`N_e = window_size × height × width`).
    pub fn pixel_count(&self) -> usize {
        self.window_size * self.height * self.width
    }
}

/// Sum over frames of squared frame differences, divided by the number of
/// pixels in the window. Accumulated in `f64`.
pub fn mse_loss<T: Scalar>(input: &Tensor<T>, output: &Tensor<T>) -> Result<f64> {
    if input.shape() != output.shape() {
        return Err(EngineError::shape("mse_loss", input.shape(), output.shape()));
    }
    let n = input.len();
    if n == 0 {
        return Err(EngineError::EmptyBatch("mse_loss"));
    }
    let sum: f64 = input
        .data()
        .iter()
        .zip(output.data())
        .map(|(&a, &b)| {
            let d = a.as_f64() - b.as_f64();
            d * d
        })
        .sum();
    Ok(sum / n as f64)
}

/// `∂(scale · mse_loss) / ∂output`.
pub fn mse_loss_grad<T: Scalar>(input: &Tensor<T>, output: &Tensor<T>, scale: f64) -> Result<Tensor<T>> {
    if input.shape() != output.shape() {
        return Err(EngineError::shape("mse_loss_grad", input.shape(), output.shape()));
    }
    let k = T::from_f64_lossy(2.0 * scale / input.len() as f64);
    let data = input
        .data()
        .iter()
        .zip(output.data())
        .map(|(&i, &o)| k * (o - i))
        .collect();
    Tensor::from_vec(output.shape(), data)
}

/// Batch objective: mean of per-window losses. Returns the mean, the
/// per-window values and the gradient for each output.
pub fn batch_mse<T: Scalar>(inputs: &[Tensor<T>], outputs: &[Tensor<T>]) -> Result<(f64, Vec<f64>, Vec<Tensor<T>>)> {
    if inputs.is_empty() {
        return Err(EngineError::EmptyBatch("batch_mse"));
    }
    if inputs.len() != outputs.len() {
        return Err(EngineError::shape("batch_mse batch", inputs.len(), outputs.len()));
    }
    let scale = 1.0 / inputs.len() as f64;
    let per = inputs
        .iter()
        .zip(outputs)
        .map(|(i, o)| mse_loss(i, o))
        .collect::<Result<Vec<_>>>()?;
    let grads = inputs
        .iter()
        .zip(outputs)
        .map(|(i, o)| mse_loss_grad(i, o, scale))
        .collect::<Result<Vec<_>>>()?;
    let mean = per.iter().sum::<f64>() * scale;
    Ok((mean, per, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    const WINDOW: Shape = Shape::new(1, 75, 64, 64);

    #[test]
    fn pixel_count_is_307200() {
        assert_eq!(LossSpec::WINDOW_75X64X64.pixel_count(), 307_200);
        assert_eq!(WINDOW.numel(), 307_200);
    }

    #[test]
    fn identical_windows_have_zero_loss() {
        let x = Tensor::<f32>::from_fn(WINDOW, |i| (i % 255) as f32 / 255.0);
        assert_eq!(mse_loss(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn ones_against_zeros_is_exactly_one() {
        let ones = Tensor::<f32>::full(WINDOW, 1.0);
        let zeros = Tensor::<f32>::zeros(WINDOW);
        assert_eq!(mse_loss(&ones, &zeros).unwrap(), 1.0);
    }

    #[test]
    fn single_pixel_difference() {
        let a = Tensor::<f64>::zeros(WINDOW);
        let mut b = a.clone();
        b.set(0, 40, 10, 20, 0.5);
        assert_eq!(mse_loss(&a, &b).unwrap(), 0.25 / 307_200.0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = Tensor::<f32>::zeros(WINDOW);
        let b = Tensor::<f32>::zeros(Shape::new(1, 74, 64, 64));
        assert!(matches!(mse_loss(&a, &b), Err(EngineError::ShapeMismatch { .. })));
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let s = Shape::new(1, 2, 2, 2);
        let i = Tensor::<f64>::from_fn(s, |k| k as f64 * 0.1);
        let o = Tensor::<f64>::from_fn(s, |k| 0.8 - k as f64 * 0.05);
        let g = mse_loss_grad(&i, &o, 1.0).unwrap();
        for k in 0..s.numel() {
            let (mut p, mut m) = (o.clone(), o.clone());
            p.data_mut()[k] += 1e-6;
            m.data_mut()[k] -= 1e-6;
            let fd = (mse_loss(&i, &p).unwrap() - mse_loss(&i, &m).unwrap()) / 2e-6;
            assert!((fd - g.data()[k]).abs() < 1e-8);
        }
    }
}
