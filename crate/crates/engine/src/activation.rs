use rayon::prelude::*;

use crate::error::{EngineError, Result};
use crate::layer::Mode;
use crate::scalar::Scalar;
use crate::tensor::{ensure_batch, Tensor};

#[derive(Clone, Debug, Default)]
pub struct Relu {
    mask: Option<Vec<Vec<bool>>>,
}

impl Relu {
    pub fn forward<T: Scalar>(&mut self, mut input: Vec<Tensor<T>>, mode: Mode) -> Result<Vec<Tensor<T>>> {
        ensure_batch("relu", &input)?;
        let masks: Vec<Vec<bool>> = input
            .par_iter_mut()
            .map(|x| {
                let mut mask = Vec::new();
                if mode == Mode::Train {
                    mask.reserve(x.len());
                }
                for v in x.data_mut() {
                    let keep = *v > T::zero();
                    if !keep {
                        *v = T::zero();
                    }
                    if mode == Mode::Train {
                        mask.push(keep);
                    }
                }
                mask
            })
            .collect();
        self.mask = (mode == Mode::Train).then_some(masks);
        Ok(input)
    }

    pub fn backward<T: Scalar>(&mut self, mut grad_out: Vec<Tensor<T>>) -> Result<Vec<Tensor<T>>> {
        let masks = self
            .mask
            .take()
            .ok_or_else(|| EngineError::BackwardBeforeForward { layer: "relu".into() })?;
        if masks.len() != grad_out.len() || masks.iter().zip(&grad_out).any(|(m, g)| m.len() != g.len()) {
            return Err(EngineError::shape("relu backward", masks.len(), grad_out.len()));
        }
        grad_out.par_iter_mut().zip(masks.par_iter()).for_each(|(g, m)| {
            for (v, &keep) in g.data_mut().iter_mut().zip(m) {
                if !keep {
                    *v = T::zero();
                }
            }
        });
        Ok(grad_out)
    }

    pub fn clear_cache(&mut self) {
        self.mask = None;
    }
}

#[derive(Clone, Debug, Default)]
pub struct Sigmoid<T> {
    output: Option<Vec<Tensor<T>>>,
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> Sigmoid<T> {
    pub fn forward(&mut self, mut input: Vec<Tensor<T>>, mode: Mode) -> Result<Vec<Tensor<T>>> {
        ensure_batch("sigmoid", &input)?;
        input
            .par_iter_mut()
            .for_each(|x| x.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v)));
        self.output = (mode == Mode::Train).then(|| input.clone());
        Ok(input)
    }

    pub fn backward(&mut self, mut grad_out: Vec<Tensor<T>>) -> Result<Vec<Tensor<T>>> {
        let out = self
            .output
            .take()
            .ok_or_else(|| EngineError::BackwardBeforeForward { layer: "sigmoid".into() })?;
        if out.len() != grad_out.len() || out.iter().zip(&grad_out).any(|(o, g)| o.shape() != g.shape()) {
            return Err(EngineError::shape("sigmoid backward", out.len(), grad_out.len()));
        }
        grad_out.par_iter_mut().zip(out.par_iter()).for_each(|(g, y)| {
            for (d, &s) in g.data_mut().iter_mut().zip(y.data()) {
                *d = *d * s * (T::one() - s);
            }
        });
        Ok(grad_out)
    }

    pub fn clear_cache(&mut self) {
        self.output = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn relu_clamps_negatives() {
        let x = Tensor::from_vec(Shape::new(1, 1, 1, 3), vec![-1.0f64, 0.0, 2.0]).unwrap();
        let y = Relu::default().forward(vec![x], Mode::Eval).unwrap();
        assert_eq!(y[0].data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn sigmoid_is_bounded_and_stable() {
        let x = Tensor::from_vec(Shape::new(1, 1, 1, 3), vec![-1000.0f32, 0.0, 1000.0]).unwrap();
        let y = Sigmoid::default().forward(vec![x], Mode::Eval).unwrap();
        assert_eq!(y[0].data(), &[0.0, 0.5, 1.0]);
    }
}
