use rayon::prelude::*;

use crate::error::{EngineError, Result};
use crate::layer::Mode;
use crate::scalar::Scalar;
use crate::spec::{LayerSpec, Triple};
use crate::tensor::{ensure_batch, Shape, Tensor};

/// Non-overlapping 3D max pooling. Ties route the gradient to the first
/// maximum in scan order.
#[derive(Clone, Debug)]
pub struct MaxPool3d {
    pub pool: Triple,
    cache: Option<(Shape, Vec<Vec<u32>>)>,
}

impl MaxPool3d {
    pub fn new(pool: Triple) -> Result<Self> {
        LayerSpec::maxpool(1, pool).validate()?;
        Ok(MaxPool3d { pool, cache: None })
    }

    fn out_shape(&self, s: Shape) -> Result<Shape> {
        LayerSpec::maxpool(s.channels, self.pool).output_shape(s)
    }

    pub fn forward<T: Scalar>(&mut self, input: Vec<Tensor<T>>, mode: Mode) -> Result<Vec<Tensor<T>>> {
        let in_shape = ensure_batch("maxpool3d", &input)?;
        let out_shape = self.out_shape(in_shape)?;
        let [pt, ph, pw] = self.pool;
        let (ih, iw) = (in_shape.height, in_shape.width);
        let results: Vec<(Tensor<T>, Vec<u32>)> = input
            .par_iter()
            .map(|x| {
                let mut out = Tensor::zeros(out_shape);
                let mut arg = vec![0u32; out_shape.numel()];
                let xd = x.data();
                let mut o = 0;
                for c in 0..out_shape.channels {
                    let base_c = c * in_shape.volume();
                    for t in 0..out_shape.time {
                        for h in 0..out_shape.height {
                            for w in 0..out_shape.width {
                                let first = base_c + ((t * pt) * ih + h * ph) * iw + w * pw;
                                let mut best = xd[first];
                                let mut best_i = first;
                                for a in 0..pt {
                                    for b in 0..ph {
                                        let row = base_c + ((t * pt + a) * ih + h * ph + b) * iw + w * pw;
                                        for (d, &v) in xd[row..row + pw].iter().enumerate() {
                                            if v > best {
                                                best = v;
                                                best_i = row + d;
                                            }
                                        }
                                    }
                                }
                                out.data_mut()[o] = best;
                                arg[o] = best_i as u32;
                                o += 1;
                            }
                        }
                    }
                }
                (out, arg)
            })
            .collect();
        let (out, args): (Vec<_>, Vec<_>) = results.into_iter().unzip();
        self.cache = (mode == Mode::Train).then_some((in_shape, args));
        Ok(out)
    }

    pub fn backward<T: Scalar>(&mut self, grad_out: Vec<Tensor<T>>) -> Result<Vec<Tensor<T>>> {
        let (in_shape, args) = self.cache.take().ok_or_else(|| EngineError::BackwardBeforeForward {
            layer: "maxpool3d".into(),
        })?;
        if grad_out.len() != args.len() {
            return Err(EngineError::shape("maxpool3d backward batch", args.len(), grad_out.len()));
        }
        let out_shape = self.out_shape(in_shape)?;
        if let Some(bad) = grad_out.iter().find(|g| g.shape() != out_shape) {
            return Err(EngineError::shape("maxpool3d backward", out_shape, bad.shape()));
        }
        Ok(grad_out
            .par_iter()
            .zip(args.par_iter())
            .map(|(dy, arg)| {
                let mut dx = Tensor::zeros(in_shape);
                let d = dx.data_mut();
                for (&g, &i) in dy.data().iter().zip(arg) {
                    d[i as usize] = d[i as usize] + g;
                }
                dx
            })
            .collect())
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
