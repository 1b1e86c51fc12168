use rayon::prelude::*;

use crate::error::{EngineError, Result};
use crate::geometry::Geometry;
use crate::layer::Mode;
use crate::param::Param;
use crate::scalar::Scalar;
use crate::spec::{LayerKind, LayerSpec};
use crate::tensor::{ensure_batch, Shape, Tensor};

fn check_kind(spec: &LayerSpec, kind: LayerKind) -> Result<()> {
    spec.validate()?;
    if spec.kind != kind {
        return Err(EngineError::InvalidSpec(format!(
            "expected {kind:?} spec, got {:?}",
            spec.kind
        )));
    }
    Ok(())
}

fn check_params<T: Scalar>(spec: &LayerSpec, weight: &[T], bias: &[T]) -> Result<()> {
    let want = spec.in_channels * spec.out_channels * spec.kernel_volume();
    if weight.len() != want {
        return Err(EngineError::shape("weights", want, weight.len()));
    }
    if bias.len() != spec.out_channels {
        return Err(EngineError::shape("bias", spec.out_channels, bias.len()));
    }
    Ok(())
}

fn add_bias<T: Scalar>(out: &mut Tensor<T>, bias: &[T]) {
    for (c, &b) in bias.iter().enumerate() {
        out.channel_mut(c).iter_mut().for_each(|v| *v = *v + b);
    }
}

fn channel_sums<T: Scalar>(t: &Tensor<T>) -> Vec<T> {
    (0..t.shape().channels)
        .map(|c| t.channel(c).iter().fold(T::zero(), |a, &v| a + v))
        .collect()
}

struct SampleGrads<T> {
    weight: Vec<T>,
    bias: Vec<T>,
    input: Option<Tensor<T>>,
}

/// Sums per-sample parameter gradients in sample order.
fn reduce<T: Scalar>(weight: &mut Param<T>, bias: &mut Param<T>, grads: Vec<SampleGrads<T>>) -> Vec<Tensor<T>> {
    let mut inputs = Vec::with_capacity(grads.len());
    for g in grads {
        weight.accumulate(&g.weight);
        bias.accumulate(&g.bias);
        if let Some(t) = g.input {
            inputs.push(t);
        }
    }
    inputs
}

/// 3D cross-correlation. Weights are `(out, in, kt, kh, kw)`.
#[derive(Clone, Debug)]
pub struct Conv3d<T> {
    pub spec: LayerSpec,
    pub weight: Param<T>,
    pub bias: Param<T>,
    /// When false, backward skips the input gradient (first layer).
    pub input_grad: bool,
    cache: Option<Vec<Tensor<T>>>,
}

impl<T: Scalar> Conv3d<T> {
    pub fn new(spec: LayerSpec, weight: Vec<T>, bias: Vec<T>) -> Result<Self> {
        check_kind(&spec, LayerKind::Conv)?;
        check_params(&spec, &weight, &bias)?;
        Ok(Conv3d {
            spec,
            weight: Param::new("weight", weight),
            bias: Param::new("bias", bias),
            input_grad: true,
            cache: None,
        })
    }

    fn geometry(&self, input: Shape, output: Shape) -> Geometry {
        Geometry {
            channels: self.spec.in_channels,
            large: input.extents(),
            small: output.extents(),
            kernel: self.spec.kernel,
            stride: self.spec.stride,
            padding: self.spec.padding,
        }
    }

    fn forward_one(&self, x: &Tensor<T>, out_shape: Shape) -> Tensor<T> {
        let g = self.geometry(x.shape(), out_shape);
        let mut cols = vec![T::zero(); g.rows() * g.cols()];
        g.im2col(x.data(), &mut cols);
        let mut out = Tensor::zeros(out_shape);
        T::gemm(
            self.spec.out_channels,
            g.rows(),
            g.cols(),
            &self.weight.value,
            false,
            &cols,
            false,
            out.data_mut(),
            false,
        );
        add_bias(&mut out, &self.bias.value);
        out
    }

    pub fn forward(&mut self, input: Vec<Tensor<T>>, mode: Mode) -> Result<Vec<Tensor<T>>> {
        let in_shape = ensure_batch("conv3d", &input)?;
        let out_shape = self.spec.output_shape(in_shape)?;
        for (i, x) in input.iter().enumerate() {
            x.ensure_finite(&format!("conv3d input sample {i}"))?;
        }
        let this = &*self;
        let out: Vec<_> = input.par_iter().map(|x| this.forward_one(x, out_shape)).collect();
        self.cache = (mode == Mode::Train).then_some(input);
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: Vec<Tensor<T>>) -> Result<Vec<Tensor<T>>> {
        let input = self.cache.take().ok_or_else(|| EngineError::BackwardBeforeForward {
            layer: "conv3d".into(),
        })?;
        if grad_out.len() != input.len() {
            return Err(EngineError::shape("conv3d backward batch", input.len(), grad_out.len()));
        }
        let in_shape = input[0].shape();
        let out_shape = self.spec.output_shape(in_shape)?;
        if let Some(bad) = grad_out.iter().find(|g| g.shape() != out_shape) {
            return Err(EngineError::shape("conv3d backward", out_shape, bad.shape()));
        }
        let g = self.geometry(in_shape, out_shape);
        let (co, rows, ncols) = (self.spec.out_channels, g.rows(), g.cols());
        let w = &self.weight.value;
        let need_input = self.input_grad;
        let grads: Vec<SampleGrads<T>> = input
            .par_iter()
            .zip(grad_out.par_iter())
            .map(|(x, dy)| {
                let mut cols = vec![T::zero(); rows * ncols];
                g.im2col(x.data(), &mut cols);
                let mut dw = vec![T::zero(); co * rows];
                // dW = dY · colsᵀ
                T::gemm(co, ncols, rows, dy.data(), false, &cols, true, &mut dw, false);
                let input = need_input.then(|| {
                    // dcols = Wᵀ · dY, reusing the cols buffer
                    T::gemm(rows, co, ncols, w, true, dy.data(), false, &mut cols, false);
                    let mut dx = Tensor::zeros(in_shape);
                    g.col2im(&cols, dx.data_mut());
                    dx
                });
                SampleGrads {
                    weight: dw,
                    bias: channel_sums(dy),
                    input,
                }
            })
            .collect();
        Ok(reduce(&mut self.weight, &mut self.bias, grads))
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

/// 3D transposed convolution. Weights are `(in, out, kt, kh, kw)`.
#[derive(Clone, Debug)]
pub struct ConvTranspose3d<T> {
    pub spec: LayerSpec,
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub input_grad: bool,
    cache: Option<Vec<Tensor<T>>>,
}

impl<T: Scalar> ConvTranspose3d<T> {
    pub fn new(spec: LayerSpec, weight: Vec<T>, bias: Vec<T>) -> Result<Self> {
        check_kind(&spec, LayerKind::Deconv)?;
        check_params(&spec, &weight, &bias)?;
        Ok(ConvTranspose3d {
            spec,
            weight: Param::new("weight", weight),
            bias: Param::new("bias", bias),
            input_grad: true,
            cache: None,
        })
    }

    fn geometry(&self, input: Shape, output: Shape) -> Geometry {
        Geometry {
            channels: self.spec.out_channels,
            large: output.extents(),
            small: input.extents(),
            kernel: self.spec.kernel,
            stride: self.spec.stride,
            padding: self.spec.padding,
        }
    }

    fn forward_one(&self, x: &Tensor<T>, out_shape: Shape) -> Tensor<T> {
        let g = self.geometry(x.shape(), out_shape);
        let mut cols = vec![T::zero(); g.rows() * g.cols()];
        // cols = Wᵀ · X
        T::gemm(
            g.rows(),
            self.spec.in_channels,
            g.cols(),
            &self.weight.value,
            true,
            x.data(),
            false,
            &mut cols,
            false,
        );
        let mut out = Tensor::zeros(out_shape);
        g.col2im(&cols, out.data_mut());
        add_bias(&mut out, &self.bias.value);
        out
    }

    pub fn forward(&mut self, input: Vec<Tensor<T>>, mode: Mode) -> Result<Vec<Tensor<T>>> {
        let in_shape = ensure_batch("conv_transpose3d", &input)?;
        let out_shape = self.spec.output_shape(in_shape)?;
        for (i, x) in input.iter().enumerate() {
            x.ensure_finite(&format!("conv_transpose3d input sample {i}"))?;
        }
        let this = &*self;
        let out: Vec<_> = input.par_iter().map(|x| this.forward_one(x, out_shape)).collect();
        self.cache = (mode == Mode::Train).then_some(input);
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: Vec<Tensor<T>>) -> Result<Vec<Tensor<T>>> {
        let input = self.cache.take().ok_or_else(|| EngineError::BackwardBeforeForward {
            layer: "conv_transpose3d".into(),
        })?;
        if grad_out.len() != input.len() {
            return Err(EngineError::shape(
                "conv_transpose3d backward batch",
                input.len(),
                grad_out.len(),
            ));
        }
        let in_shape = input[0].shape();
        let out_shape = self.spec.output_shape(in_shape)?;
        if let Some(bad) = grad_out.iter().find(|g| g.shape() != out_shape) {
            return Err(EngineError::shape("conv_transpose3d backward", out_shape, bad.shape()));
        }
        let g = self.geometry(in_shape, out_shape);
        let (ci, rows, ncols) = (self.spec.in_channels, g.rows(), g.cols());
        let w = &self.weight.value;
        let need_input = self.input_grad;
        let grads: Vec<SampleGrads<T>> = input
            .par_iter()
            .zip(grad_out.par_iter())
            .map(|(x, dy)| {
                let mut dcols = vec![T::zero(); rows * ncols];
                g.im2col(dy.data(), &mut dcols);
                let mut dw = vec![T::zero(); ci * rows];
                // dW = X · dcolsᵀ
                T::gemm(ci, ncols, rows, x.data(), false, &dcols, true, &mut dw, false);
                let input = need_input.then(|| {
                    let mut dx = Tensor::zeros(in_shape);
                    T::gemm(ci, rows, ncols, w, false, &dcols, false, dx.data_mut(), false);
                    dx
                });
                SampleGrads {
                    weight: dw,
                    bias: channel_sums(dy),
                    input,
                }
            })
            .collect();
        Ok(reduce(&mut self.weight, &mut self.bias, grads))
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
