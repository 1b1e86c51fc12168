use serde::{Deserialize, Serialize};

use crate::activation::{Relu, Sigmoid};
use crate::batchnorm::BatchNorm3d;
use crate::conv::{Conv3d, ConvTranspose3d};
use crate::error::{EngineError, Result};
use crate::init::LayerParams;
use crate::param::Param;
use crate::pool::MaxPool3d;
use crate::scalar::Scalar;
use crate::spec::{LayerKind, LayerSpec};
use crate::tensor::Tensor;

/// `Train` records what backward needs and uses batch statistics;
/// `Eval` records nothing and uses running statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug)]
pub enum Layer<T> {
    Conv(Conv3d<T>),
    Deconv(ConvTranspose3d<T>),
    BatchNorm(BatchNorm3d<T>),
    Relu(Relu),
    MaxPool(MaxPool3d),
    Sigmoid(Sigmoid<T>),
}

impl<T: Scalar> Layer<T> {
    pub fn from_params(spec: &LayerSpec, params: LayerParams<T>) -> Result<Self> {
        spec.validate()?;
        let no_params = |p: &LayerParams<T>| {
            if p.weight.is_empty() && p.bias.is_empty() {
                Ok(())
            } else {
                Err(EngineError::InvalidSpec(format!("{:?} takes no parameters", spec.kind)))
            }
        };
        Ok(match spec.kind {
            LayerKind::Conv => Layer::Conv(Conv3d::new(*spec, params.weight, params.bias)?),
            LayerKind::Deconv => Layer::Deconv(ConvTranspose3d::new(*spec, params.weight, params.bias)?),
            LayerKind::BatchNorm => {
                if params.weight.len() != spec.in_channels {
                    return Err(EngineError::shape("batchnorm gamma", spec.in_channels, params.weight.len()));
                }
                let mut bn = BatchNorm3d::new(params.weight, params.bias)?;
                if !params.running_mean.is_empty() || !params.running_var.is_empty() {
                    if params.running_mean.len() != bn.channels || params.running_var.len() != bn.channels {
                        return Err(EngineError::shape(
                            "batchnorm running stats",
                            bn.channels,
                            params.running_mean.len(),
                        ));
                    }
                    bn.running_mean = params.running_mean;
                    bn.running_var = params.running_var;
                }
                Layer::BatchNorm(bn)
            }
            LayerKind::Relu => {
                no_params(&params)?;
                Layer::Relu(Relu::default())
            }
            LayerKind::MaxPool => {
                no_params(&params)?;
                Layer::MaxPool(MaxPool3d::new(spec.kernel)?)
            }
            LayerKind::Sigmoid => {
                no_params(&params)?;
                Layer::Sigmoid(Sigmoid::default())
            }
        })
    }

    pub fn forward(&mut self, input: Vec<Tensor<T>>, mode: Mode) -> Result<Vec<Tensor<T>>> {
        match self {
            Layer::Conv(l) => l.forward(input, mode),
            Layer::Deconv(l) => l.forward(input, mode),
            Layer::BatchNorm(l) => l.forward(input, mode),
            Layer::Relu(l) => l.forward(input, mode),
            Layer::MaxPool(l) => l.forward(input, mode),
            Layer::Sigmoid(l) => l.forward(input, mode),
        }
    }

    pub fn backward(&mut self, grad: Vec<Tensor<T>>) -> Result<Vec<Tensor<T>>> {
        match self {
            Layer::Conv(l) => l.backward(grad),
            Layer::Deconv(l) => l.backward(grad),
            Layer::BatchNorm(l) => l.backward(grad),
            Layer::Relu(l) => l.backward(grad),
            Layer::MaxPool(l) => l.backward(grad),
            Layer::Sigmoid(l) => l.backward(grad),
        }
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        match self {
            Layer::Conv(l) => vec![&l.weight, &l.bias],
            Layer::Deconv(l) => vec![&l.weight, &l.bias],
            Layer::BatchNorm(l) => vec![&l.gamma, &l.beta],
            _ => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        match self {
            Layer::Conv(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Deconv(l) => vec![&mut l.weight, &mut l.bias],
            Layer::BatchNorm(l) => vec![&mut l.gamma, &mut l.beta],
            _ => vec![],
        }
    }

    /// Snapshot of parameters and running statistics.
    pub fn export(&self) -> LayerParams<T> {
        match self {
            Layer::Conv(l) => LayerParams::affine(l.weight.value.clone(), l.bias.value.clone()),
            Layer::Deconv(l) => LayerParams::affine(l.weight.value.clone(), l.bias.value.clone()),
            Layer::BatchNorm(l) => LayerParams {
                weight: l.gamma.value.clone(),
                bias: l.beta.value.clone(),
                running_mean: l.running_mean.clone(),
                running_var: l.running_var.clone(),
            },
            _ => LayerParams::default(),
        }
    }

    /// Skip computing the gradient with respect to this layer's input.
    pub fn disable_input_grad(&mut self) {
        match self {
            Layer::Conv(l) => l.input_grad = false,
            Layer::Deconv(l) => l.input_grad = false,
            _ => {}
        }
    }

    pub fn clear_cache(&mut self) {
        match self {
            Layer::Conv(l) => l.clear_cache(),
            Layer::Deconv(l) => l.clear_cache(),
            Layer::BatchNorm(l) => l.clear_cache(),
            Layer::Relu(l) => l.clear_cache(),
            Layer::MaxPool(l) => l.clear_cache(),
            Layer::Sigmoid(l) => l.clear_cache(),
        }
    }
}
