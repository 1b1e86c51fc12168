use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::tensor::Shape;

/// Per-dimension parameter over `(time, height, width)`.
pub type Triple = [usize; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    Deconv,
    BatchNorm,
    Relu,
    MaxPool,
    Sigmoid,
}

impl LayerKind {
    pub const ALL: [LayerKind; 6] = [
        LayerKind::Conv,
        LayerKind::Deconv,
        LayerKind::BatchNorm,
        LayerKind::Relu,
        LayerKind::MaxPool,
        LayerKind::Sigmoid,
    ];
}

/// Static description of one layer.
///
/// For `MaxPool` the pool factors live in `kernel` (stride equals kernel).
/// Fields that do not apply to a kind are zero / unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub kernel: Triple,
    pub stride: Triple,
    pub padding: Triple,
    pub output_padding: Triple,
    pub in_channels: usize,
    pub out_channels: usize,
}

const DIM_NAMES: [&str; 3] = ["time", "height", "width"];

impl LayerSpec {
    fn base(kind: LayerKind, channels: usize) -> Self {
        LayerSpec {
            kind,
            kernel: [1, 1, 1],
            stride: [1, 1, 1],
            padding: [0, 0, 0],
            output_padding: [0, 0, 0],
            in_channels: channels,
            out_channels: channels,
        }
    }

    pub fn conv(in_channels: usize, out_channels: usize, kernel: Triple, stride: Triple, padding: Triple) -> Self {
        LayerSpec {
            kernel,
            stride,
            padding,
            in_channels,
            out_channels,
            ..Self::base(LayerKind::Conv, 0)
        }
    }

    pub fn deconv(
        in_channels: usize,
        out_channels: usize,
        kernel: Triple,
        stride: Triple,
        padding: Triple,
        output_padding: Triple,
    ) -> Self {
        LayerSpec {
            kernel,
            stride,
            padding,
            output_padding,
            in_channels,
            out_channels,
            ..Self::base(LayerKind::Deconv, 0)
        }
    }

    pub fn batchnorm(channels: usize) -> Self {
        Self::base(LayerKind::BatchNorm, channels)
    }

    pub fn relu(channels: usize) -> Self {
        Self::base(LayerKind::Relu, channels)
    }

    pub fn sigmoid(channels: usize) -> Self {
        Self::base(LayerKind::Sigmoid, channels)
    }

    pub fn maxpool(channels: usize, pool: Triple) -> Self {
        LayerSpec {
            kernel: pool,
            stride: pool,
            ..Self::base(LayerKind::MaxPool, channels)
        }
    }

    pub fn kernel_volume(&self) -> usize {
        self.kernel.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(EngineError::InvalidSpec(msg));
        if self.in_channels == 0 || self.out_channels == 0 {
            return bad(format!("{:?} with zero channels", self.kind));
        }
        match self.kind {
            LayerKind::Conv | LayerKind::Deconv | LayerKind::MaxPool => {
                for d in 0..3 {
                    if self.kernel[d] == 0 {
                        return bad(format!("{:?}: zero kernel along {}", self.kind, DIM_NAMES[d]));
                    }
                    if self.stride[d] == 0 {
                        return bad(format!("{:?}: zero stride along {}", self.kind, DIM_NAMES[d]));
                    }
                    if self.output_padding[d] >= self.stride[d] {
                        return bad(format!(
                            "{:?}: output_padding {} must be smaller than stride {} along {}",
                            self.kind, self.output_padding[d], self.stride[d], DIM_NAMES[d]
                        ));
                    }
                }
                if self.kind != LayerKind::Deconv && self.output_padding != [0, 0, 0] {
                    return bad(format!("{:?}: output_padding only applies to deconv", self.kind));
                }
                if self.kind == LayerKind::MaxPool
                    && (self.stride != self.kernel || self.padding != [0, 0, 0] || self.in_channels != self.out_channels)
                {
                    return bad("maxpool must be non-overlapping, unpadded and channel preserving".into());
                }
            }
            _ => {
                if self.in_channels != self.out_channels {
                    return bad(format!("{:?} must preserve channel count", self.kind));
                }
            }
        }
        Ok(())
    }

    /// Output shape for `input`, or an error naming the violated extent.
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        self.validate()?;
        if input.channels != self.in_channels {
            return Err(EngineError::shape(
                "input channels",
                self.in_channels,
                input.channels,
            ));
        }
        let e = input.extents();
        let mut out = [0usize; 3];
        for d in 0..3 {
            let (k, s, p) = (self.kernel[d], self.stride[d], self.padding[d]);
            out[d] = match self.kind {
                LayerKind::Conv => {
                    if e[d] + 2 * p < k {
                        return Err(EngineError::ExtentTooSmall {
                            op: "conv",
                            extent: DIM_NAMES[d],
                            size: e[d],
                            kernel: k,
                        });
                    }
                    (e[d] + 2 * p - k) / s + 1
                }
                LayerKind::Deconv => {
                    let full = (e[d].max(1) - 1) * s + k + self.output_padding[d];
                    if e[d] == 0 || full <= 2 * p {
                        return Err(EngineError::ExtentTooSmall {
                            op: "deconv",
                            extent: DIM_NAMES[d],
                            size: e[d],
                            kernel: k,
                        });
                    }
                    full - 2 * p
                }
                LayerKind::MaxPool => {
                    if e[d] % k != 0 {
                        return Err(EngineError::NotDivisible {
                            op: "maxpool",
                            extent: DIM_NAMES[d],
                            size: e[d],
                            factor: k,
                        });
                    }
                    e[d] / k
                }
                _ => e[d],
            };
        }
        Ok(Shape::from_extents(self.out_channels, out))
    }
}
