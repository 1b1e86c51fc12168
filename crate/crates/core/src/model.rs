use cae_engine::{LayerParams, LayerSpec, Mode, Sequential, Shape, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::window::WINDOW_SHAPE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cae3d,
    Cae2d,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Cae3d => "cae3d",
            ModelKind::Cae2d => "cae2d",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cae3d" => Ok(ModelKind::Cae3d),
            "cae2d" => Ok(ModelKind::Cae2d),
            other => Err(invalid!("unknown model kind `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Encoder widths; the decoder mirrors them back down to one channel.
    pub channels: [usize; 2],
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(kind: ModelKind, seed: u64) -> Self {
        ModelConfig {
            kind,
            channels: [16, 32],
            seed,
        }
    }
}

/// Number of layers in the encoder; the bottleneck is the output of the last one.
pub const ENCODER_LAYERS: usize = 8;

pub fn layer_specs(config: &ModelConfig) -> Result<Vec<LayerSpec>> {
    let [c1, c2] = config.channels;
    if c1 == 0 || c2 == 0 {
        return Err(invalid!("channel widths must be positive, got {:?}", config.channels));
    }
    let (k, p, first_pool, last_stride, last_pad) = match config.kind {
        ModelKind::Cae3d => ([3, 3, 3], [1, 1, 1], [3, 2, 2], [3, 2, 2], [0, 1, 1]),
        ModelKind::Cae2d => ([1, 3, 3], [0, 1, 1], [1, 2, 2], [1, 2, 2], [0, 1, 1]),
    };
    Ok(vec![
        LayerSpec::conv(1, c1, k, [1, 1, 1], p),
        LayerSpec::batchnorm(c1),
        LayerSpec::relu(c1),
        LayerSpec::maxpool(c1, first_pool),
        LayerSpec::conv(c1, c2, k, [1, 1, 1], p),
        LayerSpec::batchnorm(c2),
        LayerSpec::relu(c2),
        LayerSpec::maxpool(c2, [1, 2, 2]),
        LayerSpec::deconv(c2, c2, k, [1, 1, 1], p, [0, 0, 0]),
        LayerSpec::batchnorm(c2),
        LayerSpec::deconv(c2, c1, k, [1, 2, 2], p, [0, 1, 1]),
        LayerSpec::batchnorm(c1),
        LayerSpec::deconv(c1, 1, k, last_stride, last_pad, [0, 1, 1]),
        LayerSpec::sigmoid(1),
    ])
}

/// Per-layer output shapes for a window input; fails unless the stack maps
/// the window shape back onto itself.
pub fn check_closure(specs: &[LayerSpec]) -> Result<Vec<Shape>> {
    let mut shapes: Vec<Shape> = Vec::with_capacity(specs.len());
    let mut cur = WINDOW_SHAPE;
    let trail = |shapes: &[Shape]| {
        let mut t = format!("{WINDOW_SHAPE}");
        for s in shapes {
            t.push_str(&format!(" -> {s}"));
        }
        t
    };
    for (i, spec) in specs.iter().enumerate() {
        cur = spec.output_shape(cur).map_err(|e| {
            invalid!("layer {i} ({:?}) rejects its input; trace {}: {e}", spec.kind, trail(&shapes))
        })?;
        shapes.push(cur);
    }
    if cur != WINDOW_SHAPE {
        return Err(invalid!(
            "stack does not reconstruct the window shape; trace {}",
            trail(&shapes)
        ));
    }
    Ok(shapes)
}

/// A convolutional autoencoder over 75×64×64 windows.
#[derive(Clone, Debug)]
pub struct CaeModel {
    pub config: ModelConfig,
    net: Sequential<f32>,
}

impl CaeModel {
    pub fn build(config: &ModelConfig) -> Result<Self> {
        let specs = layer_specs(config)?;
        check_closure(&specs)?;
        Ok(CaeModel {
            config: config.clone(),
            net: Sequential::init(specs, config.seed)?,
        })
    }

    pub fn from_params(config: &ModelConfig, params: Vec<LayerParams<f32>>) -> Result<Self> {
        let specs = layer_specs(config)?;
        check_closure(&specs)?;
        Ok(CaeModel {
            config: config.clone(),
            net: Sequential::from_params(specs, params)?,
        })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        self.net.specs()
    }

    pub fn bottleneck_shape(&self) -> Shape {
        check_closure(self.net.specs()).expect("checked at build")[ENCODER_LAYERS - 1]
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    pub fn export(&self) -> Vec<LayerParams<f32>> {
        self.net.export()
    }

    pub fn network(&self) -> &Sequential<f32> {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Sequential<f32> {
        &mut self.net
    }

    /// Reconstructs a batch of windows.
    pub fn forward(&mut self, batch: Vec<Tensor<f32>>, mode: Mode) -> Result<Vec<Tensor<f32>>> {
        if let Some(bad) = batch.iter().find(|t| t.shape() != WINDOW_SHAPE) {
            return Err(invalid!("expected window shape {WINDOW_SHAPE}, got {}", bad.shape()));
        }
        let out = self.net.forward(batch, mode)?;
        if mode == Mode::Eval {
            self.net.clear_cache();
        }
        Ok(out)
    }
}

pub fn build_cae3d(config: &ModelConfig) -> Result<CaeModel> {
    if config.kind != ModelKind::Cae3d {
        return Err(invalid!("build_cae3d called with a {} config", config.kind.as_str()));
    }
    CaeModel::build(config)
}

pub fn build_cae2d(config: &ModelConfig) -> Result<CaeModel> {
    if config.kind != ModelKind::Cae2d {
        return Err(invalid!("build_cae2d called with a {} config", config.kind.as_str()));
    }
    CaeModel::build(config)
}
