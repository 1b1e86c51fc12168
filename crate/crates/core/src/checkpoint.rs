//! JSON checkpoints.
//!
//! Tensors are stored as hex of their little-endian f32 bytes so a reload is
//! bit-exact. The body is covered by a SHA-256 digest checked on load.

use std::path::Path;

use cae_engine::{Adam, AdamConfig, LayerParams, LayerSpec};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{layer_specs, CaeModel, ModelConfig};
use crate::provenance::{sha256_hex, Provenance};
use crate::train::TrainConfig;
use crate::variant::VariantKind;

pub const CHECKPOINT_FORMAT: &str = "anonvad-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub variant: VariantKind,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub provenance: Provenance,
    pub params: Vec<LayerParams<f32>>,
    pub optimizer: Adam<f32>,
    pub epochs_completed: usize,
}

#[derive(Serialize, Deserialize)]
struct File {
    format: String,
    version: u32,
    digest: String,
    body: Body,
}

#[derive(Serialize, Deserialize)]
struct Body {
    variant: VariantKind,
    model: ModelConfig,
    train: TrainConfig,
    provenance: Provenance,
    param_count: usize,
    epochs_completed: usize,
    layers: Vec<StoredLayer>,
    optimizer: StoredAdam,
}

#[derive(Serialize, Deserialize)]
struct StoredLayer {
    spec: LayerSpec,
    weight: String,
    bias: String,
    running_mean: String,
    running_var: String,
}

#[derive(Serialize, Deserialize)]
struct StoredAdam {
    config: AdamConfig,
    step: u64,
    first_moment: Vec<String>,
    second_moment: Vec<String>,
}

fn encode(v: &[f32]) -> String {
    let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
    hex::encode(bytes)
}

fn decode(s: &str) -> std::result::Result<Vec<f32>, String> {
    let bytes = hex::decode(s).map_err(|e| e.to_string())?;
    if bytes.len() % 4 != 0 {
        return Err(format!("{} bytes is not a whole number of f32 values", bytes.len()));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

impl Checkpoint {
    pub fn new(
        variant: VariantKind,
        model: &CaeModel,
        train: &TrainConfig,
        optimizer: Adam<f32>,
        epochs_completed: usize,
        provenance: Provenance,
    ) -> Self {
        Checkpoint {
            variant,
            model: model.config.clone(),
            train: train.clone(),
            provenance,
            params: model.export(),
            optimizer,
            epochs_completed,
        }
    }

    pub fn to_model(&self) -> Result<CaeModel> {
        CaeModel::from_params(&self.model, self.params.clone())
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.count()).sum()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let specs = layer_specs(&self.model)?;
        let body = Body {
            variant: self.variant,
            model: self.model.clone(),
            train: self.train.clone(),
            provenance: self.provenance.clone(),
            param_count: self.param_count(),
            epochs_completed: self.epochs_completed,
            layers: specs
                .into_iter()
                .zip(&self.params)
                .map(|(spec, p)| StoredLayer {
                    spec,
                    weight: encode(&p.weight),
                    bias: encode(&p.bias),
                    running_mean: encode(&p.running_mean),
                    running_var: encode(&p.running_var),
                })
                .collect(),
            optimizer: StoredAdam {
                config: self.optimizer.config,
                step: self.optimizer.step,
                first_moment: self.optimizer.first_moment.iter().map(|m| encode(m)).collect(),
                second_moment: self.optimizer.second_moment.iter().map(|m| encode(m)).collect(),
            },
        };
        let digest = sha256_hex(&serde_json::to_vec(&body).map_err(|e| Error::format(path, e))?);
        let file = File {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            digest,
            body,
        };
        let bytes = serde_json::to_vec_pretty(&file).map_err(|e| Error::format(path, e))?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let reject = |m: String| Error::Checkpoint(format!("{}: {m}", path.display()));
        let file: File = serde_json::from_slice(&bytes).map_err(|e| reject(format!("unreadable ({e})")))?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(reject(format!("format `{}` is not a checkpoint", file.format)));
        }
        if file.version != CHECKPOINT_VERSION {
            return Err(reject(format!(
                "version {} is not supported (expected {CHECKPOINT_VERSION})",
                file.version
            )));
        }
        let digest = sha256_hex(&serde_json::to_vec(&file.body).map_err(|e| reject(e.to_string()))?);
        if digest != file.digest {
            return Err(reject("digest mismatch; the file is corrupted".into()));
        }
        let body = file.body;
        let expected = layer_specs(&body.model)?;
        let stored: Vec<LayerSpec> = body.layers.iter().map(|l| l.spec).collect();
        if stored != expected {
            return Err(reject("layer specs do not match the model config".into()));
        }
        let mut params = Vec::with_capacity(body.layers.len());
        for (i, l) in body.layers.iter().enumerate() {
            let field = |name: &str, s: &str| decode(s).map_err(|e| reject(format!("layer {i} {name}: {e}")));
            params.push(LayerParams {
                weight: field("weight", &l.weight)?,
                bias: field("bias", &l.bias)?,
                running_mean: field("running_mean", &l.running_mean)?,
                running_var: field("running_var", &l.running_var)?,
            });
        }
        let moments = |v: &[String]| {
            v.iter()
                .map(|s| decode(s).map_err(|e| reject(format!("optimizer state: {e}"))))
                .collect::<Result<Vec<_>>>()
        };
        let mut optimizer = Adam::new(body.optimizer.config);
        optimizer.step = body.optimizer.step;
        optimizer.first_moment = moments(&body.optimizer.first_moment)?;
        optimizer.second_moment = moments(&body.optimizer.second_moment)?;

        let ckpt = Checkpoint {
            variant: body.variant,
            model: body.model,
            train: body.train,
            provenance: body.provenance,
            params,
            optimizer,
            epochs_completed: body.epochs_completed,
        };
        let model = ckpt.to_model().map_err(|e| reject(e.to_string()))?;
        if model.param_count() != body.param_count || ckpt.param_count() != body.param_count {
            return Err(reject(format!(
                "parameter count {} does not match the recorded {}",
                model.param_count(),
                body.param_count
            )));
        }
        Ok(ckpt)
    }
}
