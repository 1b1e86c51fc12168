//! Privacy-preserving video anomaly detection: privacy-variant rendering,
//! windowing, convolutional autoencoder training and scoring, and ranking
//! metrics, plus a deterministic synthetic scene generator.

pub mod annotation;
pub mod background;
pub mod checkpoint;
pub mod error;
pub mod frame;
pub mod mask;
pub mod pipeline;
pub mod metrics;
pub mod model;
pub mod preprocess;
pub mod provenance;
pub mod score;
pub mod skeleton;
pub mod source;
pub mod synth;
pub mod train;
pub mod variant;
pub mod window;

pub use cae_engine as engine;
pub use checkpoint::Checkpoint;
pub use error::{Error, Result};
pub use model::{CaeModel, ModelConfig, ModelKind};
pub use pipeline::RunConfig;
pub use provenance::Provenance;
pub use source::{DirSource, FrameSource};
pub use synth::{CorpusConfig, Scene, SceneConfig};
pub use variant::VariantKind;
pub use window::{Label, Window, WindowSet};
