//! End-to-end run: synthetic corpus, windows, training, scoring, metrics.

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{invalid, Result};
use crate::metrics::{evaluate, label_windows, Evaluation, Interval};
use crate::model::{CaeModel, ModelConfig, ModelKind};
use crate::preprocess::{preprocess, PreprocessConfig};
use crate::provenance::Provenance;
use crate::score::{score_windows, ScoredWindow};
use crate::source::FrameSource;
use crate::synth::{CorpusConfig, Scene};
use crate::train::{train, EpochLog, TrainConfig};
use crate::variant::VariantKind;
use crate::window::{Label, Window};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub variant: VariantKind,
    pub model: ModelKind,
    pub channels: [usize; 2],
    pub train: TrainConfig,
    pub preprocess: PreprocessConfig,
    pub corpus: CorpusConfig,
    /// Fraction of a window that must overlap a risk interval for a risk label.
    pub overlap_threshold: f64,
    pub score_batch: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            variant: VariantKind::MaskBg,
            model: ModelKind::Cae2d,
            channels: [16, 32],
            train: TrainConfig {
                epochs: 10,
                ..TrainConfig::default()
            },
            preprocess: PreprocessConfig::default(),
            corpus: CorpusConfig::default(),
            overlap_threshold: 0.5,
            score_batch: 5,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if !(self.overlap_threshold > 0.0 && self.overlap_threshold <= 1.0) {
            return Err(invalid!("overlap threshold must be in (0, 1]"));
        }
        if self.score_batch == 0 || self.channels.contains(&0) {
            return Err(invalid!("score batch and channel counts must be positive"));
        }
        let (train, test) = self.corpus.scenes();
        train.validate()?;
        test.validate()
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            kind: self.model,
            channels: self.channels,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        self.train.clone()
    }

    /// Seeds model initialization and training order.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
    }

    pub fn provenance(&self) -> Provenance {
        Provenance::of(self, self.seed)
    }
}

/// Sets each window's label from its overlap with the risk intervals.
pub fn apply_labels(windows: &mut [Window], intervals: &[Interval], threshold: f64) -> Result<()> {
    let spans: Vec<(f64, f64)> = windows.iter().map(|w| (w.start_time, w.end_time)).collect();
    for (w, l) in windows.iter_mut().zip(label_windows(&spans, intervals, threshold)?) {
        w.label = Some(l);
    }
    Ok(())
}

/// Renders, windows and labels one sequence.
pub fn labelled_windows(
    source: &dyn FrameSource,
    intervals: &[Interval],
    config: &RunConfig,
) -> Result<Vec<Window>> {
    let mut windows = preprocess(source, config.variant, &config.preprocess)?;
    apply_labels(&mut windows, intervals, config.overlap_threshold)?;
    Ok(windows)
}

pub struct RunOutcome {
    pub checkpoint: Checkpoint,
    pub epochs: Vec<EpochLog>,
    pub scores: Vec<ScoredWindow>,
    pub evaluation: Evaluation,
}

/// Trains on normal windows and evaluates on labelled test windows.
pub fn fit_and_evaluate(
    train_windows: &[Window],
    test_windows: &[Window],
    config: &RunConfig,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<RunOutcome> {
    let normal: Vec<Window> = train_windows
        .iter()
        .filter(|w| w.label != Some(Label::Risk))
        .cloned()
        .collect();
    let mut model = CaeModel::build(&config.model_config())?;
    let train_config = config.train_config();
    let outcome = train(&mut model, &normal, &train_config, on_epoch)?;
    let provenance = config.provenance();
    let scores = score_windows(&mut model, test_windows, config.score_batch)?;
    let evaluation = evaluate(&scores, &provenance)?;
    let epochs_completed = outcome.epochs.len();
    Ok(RunOutcome {
        checkpoint: Checkpoint::new(
            config.variant,
            &model,
            &train_config,
            outcome.optimizer,
            epochs_completed,
            provenance,
        ),
        epochs: outcome.epochs,
        scores,
        evaluation,
    })
}

/// The whole experiment in memory, rendering the synthetic corpus lazily.
pub fn run_synthetic(config: &RunConfig, on_epoch: impl FnMut(&EpochLog)) -> Result<RunOutcome> {
    config.validate()?;
    let (train_cfg, test_cfg) = config.corpus.scenes();
    let train_scene = Scene::generate(train_cfg)?;
    let test_scene = Scene::generate(test_cfg)?;
    let train_windows = labelled_windows(&train_scene, &[], config)?;
    let test_windows = labelled_windows(&test_scene, &test_scene.labels(), config)?;
    fit_and_evaluate(&train_windows, &test_windows, config, on_epoch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_follow_overlap() {
        let mut w: Vec<Window> = (0..3)
            .map(|k| Window {
                index: k,
                start_time: 5.0 * k as f64,
                end_time: 5.0 * (k + 1) as f64,
                label: None,
                data: Vec::new(),
            })
            .collect();
        apply_labels(&mut w, &[Interval::new(4.0, 8.0)], 0.5).unwrap();
        let labels: Vec<_> = w.iter().map(|w| w.label.unwrap()).collect();
        assert_eq!(labels, [Label::Normal, Label::Risk, Label::Normal]);
    }

    #[test]
    fn provenance_tracks_config() {
        let a = RunConfig::default();
        let b = RunConfig { seed: 1, ..a.clone() };
        assert_ne!(a.provenance().config_hash, b.provenance().config_hash);
        assert_eq!(a.provenance(), RunConfig::default().provenance());
        assert!(a.validate().is_ok());
        let bad = RunConfig { overlap_threshold: 0.0, ..a };
        assert!(bad.validate().is_err());
    }
}
