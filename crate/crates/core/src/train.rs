use std::time::Instant;

use cae_engine::{batch_mse, Adam, AdamConfig, EngineError, Mode};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::CaeModel;
use crate::window::{Label, Window};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 70,
            lr: 0.001,
            batch_size: 5,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(invalid!("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(invalid!("batch size must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid!("learning rate must be positive, got {}", self.lr));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub optimizer: Adam<f32>,
    pub epochs: Vec<EpochLog>,
}

/// Batched Adam on the reconstruction loss over normal windows.
///
/// `on_epoch` sees each epoch's log record as soon as the epoch ends.
pub fn train(
    model: &mut CaeModel,
    windows: &[Window],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    config.validate()?;
    if windows.is_empty() {
        return Err(invalid!("training set is empty"));
    }
    if let Some(w) = windows.iter().find(|w| w.label == Some(Label::Risk)) {
        return Err(invalid!(
            "training windows must be normal; window {} is labelled risk",
            w.index
        ));
    }

    let mut optimizer = Adam::new(AdamConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let started = Instant::now();
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut total = 0.0;
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            let inputs: Vec<_> = idx.iter().map(|&i| windows[i].to_tensor()).collect();
            let net = model.network_mut();
            net.zero_grad();
            let non_finite = |e: EngineError| match e {
                EngineError::NonFinite { .. } | EngineError::NonFiniteGradient { .. } => {
                    log::error!("epoch {epoch}, batch {batch}: {e}");
                    Error::NonFiniteLoss { epoch, batch }
                }
                other => other.into(),
            };
            let outputs = net.forward(inputs.clone(), Mode::Train).map_err(non_finite)?;
            let (loss, per_window, grads) = batch_mse(&inputs, &outputs)?;
            if !loss.is_finite() {
                net.clear_cache();
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
            net.backward(grads).map_err(non_finite)?;
            optimizer.step(&mut net.named_params_mut(), config.lr).map_err(non_finite)?;
            total += per_window.iter().sum::<f64>();
        }
        let record = EpochLog {
            epoch,
            mean_loss: total / windows.len() as f64,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        log::info!("epoch {epoch}: mean loss {:.6}", record.mean_loss);
        on_epoch(&record);
        history.push(record);
    }
    Ok(TrainOutcome { optimizer, epochs: history })
}
