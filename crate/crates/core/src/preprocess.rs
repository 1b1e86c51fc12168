use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::background::estimate_background;
use crate::error::{invalid, Result};
use crate::frame::{temporal_subsample, to_model_frame, RgbFrame};
use crate::source::FrameSource;
use crate::variant::{compose_variant, RenderStyle, VariantKind};
use crate::window::{make_windows, Window, WINDOW_FRAMES};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// Frames sampled evenly across the sequence for the background median.
    pub background_samples: usize,
    pub style: RenderStyle,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            background_samples: 200,
            style: RenderStyle::default(),
        }
    }
}

/// Evenly spaced picks from `items`, at most `n` of them, first always included.
pub fn spread<T: Copy>(items: &[T], n: usize) -> Vec<T> {
    if n == 0 || items.is_empty() {
        return Vec::new();
    }
    if items.len() <= n {
        return items.to_vec();
    }
    (0..n).map(|i| items[i * items.len() / n]).collect()
}

/// Temporal median of the source over `indices`, excluding person masks.
pub fn sequence_background(source: &dyn FrameSource, indices: &[usize], samples: usize) -> Result<RgbFrame> {
    let (w, h) = source.dimensions();
    let picks = spread(indices, samples);
    let loaded: Vec<(RgbFrame, Option<crate::mask::Bitmask>)> = picks
        .par_iter()
        .map(|&i| {
            if !source.streams().masks {
                return Ok((source.frame(i)?, None));
            }
            let (frame, ann) = source.load(i)?;
            Ok((frame, ann.union_mask(w, h)?))
        })
        .collect::<Result<_>>()?;
    let (frames, masks): (Vec<_>, Vec<_>) = loaded.into_iter().unzip();
    estimate_background(&frames, &masks)
}

/// Halves the frame rate, renders `kind`, converts to 64×64 grayscale in
/// [0, 1] and cuts 75-frame windows.
pub fn preprocess(source: &dyn FrameSource, kind: VariantKind, config: &PreprocessConfig) -> Result<Vec<Window>> {
    kind.check_streams(&source.streams())?;
    let kept = temporal_subsample(source.frame_count());
    let fps = source.fps() / 2.0;
    let background = if kind.keeps_background() {
        if kept.is_empty() {
            return Err(invalid!("sequence has no frames"));
        }
        Some(sequence_background(source, &kept, config.background_samples)?)
    } else {
        None
    };
    let streams = source.streams();
    let usable = kept.len() / WINDOW_FRAMES * WINDOW_FRAMES;
    let frames: Vec<Vec<f32>> = kept[..usable]
        .par_iter()
        .map(|&i| {
            let (frame, ann) = source.load(i)?;
            let composed = compose_variant(kind, &frame, &ann, &streams, background.as_ref(), &config.style)?;
            to_model_frame(&composed)
        })
        .collect::<Result<_>>()?;
    make_windows(&frames, fps)
}
