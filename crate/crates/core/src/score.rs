use std::fmt::Write as _;
use std::path::Path;

use cae_engine::{mse_loss, Mode};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{invalid, Error, Result};
use crate::model::CaeModel;
use crate::window::{Label, Window, WindowSet};

pub const SCORES_HEADER: &str = "window_index,start_time,end_time,score,label";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredWindow {
    pub window_index: usize,
    pub start_time: f64,
    pub end_time: f64,
    pub score: f64,
    pub label: Option<Label>,
}

/// Reconstruction error of every window under eval-mode batch
/// normalization, in input order.
pub fn score_windows(model: &mut CaeModel, windows: &[Window], batch_size: usize) -> Result<Vec<ScoredWindow>> {
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(batch_size.max(1)) {
        let inputs: Vec<_> = chunk.iter().map(|w| w.to_tensor()).collect();
        let recon = model.forward(inputs.clone(), Mode::Eval)?;
        for ((w, x), y) in chunk.iter().zip(&inputs).zip(&recon) {
            let score = mse_loss(x, y)?;
            if !score.is_finite() {
                return Err(invalid!("window {} scored non-finite", w.index));
            }
            out.push(ScoredWindow {
                window_index: w.index,
                start_time: w.start_time,
                end_time: w.end_time,
                score,
                label: w.label,
            });
        }
    }
    Ok(out)
}

/// Scores a stored window set with a checkpoint trained on the same variant.
pub fn score(checkpoint: &Checkpoint, set: &WindowSet, batch_size: usize) -> Result<Vec<ScoredWindow>> {
    if checkpoint.variant != set.variant {
        return Err(Error::VariantMismatch {
            expected: checkpoint.variant.to_string(),
            found: set.variant.to_string(),
        });
    }
    let mut model = checkpoint.to_model()?;
    score_windows(&mut model, &set.windows, batch_size)
}

pub fn format_scores(scores: &[ScoredWindow]) -> String {
    let mut s = String::from(SCORES_HEADER);
    s.push('\n');
    for w in scores {
        let label = w.label.map(Label::as_str).unwrap_or("");
        writeln!(s, "{},{},{},{},{}", w.window_index, w.start_time, w.end_time, w.score, label).unwrap();
    }
    s
}

pub fn write_scores(path: &Path, scores: &[ScoredWindow]) -> Result<()> {
    std::fs::write(path, format_scores(scores)).map_err(|e| Error::io(path, e))
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoredWindow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(SCORES_HEADER) {
        return Err(Error::format(path, format!("expected header `{SCORES_HEADER}`")));
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |what: &str| Error::format(path, format!("line {}: bad {what}", n + 2));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(bad("field count"));
        }
        let label = match f[4] {
            "" => None,
            "normal" => Some(Label::Normal),
            "risk" => Some(Label::Risk),
            _ => return Err(bad("label")),
        };
        let score: f64 = f[3].parse().map_err(|_| bad("score"))?;
        if !(score.is_finite() && score >= 0.0) {
            return Err(bad("score"));
        }
        out.push(ScoredWindow {
            window_index: f[0].parse().map_err(|_| bad("window index"))?,
            start_time: f[1].parse().map_err(|_| bad("start time"))?,
            end_time: f[2].parse().map_err(|_| bad("end time"))?,
            score,
            label,
        });
    }
    Ok(out)
}
