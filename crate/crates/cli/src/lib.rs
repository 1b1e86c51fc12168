//! Stage orchestration behind the `anonvad` binary.
//!
//! Artifacts live under one output directory:
//!
//! ```text
//! synth/{train,test}/        frames, annotations.jsonl, intervals.csv
//! windows/{train,test}.bin   window stores with .csv indexes
//! model/checkpoint.json      plus train_log.jsonl
//! scores/scores.csv          plus scores.prov.json
//! eval/                      metrics.json, roc.csv, pr.csv
//! report.json
//! ```

use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anonvad::checkpoint::Checkpoint;
use anonvad::metrics::{emit_report, evaluate, read_intervals, read_report, METRICS_FILE};
use anonvad::model::{CaeModel, ModelKind};
use anonvad::pipeline::{apply_labels, RunConfig};
use anonvad::preprocess::preprocess;
use anonvad::provenance::Provenance;
use anonvad::score::{read_scores, score, write_scores};
use anonvad::source::{DirSource, FrameSource};
use anonvad::synth::{generate_corpus, INTERVALS_FILE};
use anonvad::train::train;
use anonvad::variant::VariantKind;
use anonvad::window::WindowSet;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad invocation, invalid config or missing prerequisite artifacts.
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] anonvad::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Preprocess,
    Train,
    Score,
    Eval,
    Report,
    All,
}

/// Command-line values that win over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub variant: Option<VariantKind>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub model: Option<ModelKind>,
}

/// Reads the run config (defaults when `path` is `None`) and applies overrides.
pub fn load_config(path: Option<&Path>, overrides: &Overrides) -> CliResult<RunConfig> {
    let mut config = match path {
        None => RunConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", p.display())))?
        }
    };
    if let Some(v) = overrides.variant {
        config.variant = v;
    }
    if let Some(s) = overrides.seed {
        config.set_seed(s);
    }
    if let Some(e) = overrides.epochs {
        config.train.epochs = e;
    }
    if let Some(m) = overrides.model {
        config.model = m;
    }
    config
        .validate()
        .map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
    Ok(config)
}

pub struct Layout {
    pub out: PathBuf,
}

impl Layout {
    pub fn synth(&self, split: &str) -> PathBuf {
        self.out.join("synth").join(split)
    }
    pub fn windows(&self, split: &str) -> PathBuf {
        self.out.join("windows").join(format!("{split}.bin"))
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.out.join("model").join("checkpoint.json")
    }
    pub fn train_log(&self) -> PathBuf {
        self.out.join("model").join("train_log.jsonl")
    }
    pub fn scores(&self) -> PathBuf {
        self.out.join("scores").join("scores.csv")
    }
    pub fn scores_provenance(&self) -> PathBuf {
        self.out.join("scores").join("scores.prov.json")
    }
    pub fn eval(&self) -> PathBuf {
        self.out.join("eval")
    }
    pub fn report(&self) -> PathBuf {
        self.out.join("report.json")
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ScoresProvenance {
    config_hash: String,
    seed: u64,
    variant: VariantKind,
}

fn require(path: &Path, stage: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{} not found; run `{stage}` first",
            path.display()
        )))
    }
}

fn mkdir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(anonvad::Error::Io { path: dir.into(), source: e }))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text)
        .map_err(|e| CliError::Runtime(anonvad::Error::Io { path: path.into(), source: e }))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
    s.push('\n');
    s
}

/// Runs a stage (or every stage) and returns its one-line summary.
pub fn run(stage: Stage, config: &RunConfig, out: &Path) -> CliResult<String> {
    let layout = Layout { out: out.to_path_buf() };
    match stage {
        Stage::Synth => synth(config, &layout),
        Stage::Preprocess => preprocess_stage(config, &layout),
        Stage::Train => train_stage(config, &layout),
        Stage::Score => score_stage(config, &layout),
        Stage::Eval => eval_stage(&layout),
        Stage::Report => report_stage(&layout),
        Stage::All => {
            for s in [Stage::Synth, Stage::Preprocess, Stage::Train, Stage::Score, Stage::Eval] {
                let line = run(s, config, out)?;
                log::info!("{line}");
            }
            report_stage(&layout)
        }
    }
}

fn synth(config: &RunConfig, layout: &Layout) -> CliResult<String> {
    let (train, test) = config.corpus.scenes();
    let root = layout.out.join("synth");
    generate_corpus(&train, &test, &root)?;
    Ok(format!(
        "synth: {} train and {} test frames, {} risk intervals in {}",
        train.frame_count(),
        test.frame_count(),
        test.events.len(),
        root.display()
    ))
}

fn preprocess_stage(config: &RunConfig, layout: &Layout) -> CliResult<String> {
    let provenance = config.provenance();
    let mut counts = Vec::new();
    for split in ["train", "test"] {
        let dir = layout.synth(split);
        require(&dir, "synth")?;
        let source = DirSource::open(&dir, |i| i % 2 == 0)?;
        let mut windows = preprocess(&source, config.variant, &config.preprocess)?;
        let intervals = read_intervals(&dir.join(INTERVALS_FILE))?;
        apply_labels(&mut windows, &intervals, config.overlap_threshold)?;
        let path = layout.windows(split);
        mkdir(path.parent().unwrap())?;
        let set = WindowSet {
            variant: config.variant,
            fps: source.fps() / 2.0,
            provenance: provenance.clone(),
            windows,
        };
        set.save(&path)?;
        counts.push(set.windows.len());
    }
    Ok(format!(
        "preprocess: {} train and {} test {} windows",
        counts[0], counts[1], config.variant
    ))
}

fn train_stage(config: &RunConfig, layout: &Layout) -> CliResult<String> {
    let path = layout.windows("train");
    require(&path, "preprocess")?;
    let set = WindowSet::load(&path)?;
    if set.variant != config.variant {
        return Err(anonvad::Error::VariantMismatch {
            expected: config.variant.to_string(),
            found: set.variant.to_string(),
        }
        .into());
    }
    let mut model = CaeModel::build(&config.model_config())?;
    let train_config = config.train_config();
    mkdir(layout.checkpoint().parent().unwrap())?;
    let log_path = layout.train_log();
    let mut log_file = OpenOptions::new()
        .create(true)
        .write(true)
        .truncate(true)
        .open(&log_path)
        .map_err(|e| anonvad::Error::Io { path: log_path.clone(), source: e })?;
    let mut log_error = None;
    let outcome = train(&mut model, &set.windows, &train_config, |epoch| {
        let line = serde_json::to_string(epoch).expect("epoch log serializes");
        if let Err(e) = writeln!(log_file, "{line}") {
            log_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_error {
        return Err(anonvad::Error::Io { path: log_path, source: e }.into());
    }
    let last = outcome.epochs.last().map(|e| e.mean_loss).unwrap_or(f64::NAN);
    let epochs = outcome.epochs.len();
    let checkpoint = Checkpoint::new(
        config.variant,
        &model,
        &train_config,
        outcome.optimizer,
        epochs,
        config.provenance(),
    );
    checkpoint.save(&layout.checkpoint())?;
    Ok(format!(
        "train: {} {} epochs on {} windows, final mean loss {last:.6}",
        config.model.as_str(),
        epochs,
        set.windows.len()
    ))
}

fn score_stage(config: &RunConfig, layout: &Layout) -> CliResult<String> {
    require(&layout.checkpoint(), "train")?;
    require(&layout.windows("test"), "preprocess")?;
    let checkpoint = Checkpoint::load(&layout.checkpoint())?;
    let set = WindowSet::load(&layout.windows("test"))?;
    let scores = score(&checkpoint, &set, config.score_batch)?;
    mkdir(layout.scores().parent().unwrap())?;
    write_scores(&layout.scores(), &scores)?;
    let prov = ScoresProvenance {
        config_hash: checkpoint.provenance.config_hash.clone(),
        seed: checkpoint.provenance.seed,
        variant: checkpoint.variant,
    };
    write_text(&layout.scores_provenance(), &to_json(&prov))?;
    Ok(format!("score: {} windows scored into {}", scores.len(), layout.scores().display()))
}

fn read_scores_provenance(layout: &Layout) -> CliResult<ScoresProvenance> {
    let path = layout.scores_provenance();
    require(&path, "score")?;
    let text = std::fs::read_to_string(&path).map_err(|e| anonvad::Error::Io { path: path.clone(), source: e })?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Runtime(anonvad::Error::Format {
            path,
            message: e.to_string(),
        })
    })
}

fn eval_stage(layout: &Layout) -> CliResult<String> {
    require(&layout.scores(), "score")?;
    let prov = read_scores_provenance(layout)?;
    let scores = read_scores(&layout.scores())?;
    let evaluation = evaluate(&scores, &Provenance::new(prov.config_hash, prov.seed))?;
    emit_report(&layout.eval(), &evaluation)?;
    let r = &evaluation.report;
    Ok(format!(
        "eval: auc_roc={:.4} auc_pr={:.4} prevalence={:.4} (P={}, N={})",
        r.auc_roc, r.auc_pr, r.prevalence, r.positives, r.negatives
    ))
}

#[derive(Serialize)]
struct Report {
    config_hash: String,
    seed: u64,
    variant: VariantKind,
    model: ModelKind,
    epochs_completed: usize,
    train_windows: usize,
    test_windows: usize,
    auc_roc: f64,
    auc_pr: f64,
    prevalence: f64,
}

fn report_stage(layout: &Layout) -> CliResult<String> {
    let metrics_path = layout.eval().join(METRICS_FILE);
    require(&metrics_path, "eval")?;
    require(&layout.checkpoint(), "train")?;
    let metrics = read_report(&metrics_path)?;
    let scores = read_scores_provenance(layout)?;
    let checkpoint = Checkpoint::load(&layout.checkpoint())?;
    let mut sources: Vec<(String, Provenance)> = vec![
        ("metrics".into(), metrics.provenance()),
        ("scores".into(), Provenance::new(scores.config_hash.clone(), scores.seed)),
        ("checkpoint".into(), checkpoint.provenance.clone()),
    ];
    let mut counts = Vec::new();
    for split in ["train", "test"] {
        let path = layout.windows(split);
        require(&path, "preprocess")?;
        let header = WindowSet::read_header(&path)?;
        counts.push(header.count);
        sources.push((format!("{split} windows"), header.provenance));
    }
    let reference = &sources[0].1;
    if let Some((name, p)) = sources.iter().find(|(_, p)| p != reference) {
        return Err(anonvad::Error::Invalid(format!(
            "mixed provenance: {name} has config {} seed {}, metrics has config {} seed {}",
            p.config_hash, p.seed, reference.config_hash, reference.seed
        ))
        .into());
    }
    let report = Report {
        config_hash: metrics.config_hash.clone(),
        seed: metrics.seed,
        variant: checkpoint.variant,
        model: checkpoint.model.kind,
        epochs_completed: checkpoint.epochs_completed,
        train_windows: counts[0],
        test_windows: counts[1],
        auc_roc: metrics.auc_roc,
        auc_pr: metrics.auc_pr,
        prevalence: metrics.prevalence,
    };
    write_text(&layout.report(), &to_json(&report))?;
    Ok(format!(
        "report: {} {} auc_roc={:.4} auc_pr={:.4} prevalence={:.4} config {}",
        report.variant,
        report.model.as_str(),
        report.auc_roc,
        report.auc_pr,
        report.prevalence,
        &report.config_hash[..12]
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn configs() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
    }

    #[test]
    fn shipped_desk_scale_config_matches_defaults() {
        let c = load_config(Some(&configs().join("desk-scale.json")), &Overrides::default()).unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.train.epochs, 10);
    }

    #[test]
    fn flags_override_the_file() {
        let o = Overrides {
            variant: Some(VariantKind::OpSkelNobg),
            seed: Some(9),
            epochs: Some(4),
            model: Some(ModelKind::Cae3d),
        };
        let c = load_config(Some(&configs().join("tiny.json")), &o).unwrap();
        assert_eq!((c.variant, c.seed, c.train.seed), (VariantKind::OpSkelNobg, 9, 9));
        assert_eq!((c.train.epochs, c.model), (4, ModelKind::Cae3d));
        assert_eq!(c.channels, [2, 4]);
    }

    #[test]
    fn missing_config_is_a_usage_error() {
        let e = load_config(Some(Path::new("/nonexistent.json")), &Overrides::default()).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }
}
