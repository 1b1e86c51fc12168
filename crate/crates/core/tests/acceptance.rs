//! Acceptance suite. Each criterion prints one PASS/FAIL line to stderr;
//! the test fails if any criterion fails.

use std::io::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use anonvad::checkpoint::Checkpoint;
use anonvad::engine::{gradcheck, mse_loss, LayerKind, Mode, Shape, Tensor};
use anonvad::metrics::{auc_pr, auc_roc, auc_roc_pairwise, metrics_json};
use anonvad::model::{CaeModel, ModelConfig, ModelKind};
use anonvad::pipeline::{labelled_windows, run_synthetic, RunConfig, RunOutcome};
use anonvad::preprocess::sequence_background;
use anonvad::score::{format_scores, score, score_windows};
use anonvad::synth::{CorpusConfig, Scene, SENTINEL};
use anonvad::train::{train, TrainConfig};
use anonvad::variant::{compose_variant, RenderStyle, VariantKind};
use anonvad::window::{WindowSet, WINDOW_LEN, WINDOW_SHAPE};
use anonvad::FrameSource;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(line: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}

fn criterion(results: &mut Vec<bool>, id: u32, name: &str, body: impl FnOnce() -> String) {
    let started = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(body));
    let secs = started.elapsed().as_secs_f64();
    let (ok, detail) = match outcome {
        Ok(detail) => (true, detail),
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            (false, msg)
        }
    };
    let verdict = if ok { "PASS" } else { "FAIL" };
    report(&format!("acceptance {id} {name}: {verdict} ({detail}; {secs:.1}s)"));
    results.push(ok);
}

fn shape_closure() -> String {
    let input = Tensor::<f32>::full(WINDOW_SHAPE, 0.5);
    let mut details = Vec::new();
    for (kind, bottleneck) in [
        (ModelKind::Cae3d, Shape::new(32, 25, 16, 16)),
        (ModelKind::Cae2d, Shape::new(32, 75, 16, 16)),
    ] {
        let mut m = CaeModel::build(&ModelConfig::new(kind, 0)).unwrap();
        assert_eq!(m.bottleneck_shape(), bottleneck, "{kind:?} bottleneck");
        let out = m.forward(vec![input.clone()], Mode::Eval).unwrap();
        assert_eq!(out[0].shape(), WINDOW_SHAPE, "{kind:?} output");
        details.push(format!("{} bottleneck {:?}", kind.as_str(), bottleneck));
    }
    details.join(", ")
}

fn gradient_checks() -> String {
    let mut worst = 0.0f64;
    for kind in LayerKind::ALL {
        let err = gradcheck::check_kind(kind, 20, 0xACCE55);
        assert!(err < 1e-3, "{kind:?} relative error {err:e}");
        worst = worst.max(err);
    }
    format!("6 layer kinds x 20 trials, worst relative error {worst:.2e}")
}

fn loss_constant() -> String {
    let ones = Tensor::<f32>::full(WINDOW_SHAPE, 1.0);
    let zeros = Tensor::<f32>::full(WINDOW_SHAPE, 0.0);
    assert_eq!(ones.len(), 307_200);
    let l = mse_loss(&ones, &zeros).unwrap();
    assert_eq!(l, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Tensor::<f32>::from_fn(WINDOW_SHAPE, |_| rng.gen());
    assert_eq!(mse_loss(&x, &x).unwrap(), 0.0);
    format!("loss(ones, zeros) = {l}, loss(I, I) = 0")
}

fn auc_oracle() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.gen_range(2..=2000);
        let levels = rng.gen_range(1..=50) as f64;
        let scores: Vec<f64> = (0..n).map(|_| (rng.gen::<f64>() * levels).floor() / levels).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
        labels[0] = true;
        labels[1] = false;
        let diff = (auc_roc(&scores, &labels).unwrap() - auc_roc_pairwise(&scores, &labels).unwrap()).abs();
        assert!(diff <= 1e-12, "n={n}: difference {diff:e}");
        worst = worst.max(diff);
    }
    format!("200 tied score sets, max difference {worst:e}")
}

fn random_calibration() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n, positives) = (5000, 245);
    let prevalence = positives as f64 / n as f64;
    let (mut roc, mut pr) = (0.0, 0.0);
    for _ in 0..100 {
        let mut labels: Vec<bool> = (0..n).map(|i| i < positives).collect();
        labels.shuffle(&mut rng);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        roc += auc_roc(&scores, &labels).unwrap() / 100.0;
        pr += auc_pr(&scores, &labels).unwrap() / 100.0;
    }
    assert!((roc - 0.5).abs() <= 0.02, "mean AUC(ROC) {roc}");
    assert!((pr - prevalence).abs() <= 0.02, "mean AUC(PR) {pr} vs prevalence {prevalence}");
    format!("mean AUC(ROC) {roc:.4}, mean AUC(PR) {pr:.4} at prevalence {prevalence}")
}

fn privacy_invariant() -> String {
    let (_, test) = CorpusConfig::default().scenes();
    let scene = Scene::generate(test).unwrap();
    let all: Vec<usize> = (0..scene.frame_count()).collect();
    let background = sequence_background(&scene, &all, 200).unwrap();
    let streams = scene.streams();
    let style = RenderStyle::default();
    let frames: Vec<usize> = (0..scene.frame_count()).step_by(18).collect();
    assert!(frames.len() >= 1000);
    let mut with_people = 0;
    for &i in &frames {
        let f = scene.render(i);
        if f.rgb.contains_color(SENTINEL) {
            with_people += 1;
        }
        for kind in VariantKind::ALL.into_iter().filter(|&k| k != VariantKind::Rgb) {
            let out = compose_variant(kind, &f.rgb, &f.annotation, &streams, Some(&background), &style).unwrap();
            assert!(!out.contains_color(SENTINEL), "{kind} leaks the sentinel at frame {i}");
        }
    }
    assert!(with_people * 2 > frames.len(), "only {with_people} frames show a person");
    format!(
        "{} frames ({with_people} with sentinel persons) x 6 variants, no sentinel pixel",
        frames.len()
    )
}

fn end_to_end(outcome: &RunOutcome) -> String {
    let r = &outcome.evaluation.report;
    let summary = format!(
        "AUC(ROC) {:.4}, AUC(PR) {:.4}, prevalence {:.4} (P={}, N={}), final loss {:.6}",
        r.auc_roc,
        r.auc_pr,
        r.prevalence,
        r.positives,
        r.negatives,
        outcome.epochs.last().unwrap().mean_loss
    );
    assert_eq!(r.positives + r.negatives, 120, "{summary}");
    assert!(r.auc_roc >= 0.85, "{summary}");
    assert!(r.auc_pr >= 3.0 * r.prevalence, "{summary}");
    summary
}

fn determinism(a: &RunOutcome, b: &RunOutcome) -> String {
    let (sa, sb) = (format_scores(&a.scores), format_scores(&b.scores));
    let (ma, mb) = (metrics_json(&a.evaluation.report), metrics_json(&b.evaluation.report));
    assert!(sa == sb, "scores CSV differs between runs");
    assert!(ma == mb, "metrics JSON differs between runs");
    format!("scores CSV ({} bytes) and metrics JSON identical", sa.len())
}

fn checkpoint_roundtrip() -> String {
    let mut config = RunConfig::default();
    config.corpus.test_seconds = 50.0;
    config.corpus.events.truncate(1);
    config.corpus.events[0].start = 20.0;
    config.corpus.events[0].end = 30.0;
    let (_, test) = config.corpus.scenes();
    let scene = Scene::generate(test.clone()).unwrap();
    let windows = labelled_windows(&scene, &scene.labels(), &config).unwrap();
    assert_eq!(windows.len(), 10);
    assert!(windows.iter().all(|w| w.data.len() == WINDOW_LEN));

    let mut model = CaeModel::build(&ModelConfig::new(ModelKind::Cae2d, 11)).unwrap();
    let normal: Vec<_> = windows.iter().filter(|w| !w.is_risk()).cloned().collect();
    let tc = TrainConfig {
        epochs: 1,
        seed: 11,
        ..TrainConfig::default()
    };
    let outcome = train(&mut model, &normal, &tc, |_| {}).unwrap();
    let direct = score_windows(&mut model, &windows, 5).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("checkpoint.json");
    let ckpt = Checkpoint::new(config.variant, &model, &tc, outcome.optimizer, 1, config.provenance());
    ckpt.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    let set = WindowSet {
        variant: config.variant,
        fps: 15.0,
        provenance: config.provenance(),
        windows,
    };
    let reloaded = score(&loaded, &set, 5).unwrap();
    assert_eq!(direct.len(), 10);
    for (a, b) in direct.iter().zip(&reloaded) {
        assert_eq!(a.score.to_bits(), b.score.to_bits(), "window {}", a.window_index);
    }
    "10 windows score bit-identically after save and load".into()
}

#[test]
fn acceptance_criteria() {
    let mut results = Vec::new();
    criterion(&mut results, 1, "shape closure", shape_closure);
    criterion(&mut results, 2, "gradient checks", gradient_checks);
    criterion(&mut results, 3, "loss constant", loss_constant);
    criterion(&mut results, 4, "AUC oracle equivalence", auc_oracle);
    criterion(&mut results, 5, "random-score calibration", random_calibration);
    criterion(&mut results, 6, "privacy invariant", privacy_invariant);

    let config = RunConfig::default();
    let runs: Vec<Option<RunOutcome>> = (0..2)
        .map(|_| catch_unwind(AssertUnwindSafe(|| run_synthetic(&config, |_| {}).unwrap())).ok())
        .collect();
    criterion(&mut results, 7, "end-to-end synthetic run", || {
        end_to_end(runs[0].as_ref().expect("end-to-end run failed"))
    });
    criterion(&mut results, 8, "determinism", || {
        let a = runs[0].as_ref().expect("first run failed");
        let b = runs[1].as_ref().expect("second run failed");
        determinism(a, b)
    });
    criterion(&mut results, 9, "checkpoint round-trip", checkpoint_roundtrip);

    let passed = results.iter().filter(|&&ok| ok).count();
    report(&format!("acceptance: {passed}/{} criteria passed", results.len()));
    assert_eq!(passed, results.len(), "acceptance criteria failed");
}
