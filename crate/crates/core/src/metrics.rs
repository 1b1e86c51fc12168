use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::provenance::Provenance;
use crate::score::ScoredWindow;
use crate::window::Label;

pub const INTERVALS_HEADER: &str = "start_seconds,end_seconds";

/// An annotated risk interval in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Self {
        Interval { start, end }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start.is_finite() && self.end.is_finite() && self.start >= 0.0 && self.start < self.end) {
            return Err(invalid!("malformed interval [{}, {}]", self.start, self.end));
        }
        Ok(())
    }
}

/// Sorted union of the intervals.
pub fn merge_intervals(intervals: &[Interval]) -> Result<Vec<Interval>> {
    for i in intervals {
        i.validate()?;
    }
    let mut sorted = intervals.to_vec();
    sorted.sort_by(|a, b| a.start.total_cmp(&b.start));
    let mut out: Vec<Interval> = Vec::with_capacity(sorted.len());
    for i in sorted {
        match out.last_mut() {
            Some(last) if i.start <= last.end => last.end = last.end.max(i.end),
            _ => out.push(i),
        }
    }
    Ok(out)
}

/// A window is risk when at least `threshold` of its duration overlaps the
/// merged intervals.
pub fn label_windows(spans: &[(f64, f64)], intervals: &[Interval], threshold: f64) -> Result<Vec<Label>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(invalid!("overlap threshold must be in (0, 1], got {threshold}"));
    }
    let merged = merge_intervals(intervals)?;
    spans
        .iter()
        .map(|&(s, e)| {
            if !(e > s) {
                return Err(invalid!("window span [{s}, {e}] is empty"));
            }
            let overlap: f64 = merged.iter().map(|i| (e.min(i.end) - s.max(i.start)).max(0.0)).sum();
            Ok(if overlap / (e - s) >= threshold {
                Label::Risk
            } else {
                Label::Normal
            })
        })
        .collect()
}

pub fn read_intervals(path: &Path) -> Result<Vec<Interval>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(INTERVALS_HEADER) {
        return Err(Error::format(path, format!("expected header `{INTERVALS_HEADER}`")));
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = || Error::format(path, format!("line {}: malformed interval", n + 2));
        let (a, b) = line.split_once(',').ok_or_else(bad)?;
        let i = Interval::new(a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        i.validate().map_err(|e| Error::format(path, format!("line {}: {e}", n + 2)))?;
        out.push(i);
    }
    Ok(out)
}

pub fn write_intervals(path: &Path, intervals: &[Interval]) -> Result<()> {
    let mut s = format!("{INTERVALS_HEADER}\n");
    for i in intervals {
        writeln!(s, "{},{}", i.start, i.end).unwrap();
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn class_counts(labels: &[bool]) -> (u64, u64) {
    let p = labels.iter().filter(|&&l| l).count() as u64;
    (p, labels.len() as u64 - p)
}

fn check_scores(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(invalid!("{} scores for {} labels", scores.len(), labels.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(invalid!("scores contain NaN"));
    }
    Ok(())
}

/// `(positives, negatives)` within each group of equal scores, highest first.
fn tie_groups(scores: &[f64], labels: &[bool]) -> Vec<(f64, u64, u64)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<(f64, u64, u64)> = Vec::new();
    for i in order {
        let (tp, fp) = if labels[i] { (1, 0) } else { (0, 1) };
        match groups.last_mut() {
            Some(g) if g.0 == scores[i] => {
                g.1 += tp;
                g.2 += fp;
            }
            _ => groups.push((scores[i], tp, fp)),
        }
    }
    groups
}

/// Area under the ROC curve by the trapezoid rule over tie groups.
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_scores(scores, labels)?;
    let (p, n) = class_counts(labels);
    if p == 0 || n == 0 {
        return Err(invalid!("AUC(ROC) needs both classes; got {p} positive, {n} negative"));
    }
    // twice the area in units of one positive-negative pair
    let (mut tp, mut area2) = (0u128, 0u128);
    for (_, gp, gn) in tie_groups(scores, labels) {
        area2 += gn as u128 * (2 * tp + gp as u128);
        tp += gp as u128;
    }
    Ok(area2 as f64 / (2 * p as u128 * n as u128) as f64)
}

/// `(#(pos > neg) + ½·#(pos = neg)) / (P·N)` by direct pair counting.
pub fn auc_roc_pairwise(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_scores(scores, labels)?;
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(&s, _)| s).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(invalid!("AUC(ROC) needs both classes"));
    }
    let mut twice = 0u128;
    for &a in &pos {
        for &b in &neg {
            twice += if a > b { 2 } else if a == b { 1 } else { 0 };
        }
    }
    Ok(twice as f64 / (2 * pos.len() as u128 * neg.len() as u128) as f64)
}

/// Area under the precision-recall curve with step interpolation:
/// `Σ (R_k − R_{k−1})·P_k` over tie groups.
pub fn auc_pr(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_scores(scores, labels)?;
    let (p, _) = class_counts(labels);
    if p == 0 {
        return Err(invalid!("AUC(PR) needs at least one positive"));
    }
    let (mut tp, mut fp, mut area) = (0u64, 0u64, 0.0);
    for (_, gp, gn) in tie_groups(scores, labels) {
        tp += gp;
        fp += gn;
        if gp > 0 {
            area += (gp as f64 / p as f64) * (tp as f64 / (tp + fp) as f64);
        }
    }
    Ok(area)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
    pub threshold: f64,
}

/// ROC points by decreasing threshold, starting at (0, 0) for `+inf`.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>> {
    check_scores(scores, labels)?;
    let (p, n) = class_counts(labels);
    if p == 0 || n == 0 {
        return Err(invalid!("ROC needs both classes"));
    }
    let mut pts = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    for (s, gp, gn) in tie_groups(scores, labels) {
        tp += gp;
        fp += gn;
        pts.push(RocPoint {
            fpr: fp as f64 / n as f64,
            tpr: tp as f64 / p as f64,
            threshold: s,
        });
    }
    Ok(pts)
}

/// PR points by decreasing threshold, one per tie group.
pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<PrPoint>> {
    check_scores(scores, labels)?;
    let (p, _) = class_counts(labels);
    if p == 0 {
        return Err(invalid!("PR curve needs at least one positive"));
    }
    let (mut tp, mut fp) = (0u64, 0u64);
    Ok(tie_groups(scores, labels)
        .into_iter()
        .map(|(s, gp, gn)| {
            tp += gp;
            fp += gn;
            PrPoint {
                recall: tp as f64 / p as f64,
                precision: tp as f64 / (tp + fp) as f64,
                threshold: s,
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auc_roc: f64,
    pub auc_pr: f64,
    pub prevalence: f64,
    #[serde(rename = "P")]
    pub positives: u64,
    #[serde(rename = "N")]
    pub negatives: u64,
    pub config_hash: String,
    pub seed: u64,
}

impl MetricsReport {
    pub fn provenance(&self) -> Provenance {
        Provenance::new(self.config_hash.clone(), self.seed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub roc: Vec<RocPoint>,
    pub pr: Vec<PrPoint>,
}

/// Metrics over labelled scored windows.
pub fn evaluate(scored: &[ScoredWindow], provenance: &Provenance) -> Result<Evaluation> {
    let scores: Vec<f64> = scored.iter().map(|w| w.score).collect();
    let labels = scored
        .iter()
        .map(|w| match w.label {
            Some(l) => Ok(l == Label::Risk),
            None => Err(invalid!("window {} has no label", w.window_index)),
        })
        .collect::<Result<Vec<bool>>>()?;
    let (p, n) = class_counts(&labels);
    Ok(Evaluation {
        report: MetricsReport {
            auc_roc: auc_roc(&scores, &labels)?,
            auc_pr: auc_pr(&scores, &labels)?,
            prevalence: p as f64 / (p + n) as f64,
            positives: p,
            negatives: n,
            config_hash: provenance.config_hash.clone(),
            seed: provenance.seed,
        },
        roc: roc_curve(&scores, &labels)?,
        pr: pr_curve(&scores, &labels)?,
    })
}

pub const METRICS_FILE: &str = "metrics.json";
pub const ROC_FILE: &str = "roc.csv";
pub const PR_FILE: &str = "pr.csv";

pub fn metrics_json(report: &MetricsReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

/// Writes `metrics.json`, `roc.csv` and `pr.csv` into `dir`.
pub fn emit_report(dir: &Path, eval: &Evaluation) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut roc = String::from("fpr,tpr,threshold\n");
    for p in &eval.roc {
        writeln!(roc, "{},{},{}", p.fpr, p.tpr, p.threshold).unwrap();
    }
    let mut pr = String::from("recall,precision,threshold\n");
    for p in &eval.pr {
        writeln!(pr, "{},{},{}", p.recall, p.precision, p.threshold).unwrap();
    }
    for (name, body) in [(METRICS_FILE, metrics_json(&eval.report)), (ROC_FILE, roc), (PR_FILE, pr)] {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

pub fn read_report(path: &Path) -> Result<MetricsReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn split(pos: &[f64], neg: &[f64]) -> (Vec<f64>, Vec<bool>) {
        let mut s = pos.to_vec();
        s.extend_from_slice(neg);
        let mut l = vec![true; pos.len()];
        l.extend(vec![false; neg.len()]);
        (s, l)
    }

    #[test]
    fn roc_reference_cases() {
        let (s, l) = split(&[0.9, 0.8], &[0.1, 0.2]);
        assert_eq!(auc_roc(&s, &l).unwrap(), 1.0);
        let (s, l) = split(&[0.5, 0.5], &[0.5, 0.5, 0.5]);
        assert_eq!(auc_roc(&s, &l).unwrap(), 0.5);
        let (s, l) = split(&[0.8, 0.4], &[0.6, 0.2]);
        assert_eq!(auc_roc(&s, &l).unwrap(), 0.75);
        assert_eq!(auc_roc_pairwise(&s, &l).unwrap(), 0.75);
    }

    #[test]
    fn single_class_is_rejected() {
        assert!(auc_roc(&[0.1, 0.2], &[true, true]).is_err());
        assert!(auc_roc(&[0.1, 0.2], &[false, false]).is_err());
        assert!(auc_pr(&[0.1, 0.2], &[false, false]).is_err());
        assert!(auc_roc(&[0.1, f64::NAN], &[true, false]).is_err());
    }

    #[test]
    fn pr_reference_cases() {
        let (s, l) = split(&[0.9, 0.8], &[0.1, 0.2]);
        assert_eq!(auc_pr(&s, &l).unwrap(), 1.0);
        let (s, l) = split(&[0.99], &[0.5, 0.4, 0.3, 0.2]);
        assert_eq!(auc_pr(&s, &l).unwrap(), 1.0);
        // ranks: +, -, + -> 1/2 * 1 + 1/2 * 2/3
        let (s, l) = split(&[0.9, 0.5], &[0.7]);
        assert!((auc_pr(&s, &l).unwrap() - (0.5 + 1.0 / 3.0)).abs() < 1e-15);
        // all tied: precision is the prevalence
        let (s, l) = split(&[0.3], &[0.3, 0.3, 0.3]);
        assert_eq!(auc_pr(&s, &l).unwrap(), 0.25);
    }

    #[test]
    fn curves_are_ordered_and_end_at_one() {
        let (s, l) = split(&[0.9, 0.5, 0.5], &[0.7, 0.5, 0.1]);
        let roc = roc_curve(&s, &l).unwrap();
        assert_eq!((roc[0].fpr, roc[0].tpr), (0.0, 0.0));
        assert_eq!((roc.last().unwrap().fpr, roc.last().unwrap().tpr), (1.0, 1.0));
        assert!(roc.windows(2).all(|w| w[0].threshold > w[1].threshold && w[0].fpr <= w[1].fpr));
        let pr = pr_curve(&s, &l).unwrap();
        assert_eq!(pr.last().unwrap().recall, 1.0);
        assert!(pr.iter().all(|p| (0.0..=1.0).contains(&p.precision)));
    }

    #[test]
    fn labelling_by_overlap() {
        let risk = [Interval::new(10.0, 20.0)];
        let labels = label_windows(&[(10.0, 15.0), (0.0, 5.0), (20.0, 25.0)], &risk, 0.5).unwrap();
        assert_eq!(labels, vec![Label::Risk, Label::Normal, Label::Normal]);
        // 2 s of a 5 s window
        let r = [Interval::new(3.0, 7.0)];
        assert_eq!(label_windows(&[(0.0, 5.0)], &r, 0.5).unwrap(), vec![Label::Normal]);
        assert_eq!(label_windows(&[(0.0, 5.0)], &r, 0.25).unwrap(), vec![Label::Risk]);
        // overlapping intervals are merged before measuring
        let twice = [Interval::new(0.0, 2.0), Interval::new(1.0, 2.0)];
        assert_eq!(label_windows(&[(0.0, 5.0)], &twice, 0.5).unwrap(), vec![Label::Normal]);
    }

    #[test]
    fn malformed_intervals_are_rejected() {
        assert!(label_windows(&[(0.0, 5.0)], &[Interval::new(4.0, 2.0)], 0.5).is_err());
        assert!(label_windows(&[(0.0, 5.0)], &[Interval::new(f64::NAN, 2.0)], 0.5).is_err());
        assert!(label_windows(&[(0.0, 5.0)], &[], 0.0).is_err());
        let m = merge_intervals(&[Interval::new(5.0, 6.0), Interval::new(0.0, 2.0), Interval::new(1.5, 3.0)]).unwrap();
        assert_eq!(m, vec![Interval::new(0.0, 3.0), Interval::new(5.0, 6.0)]);
    }

    #[test]
    fn report_counts_and_files() {
        let scored: Vec<ScoredWindow> = (0..10)
            .map(|i| ScoredWindow {
                window_index: i,
                start_time: 5.0 * i as f64,
                end_time: 5.0 * (i + 1) as f64,
                score: (i * 7 % 10) as f64,
                label: Some(if i < 3 { Label::Risk } else { Label::Normal }),
            })
            .collect();
        let prov = Provenance::new("x", 1);
        let e = evaluate(&scored, &prov).unwrap();
        assert_eq!((e.report.positives, e.report.negatives), (3, 7));
        assert_eq!(e.report.prevalence, 0.3);
        let dir = tempfile::tempdir().unwrap();
        emit_report(dir.path(), &e).unwrap();
        let first = std::fs::read(dir.path().join(METRICS_FILE)).unwrap();
        emit_report(dir.path(), &evaluate(&scored, &prov).unwrap()).unwrap();
        assert_eq!(std::fs::read(dir.path().join(METRICS_FILE)).unwrap(), first);
        assert_eq!(read_report(&dir.path().join(METRICS_FILE)).unwrap(), e.report);
        let json: serde_json::Value = serde_json::from_slice(&first).unwrap();
        assert_eq!(json["P"], 3);
        assert_eq!(json["N"], 7);
    }

    fn scored_sets() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (2usize..60)
            .prop_flat_map(|n| (prop::collection::vec(0u8..12, n), prop::collection::vec(any::<bool>(), n)))
            .prop_filter("both classes", |(_, l)| l.iter().any(|&x| x) && l.iter().any(|&x| !x))
            .prop_map(|(s, l)| (s.into_iter().map(|v| v as f64 / 4.0).collect(), l))
    }

    proptest! {
        #[test]
        fn trapezoid_equals_pair_count((s, l) in scored_sets()) {
            prop_assert_eq!(auc_roc(&s, &l).unwrap(), auc_roc_pairwise(&s, &l).unwrap());
        }

        #[test]
        fn invariant_under_monotone_transform((s, l) in scored_sets()) {
            let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
            prop_assert_eq!(auc_roc(&s, &l).unwrap(), auc_roc(&t, &l).unwrap());
            prop_assert_eq!(auc_pr(&s, &l).unwrap(), auc_pr(&t, &l).unwrap());
        }

        #[test]
        fn flipping_classes_complements((s, l) in scored_sets()) {
            let f: Vec<bool> = l.iter().map(|x| !x).collect();
            let a = auc_roc(&s, &l).unwrap();
            prop_assert!((auc_roc(&s, &f).unwrap() - (1.0 - a)).abs() < 1e-12);
        }

        #[test]
        fn values_in_unit_interval((s, l) in scored_sets()) {
            let pr = auc_pr(&s, &l).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&pr));
            let roc = auc_roc(&s, &l).unwrap();
            prop_assert!((0.0..=1.0).contains(&roc));
        }
    }
}
