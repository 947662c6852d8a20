//! Ranking metrics over day scores and the experiment-grid report.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{ExperimentCell, Resolution, Segment, StepUse};
use crate::error::{Error, Result};
use crate::ingest::{DayKey, DayLabel, DayRecord, Split};

/// Indices of `scores` sorted ascending, with the tie groups as ranges.
fn tie_groups(scores: &[f64]) -> (Vec<usize>, Vec<(usize, usize)>) {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut groups = Vec::new();
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            j += 1;
        }
        groups.push((i, j));
        i = j;
    }
    (idx, groups)
}

/// Probability that a random positive outranks a random negative, ties
/// counting one half. `None` unless both classes are present.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    // Count, per positive, negatives strictly below plus half the tied ones.
    let (idx, groups) = tie_groups(scores);
    let mut neg_below = 0usize;
    let mut twice_wins = 0u128;
    for (a, b) in groups {
        let pos = idx[a..b].iter().filter(|&&i| labels[i]).count();
        let neg = (b - a) - pos;
        twice_wins += (pos as u128) * (2 * neg_below as u128 + neg as u128);
        neg_below += neg;
    }
    Some(twice_wins as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// Average precision over descending score thresholds, tied scores forming
/// one threshold. `None` without positives.
pub fn pr_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return None;
    }
    let (idx, groups) = tie_groups(scores);
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut ap = 0.0;
    for &(a, b) in groups.iter().rev() {
        let pos = idx[a..b].iter().filter(|&&i| labels[i]).count();
        tp += pos;
        seen += b - a;
        if pos > 0 {
            ap += (pos as f64 / n_pos as f64) * (tp as f64 / seen as f64);
        }
    }
    Some(ap)
}

/// Harmonic mean of ROC-AUC and PR-AUC; 0 when both are 0.
pub fn hmean(roc: f64, pr: f64) -> f64 {
    if roc + pr > 0.0 {
        2.0 * roc * pr / (roc + pr)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateMode {
    /// Per-subject harmonic mean, then the arithmetic mean over subjects.
    #[default]
    MeanOfSubjectHmeans,
    /// Harmonic mean of the subject-averaged ROC-AUC and PR-AUC.
    HmeanOfSubjectMeans,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectMetrics {
    pub roc_auc: Option<f64>,
    pub pr_auc: Option<f64>,
    pub hmean: Option<f64>,
    pub relapse_days: usize,
    pub normal_days: usize,
}

impl SubjectMetrics {
    pub fn from_days(scores: &[f64], labels: &[bool]) -> SubjectMetrics {
        let roc = roc_auc(scores, labels);
        let pr = pr_auc(scores, labels);
        let h = match (roc, pr) {
            (Some(r), Some(p)) => Some(hmean(r, p)),
            _ => None,
        };
        let relapse_days = labels.iter().filter(|&&l| l).count();
        SubjectMetrics {
            roc_auc: roc,
            pr_auc: pr,
            hmean: h,
            relapse_days,
            normal_days: labels.len() - relapse_days,
        }
    }

    pub fn is_defined(&self) -> bool {
        self.hmean.is_some()
    }
}

/// Aggregates subjects with both metrics defined. Returns the aggregate and
/// the number of excluded subjects.
pub fn harmonic_aggregate(per_subject: &BTreeMap<String, SubjectMetrics>, mode: AggregateMode) -> Result<(f64, usize)> {
    let ok: Vec<&SubjectMetrics> = per_subject.values().filter(|m| m.is_defined()).collect();
    if ok.is_empty() {
        return Err(Error::Undefined("no subject has both relapse and normal scored days".into()));
    }
    let n = ok.len() as f64;
    let value = match mode {
        AggregateMode::MeanOfSubjectHmeans => ok.iter().filter_map(|m| m.hmean).sum::<f64>() / n,
        AggregateMode::HmeanOfSubjectMeans => {
            let roc = ok.iter().filter_map(|m| m.roc_auc).sum::<f64>() / n;
            let pr = ok.iter().filter_map(|m| m.pr_auc).sum::<f64>() / n;
            hmean(roc, pr)
        }
    };
    Ok((value, per_subject.len() - ok.len()))
}

/// Threshold maximizing Youden's J = TPR − FPR for the rule `score >= τ`.
/// Candidate thresholds are the observed scores; ties in J go to the
/// highest τ. `None` unless both classes are present.
pub fn youden_threshold(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let (idx, groups) = tie_groups(scores);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut best: Option<(f64, f64)> = None;
    for &(a, b) in groups.iter().rev() {
        let pos = idx[a..b].iter().filter(|&&i| labels[i]).count();
        tp += pos;
        fp += (b - a) - pos;
        let j = tp as f64 / n_pos as f64 - fp as f64 / n_neg as f64;
        if best.is_none_or(|(bj, _)| j > bj) {
            best = Some((j, scores[idx[a]]));
        }
    }
    best.map(|(_, t)| t)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    crate::preprocess::sorted_median(&v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub scale: f64,
    pub shift: f64,
}

impl AffineMap {
    pub fn apply(&self, x: f64) -> f64 {
        self.scale * x + self.shift
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fallback {
    /// Sleep scores, plus mapped awake scores for days lacking sleep scores.
    pub scores: BTreeMap<DayKey, f64>,
    pub rescaled: Vec<DayKey>,
    pub map: Option<AffineMap>,
}

/// Aligns awake day scores with the sleep decision threshold and uses them
/// for days without a sleep score.
///
/// The map sends the awake median to the sleep median and the awake Youden
/// threshold to the sleep Youden threshold. If that would be degenerate or
/// order-reversing, only the thresholds are aligned by a shift. Without
/// labeled days on both sides, awake scores pass through unchanged.
pub fn awake_fallback(
    sleep: &BTreeMap<DayKey, f64>,
    awake: &BTreeMap<DayKey, f64>,
    labels: &BTreeMap<DayKey, bool>,
) -> Fallback {
    let labeled = |m: &BTreeMap<DayKey, f64>| -> (Vec<f64>, Vec<bool>) {
        m.iter().filter_map(|(k, &s)| labels.get(k).map(|&l| (s, l))).unzip()
    };
    let (ss, sl) = labeled(sleep);
    let (aws, al) = labeled(awake);
    let map = match (youden_threshold(&ss, &sl), youden_threshold(&aws, &al)) {
        (Some(ts), Some(ta)) => {
            let ms = median(ss);
            let ma = median(aws);
            let scale = (ts - ms) / (ta - ma);
            Some(if scale.is_finite() && scale > 0.0 {
                AffineMap {
                    scale,
                    shift: ms - scale * ma,
                }
            } else {
                AffineMap {
                    scale: 1.0,
                    shift: ts - ta,
                }
            })
        }
        _ => {
            log::warn!("awake fallback disabled: no labeled days on both segments");
            None
        }
    };
    let mut scores = sleep.clone();
    let mut rescaled = Vec::new();
    for (k, &a) in awake {
        if !sleep.contains_key(k) {
            let v = map.as_ref().map_or(a, |m| m.apply(a));
            scores.insert(k.clone(), v);
            rescaled.push(k.clone());
        }
    }
    Fallback { scores, rescaled, map }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DayCounts {
    pub relapse_days: usize,
    pub normal_days: usize,
    pub unscoreable_days: usize,
    pub fallback_days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cell: ExperimentCell,
    pub per_subject: BTreeMap<String, SubjectMetrics>,
    pub aggregate_hmean: f64,
    pub excluded_subjects: usize,
    pub aggregate_mode: AggregateMode,
    pub counts: DayCounts,
}

/// Labeled days of `split` (normal → false, relapse → true).
pub fn split_labels(days: &[DayRecord], split: Split) -> BTreeMap<DayKey, bool> {
    days.iter()
        .filter(|d| d.split == split)
        .filter_map(|d| match d.label {
            DayLabel::Normal => Some((d.key(), false)),
            DayLabel::Relapse => Some((d.key(), true)),
            DayLabel::Unlabeled => None,
        })
        .collect()
}

/// Evaluates day scores against labeled days. Labeled days without a score
/// are counted as unscoreable and excluded.
pub fn evaluate(
    cell: ExperimentCell,
    day_scores: &BTreeMap<DayKey, f64>,
    labels: &BTreeMap<DayKey, bool>,
    mode: AggregateMode,
    fallback_days: usize,
) -> Result<EvalReport> {
    let mut by_subject: BTreeMap<String, (Vec<f64>, Vec<bool>)> = BTreeMap::new();
    let mut counts = DayCounts {
        fallback_days,
        ..DayCounts::default()
    };
    for (k, &l) in labels {
        let Some(&s) = day_scores.get(k) else {
            counts.unscoreable_days += 1;
            continue;
        };
        if l {
            counts.relapse_days += 1;
        } else {
            counts.normal_days += 1;
        }
        let e = by_subject.entry(k.subject.to_string()).or_default();
        e.0.push(s);
        e.1.push(l);
    }
    let per_subject: BTreeMap<String, SubjectMetrics> = by_subject
        .into_iter()
        .map(|(s, (sc, lb))| (s, SubjectMetrics::from_days(&sc, &lb)))
        .collect();
    let (aggregate_hmean, excluded_subjects) = harmonic_aggregate(&per_subject, mode)?;
    Ok(EvalReport {
        cell,
        per_subject,
        aggregate_hmean,
        excluded_subjects,
        aggregate_mode: mode,
        counts,
    })
}

/// Formats a metric as a percentage with one decimal, e.g. `64.5 %`.
pub fn percent(v: f64) -> String {
    format!("{:.1} %", 100.0 * v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub cell: ExperimentCell,
    pub tag: String,
    pub aggregate_hmean: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub seed: u64,
    pub cells: Vec<CellOutcome>,
    pub best: Option<String>,
}

/// Result on the original clinical dataset for the best configuration,
/// printed for reference only.
pub const REFERENCE_NOTE: &str =
    "Reference: on the original clinical validation data the best configuration was Sleep + Step at 5-minute resolution, scoring 64.5 %.";

impl GridReport {
    pub fn new(seed: u64, cells: Vec<CellOutcome>) -> GridReport {
        let best = cells
            .iter()
            .filter_map(|c| c.aggregate_hmean.map(|v| (v, &c.tag)))
            .fold(None::<(f64, &String)>, |acc, (v, t)| match acc {
                Some((bv, _)) if bv >= v => acc,
                _ => Some((v, t)),
            })
            .map(|(_, t)| t.clone());
        GridReport { seed, cells, best }
    }

    pub fn get(&self, cell: ExperimentCell) -> Option<f64> {
        self.cells.iter().find(|c| c.cell == cell).and_then(|c| c.aggregate_hmean)
    }

    /// Plain-text table: feature configurations by resolution.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let header = ["Features", "5-minute", "60-minute", "Aggregate"];
        let _ = writeln!(out, "{:<16}{:>12}{:>12}{:>12}", header[0], header[1], header[2], header[3]);
        let rule = "-".repeat(52);
        let _ = writeln!(out, "{rule}");
        for steps in [StepUse::WithoutStep, StepUse::WithStep] {
            for segment in [Segment::Sleep, Segment::Awake, Segment::Aggregate] {
                let row = ExperimentCell::new(segment, steps, Resolution::FiveMin);
                let _ = write!(out, "{:<16}", row.row_label());
                for res in Resolution::ALL {
                    let cell = ExperimentCell::new(segment, steps, res);
                    let outcome = self.cells.iter().find(|c| c.cell == cell);
                    let text = match outcome {
                        Some(CellOutcome {
                            aggregate_hmean: Some(v),
                            tag,
                            ..
                        }) => {
                            let mark = if self.best.as_deref() == Some(tag.as_str()) { "*" } else { "" };
                            format!("{mark}{}", percent(*v))
                        }
                        Some(_) => "failed".to_string(),
                        None => "-".to_string(),
                    };
                    let _ = write!(out, "{text:>12}");
                }
                let _ = writeln!(out);
            }
            let _ = writeln!(out, "{rule}");
        }
        let _ = writeln!(out, "* best cell. Aggregate column: daily-level feature vectors.");
        for c in self.cells.iter().filter(|c| c.error.is_some()) {
            let _ = writeln!(out, "failed {}: {}", c.tag, c.error.as_deref().unwrap_or(""));
        }
        let _ = writeln!(out, "{REFERENCE_NOTE}");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn pair_oracle(s: &[f64], l: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                if l[i] && !l[j] {
                    pairs += 1.0;
                    if s[i] > s[j] {
                        wins += 1.0;
                    } else if s[i] == s[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn roc_examples() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]), Some(1.0));
        assert_eq!(roc_auc(&[0.3; 5], &[true, false, true, false, false]), Some(0.5));
        assert_eq!(roc_auc(&[0.3, 0.4], &[true, true]), None);
    }

    #[test]
    fn pr_examples() {
        assert_eq!(pr_auc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]), Some(1.0));
        assert_eq!(pr_auc(&[0.9, 0.8, 0.7, 0.1], &[false, false, false, true]), Some(0.25));
        assert_eq!(pr_auc(&[0.1, 0.2], &[false, false]), None);
        // All tied: one threshold, precision = prevalence.
        assert_eq!(pr_auc(&[0.5; 4], &[true, false, false, false]), Some(0.25));
    }

    #[test]
    fn hmean_examples() {
        assert!((hmean(0.8, 0.8) - 0.8).abs() < 1e-15);
        assert!((hmean(0.5, 1.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(hmean(0.0, 0.0), 0.0);
    }

    #[test]
    fn aggregate_modes() {
        let mut m = BTreeMap::new();
        m.insert("a".into(), SubjectMetrics::from_days(&[0.9, 0.1], &[true, false]));
        m.insert("b".into(), SubjectMetrics::from_days(&[0.1, 0.9, 0.5], &[true, false, false]));
        m.insert("c".into(), SubjectMetrics::from_days(&[0.1, 0.9], &[false, false]));
        let (v, excluded) = harmonic_aggregate(&m, AggregateMode::MeanOfSubjectHmeans).unwrap();
        assert_eq!(excluded, 1);
        let hb = hmean(0.0, 1.0 / 3.0);
        assert!((v - (1.0 + hb) / 2.0).abs() < 1e-12);
        let (v2, _) = harmonic_aggregate(&m, AggregateMode::HmeanOfSubjectMeans).unwrap();
        assert!((v2 - hmean(0.5, (1.0 + 1.0 / 3.0) / 2.0)).abs() < 1e-12);
        let only_bad: BTreeMap<String, SubjectMetrics> = m.into_iter().filter(|(k, _)| k == "c").collect();
        assert!(harmonic_aggregate(&only_bad, AggregateMode::MeanOfSubjectHmeans).is_err());
    }

    #[test]
    fn youden_picks_separating_threshold() {
        let s = [0.1, 0.2, 0.3, 0.7, 0.8];
        let l = [false, false, false, true, true];
        assert_eq!(youden_threshold(&s, &l), Some(0.7));
        // Ties in J resolve to the highest threshold.
        assert_eq!(youden_threshold(&[0.5, 0.5], &[true, false]), Some(0.5));
    }

    fn key(d: u32) -> DayKey {
        let s: Arc<str> = "s".into();
        DayKey::new(&s, NaiveDate::from_ymd_opt(2023, 1, d).unwrap())
    }

    #[test]
    fn fallback_identity_when_aligned() {
        let sleep: BTreeMap<_, _> = (1..=6).map(|d| (key(d), d as f64 / 10.0)).collect();
        let labels: BTreeMap<_, _> = (1..=6).map(|d| (key(d), d >= 5)).collect();
        let mut awake = sleep.clone();
        awake.insert(key(7), 0.35);
        let mut sleep_missing = sleep.clone();
        sleep_missing.remove(&key(3));
        let fb = awake_fallback(&sleep, &sleep, &labels);
        assert!(fb.rescaled.is_empty());
        assert_eq!(fb.scores, sleep);
        let fb = awake_fallback(&sleep, &awake, &labels);
        let m = fb.map.unwrap();
        assert!((m.scale - 1.0).abs() < 1e-12 && m.shift.abs() < 1e-12);
        assert_eq!(fb.rescaled, vec![key(7)]);
        assert!((fb.scores[&key(7)] - 0.35).abs() < 1e-12);
    }

    #[test]
    fn fallback_aligns_threshold_and_median() {
        let labels: BTreeMap<_, _> = (1..=6).map(|d| (key(d), d >= 5)).collect();
        let sleep: BTreeMap<_, _> = (1..=6).map(|d| (key(d), d as f64)).collect();
        let awake: BTreeMap<_, _> = (1..=9).map(|d| (key(d), 10.0 + 2.0 * d as f64)).collect();
        let fb = awake_fallback(&sleep, &awake, &labels);
        let m = fb.map.unwrap();
        // Awake threshold 20 → sleep threshold 5; awake median 17 → 3.5.
        assert!((m.apply(20.0) - 5.0).abs() < 1e-12);
        assert!((m.apply(17.0) - 3.5).abs() < 1e-12);
        assert_eq!(fb.rescaled.len(), 3);
    }

    #[test]
    fn evaluate_counts_unscoreable() {
        let labels: BTreeMap<_, _> = (1..=5).map(|d| (key(d), d == 5)).collect();
        let scores: BTreeMap<_, _> = (1..=4).chain([5]).filter(|&d| d != 2).map(|d| (key(d), d as f64)).collect();
        let cell = ExperimentCell::new(Segment::Sleep, StepUse::WithStep, Resolution::FiveMin);
        let r = evaluate(cell, &scores, &labels, AggregateMode::default(), 0).unwrap();
        assert_eq!(r.counts.unscoreable_days, 1);
        assert_eq!(r.counts.relapse_days, 1);
        assert_eq!(r.counts.normal_days, 3);
        assert_eq!(r.aggregate_hmean, 1.0);
    }

    #[test]
    fn percent_format() {
        assert_eq!(percent(0.645), "64.5 %");
        assert_eq!(percent(1.0), "100.0 %");
    }

    #[test]
    fn grid_table_has_all_rows() {
        let cells: Vec<CellOutcome> = ExperimentCell::grid()
            .into_iter()
            .enumerate()
            .map(|(i, c)| CellOutcome {
                cell: c,
                tag: c.to_string(),
                aggregate_hmean: (i != 4).then_some(0.5 + i as f64 / 100.0),
                error: (i == 4).then(|| "empty".to_string()),
            })
            .collect();
        let g = GridReport::new(1, cells);
        assert_eq!(g.best.as_deref(), Some("aggregate-with_step-daily"));
        let t = g.render_table();
        for label in ["Sleep", "Awake + Step", "Aggregate + Step"] {
            assert!(t.lines().any(|l| l.starts_with(label)));
        }
        assert!(t.contains("*67.0 %"));
        assert!(t.contains("failed"));
    }

    proptest! {
        #[test]
        fn roc_matches_pairs_and_is_rank_invariant(
            data in prop::collection::vec((0u8..6, any::<bool>()), 2..50)
        ) {
            let s: Vec<f64> = data.iter().map(|(v, _)| *v as f64).collect();
            let l: Vec<bool> = data.iter().map(|(_, b)| *b).collect();
            prop_assume!(l.iter().any(|&b| b) && l.iter().any(|&b| !b));
            let r = roc_auc(&s, &l).unwrap();
            prop_assert!((r - pair_oracle(&s, &l)).abs() <= 1e-12);
            let t: Vec<f64> = s.iter().map(|v| (v * 0.7).exp()).collect();
            prop_assert_eq!(roc_auc(&t, &l).unwrap(), r);
            let neg: Vec<f64> = s.iter().map(|v| -v).collect();
            let flip: Vec<bool> = l.iter().map(|b| !b).collect();
            prop_assert!((roc_auc(&neg, &flip).unwrap() - r).abs() <= 1e-12);
            let rev = roc_auc(&s, &flip).unwrap();
            prop_assert!((rev + r - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn hmean_bounds(r in 0.0f64..=1.0, p in 0.0f64..=1.0) {
            let h = hmean(r, p);
            prop_assert!(h >= r.min(p) - 1e-15 && h <= r.max(p) + 1e-15);
            prop_assert!(h <= (r * p).sqrt() + 1e-15);
        }
    }
}
