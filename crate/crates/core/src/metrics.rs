//! Evaluation metrics: top-k accuracy, mean average precision, multi-label
//! F1 and Cohen's kappa.

use std::collections::{BTreeMap, BTreeSet};

use crate::analytics::LabeledTimeline;
use crate::classify::{predict_topk, ClassScores};
use crate::error::{Error, Result};
use crate::ingest::AnnotatedFrame;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub scores: ClassScores,
    pub truth: BTreeSet<usize>,
}

impl EvalRecord {
    pub fn new(scores: ClassScores, truth: impl IntoIterator<Item = usize>) -> Self {
        Self {
            scores,
            truth: truth.into_iter().collect(),
        }
    }
}

fn check_records(records: &[EvalRecord]) -> Result<usize> {
    let first = records.first().ok_or(Error::EmptyInput("no evaluation records"))?;
    let k = first.scores.num_classes();
    for r in records {
        if r.scores.num_classes() != k {
            return Err(Error::Shape("records disagree on the number of classes".into()));
        }
        if r.truth.is_empty() || r.truth.iter().any(|&t| t >= k) {
            return Err(Error::InvalidInput("record truth must be a non-empty set of class indices".into()));
        }
    }
    Ok(k)
}

/// Fraction of records with a truth label among the `k` best-scored classes.
/// Records carrying several truth labels count as a hit when any of them is.
pub fn top_k_accuracy(records: &[EvalRecord], k: usize) -> Result<f64> {
    check_records(records)?;
    let mut hits = 0usize;
    for r in records {
        let top = predict_topk(&r.scores, k)?;
        if top.iter().any(|c| r.truth.contains(c)) {
            hits += 1;
        }
    }
    Ok(hits as f64 / records.len() as f64)
}

/// Average precision of one ranking: mean precision at the rank of each
/// positive. `ranked` holds relevance flags in ranked order.
fn average_precision(ranked: impl IntoIterator<Item = bool>) -> Option<f64> {
    let (mut hits, mut sum) = (0usize, 0.0);
    for (i, rel) in ranked.into_iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

/// Non-interpolated AP of one class: rank by descending score (ties keep
/// input order) and average the precision at each positive. `None` when
/// there are no positives.
pub fn class_average_precision(scores: &[f64], relevant: &[bool]) -> Option<f64> {
    let mut order: Vec<usize> = (0..scores.len().min(relevant.len())).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    average_precision(order.iter().map(|&i| relevant[i]))
}

/// Mean over classes with at least one positive of the non-interpolated AP.
/// Records are ranked by descending class score; equal scores keep record order.
pub fn mean_average_precision(records: &[EvalRecord]) -> Result<f64> {
    let k = check_records(records)?;
    let mut aps = Vec::new();
    for c in 0..k {
        let scores: Vec<f64> = records.iter().map(|r| r.scores.probs[c]).collect();
        let relevant: Vec<bool> = records.iter().map(|r| r.truth.contains(&c)).collect();
        if let Some(ap) = class_average_precision(&scores, &relevant) {
            aps.push(ap);
        }
    }
    if aps.is_empty() {
        return Err(Error::UndefinedMetric("no class has a positive record"));
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum F1Average {
    /// Pool true/false positives over every (record, class) decision.
    #[default]
    Micro,
    /// Unweighted mean of per-class F1 over all classes.
    Macro,
}

fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// F1 with scores binarized as `score >= threshold`.
pub fn f1_multilabel(records: &[EvalRecord], threshold: f64, average: F1Average) -> Result<f64> {
    let k = check_records(records)?;
    let mut counts = vec![(0usize, 0usize, 0usize); k];
    for r in records {
        for (c, &s) in r.scores.probs.iter().enumerate() {
            let (pred, truth) = (s >= threshold, r.truth.contains(&c));
            let e = &mut counts[c];
            match (pred, truth) {
                (true, true) => e.0 += 1,
                (true, false) => e.1 += 1,
                (false, true) => e.2 += 1,
                (false, false) => {}
            }
        }
    }
    Ok(match average {
        F1Average::Micro => {
            let (tp, fp, fn_) = counts
                .iter()
                .fold((0, 0, 0), |a, c| (a.0 + c.0, a.1 + c.1, a.2 + c.2));
            f1_from_counts(tp, fp, fn_)
        }
        F1Average::Macro => counts.iter().map(|&(tp, fp, fn_)| f1_from_counts(tp, fp, fn_)).sum::<f64>() / k as f64,
    })
}

/// Cohen's kappa `(p_o - p_e) / (1 - p_e)` over frames labelled by both
/// raters. Both timelines must cover the same frames with the same frames
/// labelled.
pub fn cohens_kappa(rater1: &LabeledTimeline, rater2: &LabeledTimeline) -> Result<f64> {
    if rater1.frames() != rater2.frames() {
        return Err(Error::Alignment("raters cover different frames".into()));
    }
    let mut pairs = Vec::new();
    for (a, b) in rater1.labels().iter().zip(rater2.labels()) {
        match (a, b) {
            (Some(a), Some(b)) => pairs.push((*a, *b)),
            (None, None) => {}
            _ => return Err(Error::Alignment("a frame is labelled by only one rater".into())),
        }
    }
    kappa_from_pairs(&pairs)
}

pub(crate) fn kappa_from_pairs(pairs: &[(usize, usize)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no jointly labelled frames"));
    }
    let n = pairs.len() as f64;
    let mut m1: BTreeMap<usize, usize> = BTreeMap::new();
    let mut m2: BTreeMap<usize, usize> = BTreeMap::new();
    let mut agree = 0usize;
    for &(a, b) in pairs {
        *m1.entry(a).or_default() += 1;
        *m2.entry(b).or_default() += 1;
        agree += usize::from(a == b);
    }
    let p_o = agree as f64 / n;
    let p_e: f64 = m1
        .iter()
        .map(|(c, &x)| x as f64 / n * m2.get(c).copied().unwrap_or(0) as f64 / n)
        .sum();
    if p_e >= 1.0 {
        return Ok(if p_o >= 1.0 { 1.0 } else { 0.0 });
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Kappa between two annotators, matching frames by index and reducing
/// multi-label frames to their lowest-index label.
pub fn kappa_from_annotations(a: &[AnnotatedFrame], b: &[AnnotatedFrame]) -> Result<f64> {
    let left: BTreeMap<u64, usize> = a.iter().map(|f| (f.frame_index, f.primary_label())).collect();
    let right: BTreeMap<u64, usize> = b.iter().map(|f| (f.frame_index, f.primary_label())).collect();
    if !left.keys().eq(right.keys()) {
        return Err(Error::Alignment("annotators labelled different frames".into()));
    }
    let pairs: Vec<(usize, usize)> = left.iter().map(|(f, &l)| (l, right[f])).collect();
    kappa_from_pairs(&pairs)
}

/// Named metric values in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub entries: Vec<(String, f64)>,
}

impl MetricsReport {
    pub fn push(&mut self, name: impl Into<String>, value: f64) {
        self.entries.push((name.into(), value));
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for (name, v) in &self.entries {
            out.push_str(&format!("{name},{v:.6}\n"));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let width = self.entries.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
        self.entries
            .iter()
            .map(|(n, v)| format!("{n:<width$}  {v:>9.4}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::ScoreKind;

    fn rec(p: &[f64], truth: &[usize]) -> EvalRecord {
        EvalRecord::new(ClassScores::new(p.to_vec(), ScoreKind::SingleLabel), truth.iter().copied())
    }

    fn multi(p: &[f64], truth: &[usize]) -> EvalRecord {
        EvalRecord::new(ClassScores::new(p.to_vec(), ScoreKind::MultiLabel), truth.iter().copied())
    }

    #[test]
    fn top1_three_of_four() {
        let r = vec![
            rec(&[0.8, 0.1, 0.1], &[0]),
            rec(&[0.1, 0.8, 0.1], &[1]),
            rec(&[0.1, 0.1, 0.8], &[2]),
            rec(&[0.1, 0.1, 0.8], &[0]),
        ];
        assert_eq!(top_k_accuracy(&r, 1).unwrap(), 0.75);
        assert_eq!(top_k_accuracy(&r, 3).unwrap(), 1.0);
        assert!(matches!(top_k_accuracy(&[], 1), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn hand_computed_average_precision() {
        let ap = class_average_precision(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert!((ap - 0.8333).abs() < 1e-4);
        assert_eq!(class_average_precision(&[0.1, 0.2], &[false, false]), None);
        // the same ranking embedded in a two-class mAP; class 1's lone
        // positive sits at rank 2 because ties keep record order
        let r = vec![
            multi(&[0.9, 0.0], &[0]),
            multi(&[0.8, 0.0], &[1]),
            multi(&[0.7, 0.0], &[0]),
        ];
        assert!((mean_average_precision(&r).unwrap() - (ap + 0.5) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_ranking_map_is_one() {
        let r = vec![
            multi(&[0.9, 0.1, 0.8], &[0, 2]),
            multi(&[0.2, 0.7, 0.1], &[1]),
            multi(&[0.1, 0.6, 0.3], &[1]),
        ];
        assert_eq!(mean_average_precision(&r).unwrap(), 1.0);
    }

    #[test]
    fn f1_edges() {
        let r = vec![multi(&[0.9, 0.1], &[0]), multi(&[0.2, 0.7], &[1])];
        assert_eq!(f1_multilabel(&r, 0.5, F1Average::Micro).unwrap(), 1.0);
        assert_eq!(f1_multilabel(&r, 0.5, F1Average::Macro).unwrap(), 1.0);
        assert_eq!(f1_multilabel(&r, 0.95, F1Average::Micro).unwrap(), 0.0);
    }

    #[test]
    fn kappa_examples() {
        let t = LabeledTimeline::from_labels("s", 25.0, vec![Some(0), Some(1), Some(1), Some(2)]);
        assert_eq!(cohens_kappa(&t, &t).unwrap(), 1.0);
        let a = LabeledTimeline::from_labels("a", 25.0, vec![Some(0), Some(0), Some(1), Some(1)]);
        let b = LabeledTimeline::from_labels("b", 25.0, vec![Some(0), Some(1), Some(0), Some(1)]);
        assert_eq!(cohens_kappa(&a, &b).unwrap(), 0.0);
        let short = LabeledTimeline::from_labels("c", 25.0, vec![Some(0)]);
        assert!(matches!(cohens_kappa(&a, &short), Err(Error::Alignment(_))));
        let constant = LabeledTimeline::from_labels("d", 25.0, vec![Some(3); 5]);
        assert_eq!(cohens_kappa(&constant, &constant).unwrap(), 1.0);
    }

    #[test]
    fn report_formats() {
        let mut m = MetricsReport::default();
        m.push("top1", 0.75);
        m.push("map", 1.0);
        assert_eq!(m.to_csv(), "metric,value\ntop1,0.750000\nmap,1.000000\n");
        assert!(m.to_text().starts_with("top1     0.7500"));
    }
}
