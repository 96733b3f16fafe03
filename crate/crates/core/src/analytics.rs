//! Attention analytics over labelled timelines: class frequencies, per-class
//! two-proportion z-tests against ground truth with Bonferroni correction,
//! transition matrices and dwell segments.
//!
//! The normal CDF is evaluated as `Phi(z) = erfc(-z / sqrt(2)) / 2` using the
//! `libm` port of the musl/FreeBSD `erfc`, whose rational approximations are
//! accurate to about one ulp; two-sided p-values use `erfc(|z| / sqrt(2))`
//! directly so that small tail probabilities keep full relative precision.

use crate::error::{Error, Result};
use crate::ingest::ClassTaxonomy;

/// Per-frame class labels of one session; `None` marks frames without a
/// usable gaze estimate or prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTimeline {
    pub session_id: String,
    pub fps: f64,
    frames: Vec<u64>,
    labels: Vec<Option<usize>>,
}

pub const DEFAULT_FPS: f64 = 25.0;

impl LabeledTimeline {
    pub fn new(session_id: impl Into<String>, fps: f64, frames: Vec<u64>, labels: Vec<Option<usize>>) -> Result<Self> {
        if frames.len() != labels.len() {
            return Err(Error::Shape(format!("{} frames but {} labels", frames.len(), labels.len())));
        }
        if frames.is_empty() {
            return Err(Error::EmptyInput("timeline has no frames"));
        }
        if frames.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("timeline frames must be strictly increasing".into()));
        }
        if !(fps > 0.0) {
            return Err(Error::InvalidInput(format!("fps {fps} must be positive")));
        }
        Ok(Self {
            session_id: session_id.into(),
            fps,
            frames,
            labels,
        })
    }

    /// Timeline over frames `0..labels.len()`. Panics on an empty label list.
    pub fn from_labels(session_id: impl Into<String>, fps: f64, labels: Vec<Option<usize>>) -> Self {
        let frames = (0..labels.len() as u64).collect();
        Self::new(session_id, fps, frames, labels).expect("non-empty timeline")
    }

    pub fn frames(&self) -> &[u64] {
        &self.frames
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labelled_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }

    /// CSV `frame,label` with the class name, or an empty field for unlabelled frames.
    pub fn to_csv(&self, taxonomy: &ClassTaxonomy) -> String {
        let mut out = String::from("frame,label\n");
        for (f, l) in self.frames.iter().zip(&self.labels) {
            let name = l.and_then(|i| taxonomy.name(i)).unwrap_or("");
            out.push_str(&format!("{f},{name}\n"));
        }
        out
    }

    pub fn parse_csv(text: &str, taxonomy: &ClassTaxonomy, session_id: &str, fps: f64) -> Result<Self> {
        let mut lines = text.lines().map(|l| l.trim_end_matches('\r'));
        if lines.next().map(str::trim) != Some("frame,label") {
            return Err(Error::format(0, "missing header `frame,label`"));
        }
        let (mut frames, mut labels) = (Vec::new(), Vec::new());
        for (i, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let row = i + 1;
            let (f, name) = line
                .split_once(',')
                .ok_or_else(|| Error::format(row, "expected `frame,label`"))?;
            let frame: u64 = f
                .trim()
                .parse()
                .map_err(|_| Error::format(row, format!("malformed frame {f:?}")))?;
            if frames.last().is_some_and(|&p| p >= frame) {
                return Err(Error::Order { row });
            }
            let name = name.trim();
            let label = if name.is_empty() {
                None
            } else {
                Some(taxonomy.index_of(name).ok_or_else(|| Error::Taxonomy {
                    row,
                    name: name.to_string(),
                })?)
            };
            frames.push(frame);
            labels.push(label);
        }
        Self::new(session_id, fps, frames, labels)
    }
}

fn check_labels(t: &LabeledTimeline, num_classes: usize) -> Result<()> {
    match t.labels.iter().flatten().find(|&&l| l >= num_classes) {
        Some(l) => Err(Error::InvalidInput(format!("label {l} outside {num_classes} classes"))),
        None => Ok(()),
    }
}

/// Relative frequency of each class among labelled frames.
pub fn class_frequencies(t: &LabeledTimeline, num_classes: usize) -> Result<Vec<f64>> {
    check_labels(t, num_classes)?;
    let counts = class_counts(t, num_classes);
    let n: usize = counts.iter().sum();
    if n == 0 {
        return Err(Error::EmptyInput("timeline has no labelled frames"));
    }
    Ok(counts.into_iter().map(|c| c as f64 / n as f64).collect())
}

fn class_counts(t: &LabeledTimeline, num_classes: usize) -> Vec<usize> {
    let mut counts = vec![0usize; num_classes];
    for &l in t.labels.iter().flatten() {
        counts[l] += 1;
    }
    counts
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZTest {
    pub z: f64,
    /// Two-sided p-value.
    pub p_value: f64,
}

/// Pooled two-proportion z-test of `x1/n1` against `x2/n2`.
pub fn two_proportion_ztest(x1: u64, n1: u64, x2: u64, n2: u64) -> Result<ZTest> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::InvalidInput("sample sizes must be positive".into()));
    }
    if x1 > n1 || x2 > n2 {
        return Err(Error::InvalidInput("successes exceed sample size".into()));
    }
    let (p1, p2) = (x1 as f64 / n1 as f64, x2 as f64 / n2 as f64);
    let pooled = (x1 + x2) as f64 / (n1 + n2) as f64;
    if pooled <= 0.0 || pooled >= 1.0 {
        return Ok(ZTest { z: 0.0, p_value: 1.0 });
    }
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    let z = (p1 - p2) / se;
    let p_value = libm::erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0);
    Ok(ZTest { z, p_value })
}

/// Significance level after dividing by the number of tests.
pub fn bonferroni_threshold(alpha: f64, tests: usize) -> Result<f64> {
    if tests == 0 {
        return Err(Error::InvalidInput("Bonferroni correction needs at least one test".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha {alpha} not in (0, 1)")));
    }
    Ok(alpha / tests as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZTestResult {
    pub class_index: usize,
    pub p_observed: f64,
    pub p_expected: f64,
    pub z: f64,
    pub p_value: f64,
    pub significant_raw: bool,
    pub significant_bonferroni: bool,
}

/// One z-test per class present in either timeline, comparing the predicted
/// share of labelled frames (observed) with the ground-truth share (expected).
/// The Bonferroni flag divides `alpha` by the number of classes tested.
pub fn compare_timelines(
    pred: &LabeledTimeline,
    truth: &LabeledTimeline,
    num_classes: usize,
    alpha: f64,
) -> Result<Vec<ZTestResult>> {
    if pred.frames != truth.frames {
        return Err(Error::Alignment("predicted and ground-truth timelines cover different frames".into()));
    }
    check_labels(pred, num_classes)?;
    check_labels(truth, num_classes)?;
    let (cp, ct) = (class_counts(pred, num_classes), class_counts(truth, num_classes));
    let (n1, n2) = (cp.iter().sum::<usize>() as u64, ct.iter().sum::<usize>() as u64);
    if n1 == 0 || n2 == 0 {
        return Err(Error::EmptyInput("timeline has no labelled frames"));
    }
    let tested: Vec<usize> = (0..num_classes).filter(|&c| cp[c] + ct[c] > 0).collect();
    let corrected = bonferroni_threshold(alpha, tested.len())?;
    tested
        .into_iter()
        .map(|c| {
            let t = two_proportion_ztest(cp[c] as u64, n1, ct[c] as u64, n2)?;
            Ok(ZTestResult {
                class_index: c,
                p_observed: cp[c] as f64 / n1 as f64,
                p_expected: ct[c] as f64 / n2 as f64,
                z: t.z,
                p_value: t.p_value,
                significant_raw: t.p_value < alpha,
                significant_bonferroni: t.p_value < corrected,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub probs: Vec<Vec<f64>>,
}

impl TransitionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

/// Counts over consecutive labelled frame pairs; an unlabelled frame breaks
/// the chain. With `collapse_runs`, only changes of class are counted.
pub fn transition_matrix(t: &LabeledTimeline, num_classes: usize, collapse_runs: bool) -> Result<TransitionMatrix> {
    check_labels(t, num_classes)?;
    if t.labelled_count() < 2 {
        return Err(Error::InsufficientData("need at least two labelled frames".into()));
    }
    let mut counts = vec![vec![0u64; num_classes]; num_classes];
    for w in t.labels.windows(2) {
        if let [Some(a), Some(b)] = *w {
            if !(collapse_runs && a == b) {
                counts[a][b] += 1;
            }
        }
    }
    let probs = counts
        .iter()
        .map(|row| {
            let s: u64 = row.iter().sum();
            row.iter()
                .map(|&c| if s == 0 { 0.0 } else { c as f64 / s as f64 })
                .collect()
        })
        .collect();
    Ok(TransitionMatrix { counts, probs })
}

/// Maximal run of identical labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DwellSegment {
    pub class: Option<usize>,
    pub start_frame: u64,
    pub length: usize,
    pub duration_ms: f64,
}

pub fn dwell_segments(t: &LabeledTimeline) -> Vec<DwellSegment> {
    let mut out: Vec<DwellSegment> = Vec::new();
    let ms_per_frame = 1000.0 / t.fps;
    let mut start = 0;
    for i in 1..=t.labels.len() {
        if i == t.labels.len() || t.labels[i] != t.labels[start] {
            let length = i - start;
            out.push(DwellSegment {
                class: t.labels[start],
                start_frame: t.frames[start],
                length,
                duration_ms: length as f64 * ms_per_frame,
            });
            start = i;
        }
    }
    out
}

/// Expands segments back into per-frame labels.
pub fn decode_segments(segments: &[DwellSegment]) -> Vec<Option<usize>> {
    segments
        .iter()
        .flat_map(|s| std::iter::repeat_n(s.class, s.length))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: Option<usize> = Some(0);
    const B: Option<usize> = Some(1);

    fn tl(labels: Vec<Option<usize>>) -> LabeledTimeline {
        LabeledTimeline::from_labels("s", 25.0, labels)
    }

    #[test]
    fn frequencies() {
        let f = class_frequencies(&tl(vec![A, A, Some(1), A]), 7).unwrap();
        assert_eq!(f[0], 0.75);
        assert_eq!(f[1], 0.25);
        assert_eq!(class_frequencies(&tl(vec![Some(4)]), 7).unwrap()[4], 1.0);
        assert!(matches!(class_frequencies(&tl(vec![None, None]), 7), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn ztest_reference_values() {
        // mpmath at 40 digits: z = 1.42133810903740..., p = 0.15521848968468...
        let t = two_proportion_ztest(50, 100, 40, 100).unwrap();
        assert!((t.z - 1.421338109037403).abs() < 1e-12);
        assert!((t.p_value - 0.155_218_489_684_684).abs() < 1e-12);
        let s = two_proportion_ztest(40, 100, 50, 100).unwrap();
        assert_eq!(s.z, -t.z);
        assert_eq!(s.p_value, t.p_value);
    }

    #[test]
    fn ztest_degenerate() {
        assert_eq!(two_proportion_ztest(3, 10, 6, 20).unwrap(), ZTest { z: 0.0, p_value: 1.0 });
        assert_eq!(two_proportion_ztest(0, 10, 0, 20).unwrap().p_value, 1.0);
        assert_eq!(two_proportion_ztest(10, 10, 20, 20).unwrap().z, 0.0);
        assert!(two_proportion_ztest(1, 0, 1, 1).is_err());
        assert!(two_proportion_ztest(5, 4, 1, 1).is_err());
    }

    #[test]
    fn bonferroni() {
        assert!((bonferroni_threshold(0.05, 7).unwrap() - 0.007142857142857143).abs() < 1e-18);
        assert_eq!(bonferroni_threshold(0.05, 1).unwrap(), 0.05);
        assert!(bonferroni_threshold(0.05, 0).is_err());
    }

    #[test]
    fn normal_cdf_reference() {
        // mpmath: erfc(2.5 / sqrt 2) = 0.012419330651552270...
        assert!((2.0 * (1.0 - normal_cdf(2.5)) - 0.01241933065155227).abs() < 1e-12);
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
    }

    #[test]
    fn identical_timelines_not_significant() {
        let t = tl(vec![A, B, B, Some(3), A, Some(5)]);
        let r = compare_timelines(&t, &t, 7, 0.05).unwrap();
        assert_eq!(r.len(), 4);
        assert!(r.iter().all(|z| z.z == 0.0 && !z.significant_raw && !z.significant_bonferroni));
    }

    #[test]
    fn six_classes_use_six_way_correction() {
        let truth = tl((0..600).map(|i| Some(i % 6)).collect());
        let mut pred_labels: Vec<Option<usize>> = truth.labels().to_vec();
        pred_labels[0] = Some(1);
        let pred = tl(pred_labels);
        let r = compare_timelines(&pred, &truth, 7, 0.05).unwrap();
        assert_eq!(r.len(), 6);
        // p just under 0.05 would be raw-significant but not at 0.05 / 6
        let level = bonferroni_threshold(0.05, 6).unwrap();
        for z in &r {
            assert_eq!(z.significant_bonferroni, z.p_value < level);
        }
    }

    #[test]
    fn alignment_checked() {
        let a = tl(vec![A, B]);
        let b = tl(vec![A, B, A]);
        assert!(matches!(compare_timelines(&a, &b, 7, 0.05), Err(Error::Alignment(_))));
    }

    #[test]
    fn transitions_with_and_without_collapse() {
        let t = tl(vec![A, A, B]);
        let m = transition_matrix(&t, 2, false).unwrap();
        assert_eq!(m.counts, vec![vec![1, 1], vec![0, 0]]);
        assert_eq!(m.probs[0], vec![0.5, 0.5]);
        assert_eq!(m.probs[1], vec![0.0, 0.0]);
        let c = transition_matrix(&t, 2, true).unwrap();
        assert_eq!(c.counts, vec![vec![0, 1], vec![0, 0]]);
        assert!(transition_matrix(&tl(vec![A, None]), 2, false).is_err());
    }

    #[test]
    fn gaps_break_transitions() {
        let m = transition_matrix(&tl(vec![A, None, B, B]), 2, false).unwrap();
        assert_eq!(m.counts, vec![vec![0, 0], vec![0, 1]]);
    }

    #[test]
    fn dwell_example() {
        let segs = dwell_segments(&tl(vec![A, A, B]));
        assert_eq!(
            segs,
            vec![
                DwellSegment { class: A, start_frame: 0, length: 2, duration_ms: 80.0 },
                DwellSegment { class: B, start_frame: 2, length: 1, duration_ms: 40.0 },
            ]
        );
        assert_eq!(dwell_segments(&tl(vec![B; 9])).len(), 1);
    }

    #[test]
    fn timeline_csv_round_trip() {
        let tax = ClassTaxonomy::default();
        let t = LabeledTimeline::new("s", 25.0, vec![3, 4, 9], vec![A, None, Some(6)]).unwrap();
        let csv = t.to_csv(&tax);
        assert_eq!(csv, "frame,label\n3,Infant\n4,\n9,Other Physical Objects\n");
        assert_eq!(LabeledTimeline::parse_csv(&csv, &tax, "s", 25.0).unwrap(), t);
    }
}
