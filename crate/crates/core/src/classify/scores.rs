use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScoreKind {
    /// Mutually exclusive classes; probabilities sum to one.
    SingleLabel,
    /// Independent per-class probabilities.
    MultiLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores {
    pub probs: Vec<f64>,
    pub kind: ScoreKind,
}

impl ClassScores {
    pub fn new(probs: Vec<f64>, kind: ScoreKind) -> Self {
        Self { probs, kind }
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    /// Highest-scoring class, ties to the lowest index.
    pub fn top1(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `k` class indices by descending probability, ties by ascending index.
pub fn predict_topk(scores: &ClassScores, k: usize) -> Result<Vec<usize>> {
    let n = scores.probs.len();
    if k == 0 || k > n {
        return Err(Error::Range {
            row: 0,
            message: format!("top-k with k = {k} over {n} classes"),
        });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| scores.probs[b].total_cmp(&scores.probs[a]).then(a.cmp(&b)));
    idx.truncate(k);
    Ok(idx)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum FusionMode {
    /// Arithmetic mean of probabilities (renormalized for single-label).
    #[default]
    ProbMean,
    /// Mean of log-probabilities (single-label) or logits (multi-label),
    /// mapped back through the head's activation.
    LogitMean,
}

const PROB_FLOOR: f64 = 1e-300;

pub fn fuse_scores(a: &ClassScores, b: &ClassScores, mode: FusionMode) -> Result<ClassScores> {
    if a.kind != b.kind {
        return Err(Error::Kind);
    }
    if a.probs.len() != b.probs.len() {
        return Err(Error::Shape(format!(
            "fusing {} and {} class scores",
            a.probs.len(),
            b.probs.len()
        )));
    }
    let pairs = a.probs.iter().zip(&b.probs);
    let probs = match (mode, a.kind) {
        (FusionMode::ProbMean, ScoreKind::SingleLabel) => {
            let mean: Vec<f64> = pairs.map(|(x, y)| (x + y) / 2.0).collect();
            let sum: f64 = mean.iter().sum();
            mean.into_iter().map(|m| m / sum).collect()
        }
        (FusionMode::ProbMean, ScoreKind::MultiLabel) => pairs.map(|(x, y)| (x + y) / 2.0).collect(),
        (FusionMode::LogitMean, ScoreKind::SingleLabel) => {
            let logits: Vec<f64> = pairs
                .map(|(x, y)| (x.max(PROB_FLOOR).ln() + y.max(PROB_FLOOR).ln()) / 2.0)
                .collect();
            softmax(&logits)
        }
        (FusionMode::LogitMean, ScoreKind::MultiLabel) => {
            let logit = |p: f64| {
                let p = p.clamp(PROB_FLOOR, 1.0 - 1e-16);
                (p / (1.0 - p)).ln()
            };
            pairs.map(|(&x, &y)| sigmoid((logit(x) + logit(y)) / 2.0)).collect()
        }
    };
    Ok(ClassScores::new(probs, a.kind))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single(p: &[f64]) -> ClassScores {
        ClassScores::new(p.to_vec(), ScoreKind::SingleLabel)
    }

    #[test]
    fn topk_basic_and_ties() {
        let s = single(&[0.1, 0.7, 0.2, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(predict_topk(&s, 1).unwrap(), vec![1]);
        let u = single(&[1.0 / 7.0; 7]);
        assert_eq!(predict_topk(&u, 3).unwrap(), vec![0, 1, 2]);
        assert!(predict_topk(&u, 0).is_err());
        assert!(predict_topk(&u, 8).is_err());
    }

    #[test]
    fn fuse_symmetric_pair() {
        let f = fuse_scores(&single(&[1.0, 0.0]), &single(&[0.0, 1.0]), FusionMode::ProbMean).unwrap();
        assert_eq!(f.probs, vec![0.5, 0.5]);
        let m = ClassScores::new(vec![0.2, 0.9], ScoreKind::MultiLabel);
        assert!(matches!(fuse_scores(&single(&[0.5, 0.5]), &m, FusionMode::ProbMean), Err(Error::Kind)));
    }

    fn arb_probs() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.001f64..1.0, 7).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn fusion_commutative_idempotent(a in arb_probs(), b in arb_probs(), logit in any::<bool>()) {
            let mode = if logit { FusionMode::LogitMean } else { FusionMode::ProbMean };
            let (a, b) = (single(&a), single(&b));
            let ab = fuse_scores(&a, &b, mode).unwrap();
            let ba = fuse_scores(&b, &a, mode).unwrap();
            prop_assert_eq!(&ab.probs, &ba.probs);
            prop_assert!((ab.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(ab.probs.iter().all(|&p| p >= 0.0));
            let aa = fuse_scores(&a, &a, mode).unwrap();
            for (x, y) in aa.probs.iter().zip(&a.probs) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn top1_within_top3(a in arb_probs()) {
            let s = single(&a);
            let t1 = predict_topk(&s, 1).unwrap();
            let t3 = predict_topk(&s, 3).unwrap();
            prop_assert!(t3.contains(&t1[0]));
            prop_assert_eq!(t1[0], s.top1());
        }
    }
}
