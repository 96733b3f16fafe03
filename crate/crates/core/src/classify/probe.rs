use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::binio::{self, Reader};
use super::scores::sigmoid;
use super::{dot, softmax, ClassScores, ScoreKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadMode {
    /// Softmax output trained with cross-entropy.
    SingleLabel,
    /// Per-class sigmoid output trained with binary cross-entropy.
    MultiLabel,
}

/// Affine layer `W x + b` over embeddings; `W` is stored row-major, K x d.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    num_classes: usize,
    dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    head: HeadMode,
}

const PROBE_MAGIC: &[u8; 8] = b"EGZPROBE";
const FORMAT_VERSION: u32 = 1;

impl LinearProbe {
    pub fn new(num_classes: usize, dim: usize, weights: Vec<f64>, bias: Vec<f64>, head: HeadMode) -> Result<Self> {
        if num_classes == 0 || dim == 0 {
            return Err(Error::InvalidSize("probe needs at least one class and one input".into()));
        }
        if weights.len() != num_classes * dim || bias.len() != num_classes {
            return Err(Error::Shape(format!(
                "probe {num_classes}x{dim} given {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("probe parameters must be finite".into()));
        }
        Ok(Self {
            num_classes,
            dim,
            weights,
            bias,
            head,
        })
    }

    /// Parameters drawn uniformly from `[-1/sqrt(d), 1/sqrt(d)]`.
    pub fn init(num_classes: usize, dim: usize, head: HeadMode, seed: u64) -> Result<Self> {
        let bound = 1.0 / (dim.max(1) as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-bound..=bound)).collect() };
        let weights = draw(num_classes * dim);
        let bias = draw(num_classes);
        Self::new(num_classes, dim, weights, bias, head)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn head(&self) -> HeadMode {
        self.head
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.dim)
            .zip(&self.bias)
            .map(|(row, b)| dot(row, x) + b)
            .collect()
    }

    /// Little-endian layout: magic `EGZPROBE`, version, d, K, head
    /// (0 single-label, 1 multi-label) as u32, then W (K x d) and b (K) as f32.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = PROBE_MAGIC.to_vec();
        let head = match self.head {
            HeadMode::SingleLabel => 0,
            HeadMode::MultiLabel => 1,
        };
        for v in [FORMAT_VERSION, self.dim as u32, self.num_classes as u32, head] {
            binio::put_u32(&mut out, v);
        }
        self.weights.iter().chain(&self.bias).for_each(|&v| binio::put_f32(&mut out, v));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, PROBE_MAGIC)?;
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::format(0, format!("unsupported probe version {version}")));
        }
        let (d, k) = (r.u32()? as usize, r.u32()? as usize);
        let head = match r.u32()? {
            0 => HeadMode::SingleLabel,
            1 => HeadMode::MultiLabel,
            other => return Err(Error::format(0, format!("unknown probe head {other}"))),
        };
        let weights = r.f32s(k * d)?;
        let bias = r.f32s(k)?;
        r.finish()?;
        Self::new(k, d, weights, bias, head)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

pub fn probe_scores(x: &[f64], probe: &LinearProbe) -> Result<ClassScores> {
    if x.len() != probe.dim {
        return Err(Error::Shape(format!("input dimension {} vs probe {}", x.len(), probe.dim)));
    }
    let z = probe.logits(x);
    Ok(match probe.head {
        HeadMode::SingleLabel => ClassScores::new(softmax(&z), ScoreKind::SingleLabel),
        HeadMode::MultiLabel => ClassScores::new(z.into_iter().map(sigmoid).collect(), ScoreKind::MultiLabel),
    })
}

/// Training targets; the variant decides the probe head.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    SingleLabel(Vec<usize>),
    MultiLabel(Vec<BTreeSet<usize>>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::SingleLabel(t) => t.len(),
            Targets::MultiLabel(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn head(&self) -> HeadMode {
        match self {
            Targets::SingleLabel(_) => HeadMode::SingleLabel,
            Targets::MultiLabel(_) => HeadMode::MultiLabel,
        }
    }

    fn validate(&self, num_classes: usize) -> Result<()> {
        let bad = match self {
            Targets::SingleLabel(t) => t.iter().any(|&l| l >= num_classes),
            Targets::MultiLabel(t) => t.iter().any(|s| s.iter().any(|&l| l >= num_classes)),
        };
        if bad {
            return Err(Error::InvalidInput(format!("target label outside {num_classes} classes")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeGradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `max(z, 0) - z y + ln(1 + exp(-|z|))`
fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

fn check_batch(probe: &LinearProbe, features: &[Vec<f64>], targets: &Targets, batch: &[usize]) -> Result<()> {
    if targets.head() != probe.head {
        return Err(Error::InvalidInput("targets do not match the probe head".into()));
    }
    if features.len() != targets.len() {
        return Err(Error::Shape(format!("{} feature rows, {} targets", features.len(), targets.len())));
    }
    if let Some(&i) = batch.iter().find(|&&i| i >= features.len()) {
        return Err(Error::InvalidInput(format!("batch index {i} out of range")));
    }
    if let Some(&i) = batch.iter().find(|&&i| features[i].len() != probe.dim) {
        return Err(Error::Shape(format!(
            "feature row of length {} vs probe {}",
            features[i].len(),
            probe.dim
        )));
    }
    targets.validate(probe.num_classes)
}

/// Mean data loss over `batch`: cross-entropy (single-label) or binary
/// cross-entropy averaged over samples and classes (multi-label).
pub fn probe_loss(probe: &LinearProbe, features: &[Vec<f64>], targets: &Targets, batch: &[usize]) -> Result<f64> {
    check_batch(probe, features, targets, batch)?;
    let k = probe.num_classes as f64;
    let total: f64 = batch
        .iter()
        .map(|&i| {
            let z = probe.logits(&features[i]);
            match targets {
                Targets::SingleLabel(t) => log_sum_exp(&z) - z[t[i]],
                Targets::MultiLabel(t) => {
                    z.iter()
                        .enumerate()
                        .map(|(c, &zc)| bce_with_logit(zc, f64::from(u8::from(t[i].contains(&c)))))
                        .sum::<f64>()
                        / k
                }
            }
        })
        .sum();
    Ok(total / batch.len() as f64)
}

/// Analytic gradient of [`probe_loss`] (weight decay excluded).
pub fn probe_gradient(
    probe: &LinearProbe,
    features: &[Vec<f64>],
    targets: &Targets,
    batch: &[usize],
) -> Result<ProbeGradient> {
    check_batch(probe, features, targets, batch)?;
    let (k, d) = (probe.num_classes, probe.dim);
    let mut gw = vec![0.0; k * d];
    let mut gb = vec![0.0; k];
    let scale = match probe.head {
        HeadMode::SingleLabel => 1.0 / batch.len() as f64,
        HeadMode::MultiLabel => 1.0 / (batch.len() * k) as f64,
    };
    for &i in batch {
        let x = &features[i];
        let z = probe.logits(x);
        let delta: Vec<f64> = match targets {
            Targets::SingleLabel(t) => {
                let mut p = softmax(&z);
                p[t[i]] -= 1.0;
                p
            }
            Targets::MultiLabel(t) => z
                .iter()
                .enumerate()
                .map(|(c, &zc)| sigmoid(zc) - f64::from(u8::from(t[i].contains(&c))))
                .collect(),
        };
        for (c, dc) in delta.iter().enumerate() {
            let dc = dc * scale;
            gb[c] += dc;
            for (g, xv) in gw[c * d..(c + 1) * d].iter_mut().zip(x) {
                *g += dc * xv;
            }
        }
    }
    Ok(ProbeGradient { weights: gw, bias: gb })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Epochs (0-based) at which the learning rate is multiplied by `gamma`.
    pub milestones: Vec<usize>,
    pub gamma: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            milestones: Vec::new(),
            gamma: 0.1,
            epochs: 100,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.momentum) || self.batch_size == 0 {
            return Err(Error::InvalidInput(
                "training needs lr > 0, 0 <= momentum < 1 and batch_size >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Step-decayed rate for `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let steps = self.milestones.iter().filter(|&&m| m <= epoch).count();
        self.lr * self.gamma.powi(steps as i32)
    }
}

#[derive(Debug, Clone)]
pub struct TrainedProbe {
    pub probe: LinearProbe,
    /// Mean mini-batch data loss per epoch.
    pub loss_trace: Vec<f64>,
}

/// Mini-batch SGD with heavy-ball momentum (`v = m v + g; w -= lr v`).
/// Weight decay adds `wd * W` to the weight gradient; biases are not
/// decayed. Samples are reshuffled every epoch from a seeded stream.
pub fn train_probe(features: &[Vec<f64>], targets: &Targets, cfg: &TrainConfig) -> Result<TrainedProbe> {
    let num_classes = match targets {
        Targets::SingleLabel(t) => t.iter().max().map_or(0, |m| m + 1),
        Targets::MultiLabel(t) => t.iter().filter_map(|s| s.last()).max().map_or(0, |m| m + 1),
    };
    train_probe_with_classes(features, targets, num_classes, cfg)
}

/// Like [`train_probe`] with an explicit class count (classes may be absent
/// from the training targets).
pub fn train_probe_with_classes(
    features: &[Vec<f64>],
    targets: &Targets,
    num_classes: usize,
    cfg: &TrainConfig,
) -> Result<TrainedProbe> {
    cfg.validate()?;
    if features.is_empty() {
        return Err(Error::EmptyInput("no training features"));
    }
    let mut probe = LinearProbe::init(num_classes, features[0].len(), targets.head(), cfg.seed)?;
    let all: Vec<usize> = (0..features.len()).collect();
    check_batch(&probe, features, targets, &all)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5eed_5eed_5eed);
    let mut vw = vec![0.0; probe.weights.len()];
    let mut vb = vec![0.0; probe.bias.len()];
    let mut order = all;
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for batch in order.chunks(cfg.batch_size) {
            let loss = probe_loss(&probe, features, targets, batch)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            epoch_loss += loss;
            batches += 1;
            let g = probe_gradient(&probe, features, targets, batch)?;
            for ((w, v), gw) in probe.weights.iter_mut().zip(&mut vw).zip(&g.weights) {
                *v = cfg.momentum * *v + gw + cfg.weight_decay * *w;
                *w -= lr * *v;
            }
            for ((b, v), gb) in probe.bias.iter_mut().zip(&mut vb).zip(&g.bias) {
                *v = cfg.momentum * *v + gb;
                *b -= lr * *v;
            }
        }
        let mean = epoch_loss / batches as f64;
        if !mean.is_finite() || probe.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        loss_trace.push(mean);
    }
    Ok(TrainedProbe { probe, loss_trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_probe_scores() {
        let p = LinearProbe::new(7, 3, vec![0.0; 21], vec![0.0; 7], HeadMode::SingleLabel).unwrap();
        let s = probe_scores(&[0.3, 0.1, 0.2], &p).unwrap();
        assert!(s.probs.iter().all(|&v| (v - 1.0 / 7.0).abs() < 1e-15));
        let p = LinearProbe::new(7, 3, vec![0.0; 21], vec![0.0; 7], HeadMode::MultiLabel).unwrap();
        let s = probe_scores(&[0.3, 0.1, 0.2], &p).unwrap();
        assert!(s.probs.iter().all(|&v| v == 0.5));
        assert!(matches!(probe_scores(&[1.0], &p), Err(Error::Shape(_))));
    }

    #[test]
    fn random_probe_matches_affine_oracle() {
        let p = LinearProbe::init(4, 5, HeadMode::MultiLabel, 9).unwrap();
        let x = [0.1, -0.4, 0.9, 0.0, 0.3];
        let s = probe_scores(&x, &p).unwrap();
        for c in 0..4 {
            let z: f64 = (0..5).map(|j| p.weights[c * 5 + j] * x[j]).sum::<f64>() + p.bias[c];
            assert!((s.probs[c] - 1.0 / (1.0 + (-z).exp())).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let x = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let t = Targets::SingleLabel(vec![0, 1]);
        let cfg = TrainConfig { epochs: 0, seed: 4, ..TrainConfig::default() };
        let trained = train_probe(&x, &t, &cfg).unwrap();
        assert_eq!(trained.probe, LinearProbe::init(2, 2, HeadMode::SingleLabel, 4).unwrap());
        assert!(trained.loss_trace.is_empty());
    }

    #[test]
    fn divergence_detected() {
        let x = vec![vec![1e200, -1e200], vec![-1e200, 1e200]];
        let t = Targets::SingleLabel(vec![0, 1]);
        let cfg = TrainConfig { epochs: 50, lr: 1e10, ..TrainConfig::default() };
        assert!(matches!(train_probe(&x, &t, &cfg), Err(Error::Divergence { .. })));
    }

    #[test]
    fn milestones_decay_lr() {
        let cfg = TrainConfig { milestones: vec![10, 20], ..TrainConfig::default() };
        assert_eq!(cfg.lr_at(0), 0.1);
        assert!((cfg.lr_at(10) - 0.01).abs() < 1e-15);
        assert!((cfg.lr_at(25) - 0.001).abs() < 1e-15);
    }

    #[test]
    fn probe_binary_round_trip() {
        let p = LinearProbe::init(3, 4, HeadMode::MultiLabel, 1).unwrap();
        let back = LinearProbe::from_bytes(&p.to_bytes()).unwrap();
        assert_eq!(back.head(), HeadMode::MultiLabel);
        assert!(back.weights.iter().zip(&p.weights).all(|(a, b)| (a - b).abs() < 1e-6));
        assert_eq!(p.to_bytes().len(), 8 + 16 + 4 * (12 + 3));
    }
}
