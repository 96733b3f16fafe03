//! Embedding-based gaze-target classification.
//!
//! Images become unit-norm [`Embedding`]s through a pluggable [`Extractor`].
//! Scores over the class taxonomy then come from one of three heads:
//!
//! * zero-shot: softmax of cosine similarity to per-class embeddings, divided
//!   by a temperature;
//! * few-shot cache adapter: the zero-shot logits plus `alpha` times the
//!   label-weighted affinities `exp(-beta * (1 - cos))` to a small labelled
//!   cache of training embeddings;
//! * linear probe: an affine layer trained with SGD on frozen embeddings,
//!   with a softmax (single-label) or sigmoid (multi-label) output.
//!
//! Crop and mask predictions for the same frame are merged by [`fuse_scores`].

mod embed;
mod probe;
mod scores;
mod similarity;

pub use embed::{BuiltinExtractor, Embedding, Extractor, PrecomputedEmbeddings, BUILTIN_DIM};
pub use probe::{
    probe_gradient, probe_loss, probe_scores, train_probe, train_probe_with_classes, HeadMode, LinearProbe, ProbeGradient,
    Targets, TrainConfig, TrainedProbe,
};
pub use scores::{fuse_scores, predict_topk, softmax, ClassScores, FusionMode, ScoreKind};
pub use similarity::{
    adapter_scores, affinity, zero_shot_scores, ClassEmbeddings, FewShotCache,
    DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_TEMPERATURE,
};

use crate::error::Result;

/// A scoring head applied to one embedding.
#[derive(Debug, Clone)]
pub enum Classifier {
    ZeroShot(ClassEmbeddings),
    Adapter(FewShotCache, ClassEmbeddings),
    Probe(LinearProbe),
}

impl Classifier {
    pub fn score(&self, e: &Embedding) -> Result<ClassScores> {
        match self {
            Classifier::ZeroShot(ce) => zero_shot_scores(e, ce),
            Classifier::Adapter(cache, ce) => adapter_scores(e, cache, ce),
            Classifier::Probe(p) => probe_scores(e.values(), p),
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            Classifier::ZeroShot(ce) | Classifier::Adapter(_, ce) => ce.len(),
            Classifier::Probe(p) => p.num_classes(),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) mod binio {
    use crate::error::{Error, Result};

    pub fn put_u32(out: &mut Vec<u8>, v: u32) {
        out.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_f32(out: &mut Vec<u8>, v: f64) {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }

    pub struct Reader<'a> {
        bytes: &'a [u8],
        pos: usize,
    }

    impl<'a> Reader<'a> {
        pub fn new(bytes: &'a [u8], magic: &[u8]) -> Result<Self> {
            if !bytes.starts_with(magic) {
                return Err(Error::format(0, "bad magic header"));
            }
            Ok(Self {
                bytes,
                pos: magic.len(),
            })
        }

        fn take(&mut self, n: usize) -> Result<&'a [u8]> {
            let s = self
                .bytes
                .get(self.pos..self.pos + n)
                .ok_or_else(|| Error::format(0, "truncated binary file"))?;
            self.pos += n;
            Ok(s)
        }

        pub fn u32(&mut self) -> Result<u32> {
            let b = self.take(4)?;
            Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        }

        pub fn f32(&mut self) -> Result<f64> {
            let b = self.take(4)?;
            Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        }

        pub fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
            (0..n).map(|_| self.f32()).collect()
        }

        pub fn finish(self) -> Result<()> {
            if self.pos == self.bytes.len() {
                Ok(())
            } else {
                Err(Error::format(0, "trailing bytes in binary file"))
            }
        }
    }
}
