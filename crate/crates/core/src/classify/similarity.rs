use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::binio::{self, Reader};
use super::{softmax, ClassScores, Embedding, ScoreKind};
use crate::error::{Error, Result};
use crate::ingest::ClassTaxonomy;

pub const DEFAULT_TEMPERATURE: f64 = 0.01;
pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_BETA: f64 = 5.5;

/// One unit vector per class, in taxonomy order, plus the softmax temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassEmbeddings {
    rows: Vec<Embedding>,
    temperature: f64,
}

impl ClassEmbeddings {
    pub fn new(rows: Vec<Embedding>, temperature: f64) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("no class embeddings"));
        }
        if !(temperature > 0.0) {
            return Err(Error::InvalidInput(format!("temperature {temperature} must be positive")));
        }
        let d = rows[0].dim();
        if rows.iter().any(|r| r.dim() != d) {
            return Err(Error::Shape("class embeddings differ in dimension".into()));
        }
        Ok(Self { rows, temperature })
    }

    /// Deterministic pseudo-random unit vectors (Gaussian directions) for
    /// synthetic runs without a text encoder.
    pub fn random(num_classes: usize, dim: usize, seed: u64, temperature: f64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..num_classes)
            .map(|_| {
                let v: Vec<f64> = (0..dim)
                    .map(|_| {
                        let u1: f64 = 1.0 - rng.random::<f64>();
                        let u2: f64 = rng.random();
                        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
                    })
                    .collect();
                Embedding::normalize(v)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows, temperature)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows[0].dim()
    }

    pub fn rows(&self) -> &[Embedding] {
        &self.rows
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn with_temperature(mut self, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0) {
            return Err(Error::InvalidInput(format!("temperature {temperature} must be positive")));
        }
        self.temperature = temperature;
        Ok(self)
    }

    /// `name,v1,...,vd` per class; rows may come in any order but every
    /// taxonomy class must appear exactly once.
    pub fn parse(text: &str, taxonomy: &ClassTaxonomy, temperature: f64) -> Result<Self> {
        let mut rows: Vec<Option<Embedding>> = vec![None; taxonomy.len()];
        let mut row = 0;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            row += 1;
            let mut fields = line.split(',').map(str::trim);
            let name = fields.next().unwrap_or_default();
            let idx = taxonomy.index_of(name).ok_or_else(|| Error::Taxonomy {
                row,
                name: name.to_string(),
            })?;
            let values = fields
                .map(str::parse::<f64>)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| Error::format(row, "malformed embedding value"))?;
            if rows[idx].is_some() {
                return Err(Error::format(row, format!("duplicate class {name:?}")));
            }
            rows[idx] = Some(Embedding::normalize(values).map_err(|e| Error::format(row, e.to_string()))?);
        }
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                r.ok_or_else(|| Error::format(0, format!("missing class {:?}", taxonomy.labels()[i])))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows, temperature)
    }

    pub fn to_text(&self, taxonomy: &ClassTaxonomy) -> String {
        let mut out = String::new();
        for (name, e) in taxonomy.labels().iter().zip(&self.rows) {
            out.push_str(name);
            for v in e.values() {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub(crate) fn logits(&self, e: &Embedding) -> Result<Vec<f64>> {
        if e.dim() != self.dim() {
            return Err(Error::Shape(format!(
                "embedding dimension {} vs class embeddings {}",
                e.dim(),
                self.dim()
            )));
        }
        Ok(self.rows.iter().map(|r| e.cosine(r) / self.temperature).collect())
    }
}

/// `softmax(cos(e, class_k) / T)`.
pub fn zero_shot_scores(e: &Embedding, ce: &ClassEmbeddings) -> Result<ClassScores> {
    Ok(ClassScores::new(softmax(&ce.logits(e)?), ScoreKind::SingleLabel))
}

/// `exp(-beta * (1 - cos))`; lies in `(0, 1]` and equals 1 only for identical
/// unit vectors.
pub fn affinity(query: &Embedding, key: &Embedding, beta: f64) -> f64 {
    (-beta * (1.0 - query.cosine(key))).exp()
}

/// Labelled key embeddings from a few-shot training set.
#[derive(Debug, Clone, PartialEq)]
pub struct FewShotCache {
    keys: Vec<Embedding>,
    labels: Vec<usize>,
    num_classes: usize,
    pub alpha: f64,
    pub beta: f64,
}

const CACHE_MAGIC: &[u8; 8] = b"EGZCACHE";
const FORMAT_VERSION: u32 = 1;

impl FewShotCache {
    pub fn new(keys: Vec<Embedding>, labels: Vec<usize>, num_classes: usize, alpha: f64, beta: f64) -> Result<Self> {
        if keys.len() != labels.len() {
            return Err(Error::Shape(format!("{} keys but {} labels", keys.len(), labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidInput(format!("cache label {bad} >= {num_classes} classes")));
        }
        if let Some(first) = keys.first() {
            if keys.iter().any(|k| k.dim() != first.dim()) {
                return Err(Error::Shape("cache keys differ in dimension".into()));
            }
        }
        if !(alpha >= 0.0) || !(beta > 0.0) {
            return Err(Error::InvalidInput(format!("need alpha >= 0 and beta > 0 (got {alpha}, {beta})")));
        }
        Ok(Self {
            keys,
            labels,
            num_classes,
            alpha,
            beta,
        })
    }

    /// Keeps the first `shots` samples of each class, in input order.
    pub fn build(
        samples: impl IntoIterator<Item = (Embedding, usize)>,
        shots: usize,
        num_classes: usize,
        alpha: f64,
        beta: f64,
    ) -> Result<Self> {
        let mut taken = vec![0usize; num_classes];
        let (mut keys, mut labels) = (Vec::new(), Vec::new());
        for (e, label) in samples {
            if label >= num_classes {
                return Err(Error::InvalidInput(format!("label {label} >= {num_classes} classes")));
            }
            if taken[label] < shots {
                taken[label] += 1;
                keys.push(e);
                labels.push(label);
            }
        }
        Self::new(keys, labels, num_classes, alpha, beta)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[Embedding] {
        &self.keys
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// One-hot label rows (N x K).
    pub fn values(&self) -> Vec<Vec<f64>> {
        self.labels
            .iter()
            .map(|&l| (0..self.num_classes).map(|k| if k == l { 1.0 } else { 0.0 }).collect())
            .collect()
    }

    /// Little-endian layout: magic `EGZCACHE`, version, d, K, N (u32),
    /// alpha, beta (f32), keys N x d then values N x K (f32, row-major).
    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.keys.first().map_or(0, Embedding::dim);
        let mut out = CACHE_MAGIC.to_vec();
        for v in [FORMAT_VERSION, d as u32, self.num_classes as u32, self.keys.len() as u32] {
            binio::put_u32(&mut out, v);
        }
        binio::put_f32(&mut out, self.alpha);
        binio::put_f32(&mut out, self.beta);
        for k in &self.keys {
            k.values().iter().for_each(|&v| binio::put_f32(&mut out, v));
        }
        for row in self.values() {
            row.into_iter().for_each(|v| binio::put_f32(&mut out, v));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, CACHE_MAGIC)?;
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::format(0, format!("unsupported cache version {version}")));
        }
        let (d, k, n) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        let (alpha, beta) = (r.f32()?, r.f32()?);
        let keys = (0..n)
            .map(|_| Embedding::normalize(r.f32s(d)?))
            .collect::<Result<Vec<_>>>()?;
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let row = r.f32s(k)?;
            let ones: Vec<usize> = (0..k).filter(|&i| row[i] == 1.0).collect();
            if ones.len() != 1 || row.iter().sum::<f64>() != 1.0 {
                return Err(Error::format(0, "cache value row is not one-hot"));
            }
            labels.push(ones[0]);
        }
        r.finish()?;
        Self::new(keys, labels, k, alpha, beta)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Cache-adapted scores: `softmax(alpha * A . values + cos(e, class) / T)`
/// with `A_i = exp(-beta * (1 - cos(e, key_i)))`.
pub fn adapter_scores(e: &Embedding, cache: &FewShotCache, ce: &ClassEmbeddings) -> Result<ClassScores> {
    if cache.is_empty() {
        return Err(Error::EmptyCache);
    }
    if cache.keys[0].dim() != e.dim() {
        return Err(Error::Shape(format!(
            "embedding dimension {} vs cache keys {}",
            e.dim(),
            cache.keys[0].dim()
        )));
    }
    if cache.num_classes != ce.len() {
        return Err(Error::Shape(format!(
            "cache has {} classes, class embeddings {}",
            cache.num_classes,
            ce.len()
        )));
    }
    let mut cache_logits = vec![0.0; cache.num_classes];
    for (key, &label) in cache.keys.iter().zip(&cache.labels) {
        cache_logits[label] += affinity(e, key, cache.beta);
    }
    let mut logits = ce.logits(e)?;
    for (l, c) in logits.iter_mut().zip(&cache_logits) {
        *l += cache.alpha * c;
    }
    Ok(ClassScores::new(softmax(&logits), ScoreKind::SingleLabel))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis(d: usize, i: usize) -> Embedding {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        Embedding::from_unit(v).unwrap()
    }

    fn orthogonal_classes(k: usize) -> ClassEmbeddings {
        ClassEmbeddings::new((0..k).map(|i| basis(k, i)).collect(), DEFAULT_TEMPERATURE).unwrap()
    }

    #[test]
    fn self_similarity_dominates() {
        let ce = orthogonal_classes(7);
        let s = zero_shot_scores(&basis(7, 3), &ce).unwrap();
        assert_eq!(s.top1(), 3);
        assert!(s.probs[3] > 0.99);
    }

    #[test]
    fn identical_classes_give_uniform() {
        let e = Embedding::normalize(vec![1.0, 2.0, 3.0]).unwrap();
        let ce = ClassEmbeddings::new(vec![e.clone(); 7], 0.01).unwrap();
        let s = zero_shot_scores(&e, &ce).unwrap();
        assert!(s.probs.iter().all(|&p| (p - 1.0 / 7.0).abs() < 1e-15));
    }

    #[test]
    fn dimension_mismatch() {
        let ce = orthogonal_classes(7);
        assert!(matches!(zero_shot_scores(&basis(3, 0), &ce), Err(Error::Shape(_))));
    }

    #[test]
    fn empty_cache_rejected() {
        let ce = orthogonal_classes(3);
        let cache = FewShotCache::new(vec![], vec![], 3, 1.0, 5.5).unwrap();
        assert!(matches!(adapter_scores(&basis(3, 0), &cache, &ce), Err(Error::EmptyCache)));
    }

    #[test]
    fn exact_match_dominates_with_large_alpha() {
        let ce = ClassEmbeddings::random(7, 16, 1, 0.01).unwrap();
        let q = ClassEmbeddings::random(1, 16, 99, 0.01).unwrap().rows()[0].clone();
        let cache = FewShotCache::new(vec![q.clone()], vec![5], 7, 1000.0, 5.5).unwrap();
        assert_eq!(adapter_scores(&q, &cache, &ce).unwrap().top1(), 5);
        assert_eq!(affinity(&q, &q, 5.5), 1.0);
    }

    #[test]
    fn build_limits_shots_per_class() {
        let samples = (0..50).map(|i| (basis(4, i % 4), i % 3));
        let cache = FewShotCache::build(samples, 16, 3, 1.0, 5.5).unwrap();
        for c in 0..3 {
            assert_eq!(cache.labels().iter().filter(|&&l| l == c).count(), 16);
        }
        assert!(cache.values().iter().all(|r| r.iter().sum::<f64>() == 1.0));
    }

    #[test]
    fn cache_binary_round_trip() {
        let ce = ClassEmbeddings::random(5, 8, 3, 0.01).unwrap();
        let cache = FewShotCache::new(ce.rows().to_vec(), vec![0, 1, 2, 3, 4], 5, 1.0, 5.5).unwrap();
        let bytes = cache.to_bytes();
        assert_eq!(&bytes[..8], b"EGZCACHE");
        assert_eq!(bytes.len(), 8 + 16 + 8 + 4 * (5 * 8 + 5 * 5));
        let back = FewShotCache::from_bytes(&bytes).unwrap();
        assert_eq!(back.labels(), cache.labels());
        for (a, b) in back.keys().iter().zip(cache.keys()) {
            assert!(a.values().iter().zip(b.values()).all(|(x, y)| (x - y).abs() < 1e-6));
        }
        assert!(FewShotCache::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn class_embedding_text_round_trip() {
        let t = ClassTaxonomy::default();
        let ce = ClassEmbeddings::random(7, 4, 2, 0.01).unwrap();
        let back = ClassEmbeddings::parse(&ce.to_text(&t), &t, 0.01).unwrap();
        for (a, b) in back.rows().iter().zip(ce.rows()) {
            assert!(a.values().iter().zip(b.values()).all(|(x, y)| (x - y).abs() < 1e-12));
        }
        let missing: String = ce.to_text(&t).lines().skip(1).map(|l| format!("{l}\n")).collect();
        assert!(ClassEmbeddings::parse(&missing, &t, 0.01).is_err());
    }
}
