use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::ingest::Image;

/// Unit-L2-norm feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

const UNIT_TOLERANCE: f64 = 1e-6;

impl Embedding {
    /// Scales `values` to unit length. Fails for zero or non-finite vectors.
    pub fn normalize(values: Vec<f64>) -> Result<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidInput("cannot normalize a zero or non-finite vector".into()));
        }
        Ok(Self(values.into_iter().map(|v| v / norm).collect()))
    }

    /// Wraps a vector that is already unit-norm (within 1e-6).
    pub fn from_unit(values: Vec<f64>) -> Result<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::InvalidInput(format!("embedding norm {norm} is not 1")));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn cosine(&self, other: &Embedding) -> f64 {
        super::dot(&self.0, &other.0)
    }
}

/// Maps a frame's image to an embedding.
pub trait Extractor: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, frame_index: u64, img: &Image) -> Result<Embedding>;
}

/// 24 colour-histogram bins plus a 64-cell grey thumbnail.
pub const BUILTIN_DIM: usize = 88;

/// Hand-crafted extractor: a 3 x 8-bin colour histogram (fraction of pixels
/// per bin) concatenated with an 8 x 8 area-averaged grey thumbnail in
/// `[0, 1]`, L2-normalized.
#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinExtractor;

impl BuiltinExtractor {
    pub fn features(img: &Image) -> Vec<f64> {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut hist = [0u32; 24];
        let mut cells = [0f64; 64];
        let mut cell_counts = [0u32; 64];
        let col_cell: Vec<usize> = (0..w).map(|x| x * 8 / w).collect();
        for (y, row) in img.pixels().chunks_exact(w * 3).enumerate() {
            let cy = y * 8 / h;
            for (x, p) in row.chunks_exact(3).enumerate() {
                hist[(p[0] >> 5) as usize] += 1;
                hist[8 + (p[1] >> 5) as usize] += 1;
                hist[16 + (p[2] >> 5) as usize] += 1;
                let cell = cy * 8 + col_cell[x];
                cells[cell] += 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
                cell_counts[cell] += 1;
            }
        }
        // images narrower or shorter than 8 px leave some cells empty;
        // fill them from the nearest populated source row/column
        let n = (w * h) as f64;
        let mut out: Vec<f64> = hist.iter().map(|&c| c as f64 / n).collect();
        for cy in 0..8 {
            for cx in 0..8 {
                let sy = (cy * h / 8) * 8 / h;
                let sx = (cx * w / 8) * 8 / w;
                let (src, count) = if cell_counts[cy * 8 + cx] > 0 {
                    (cells[cy * 8 + cx], cell_counts[cy * 8 + cx])
                } else {
                    (cells[sy * 8 + sx], cell_counts[sy * 8 + sx])
                };
                out.push(src / count as f64 / 255.0);
            }
        }
        out
    }
}

impl Extractor for BuiltinExtractor {
    fn dim(&self) -> usize {
        BUILTIN_DIM
    }

    fn embed(&self, _frame_index: u64, img: &Image) -> Result<Embedding> {
        Embedding::normalize(Self::features(img))
    }
}

/// Vectors computed elsewhere, keyed by frame index. Text form: one line per
/// frame, `frame_id,v1,...,vd`, no header.
#[derive(Debug, Clone, Default)]
pub struct PrecomputedEmbeddings {
    dim: usize,
    vectors: HashMap<u64, Embedding>,
}

impl PrecomputedEmbeddings {
    pub fn new(entries: impl IntoIterator<Item = (u64, Embedding)>) -> Result<Self> {
        let mut vectors = HashMap::new();
        let mut dim = 0;
        for (frame, e) in entries {
            if dim == 0 {
                dim = e.dim();
            } else if e.dim() != dim {
                return Err(Error::Shape(format!(
                    "embedding for frame {frame} has dimension {}, expected {dim}",
                    e.dim()
                )));
            }
            vectors.insert(frame, e);
        }
        Ok(Self { dim, vectors })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut row = 0;
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            row += 1;
            let mut fields = line.split(',').map(str::trim);
            let frame: u64 = fields
                .next()
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| Error::format(row, "malformed frame id"))?;
            let values = fields
                .map(|f| f.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| Error::format(row, "malformed embedding value"))?;
            entries.push((frame, Embedding::normalize(values).map_err(|e| Error::format(row, e.to_string()))?));
        }
        Self::new(entries)
    }

    pub fn to_text(&self) -> String {
        let mut frames: Vec<&u64> = self.vectors.keys().collect();
        frames.sort();
        let mut out = String::new();
        for f in frames {
            out.push_str(&f.to_string());
            for v in self.vectors[f].values() {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn get(&self, frame_index: u64) -> Option<&Embedding> {
        self.vectors.get(&frame_index)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl Extractor for PrecomputedEmbeddings {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, frame_index: u64, _img: &Image) -> Result<Embedding> {
        self.vectors
            .get(&frame_index)
            .cloned()
            .ok_or(Error::Lookup(frame_index))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(seed: u64, w: u32, h: u32) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::new(w, h, (0..w * h * 3).map(|_| rng.random()).collect()).unwrap()
    }

    #[test]
    fn deterministic_unit_norm() {
        for (w, h) in [(224, 224), (3, 5), (1, 1), (17, 9)] {
            let img = random_image(w as u64, w, h);
            let a = BuiltinExtractor.embed(0, &img).unwrap();
            let b = BuiltinExtractor.embed(0, &img).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.dim(), BUILTIN_DIM);
            let norm: f64 = a.values().iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn red_and_blue_are_dissimilar() {
        let red = Image::filled(32, 32, [255, 0, 0]).unwrap();
        let blue = Image::filled(32, 32, [0, 0, 255]).unwrap();
        let (r, b) = (
            BuiltinExtractor.embed(0, &red).unwrap(),
            BuiltinExtractor.embed(0, &blue).unwrap(),
        );
        assert!(r.cosine(&b) < 0.9, "cos = {}", r.cosine(&b));
    }

    #[test]
    fn thumbnail_tracks_layout() {
        let mut img = Image::filled(16, 16, [0, 0, 0]).unwrap();
        for y in 0..16 {
            for x in 0..8 {
                img.set_pixel(x, y, [255, 255, 255]);
            }
        }
        let f = BuiltinExtractor::features(&img);
        // left half white, right half black
        assert!((f[24] - 1.0).abs() < 1e-9);
        assert_eq!(f[24 + 7], 0.0);
        assert!((f[0] - 0.5).abs() < 1e-12 && (f[7] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn precomputed_lookup_and_text() {
        let e = Embedding::normalize(vec![3.0, 4.0]).unwrap();
        let p = PrecomputedEmbeddings::new([(5, e.clone())]).unwrap();
        let img = Image::filled(1, 1, [0, 0, 0]).unwrap();
        assert_eq!(p.embed(5, &img).unwrap(), e);
        assert!(matches!(p.embed(6, &img), Err(Error::Lookup(6))));
        let back = PrecomputedEmbeddings::parse(&p.to_text()).unwrap();
        assert_eq!(back.get(5), Some(&e));
        assert!(PrecomputedEmbeddings::parse("1,0.5,x\n").is_err());
        assert!(PrecomputedEmbeddings::parse("1,0.6,0.8\n2,1.0\n").is_err());
    }

    #[test]
    fn zero_vector_rejected() {
        assert!(Embedding::normalize(vec![0.0; 3]).is_err());
        assert!(Embedding::from_unit(vec![0.5, 0.5]).is_err());
        assert!(Embedding::from_unit(vec![0.6, 0.8]).is_ok());
    }
}
