//! Point-prompted object masks and masked classifier inputs.
//!
//! Two segmenters share the [`Segmenter`] interface: a colour region-growing
//! baseline and an adapter that loads masks precomputed by an external model
//! from `<mask_dir>/<frame_index>.pbm`.
//!
//! Masks are stored on disk as binary PBM (`P4`): header
//! `P4\n<width> <height>\n`, then one row per image row, packed 8 pixels per
//! byte most-significant bit first, each row padded to a whole byte. A set
//! bit (1, black in PBM convention) marks an object pixel.

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::ingest::{HeaderCursor, Image};
use crate::locate::{check_inside, resize_bilinear, PixelPoint};

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl std::fmt::Debug for Mask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Mask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("set", &self.count())
            .finish()
    }
}

impl Mask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || bits.len() != width as usize * height as usize {
            return Err(Error::Shape(format!(
                "mask of {} bits does not describe {width}x{height}",
                bits.len()
            )));
        }
        if !bits.iter().any(|&b| b) {
            return Err(Error::InvalidInput("mask has no set pixels".into()));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height && self.bits[(y * self.width + x) as usize]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Tight bounding box `(x0, y0, width, height)` of the set pixels.
    pub fn bounding_box(&self) -> (u32, u32, u32, u32) {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        for (i, _) in self.bits.iter().enumerate().filter(|(_, &b)| b) {
            let (x, y) = (i as u32 % self.width, i as u32 / self.width);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        (x0, y0, x1 - x0 + 1, y1 - y0 + 1)
    }

    /// True when every set pixel reaches `seed` through 4-connected set pixels.
    pub fn is_connected_to(&self, seed: PixelPoint) -> bool {
        if !self.get(seed.x, seed.y) {
            return false;
        }
        let mut seen = vec![false; self.bits.len()];
        let mut stack = vec![seed];
        seen[(seed.y * self.width + seed.x) as usize] = true;
        let mut reached = 1;
        while let Some(p) = stack.pop() {
            for q in neighbours(p, self.width, self.height) {
                let i = (q.y * self.width + q.x) as usize;
                if self.bits[i] && !seen[i] {
                    seen[i] = true;
                    reached += 1;
                    stack.push(q);
                }
            }
        }
        reached == self.count()
    }

    pub fn to_pbm(&self) -> Vec<u8> {
        let mut out = format!("P4\n{} {}\n", self.width, self.height).into_bytes();
        let row_bytes = (self.width as usize).div_ceil(8);
        for row in self.bits.chunks_exact(self.width as usize) {
            let mut packed = vec![0u8; row_bytes];
            for (x, _) in row.iter().enumerate().filter(|(_, &b)| b) {
                packed[x / 8] |= 0x80 >> (x % 8);
            }
            out.extend_from_slice(&packed);
        }
        out
    }

    pub fn from_pbm(bytes: &[u8]) -> Result<Self> {
        let mut cursor = HeaderCursor::new(bytes);
        if cursor.token()? != b"P4" {
            return Err(Error::format(0, "not a binary PBM (missing P4 magic)"));
        }
        let width = cursor.number()?;
        let height = cursor.number()?;
        let raster = cursor.raster()?;
        let row_bytes = (width as usize).div_ceil(8);
        if raster.len() < row_bytes * height as usize {
            return Err(Error::format(0, "truncated PBM raster"));
        }
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for row in raster.chunks_exact(row_bytes.max(1)).take(height as usize) {
            for x in 0..width as usize {
                bits.push(row[x / 8] & (0x80 >> (x % 8)) != 0);
            }
        }
        Mask::new(width, height, bits)
    }

    pub fn write_pbm(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_pbm()).map_err(|e| Error::io(path, e))
    }
}

/// Up, down, left, right.
fn neighbours(p: PixelPoint, w: u32, h: u32) -> impl Iterator<Item = PixelPoint> {
    let up = (p.y > 0).then(|| PixelPoint::new(p.x, p.y - 1));
    let down = (p.y + 1 < h).then(|| PixelPoint::new(p.x, p.y + 1));
    let left = (p.x > 0).then(|| PixelPoint::new(p.x - 1, p.y));
    let right = (p.x + 1 < w).then(|| PixelPoint::new(p.x + 1, p.y));
    [up, down, left, right].into_iter().flatten()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionGrowConfig {
    /// Maximum Euclidean RGB distance to the seed colour.
    pub tau: f64,
    pub max_pixels: usize,
}

impl Default for RegionGrowConfig {
    fn default() -> Self {
        Self {
            tau: 40.0,
            max_pixels: usize::MAX,
        }
    }
}

impl RegionGrowConfig {
    pub fn new(tau: f64, max_pixels: usize) -> Result<Self> {
        if !(tau >= 0.0) || max_pixels == 0 {
            return Err(Error::InvalidInput(format!(
                "region growing needs tau >= 0 and max_pixels >= 1 (got {tau}, {max_pixels})"
            )));
        }
        Ok(Self { tau, max_pixels })
    }
}

/// Breadth-first 4-connected flood fill from `seed` over pixels whose colour
/// lies within `tau` of the seed colour. Neighbours are enqueued up, down,
/// left, right, so truncation at `max_pixels` is deterministic.
pub fn grow_region(img: &Image, seed: PixelPoint, cfg: &RegionGrowConfig) -> Result<Mask> {
    check_inside(img, seed)?;
    let (w, h) = (img.width(), img.height());
    let seed_rgb = img.pixel(seed.x, seed.y);
    let tau_sq = cfg.tau * cfg.tau;
    let admits = |rgb: [u8; 3]| {
        let d: i32 = (0..3)
            .map(|c| {
                let diff = rgb[c] as i32 - seed_rgb[c] as i32;
                diff * diff
            })
            .sum();
        d as f64 <= tau_sq
    };
    let mut bits = vec![false; w as usize * h as usize];
    let mut queue = VecDeque::from([seed]);
    bits[(seed.y * w + seed.x) as usize] = true;
    let mut count = 1;
    while let Some(p) = queue.pop_front() {
        for q in neighbours(p, w, h) {
            if count >= cfg.max_pixels {
                break;
            }
            let i = (q.y * w + q.x) as usize;
            if !bits[i] && admits(img.pixel(q.x, q.y)) {
                bits[i] = true;
                count += 1;
                queue.push_back(q);
            }
        }
        if count >= cfg.max_pixels {
            break;
        }
    }
    Mask::new(w, h, bits)
}

pub fn load_external_mask(mask_dir: &Path, frame_index: u64, width: u32, height: u32) -> Result<Mask> {
    let path = mask_path(mask_dir, frame_index);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let mask = Mask::from_pbm(&bytes)?;
    if (mask.width, mask.height) != (width, height) {
        return Err(Error::Shape(format!(
            "mask {} is {}x{}, frame is {width}x{height}",
            path.display(),
            mask.width,
            mask.height
        )));
    }
    Ok(mask)
}

pub fn mask_path(mask_dir: &Path, frame_index: u64) -> PathBuf {
    mask_dir.join(format!("{frame_index}.pbm"))
}

/// Zeroes pixels outside the mask and crops to the mask's bounding box.
pub fn mask_and_crop(img: &Image, mask: &Mask) -> Result<Image> {
    if (img.width(), img.height()) != (mask.width, mask.height) {
        return Err(Error::Shape(format!(
            "mask is {}x{}, image is {}x{}",
            mask.width,
            mask.height,
            img.width(),
            img.height()
        )));
    }
    let (x0, y0, bw, bh) = mask.bounding_box();
    let mut out = img.sub_image(x0, y0, bw, bh)?;
    for y in 0..bh {
        for x in 0..bw {
            if !mask.get(x0 + x, y0 + y) {
                out.set_pixel(x, y, [0, 0, 0]);
            }
        }
    }
    Ok(out)
}

/// Masked object chip: zero background, bounding-box crop, square resize.
pub fn render_masked(img: &Image, mask: &Mask, resize_to: u32) -> Result<Image> {
    resize_bilinear(&mask_and_crop(img, mask)?, resize_to)
}

/// Produces an object mask for a point prompt on a frame.
pub trait Segmenter: Send + Sync {
    fn segment(&self, img: &Image, seed: PixelPoint, frame_index: u64) -> Result<Mask>;
}

#[derive(Debug, Clone, Default)]
pub struct RegionGrowSegmenter {
    pub config: RegionGrowConfig,
}

impl Segmenter for RegionGrowSegmenter {
    fn segment(&self, img: &Image, seed: PixelPoint, _frame_index: u64) -> Result<Mask> {
        grow_region(img, seed, &self.config)
    }
}

/// Reads one precomputed mask per frame from a directory.
#[derive(Debug, Clone)]
pub struct ExternalMaskSegmenter {
    pub mask_dir: PathBuf,
}

impl Segmenter for ExternalMaskSegmenter {
    fn segment(&self, img: &Image, _seed: PixelPoint, frame_index: u64) -> Result<Mask> {
        load_external_mask(&self.mask_dir, frame_index, img.width(), img.height())
    }
}
