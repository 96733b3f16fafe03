//! Gaze-dot localization and gaze-centred square crops.

use crate::error::{Error, Result};
use crate::ingest::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PixelPoint {
    pub x: u32,
    pub y: u32,
}

impl PixelPoint {
    pub const fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }
}

/// Side of the square gaze window and the side it is resized to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropSpec {
    size: u32,
    resize_to: u32,
}

impl Default for CropSpec {
    fn default() -> Self {
        Self {
            size: 128,
            resize_to: 224,
        }
    }
}

impl CropSpec {
    pub fn new(size: u32, resize_to: u32) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidSize(format!("crop size {size} < 2")));
        }
        if resize_to < 1 {
            return Err(Error::InvalidSize("resize side must be positive".into()));
        }
        Ok(Self { size, resize_to })
    }

    pub fn size(&self) -> u32 {
        self.size
    }

    pub fn resize_to(&self) -> u32 {
        self.resize_to
    }
}

/// Greenness `2G - R - B`; maximal for a pure-green overlay marker, low for
/// white or grey.
#[inline]
pub fn greenness(rgb: [u8; 3]) -> i32 {
    2 * rgb[1] as i32 - rgb[0] as i32 - rgb[2] as i32
}

/// Pixel with the highest greenness; ties go to the first pixel in row-major order.
pub fn find_gaze_dot(img: &Image) -> PixelPoint {
    let mut best = i32::MIN;
    let mut best_idx = 0usize;
    for (i, p) in img.pixels().chunks_exact(3).enumerate() {
        let s = 2 * p[1] as i32 - p[0] as i32 - p[2] as i32;
        if s > best {
            best = s;
            best_idx = i;
        }
    }
    let w = img.width() as usize;
    PixelPoint::new((best_idx % w) as u32, (best_idx / w) as u32)
}

/// Start of a window of `size` around `center`, shifted to lie inside `[0, extent)`.
pub fn window_start(center: u32, size: u32, extent: u32) -> u32 {
    center.saturating_sub(size / 2).min(extent - size)
}

/// `size x size` window whose nominal extent is `[c - size/2, c - size/2 + size)`.
/// Near a border the window is shifted inward instead of padded.
pub fn crop_square(img: &Image, center: PixelPoint, spec: &CropSpec) -> Result<Image> {
    let size = spec.size;
    if size > img.width().min(img.height()) {
        return Err(Error::CropTooLarge {
            size,
            width: img.width(),
            height: img.height(),
        });
    }
    check_inside(img, center)?;
    let x0 = window_start(center.x, size, img.width());
    let y0 = window_start(center.y, size, img.height());
    img.sub_image(x0, y0, size, size)
}

pub(crate) fn check_inside(img: &Image, p: PixelPoint) -> Result<()> {
    if img.contains(p.x, p.y) {
        Ok(())
    } else {
        Err(Error::OutOfBounds {
            x: p.x,
            y: p.y,
            width: img.width(),
            height: img.height(),
        })
    }
}

/// Source sample positions for one axis: `(lower index, upper index, upper weight)`.
fn axis_taps(src: u32, dst: u32) -> Vec<(usize, usize, f32)> {
    let scale = src as f32 / dst as f32;
    let max = (src - 1) as f32;
    (0..dst)
        .map(|i| {
            let s = ((i as f32 + 0.5) * scale - 0.5).clamp(0.0, max);
            let lo = s.floor();
            let hi = (lo as usize + 1).min(src as usize - 1);
            (lo as usize, hi, s - lo)
        })
        .collect()
}

/// Bilinear resize to `side x side` with half-pixel centres and edge clamping.
pub fn resize_bilinear(img: &Image, side: u32) -> Result<Image> {
    if side == 0 {
        return Err(Error::InvalidSize("resize side must be positive".into()));
    }
    let xs = axis_taps(img.width(), side);
    let ys = axis_taps(img.height(), side);
    let src = img.pixels();
    let stride = img.width() as usize * 3;
    let mut out = Vec::with_capacity(side as usize * side as usize * 3);
    for &(y0, y1, fy) in &ys {
        let r0 = &src[y0 * stride..(y0 + 1) * stride];
        let r1 = &src[y1 * stride..(y1 + 1) * stride];
        for &(x0, x1, fx) in &xs {
            for c in 0..3 {
                let top = r0[x0 * 3 + c] as f32 * (1.0 - fx) + r0[x1 * 3 + c] as f32 * fx;
                let bot = r1[x0 * 3 + c] as f32 * (1.0 - fx) + r1[x1 * 3 + c] as f32 * fx;
                let v = top * (1.0 - fy) + bot * fy;
                out.push((v + 0.5).floor().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Image::new(side, side, out)
}

/// Paints over a rendered gaze marker: every pixel within Chebyshev distance
/// `radius` of `center` takes the per-channel median of the ring at distance
/// `radius + 1`. On a uniform background this restores the scene exactly.
pub fn suppress_marker(img: &mut Image, center: PixelPoint, radius: u32) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let (cx, cy, r) = (center.x as i64, center.y as i64, radius as i64);
    let mut ring: [Vec<u8>; 3] = Default::default();
    let ring_r = r + 1;
    for dy in -ring_r..=ring_r {
        for dx in -ring_r..=ring_r {
            if dx.abs().max(dy.abs()) != ring_r {
                continue;
            }
            let (x, y) = (cx + dx, cy + dy);
            if (0..w).contains(&x) && (0..h).contains(&y) {
                let p = img.pixel(x as u32, y as u32);
                for c in 0..3 {
                    ring[c].push(p[c]);
                }
            }
        }
    }
    if ring[0].is_empty() {
        return;
    }
    let mut fill = [0u8; 3];
    for c in 0..3 {
        ring[c].sort_unstable();
        fill[c] = ring[c][ring[c].len() / 2];
    }
    for y in (cy - r).max(0)..=(cy + r).min(h - 1) {
        for x in (cx - r).max(0)..=(cx + r).min(w - 1) {
            img.set_pixel(x as u32, y as u32, fill);
        }
    }
}
