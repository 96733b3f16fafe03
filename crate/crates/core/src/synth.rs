//! Synthetic egocentric sessions with known ground truth.
//!
//! A session is a static scene of one coloured rectangle per class on a grey
//! background. A scripted gaze path visits the rectangles for given dwell
//! lengths; each frame the gaze lands at a seeded random point in the middle
//! half of the scripted rectangle and, optionally, a green marker is drawn
//! there: the centre pixel pure green `(0, 255, 0)`, the rest of the disc
//! `(0, 200, 0)`, so the greenness peak is exactly the gaze point.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analytics::LabeledTimeline;
use crate::classify::{ClassEmbeddings, Extractor};
use crate::error::{Error, Result};
use crate::ingest::{AnnotatedFrame, FrameSource, GazeRecord, Image};
use crate::locate::PixelPoint;

pub const MARKER_CENTRE: [u8; 3] = [0, 255, 0];
pub const MARKER_RING: [u8; 3] = [0, 200, 0];
pub const BACKGROUND: [u8; 3] = [50, 50, 50];

/// Region colours, one per class in default-taxonomy order. All have
/// greenness well below the marker's.
pub const PALETTE: [[u8; 3]; 7] = [
    [224, 172, 140],
    [24, 36, 170],
    [205, 205, 225],
    [230, 200, 30],
    [30, 125, 205],
    [185, 40, 40],
    [125, 60, 165],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
    pub color: [u8; 3],
}

impl Region {
    fn overlaps(&self, o: &Region) -> bool {
        self.x < o.x + o.width && o.x < self.x + self.width && self.y < o.y + o.height && o.y < self.y + self.height
    }

    pub fn contains(&self, p: PixelPoint) -> bool {
        (self.x..self.x + self.width).contains(&p.x) && (self.y..self.y + self.height).contains(&p.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScriptStep {
    pub class: usize,
    pub dwell: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSessionSpec {
    pub frames: usize,
    pub width: u32,
    pub height: u32,
    pub num_classes: usize,
    /// Explicit regions (one per class); `None` lays out a grid.
    pub regions: Option<Vec<Region>>,
    /// Visited in order and repeated until `frames` are filled.
    pub script: Vec<ScriptStep>,
    pub render_dot: bool,
    pub dot_radius: u32,
    /// Maximum absolute per-channel uniform noise.
    pub noise: u8,
    pub fps: f64,
    pub seed: u64,
}

impl Default for SyntheticSessionSpec {
    fn default() -> Self {
        Self {
            frames: 500,
            width: 1920,
            height: 1080,
            num_classes: 7,
            regions: None,
            script: (0..7).map(|c| ScriptStep { class: c, dwell: 12 + 5 * c }).collect(),
            render_dot: true,
            dot_radius: 3,
            noise: 0,
            fps: 25.0,
            seed: 0,
        }
    }
}

/// Non-overlapping grid of `num_classes` rectangles with a small gutter.
pub fn grid_regions(width: u32, height: u32, num_classes: usize) -> Vec<Region> {
    let aspect = width as f64 / height as f64;
    let cols = ((num_classes as f64 * aspect).sqrt().ceil() as usize).clamp(1, num_classes.max(1));
    let rows = num_classes.div_ceil(cols);
    let (cw, ch) = (width / cols as u32, height / rows as u32);
    let gutter = (cw.min(ch) / 20).max(1);
    (0..num_classes)
        .map(|c| {
            let (col, row) = ((c % cols) as u32, (c / cols) as u32);
            Region {
                x: col * cw + gutter,
                y: row * ch + gutter,
                width: cw.saturating_sub(2 * gutter).max(1),
                height: ch.saturating_sub(2 * gutter).max(1),
                color: PALETTE[c % PALETTE.len()],
            }
        })
        .collect()
}

#[derive(Debug)]
struct SessionData {
    spec: SyntheticSessionSpec,
    regions: Vec<Region>,
    scene: Image,
    gaze: Vec<GazeRecord>,
    script_labels: Vec<usize>,
}

/// Generated session; cheap to clone.
#[derive(Debug, Clone)]
pub struct SyntheticSession {
    data: Arc<SessionData>,
}

pub fn generate_synthetic_session(spec: &SyntheticSessionSpec) -> Result<SyntheticSession> {
    if spec.frames == 0 || spec.width == 0 || spec.height == 0 || spec.num_classes == 0 {
        return Err(Error::Spec("frames, dimensions and class count must be positive".into()));
    }
    if spec.script.is_empty() || spec.script.iter().all(|s| s.dwell == 0) {
        return Err(Error::Spec("gaze script is empty".into()));
    }
    if let Some(s) = spec.script.iter().find(|s| s.class >= spec.num_classes) {
        return Err(Error::Spec(format!("script visits class {} of {}", s.class, spec.num_classes)));
    }
    if !(spec.fps > 0.0) {
        return Err(Error::Spec("fps must be positive".into()));
    }
    let regions = spec
        .regions
        .clone()
        .unwrap_or_else(|| grid_regions(spec.width, spec.height, spec.num_classes));
    if regions.len() != spec.num_classes {
        return Err(Error::Spec(format!("{} regions for {} classes", regions.len(), spec.num_classes)));
    }
    for (i, r) in regions.iter().enumerate() {
        if r.width < 4 || r.height < 4 || r.x + r.width > spec.width || r.y + r.height > spec.height {
            return Err(Error::Spec(format!("region {i} is too small or leaves the frame")));
        }
        if let Some(j) = regions[..i].iter().position(|o| o.overlaps(r)) {
            return Err(Error::Spec(format!("regions {j} and {i} overlap")));
        }
    }

    let mut scene = Image::filled(spec.width, spec.height, BACKGROUND)?;
    for r in &regions {
        for y in r.y..r.y + r.height {
            for x in r.x..r.x + r.width {
                scene.set_pixel(x, y, r.color);
            }
        }
    }

    let script_labels: Vec<usize> = spec
        .script
        .iter()
        .flat_map(|s| std::iter::repeat_n(s.class, s.dwell))
        .cycle()
        .take(spec.frames)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gaze = script_labels
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let r = &regions[c];
            let x = r.x + r.width / 4 + rng.random_range(0..(r.width / 2).max(1));
            let y = r.y + r.height / 4 + rng.random_range(0..(r.height / 2).max(1));
            let ts = (i as f64 * 1000.0 / spec.fps).round() as u64;
            GazeRecord::new(i as u64, ts, x as i64, y as i64, true)
        })
        .collect();

    Ok(SyntheticSession {
        data: Arc::new(SessionData {
            spec: spec.clone(),
            regions,
            scene,
            gaze,
            script_labels,
        }),
    })
}

impl SyntheticSession {
    pub fn spec(&self) -> &SyntheticSessionSpec {
        &self.data.spec
    }

    pub fn regions(&self) -> &[Region] {
        &self.data.regions
    }

    pub fn gaze(&self) -> &[GazeRecord] {
        &self.data.gaze
    }

    pub fn len(&self) -> usize {
        self.data.gaze.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.gaze.is_empty()
    }

    pub fn truth(&self, session_id: &str) -> LabeledTimeline {
        LabeledTimeline::from_labels(
            session_id,
            self.data.spec.fps,
            self.data.script_labels.iter().map(|&c| Some(c)).collect(),
        )
    }

    pub fn annotations(&self, annotator: &str) -> Vec<AnnotatedFrame> {
        self.data
            .script_labels
            .iter()
            .enumerate()
            .map(|(i, &c)| AnnotatedFrame {
                frame_index: i as u64,
                labels: BTreeSet::from([c]),
                annotator_id: annotator.to_string(),
            })
            .collect()
    }

    /// Frame `index` with noise and marker applied.
    pub fn render(&self, index: u64) -> Result<Image> {
        let d = &self.data;
        let rec = d
            .gaze
            .get(index as usize)
            .ok_or_else(|| Error::InvalidInput(format!("frame {index} beyond synthetic session")))?;
        let mut img = d.scene.clone();
        if d.spec.noise > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(d.spec.seed ^ (index + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let n = d.spec.noise as i16;
            let mut px = img.into_pixels();
            for v in px.iter_mut() {
                *v = (*v as i16 + rng.random_range(-n..=n)).clamp(0, 255) as u8;
            }
            img = Image::new(d.spec.width, d.spec.height, px)?;
        }
        if d.spec.render_dot {
            draw_marker(&mut img, PixelPoint::new(rec.x as u32, rec.y as u32), d.spec.dot_radius);
        }
        Ok(img)
    }

    pub fn frames(&self) -> SyntheticFrames {
        SyntheticFrames { session: self.clone() }
    }

    /// Uniform chip in a region's colour, the synthetic counterpart of a class
    /// name fed to a text encoder.
    pub fn prototype(&self, class: usize, side: u32) -> Result<Image> {
        let r = self
            .data
            .regions
            .get(class)
            .ok_or_else(|| Error::InvalidInput(format!("no region for class {class}")))?;
        Image::filled(side, side, r.color)
    }

    /// Class embeddings from the prototypes of every class.
    pub fn prototype_embeddings(&self, extractor: &dyn Extractor, side: u32, temperature: f64) -> Result<ClassEmbeddings> {
        let rows = (0..self.data.regions.len())
            .map(|c| extractor.embed(c as u64, &self.prototype(c, side)?))
            .collect::<Result<Vec<_>>>()?;
        ClassEmbeddings::new(rows, temperature)
    }
}

/// Disc of radius `radius` in [`MARKER_RING`] with a [`MARKER_CENTRE`] centre.
pub fn draw_marker(img: &mut Image, c: PixelPoint, radius: u32) {
    let r = radius as i64;
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy > r * r {
                continue;
            }
            let (x, y) = (c.x as i64 + dx, c.y as i64 + dy);
            if x >= 0 && y >= 0 && img.contains(x as u32, y as u32) {
                img.set_pixel(x as u32, y as u32, MARKER_RING);
            }
        }
    }
    img.set_pixel(c.x, c.y, MARKER_CENTRE);
}

pub struct SyntheticFrames {
    session: SyntheticSession,
}

impl FrameSource for SyntheticFrames {
    fn load(&mut self, frame_index: u64) -> Result<Image> {
        self.session.render(frame_index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::locate::find_gaze_dot;

    fn small() -> SyntheticSessionSpec {
        SyntheticSessionSpec {
            frames: 40,
            width: 320,
            height: 180,
            ..SyntheticSessionSpec::default()
        }
    }

    #[test]
    fn script_defines_truth() {
        let spec = SyntheticSessionSpec {
            frames: 5,
            script: vec![ScriptStep { class: 0, dwell: 5 }],
            ..small()
        };
        let s = generate_synthetic_session(&spec).unwrap();
        assert_eq!(s.truth("t").labels(), &[Some(0); 5]);
    }

    #[test]
    fn gaze_lies_in_scripted_region_and_dot_is_recoverable() {
        let s = generate_synthetic_session(&small()).unwrap();
        let truth = s.truth("t");
        for (rec, label) in s.gaze().iter().zip(truth.labels()) {
            let p = rec.point().unwrap();
            assert!(s.regions()[label.unwrap()].contains(p));
            assert_eq!(find_gaze_dot(&s.render(rec.frame_index).unwrap()), p);
        }
    }

    #[test]
    fn deterministic_frames() {
        let spec = SyntheticSessionSpec { noise: 6, seed: 3, ..small() };
        let a = generate_synthetic_session(&spec).unwrap();
        let b = generate_synthetic_session(&spec).unwrap();
        for i in [0, 7, 39] {
            assert_eq!(a.render(i).unwrap().to_ppm(), b.render(i).unwrap().to_ppm());
        }
        assert_eq!(a.gaze(), b.gaze());
    }

    #[test]
    fn overlapping_regions_rejected() {
        let r = Region { x: 0, y: 0, width: 50, height: 50, color: [1, 2, 3] };
        let spec = SyntheticSessionSpec {
            num_classes: 2,
            regions: Some(vec![r, Region { x: 40, y: 40, ..r }]),
            script: vec![ScriptStep { class: 0, dwell: 1 }],
            ..small()
        };
        assert!(matches!(generate_synthetic_session(&spec), Err(Error::Spec(_))));
        let bad_script = SyntheticSessionSpec { script: vec![ScriptStep { class: 9, dwell: 2 }], ..small() };
        assert!(matches!(generate_synthetic_session(&bad_script), Err(Error::Spec(_))));
    }

    #[test]
    fn grid_regions_are_disjoint() {
        for k in 1..=9 {
            let rs = grid_regions(1920, 1080, k);
            assert_eq!(rs.len(), k);
            for i in 0..k {
                for j in 0..i {
                    assert!(!rs[i].overlaps(&rs[j]));
                }
            }
        }
    }

    #[test]
    fn timestamps_follow_frame_rate() {
        let s = generate_synthetic_session(&small()).unwrap();
        let ts: Vec<u64> = s.gaze().iter().take(3).map(|g| g.timestamp_ms).collect();
        assert_eq!(ts, vec![0, 40, 80]);
    }
}
