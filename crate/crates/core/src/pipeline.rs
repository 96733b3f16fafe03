//! Frame-by-frame gaze-target classification over a recorded session.
//!
//! For every frame the gaze point is taken from the log (or detected from the
//! rendered marker), the marker is painted out, and two views are built: a
//! square crop around the gaze point and a masked chip of the object the gaze
//! falls on. Each view is embedded and scored; the two score vectors are fused
//! and the top-1 class becomes the frame's label.
//!
//! With `workers > 1` a reader thread feeds frames through a bounded queue to
//! the workers and results are reordered, so output order always equals input
//! order. Queues hold at most [`QUEUE_CAPACITY`] frames and block the producer
//! when full.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use crossbeam_channel::bounded;

use crate::analytics::LabeledTimeline;
use crate::classify::{fuse_scores, ClassScores, Classifier, Embedding, Extractor, FewShotCache, FusionMode};
use crate::error::{Error, Result};
use crate::ingest::{ClassTaxonomy, FrameSource, GazeRecord, Image};
use crate::locate::{crop_square, find_gaze_dot, resize_bilinear, suppress_marker, CropSpec, PixelPoint};
use crate::segment::{render_masked, Segmenter};

pub const QUEUE_CAPACITY: usize = 64;

/// Where the per-frame gaze point comes from.
#[derive(Debug, Clone)]
pub enum GazeInput {
    Log(Vec<GazeRecord>),
    /// Locate the marker in each listed frame.
    Detect(Vec<u64>),
}

impl GazeInput {
    /// Frame indices with their logged gaze point; `None` for invalid rows
    /// and in detect mode.
    pub fn points(&self) -> Vec<(u64, Option<PixelPoint>)> {
        match self {
            GazeInput::Log(recs) => recs.iter().map(|r| (r.frame_index, r.point())).collect(),
            GazeInput::Detect(frames) => frames.iter().map(|&f| (f, None)).collect(),
        }
    }

    pub fn is_detect(&self) -> bool {
        matches!(self, GazeInput::Detect(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputViews {
    Crop,
    Mask,
    #[default]
    Both,
}

/// Turns a frame and gaze point into view embeddings.
pub struct ViewEncoder {
    pub crop: CropSpec,
    /// Chebyshev radius of the marker painted out before cropping; 0 keeps it.
    pub marker_radius: u32,
    pub segmenter: Box<dyn Segmenter>,
    pub extractor: Box<dyn Extractor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewEmbeddings {
    pub frame_index: u64,
    pub crop: Option<Embedding>,
    pub mask: Option<Embedding>,
}

impl ViewEncoder {
    pub fn encode(&self, frame_index: u64, frame: &Image, gaze: PixelPoint, views: InputViews) -> Result<ViewEmbeddings> {
        let cleaned;
        let img = if self.marker_radius > 0 {
            let mut c = frame.clone();
            suppress_marker(&mut c, gaze, self.marker_radius);
            cleaned = c;
            &cleaned
        } else {
            frame
        };
        let crop = match views {
            InputViews::Mask => None,
            _ => {
                let chip = resize_bilinear(&crop_square(img, gaze, &self.crop)?, self.crop.resize_to())?;
                Some(self.extractor.embed(frame_index, &chip)?)
            }
        };
        let mask = match views {
            InputViews::Crop => None,
            _ => {
                let m = self.segmenter.segment(img, gaze, frame_index)?;
                let chip = render_masked(img, &m, self.crop.resize_to())?;
                Some(self.extractor.embed(frame_index, &chip)?)
            }
        };
        Ok(ViewEmbeddings { frame_index, crop, mask })
    }
}

pub struct Pipeline {
    pub encoder: ViewEncoder,
    pub views: InputViews,
    pub crop_classifier: Classifier,
    pub mask_classifier: Classifier,
    pub fusion: FusionMode,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads; 0 or 1 runs everything on the calling thread.
    pub workers: usize,
    /// Release frames at this wall-clock rate instead of as fast as possible.
    pub paced_fps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FrameOutcome {
    Labeled(ClassScores),
    Invalid,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub frame_index: u64,
    pub outcome: FrameOutcome,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub timeline: LabeledTimeline,
    pub frames: Vec<FrameResult>,
}

impl PipelineOutput {
    /// Invalid-gaze and failed frames.
    pub fn failed_count(&self) -> usize {
        self.frames.iter().filter(|f| !matches!(f.outcome, FrameOutcome::Labeled(_))).count()
    }

    /// `frame,label,<one column per class>`; unlabelled frames leave the
    /// label and scores empty.
    pub fn scores_csv(&self, taxonomy: &ClassTaxonomy) -> String {
        let mut out = String::from("frame,label");
        for name in taxonomy.labels() {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for f in &self.frames {
            out.push_str(&f.frame_index.to_string());
            match &f.outcome {
                FrameOutcome::Labeled(s) => {
                    out.push(',');
                    out.push_str(taxonomy.name(s.top1()).unwrap_or(""));
                    for p in &s.probs {
                        out.push_str(&format!(",{p:.6}"));
                    }
                }
                _ => out.push_str(&",".repeat(taxonomy.len() + 1)),
            }
            out.push('\n');
        }
        out
    }

    /// `level,frame,message` lines for every unlabelled frame.
    pub fn log_lines(&self) -> Vec<String> {
        self.frames
            .iter()
            .filter_map(|f| match &f.outcome {
                FrameOutcome::Labeled(_) => None,
                FrameOutcome::Invalid => Some(format!("info,{},no valid gaze", f.frame_index)),
                FrameOutcome::Failed(m) => Some(format!("warn,{},{}", f.frame_index, m.replace('\n', " "))),
            })
            .collect()
    }
}

impl Pipeline {
    fn classify(&self, v: &ViewEmbeddings) -> Result<ClassScores> {
        let crop = v.crop.as_ref().map(|e| self.crop_classifier.score(e)).transpose()?;
        let mask = v.mask.as_ref().map(|e| self.mask_classifier.score(e)).transpose()?;
        match (crop, mask) {
            (Some(a), Some(b)) => fuse_scores(&a, &b, self.fusion),
            (Some(a), None) | (None, Some(a)) => Ok(a),
            (None, None) => Err(Error::InvalidInput("no input view selected".into())),
        }
    }

    /// Scores one frame. `gaze` of `None` means the marker is located in the
    /// frame itself.
    pub fn score_frame(&self, frame_index: u64, frame: &Image, gaze: Option<PixelPoint>) -> Result<ClassScores> {
        let point = gaze.unwrap_or_else(|| find_gaze_dot(frame));
        let v = self.encoder.encode(frame_index, frame, point, self.views)?;
        self.classify(&v)
    }

    fn process(&self, frame_index: u64, frame: Result<Image>, gaze: Option<PixelPoint>, detect: bool) -> FrameOutcome {
        if gaze.is_none() && !detect {
            return FrameOutcome::Invalid;
        }
        match frame.and_then(|img| self.score_frame(frame_index, &img, gaze)) {
            Ok(s) => FrameOutcome::Labeled(s),
            Err(e) => FrameOutcome::Failed(e.to_string()),
        }
    }
}

fn pace(start: Instant, seq: usize, fps: Option<f64>) {
    if let Some(fps) = fps.filter(|f| *f > 0.0) {
        let due = start + Duration::from_secs_f64(seq as f64 / fps);
        let now = Instant::now();
        if due > now {
            std::thread::sleep(due - now);
        }
    }
}

/// Runs the pipeline over a session. Frames with invalid gaze get no label;
/// frames whose processing fails are skipped and reported. More than half of
/// the frames unlabelled is an error.
pub fn run_pipeline(
    pipeline: &Pipeline,
    source: &mut dyn FrameSource,
    input: &GazeInput,
    session_id: &str,
    fps: f64,
    opts: &RunOptions,
) -> Result<PipelineOutput> {
    let items = input.points();
    if items.is_empty() {
        return Err(Error::EmptyInput("session has no frames"));
    }
    let detect = input.is_detect();
    let start = Instant::now();
    let mut results: Vec<FrameResult> = Vec::with_capacity(items.len());

    if opts.workers <= 1 {
        for (seq, &(frame_index, gaze)) in items.iter().enumerate() {
            pace(start, seq, opts.paced_fps);
            let frame = if gaze.is_some() || detect {
                source.load(frame_index)
            } else {
                Err(Error::InvalidInput("skipped".into()))
            };
            let outcome = pipeline.process(frame_index, frame, gaze, detect);
            results.push(FrameResult { frame_index, outcome });
        }
    } else {
        std::thread::scope(|s| {
            let (work_tx, work_rx) = bounded::<(usize, u64, Option<PixelPoint>, Result<Image>)>(QUEUE_CAPACITY);
            let (done_tx, done_rx) = bounded::<(usize, FrameResult)>(QUEUE_CAPACITY);
            let items = &items;
            s.spawn(move || {
                for (seq, &(frame_index, gaze)) in items.iter().enumerate() {
                    pace(start, seq, opts.paced_fps);
                    let frame = if gaze.is_some() || detect {
                        source.load(frame_index)
                    } else {
                        Err(Error::InvalidInput("skipped".into()))
                    };
                    if work_tx.send((seq, frame_index, gaze, frame)).is_err() {
                        break;
                    }
                }
            });
            for _ in 0..opts.workers {
                let (rx, tx) = (work_rx.clone(), done_tx.clone());
                s.spawn(move || {
                    for (seq, frame_index, gaze, frame) in rx {
                        let outcome = pipeline.process(frame_index, frame, gaze, detect);
                        if tx.send((seq, FrameResult { frame_index, outcome })).is_err() {
                            break;
                        }
                    }
                });
            }
            drop((work_rx, done_tx));
            let mut pending = BTreeMap::new();
            for (seq, r) in done_rx {
                pending.insert(seq, r);
                while let Some(r) = pending.remove(&results.len()) {
                    results.push(r);
                }
            }
        });
    }

    let failed = results.iter().filter(|r| !matches!(r.outcome, FrameOutcome::Labeled(_))).count();
    if failed * 2 > results.len() {
        return Err(Error::Pipeline {
            failed,
            total: results.len(),
        });
    }
    let labels = results
        .iter()
        .map(|r| match &r.outcome {
            FrameOutcome::Labeled(s) => Some(s.top1()),
            _ => None,
        })
        .collect();
    let frames = results.iter().map(|r| r.frame_index).collect();
    let timeline = LabeledTimeline::new(session_id, fps, frames, labels)?;
    Ok(PipelineOutput { timeline, frames: results })
}

/// View embeddings for every frame with a usable gaze point, in input order.
/// Frames that fail to load or encode are left out.
pub fn encode_session(
    encoder: &ViewEncoder,
    source: &mut dyn FrameSource,
    input: &GazeInput,
    views: InputViews,
) -> Vec<ViewEmbeddings> {
    let detect = input.is_detect();
    input
        .points()
        .into_iter()
        .filter(|(_, g)| g.is_some() || detect)
        .filter_map(|(frame_index, gaze)| {
            let img = source.load(frame_index).ok()?;
            let point = gaze.unwrap_or_else(|| find_gaze_dot(&img));
            encoder.encode(frame_index, &img, point, views).ok()
        })
        .collect()
}

/// One few-shot cache per view from labelled view embeddings. `labels`
/// maps frame index to class; unlabelled frames are ignored.
pub fn build_view_caches(
    embedded: &[ViewEmbeddings],
    labels: &BTreeMap<u64, usize>,
    shots: usize,
    num_classes: usize,
    alpha: f64,
    beta: f64,
) -> Result<(Option<FewShotCache>, Option<FewShotCache>)> {
    let build = |pick: fn(&ViewEmbeddings) -> Option<&Embedding>| -> Result<Option<FewShotCache>> {
        let samples: Vec<(Embedding, usize)> = embedded
            .iter()
            .filter_map(|v| Some((pick(v)?.clone(), *labels.get(&v.frame_index)?)))
            .collect();
        if samples.is_empty() {
            return Ok(None);
        }
        FewShotCache::build(samples, shots, num_classes, alpha, beta).map(Some)
    };
    Ok((build(|v| v.crop.as_ref())?, build(|v| v.mask.as_ref())?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{BuiltinExtractor, DEFAULT_TEMPERATURE};
    use crate::segment::RegionGrowSegmenter;
    use crate::synth::{generate_synthetic_session, ScriptStep, SyntheticSession, SyntheticSessionSpec};

    fn session(frames: usize, script: Vec<ScriptStep>) -> SyntheticSession {
        generate_synthetic_session(&SyntheticSessionSpec {
            frames,
            width: 320,
            height: 180,
            script,
            ..Default::default()
        })
        .unwrap()
    }

    fn pipeline(s: &SyntheticSession) -> Pipeline {
        let ce = s.prototype_embeddings(&BuiltinExtractor, 32, DEFAULT_TEMPERATURE).unwrap();
        Pipeline {
            encoder: ViewEncoder {
                crop: CropSpec::new(32, 32).unwrap(),
                marker_radius: 3,
                segmenter: Box::new(RegionGrowSegmenter::default()),
                extractor: Box::new(BuiltinExtractor),
            },
            views: InputViews::Both,
            crop_classifier: Classifier::ZeroShot(ce.clone()),
            mask_classifier: Classifier::ZeroShot(ce),
            fusion: FusionMode::ProbMean,
        }
    }

    #[test]
    fn constant_gaze_gives_constant_timeline() {
        let s = session(12, vec![ScriptStep { class: 1, dwell: 12 }]);
        let p = pipeline(&s);
        let out = run_pipeline(&p, &mut s.frames(), &GazeInput::Log(s.gaze().to_vec()), "s", 25.0, &RunOptions::default()).unwrap();
        assert_eq!(out.timeline.labels(), &[Some(1); 12]);
    }

    #[test]
    fn workers_preserve_order_and_results() {
        let s = session(30, SyntheticSessionSpec::default().script);
        let p = pipeline(&s);
        let input = GazeInput::Log(s.gaze().to_vec());
        let serial = run_pipeline(&p, &mut s.frames(), &input, "s", 25.0, &RunOptions::default()).unwrap();
        let threaded = run_pipeline(&p, &mut s.frames(), &input, "s", 25.0, &RunOptions { workers: 4, paced_fps: None }).unwrap();
        assert_eq!(serial.frames, threaded.frames);
        assert_eq!(serial.timeline, threaded.timeline);
        assert_eq!(serial.timeline.labels(), s.truth("s").labels());
    }

    #[test]
    fn detect_mode_matches_logged_gaze() {
        let s = session(10, SyntheticSessionSpec::default().script);
        let p = pipeline(&s);
        let logged = run_pipeline(&p, &mut s.frames(), &GazeInput::Log(s.gaze().to_vec()), "s", 25.0, &RunOptions::default()).unwrap();
        let detected = run_pipeline(&p, &mut s.frames(), &GazeInput::Detect((0..10).collect()), "s", 25.0, &RunOptions::default()).unwrap();
        assert_eq!(logged.timeline, detected.timeline);
    }

    #[test]
    fn all_invalid_is_pipeline_error() {
        let s = session(4, vec![ScriptStep { class: 0, dwell: 1 }]);
        let p = pipeline(&s);
        let gaze = s.gaze().iter().map(|g| GazeRecord { valid: false, ..*g }).collect();
        let err = run_pipeline(&p, &mut s.frames(), &GazeInput::Log(gaze), "s", 25.0, &RunOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Pipeline { failed: 4, total: 4 }));
    }

    #[test]
    fn invalid_frames_have_no_label_or_scores() {
        let s = session(4, vec![ScriptStep { class: 2, dwell: 1 }]);
        let p = pipeline(&s);
        let mut gaze = s.gaze().to_vec();
        gaze[1].valid = false;
        let out = run_pipeline(&p, &mut s.frames(), &GazeInput::Log(gaze), "s", 25.0, &RunOptions::default()).unwrap();
        assert_eq!(out.timeline.labels(), &[Some(2), None, Some(2), Some(2)]);
        assert_eq!(out.failed_count(), 1);
        let tax = ClassTaxonomy::default();
        let csv = out.scores_csv(&tax);
        assert_eq!(csv.lines().nth(2).unwrap(), format!("1{}", ",".repeat(8)));
        assert_eq!(out.log_lines(), vec!["info,1,no valid gaze".to_string()]);
    }

    #[test]
    fn caches_are_built_per_view() {
        let s = session(21, SyntheticSessionSpec::default().script);
        let p = pipeline(&s);
        let emb = encode_session(&p.encoder, &mut s.frames(), &GazeInput::Log(s.gaze().to_vec()), InputViews::Both);
        assert_eq!(emb.len(), 21);
        let labels: BTreeMap<u64, usize> = s.truth("s").frames().iter().copied().zip(s.truth("s").labels().iter().map(|l| l.unwrap())).collect();
        let (crop, mask) = build_view_caches(&emb, &labels, 16, 7, 1.0, 5.5).unwrap();
        assert_eq!(crop.unwrap().len(), 21);
        assert_eq!(mask.unwrap().len(), 21);
    }
}
