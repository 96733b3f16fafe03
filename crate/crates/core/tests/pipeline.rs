//! Synthetic sessions through the full pipeline and into a report.

use std::fs;

use egogaze::classify::{BuiltinExtractor, Classifier, FusionMode, DEFAULT_TEMPERATURE};
use egogaze::locate::CropSpec;
use egogaze::pipeline::{run_pipeline, FrameOutcome, GazeInput, InputViews, Pipeline, RunOptions, ViewEncoder};
use egogaze::report::{emit_report, ReportInputs};
use egogaze::segment::RegionGrowSegmenter;
use egogaze::synth::{generate_synthetic_session, SyntheticSession, SyntheticSessionSpec};
use egogaze::ClassTaxonomy;

fn small_session(frames: usize, seed: u64) -> SyntheticSession {
    generate_synthetic_session(&SyntheticSessionSpec {
        frames,
        width: 480,
        height: 270,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn zero_shot(s: &SyntheticSession, views: InputViews) -> Pipeline {
    let ce = s.prototype_embeddings(&BuiltinExtractor, 32, DEFAULT_TEMPERATURE).unwrap();
    Pipeline {
        encoder: ViewEncoder {
            crop: CropSpec::new(64, 96).unwrap(),
            marker_radius: 3,
            segmenter: Box::new(RegionGrowSegmenter::default()),
            extractor: Box::new(BuiltinExtractor),
        },
        views,
        crop_classifier: Classifier::ZeroShot(ce.clone()),
        mask_classifier: Classifier::ZeroShot(ce),
        fusion: FusionMode::ProbMean,
    }
}

#[test]
fn zero_shot_recovers_scripted_truth() {
    let s = small_session(120, 3);
    let p = zero_shot(&s, InputViews::Both);
    let out = run_pipeline(&p, &mut s.frames(), &GazeInput::Log(s.gaze().to_vec()), "s", 25.0, &RunOptions::default()).unwrap();
    assert_eq!(out.timeline.labels(), s.truth("s").labels());
    assert_eq!(out.failed_count(), 0);
}

#[test]
fn detected_gaze_matches_logged_gaze() {
    let s = small_session(40, 4);
    let p = zero_shot(&s, InputViews::Crop);
    let frames: Vec<u64> = (0..40).collect();
    let logged = run_pipeline(&p, &mut s.frames(), &GazeInput::Log(s.gaze().to_vec()), "s", 25.0, &RunOptions::default()).unwrap();
    let detected = run_pipeline(&p, &mut s.frames(), &GazeInput::Detect(frames), "s", 25.0, &RunOptions::default()).unwrap();
    assert_eq!(logged.timeline.labels(), detected.timeline.labels());
}

#[test]
fn workers_preserve_order_and_values() {
    let s = small_session(90, 5);
    let p = zero_shot(&s, InputViews::Both);
    let input = GazeInput::Log(s.gaze().to_vec());
    let serial = run_pipeline(&p, &mut s.frames(), &input, "s", 25.0, &RunOptions::default()).unwrap();
    let parallel = run_pipeline(
        &p,
        &mut s.frames(),
        &input,
        "s",
        25.0,
        &RunOptions {
            workers: 4,
            ..Default::default()
        },
    )
    .unwrap();
    let tax = ClassTaxonomy::default();
    assert_eq!(serial.scores_csv(&tax), parallel.scores_csv(&tax));
    let indices: Vec<u64> = parallel.frames.iter().map(|f| f.frame_index).collect();
    assert_eq!(indices, (0..90).collect::<Vec<_>>());
}

#[test]
fn frames_without_gaze_are_reported_not_guessed() {
    let s = small_session(20, 6);
    let p = zero_shot(&s, InputViews::Crop);
    let mut gaze = s.gaze().to_vec();
    gaze[3].valid = false;
    let out = run_pipeline(&p, &mut s.frames(), &GazeInput::Log(gaze), "s", 25.0, &RunOptions::default()).unwrap();
    assert!(matches!(out.frames[3].outcome, FrameOutcome::Invalid));
    assert_eq!(out.timeline.labels()[3], None);
    assert!(out.log_lines().iter().any(|l| l.starts_with("info,3,")));
}

#[test]
fn report_files_and_bar_heights() {
    let s = small_session(150, 7);
    let tax = ClassTaxonomy::default();
    let truth = s.truth("s");
    let inputs = ReportInputs::analyze(&tax, &truth, Some(&truth), 0.05, true).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(dir.path(), &inputs).unwrap();
    assert!(files.iter().all(|f| f.exists()));

    let svg = fs::read_to_string(dir.path().join("frequencies.svg")).unwrap();
    let heights: Vec<f64> = svg
        .lines()
        .filter(|l| l.contains("class=\"bar predicted\""))
        .map(|l| {
            let h = l.split("height=\"").nth(1).unwrap();
            h[..h.find('"').unwrap()].parse().unwrap()
        })
        .collect();
    assert_eq!(heights.len(), 7);
    let freqs: Vec<f64> = inputs.frequencies.iter().map(|r| r.predicted).collect();
    let (hmax, fmax) = (heights.iter().cloned().fold(0.0, f64::max), freqs.iter().cloned().fold(0.0, f64::max));
    for (h, f) in heights.iter().zip(&freqs) {
        assert!((h / hmax - f / fmax).abs() < 1e-3, "bar {h} for frequency {f}");
    }
}
