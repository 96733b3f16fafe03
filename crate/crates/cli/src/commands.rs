use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use egogaze::analytics::LabeledTimeline;
use egogaze::bench::{bench_matrix, BenchConfig, BenchStage, HardwareInfo};
use egogaze::classify::{
    train_probe_with_classes, BuiltinExtractor, ClassScores, ScoreKind, Targets, TrainConfig, DEFAULT_ALPHA, DEFAULT_BETA,
};
use egogaze::ingest::{
    parse_annotations, parse_gaze_log, split_dataset, write_annotations, write_gaze_log, AnnotatedFrame, DirectoryFrames,
    FrameSize, FrameSource, GazeRecord, Image, SplitManifest,
};
use egogaze::locate::{find_gaze_dot, suppress_marker};
use egogaze::metrics::{
    f1_multilabel, kappa_from_annotations, mean_average_precision, top_k_accuracy, EvalRecord, F1Average, MetricsReport,
};
use egogaze::pipeline::{build_view_caches, encode_session, run_pipeline, InputViews, RunOptions};
use egogaze::report::{emit_report, ReportInputs};
use egogaze::segment::mask_path;
use egogaze::synth::{generate_synthetic_session, SyntheticSessionSpec};
use egogaze::Error;

use crate::config::{PipelineConfig, ViewsChoice};
use crate::error::{CliError, CliResult};
use crate::setup::{self, load_labels, load_taxonomy, read_text, write_file};
use crate::{
    log, AdaptArgs, AnalyzeArgs, BenchArgs, Cli, Command, EvaluateArgs, IngestArgs, LabelledSessionArgs, LocateArgs,
    SessionArgs, SplitArgs, SynthArgs, TrainProbeArgs,
};

pub fn run(cli: Cli) -> CliResult {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Split(a) => split(a),
        Command::Locate(a) => locate(a),
        Command::Segment(a) => segment(a, config),
        Command::Classify(a) => classify(a, config),
        Command::Adapt(a) => adapt(a, config),
        Command::TrainProbe(a) => train_probe(a, config),
        Command::Evaluate(a) => evaluate(a),
        Command::Analyze(a) => analyze(a, false),
        Command::Bench(a) => bench(a, config),
        Command::Synth(a) => synth(a),
        Command::Report(a) => analyze(a, true),
    }
}

fn frame_size(dir: &Path) -> CliResult<(DirectoryFrames, FrameSize)> {
    let mut frames = DirectoryFrames::open(dir)?;
    let first = frames.indices().next().ok_or(Error::EmptyInput("frame directory is empty"))?;
    let img = frames.load(first)?;
    Ok((frames, FrameSize::new(img.width(), img.height())))
}

fn ingest(a: IngestArgs) -> CliResult {
    let taxonomy = load_taxonomy(a.taxonomy.as_deref())?;
    let (frames, size) = match (&a.frames, a.width, a.height) {
        (Some(dir), _, _) => {
            let (f, s) = frame_size(dir)?;
            (Some(f), s)
        }
        (None, Some(w), Some(h)) => (None, FrameSize::new(w, h)),
        _ => return Err(CliError::Usage("ingest needs --frames or --width and --height".into())),
    };
    let gaze = parse_gaze_log(&read_text(&a.gaze)?, size)?;
    println!("gaze_records,{}", gaze.len());
    println!("valid_gaze,{}", gaze.iter().filter(|g| g.valid).count());
    if let Some(frames) = &frames {
        let present: BTreeSet<u64> = frames.indices().collect();
        let missing: Vec<u64> = gaze.iter().map(|g| g.frame_index).filter(|i| !present.contains(i)).collect();
        for m in &missing {
            log("warn", Some(*m), "no frame file");
        }
        println!("frame_files,{}", present.len());
        println!("missing_frames,{}", missing.len());
    }
    let annotations = match &a.annotations {
        Some(p) => {
            let ann = parse_annotations(&read_text(p)?, &taxonomy)?;
            println!("annotated_frames,{}", ann.len());
            println!("multi_label_frames,{}", ann.iter().filter(|f| f.labels.len() > 1).count());
            Some(ann)
        }
        None => None,
    };
    if let Some(out) = &a.out {
        write_file(&out.join("gaze.csv"), write_gaze_log(&gaze))?;
        if let Some(ann) = &annotations {
            write_file(&out.join("annotations.csv"), write_annotations(ann, &taxonomy))?;
        }
    }
    Ok(())
}

fn split(a: SplitArgs) -> CliResult {
    let text = read_text(&a.list)?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |message: &str| Error::Format {
            row: i,
            message: message.into(),
        };
        let (video, frame) = line.split_once(',').ok_or_else(|| bad("expected video,frame"))?;
        match frame.trim().parse::<u64>() {
            Ok(f) => pairs.push((video.trim().to_string(), f)),
            Err(_) if i == 0 => continue,
            Err(_) => return Err(bad("frame is not a non-negative integer").into()),
        }
    }
    let manifest = split_dataset(&pairs, a.ratio, a.seed)?;
    write_file(&a.out, manifest.to_text())?;
    println!("train,{}", manifest.train_len());
    println!("val,{}", manifest.val_len());
    Ok(())
}

fn locate(a: LocateArgs) -> CliResult {
    if a.fps.is_nan() || a.fps <= 0.0 {
        return Err(CliError::Usage("--fps must be positive".into()));
    }
    let mut frames = DirectoryFrames::open(&a.frames)?;
    let indices: Vec<u64> = frames.indices().collect();
    if indices.is_empty() {
        return Err(Error::EmptyInput("frame directory is empty").into());
    }
    let mut records = Vec::with_capacity(indices.len());
    for i in indices {
        let img = frames.load(i)?;
        let p = find_gaze_dot(&img);
        let ts = (i as f64 * 1000.0 / a.fps).round() as u64;
        records.push(GazeRecord::new(i, ts, p.x as i64, p.y as i64, true));
    }
    write_file(&a.out, write_gaze_log(&records))?;
    Ok(())
}

fn session_config(config: Option<&Path>, args: &crate::config::PipelineArgs) -> CliResult<PipelineConfig> {
    let mut cfg = PipelineConfig::load(config)?;
    args.apply(&mut cfg);
    Ok(cfg)
}

fn segment(a: SessionArgs, config: Option<&Path>) -> CliResult {
    let cfg = session_config(config, &a.pipeline)?;
    let encoder = setup::encoder(&cfg)?;
    let mut session = setup::open_session(&a.frames, a.gaze.as_deref())?;
    let detect = session.input.is_detect();
    let points = session.input.points();
    let mut failed = 0;
    for &(i, gaze) in &points {
        if gaze.is_none() && !detect {
            log("info", Some(i), "no valid gaze");
            failed += 1;
            continue;
        }
        let result = session.frames.load(i).and_then(|mut img| {
            let p = gaze.unwrap_or_else(|| find_gaze_dot(&img));
            if encoder.marker_radius > 0 {
                suppress_marker(&mut img, p, encoder.marker_radius);
            }
            encoder.segmenter.segment(&img, p, i)
        });
        match result {
            Ok(mask) => write_file(&mask_path(&a.out, i), mask.to_pbm())?,
            Err(e) => {
                log("warn", Some(i), &e.to_string());
                failed += 1;
            }
        }
    }
    if failed * 2 > points.len() {
        return Err(Error::Pipeline {
            failed,
            total: points.len(),
        }
        .into());
    }
    Ok(())
}

fn classify(a: SessionArgs, config: Option<&Path>) -> CliResult {
    let cfg = session_config(config, &a.pipeline)?;
    let taxonomy = load_taxonomy(cfg.taxonomy.as_deref())?;
    let pipeline = setup::pipeline(&cfg, &taxonomy)?;
    let mut session = setup::open_session(&a.frames, a.gaze.as_deref())?;
    let opts = RunOptions {
        workers: cfg.run.workers,
        paced_fps: cfg.run.paced.then_some(cfg.fps),
    };
    let out = run_pipeline(&pipeline, &mut session.frames, &session.input, &a.session_id, cfg.fps, &opts)?;
    for line in out.log_lines() {
        eprintln!("{line}");
    }
    write_file(&a.out.join("timeline.csv"), out.timeline.to_csv(&taxonomy))?;
    write_file(&a.out.join("scores.csv"), out.scores_csv(&taxonomy))?;
    println!("frames,{}", out.frames.len());
    println!("labelled,{}", out.timeline.labelled_count());
    Ok(())
}

struct LabelledEmbeddings {
    embedded: Vec<egogaze::pipeline::ViewEmbeddings>,
    labels: BTreeMap<u64, BTreeSet<usize>>,
    num_classes: usize,
    cfg: PipelineConfig,
}

fn labelled_embeddings(s: &LabelledSessionArgs, config: Option<&Path>, views: InputViews) -> CliResult<LabelledEmbeddings> {
    let cfg = session_config(config, &s.pipeline)?;
    let taxonomy = load_taxonomy(cfg.taxonomy.as_deref())?;
    let mut labels = load_labels(&s.labels, &taxonomy)?;
    if let (Some(split), Some(video)) = (&s.split, &s.video) {
        let manifest = SplitManifest::parse(&read_text(split)?)?;
        let train: BTreeSet<u64> = manifest
            .train
            .get(video)
            .ok_or_else(|| CliError::Usage(format!("video {video:?} is not in the split manifest")))?
            .iter()
            .copied()
            .collect();
        labels.retain(|f, _| train.contains(f));
    }
    let encoder = setup::encoder(&cfg)?;
    let mut session = setup::open_session(&s.frames, s.gaze.as_deref())?;
    let embedded: Vec<_> = encode_session(&encoder, &mut session.frames, &session.input, views)
        .into_iter()
        .filter(|v| labels.contains_key(&v.frame_index))
        .collect();
    if embedded.is_empty() {
        return Err(Error::EmptyInput("no labelled frame could be embedded").into());
    }
    Ok(LabelledEmbeddings {
        embedded,
        labels,
        num_classes: taxonomy.len(),
        cfg,
    })
}

fn adapt(a: AdaptArgs, config: Option<&Path>) -> CliResult {
    let views = if a.mask_out.is_some() { InputViews::Both } else { InputViews::Crop };
    let le = labelled_embeddings(&a.session, config, views)?;
    let primary: BTreeMap<u64, usize> = le
        .labels
        .iter()
        .filter_map(|(&f, s)| s.first().map(|&l| (f, l)))
        .collect();
    let alpha = le.cfg.classify.alpha.unwrap_or(DEFAULT_ALPHA);
    let beta = le.cfg.classify.beta.unwrap_or(DEFAULT_BETA);
    let (crop, mask) = build_view_caches(&le.embedded, &primary, a.shots, le.num_classes, alpha, beta)?;
    let crop = crop.ok_or(Error::EmptyCache)?;
    crop.save(&a.out)?;
    println!("crop_cache_entries,{}", crop.len());
    if let Some(path) = &a.mask_out {
        let mask = mask.ok_or(Error::EmptyCache)?;
        mask.save(path)?;
        println!("mask_cache_entries,{}", mask.len());
    }
    Ok(())
}

fn train_probe(a: TrainProbeArgs, config: Option<&Path>) -> CliResult {
    let views = if a.mask_out.is_some() { InputViews::Both } else { InputViews::Crop };
    let le = labelled_embeddings(&a.session, config, views)?;
    let tc = TrainConfig {
        lr: a.lr,
        momentum: a.momentum,
        weight_decay: a.weight_decay,
        milestones: a.milestones.clone(),
        gamma: a.gamma,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: le.cfg.seed,
    };
    let targets_for = |frames: &[u64]| -> Targets {
        if a.multi_label {
            Targets::MultiLabel(frames.iter().map(|f| le.labels[f].clone()).collect())
        } else {
            Targets::SingleLabel(frames.iter().map(|f| *le.labels[f].first().unwrap()).collect())
        }
    };
    type PickView = fn(&egogaze::pipeline::ViewEmbeddings) -> Option<&egogaze::Embedding>;
    let outputs: [(PickView, Option<&Path>, &str); 2] = [
        (|v| v.crop.as_ref(), Some(a.out.as_path()), "crop"),
        (|v| v.mask.as_ref(), a.mask_out.as_deref(), "mask"),
    ];
    for (pick, path, name) in outputs {
        let Some(path) = path else { continue };
        let rows: Vec<(u64, Vec<f64>)> = le
            .embedded
            .iter()
            .filter_map(|v| pick(v).map(|e| (v.frame_index, e.values().to_vec())))
            .collect();
        let frames: Vec<u64> = rows.iter().map(|r| r.0).collect();
        let features: Vec<Vec<f64>> = rows.into_iter().map(|r| r.1).collect();
        let trained = train_probe_with_classes(&features, &targets_for(&frames), le.num_classes, &tc)?;
        trained.probe.save(path)?;
        if let Some(loss) = trained.loss_trace.last() {
            println!("{name}_final_loss,{loss:.6}");
        }
    }
    Ok(())
}

/// Rows of a `classify` scores table that carry a prediction.
fn parse_scores(text: &str, num_classes: usize) -> CliResult<Vec<(u64, ClassScores)>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::EmptyInput("scores file is empty"))?;
    let columns = header.split(',').count();
    if !header.starts_with("frame,label,") || columns != num_classes + 2 {
        return Err(Error::Format {
            row: 0,
            message: format!("expected frame,label and {num_classes} class columns"),
        }
        .into());
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 1;
        let fields: Vec<&str> = line.split(',').collect();
        let bad = |m: &str| Error::Format { row, message: m.into() };
        if fields.len() != columns {
            return Err(bad("wrong number of columns").into());
        }
        let frame: u64 = fields[0].parse().map_err(|_| bad("bad frame index"))?;
        if fields[1].is_empty() {
            continue;
        }
        let probs = fields[2..]
            .iter()
            .map(|v| v.parse::<f64>().map_err(|_| bad("bad score")))
            .collect::<Result<Vec<_>, _>>()?;
        let kind = if (probs.iter().sum::<f64>() - 1.0).abs() < 1e-3 {
            ScoreKind::SingleLabel
        } else {
            ScoreKind::MultiLabel
        };
        out.push((frame, ClassScores::new(probs, kind)));
    }
    Ok(out)
}

fn evaluate(a: EvaluateArgs) -> CliResult {
    let taxonomy = load_taxonomy(a.taxonomy.as_deref())?;
    let truth = load_labels(&a.truth, &taxonomy)?;
    if a.scores.is_none() && a.rater2.is_none() {
        return Err(CliError::Usage("evaluate needs --scores or --rater2".into()));
    }
    let mut report = MetricsReport::default();
    if let Some(path) = &a.scores {
        let scores = parse_scores(&read_text(path)?, taxonomy.len())?;
        let records: Vec<EvalRecord> = scores
            .into_iter()
            .filter_map(|(f, s)| truth.get(&f).map(|t| EvalRecord::new(s, t.iter().copied())))
            .collect();
        report.push("frames", records.len() as f64);
        report.push("top1", top_k_accuracy(&records, 1)?);
        if taxonomy.len() >= 3 {
            report.push("top3", top_k_accuracy(&records, 3)?);
        }
        match mean_average_precision(&records) {
            Ok(m) => report.push("map", m),
            Err(e) => log("warn", None, &e.to_string()),
        }
        let avg = if a.macro_f1 { F1Average::Macro } else { F1Average::Micro };
        report.push(if a.macro_f1 { "f1_macro" } else { "f1_micro" }, f1_multilabel(&records, a.threshold, avg)?);
    }
    if let Some(path) = &a.rater2 {
        let other = load_labels(path, &taxonomy)?;
        let as_frames = |m: &BTreeMap<u64, BTreeSet<usize>>, who: &str| -> Vec<AnnotatedFrame> {
            m.iter()
                .map(|(&f, l)| AnnotatedFrame {
                    frame_index: f,
                    labels: l.clone(),
                    annotator_id: who.into(),
                })
                .collect()
        };
        report.push("kappa", kappa_from_annotations(&as_frames(&truth, "a"), &as_frames(&other, "b"))?);
    }
    print!("{}", report.to_text());
    if let Some(out) = &a.out {
        write_file(out, report.to_csv())?;
    }
    Ok(())
}

fn parse_metrics(text: &str) -> CliResult<MetricsReport> {
    let mut report = MetricsReport::default();
    for (row, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Format {
            row,
            message: "expected metric,value".into(),
        };
        let (name, value) = line.rsplit_once(',').ok_or_else(bad)?;
        report.push(name, value.trim().parse::<f64>().map_err(|_| bad())?);
    }
    Ok(report)
}

fn analyze(a: AnalyzeArgs, write: bool) -> CliResult {
    let taxonomy = load_taxonomy(a.taxonomy.as_deref())?;
    let pred = setup::load_timeline(&a.pred, &taxonomy, a.fps)?;
    let truth = match &a.truth {
        Some(p) => {
            let labels = load_labels(p, &taxonomy)?;
            let l = pred.frames().iter().map(|f| labels.get(f).and_then(|s| s.first().copied())).collect();
            Some(LabeledTimeline::new("truth", a.fps, pred.frames().to_vec(), l)?)
        }
        None => None,
    };
    let mut inputs = ReportInputs::analyze(&taxonomy, &pred, truth.as_ref(), a.alpha, a.collapse_runs)?;
    if let Some(m) = &a.metrics {
        inputs.metrics = parse_metrics(&read_text(m)?)?;
    }
    if write {
        let out = a.out.as_ref().ok_or_else(|| CliError::Usage("report needs --out".into()))?;
        emit_report(out, &inputs)?;
        return Ok(());
    }
    println!("class,predicted,truth");
    for f in &inputs.frequencies {
        let truth = f.truth.map(|t| format!("{t:.4}")).unwrap_or_default();
        println!("{},{:.4},{}", taxonomy.name(f.class_index).unwrap_or(""), f.predicted, truth);
    }
    for t in &inputs.ztests {
        println!(
            "ztest,{},z={:.4},p={:.4e},significant={},bonferroni={}",
            taxonomy.name(t.class_index).unwrap_or(""),
            t.z,
            t.p_value,
            t.significant_raw,
            t.significant_bonferroni
        );
    }
    println!("dwell_segments,{}", inputs.dwell.len());
    if let Some(out) = &a.out {
        emit_report(out, &inputs)?;
    }
    Ok(())
}

fn bench_frames(a: &BenchArgs, seed: u64) -> CliResult<Vec<Arc<Image>>> {
    const DISTINCT: usize = 16;
    match &a.frames {
        Some(dir) => {
            let mut frames = DirectoryFrames::open(dir)?;
            let indices: Vec<u64> = frames.indices().take(DISTINCT).collect();
            if indices.is_empty() {
                return Err(Error::EmptyInput("frame directory is empty").into());
            }
            indices.into_iter().map(|i| Ok(Arc::new(frames.load(i)?))).collect()
        }
        None => {
            let session = generate_synthetic_session(&SyntheticSessionSpec {
                frames: DISTINCT,
                seed,
                ..Default::default()
            })?;
            (0..DISTINCT as u64).map(|i| Ok(Arc::new(session.render(i)?))).collect()
        }
    }
}

fn bench(a: BenchArgs, config: Option<&Path>) -> CliResult {
    let cfg = session_config(config, &a.pipeline)?;
    let taxonomy = load_taxonomy(cfg.taxonomy.as_deref())?;
    let frames = bench_frames(&a, cfg.seed)?;
    let variants = [("crop", ViewsChoice::Crop), ("crop+mask", ViewsChoice::Both)];
    let mut stages: Vec<BenchStage<'_, Arc<Image>>> = Vec::new();
    for (name, views) in variants {
        let mut c = cfg.clone();
        c.classify.views = views;
        let p = setup::pipeline(&c, &taxonomy)?;
        stages.push((
            name.to_string(),
            Box::new(move |batch: &[Arc<Image>]| {
                for img in batch {
                    p.score_frame(0, img, None).map_err(|e| e.to_string())?;
                }
                Ok(())
            }),
        ));
    }
    let cfgs: Vec<BenchConfig> = a
        .batch_size
        .iter()
        .map(|&batch_size| BenchConfig {
            batch_size,
            repetitions: a.reps,
            warmup_batches: a.warmup,
            frames_per_rep: a.frames_per_rep,
        })
        .collect();
    let table = bench_matrix(&mut stages, &cfgs, || frames.iter().cloned().cycle(), HardwareInfo::detect())?;
    for cell in &table.cells {
        if let Err(e) = &cell.outcome {
            log("error", None, &format!("{} batch {}: {e}", cell.pipeline, cell.config.batch_size));
        }
    }
    print!("{}", table.summary_csv());
    if let Some(out) = &a.out {
        write_file(&out.join("bench_raw.csv"), table.raw_csv())?;
        write_file(&out.join("bench_summary.csv"), table.summary_csv())?;
    }
    Ok(())
}

fn synth(a: SynthArgs) -> CliResult {
    let spec = SyntheticSessionSpec {
        frames: a.frames,
        width: a.width,
        height: a.height,
        render_dot: !a.no_dot,
        dot_radius: a.dot_radius,
        noise: a.noise,
        fps: a.fps,
        seed: a.seed,
        ..Default::default()
    };
    let session = generate_synthetic_session(&spec)?;
    let taxonomy = egogaze::ClassTaxonomy::default();
    let frames_dir = a.out.join("frames");
    for i in 0..session.len() as u64 {
        let img = session.render(i)?;
        let (name, bytes) = if a.bmp {
            (format!("{i:06}.bmp"), img.to_bmp())
        } else {
            (DirectoryFrames::file_name(i), img.to_ppm())
        };
        write_file(&frames_dir.join(name), bytes)?;
    }
    write_file(&a.out.join("gaze.csv"), write_gaze_log(session.gaze()))?;
    write_file(&a.out.join("truth.csv"), session.truth("truth").to_csv(&taxonomy))?;
    write_file(
        &a.out.join("annotations.csv"),
        write_annotations(&session.annotations("synth"), &taxonomy),
    )?;
    let ce = session.prototype_embeddings(&BuiltinExtractor, 32, egogaze::classify::DEFAULT_TEMPERATURE)?;
    write_file(&a.out.join("class_embeddings.csv"), ce.to_text(&taxonomy))?;
    write_file(&a.out.join("taxonomy.txt"), taxonomy.to_text())?;
    log("info", None, &format!("wrote {} frames to {}", session.len(), frames_dir.display()));
    Ok(())
}
