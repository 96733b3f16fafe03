//! Loading inputs and assembling a pipeline from the configuration.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use egogaze::classify::{
    BuiltinExtractor, ClassEmbeddings, Classifier, Extractor, FewShotCache, FusionMode, LinearProbe, PrecomputedEmbeddings,
};
use egogaze::ingest::{parse_annotations, parse_gaze_log, ClassTaxonomy, DirectoryFrames, FrameSize, FrameSource, ANNOTATION_HEADER};
use egogaze::locate::CropSpec;
use egogaze::pipeline::{GazeInput, InputViews, Pipeline, ViewEncoder};
use egogaze::segment::{ExternalMaskSegmenter, RegionGrowConfig, RegionGrowSegmenter, Segmenter};
use egogaze::{Error, LabeledTimeline};

use crate::config::{ClassifierChoice, FusionChoice, PipelineConfig, SegmenterChoice, ViewsChoice};
use crate::error::{CliError, CliResult};
use crate::log;

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
        .into()
    })
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| Error::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
        .into()
    })
}

pub fn load_taxonomy(path: Option<&Path>) -> CliResult<ClassTaxonomy> {
    match path {
        Some(p) => Ok(ClassTaxonomy::parse(&read_text(p)?)?),
        None => Ok(ClassTaxonomy::default()),
    }
}

/// Label sets per frame from annotations (`frame,labels,annotator`) or a
/// timeline (`frame,label`); unlabelled timeline rows are left out.
pub fn load_labels(path: &Path, taxonomy: &ClassTaxonomy) -> CliResult<BTreeMap<u64, BTreeSet<usize>>> {
    let text = read_text(path)?;
    if text.lines().next().map(str::trim) == Some(ANNOTATION_HEADER) {
        let frames = parse_annotations(&text, taxonomy)?;
        let mut out: BTreeMap<u64, BTreeSet<usize>> = BTreeMap::new();
        for f in frames {
            out.entry(f.frame_index).or_default().extend(f.labels);
        }
        Ok(out)
    } else {
        let t = LabeledTimeline::parse_csv(&text, taxonomy, "labels", egogaze::analytics::DEFAULT_FPS)?;
        Ok(t
            .frames()
            .iter()
            .zip(t.labels())
            .filter_map(|(&f, l)| l.map(|l| (f, BTreeSet::from([l]))))
            .collect())
    }
}

pub fn load_timeline(path: &Path, taxonomy: &ClassTaxonomy, fps: f64) -> CliResult<LabeledTimeline> {
    Ok(LabeledTimeline::parse_csv(&read_text(path)?, taxonomy, "session", fps)?)
}

pub struct Session {
    pub frames: DirectoryFrames,
    pub input: GazeInput,
}

/// Frame directory plus gaze log (or marker detection when no log).
pub fn open_session(frames: &Path, gaze: Option<&Path>) -> CliResult<Session> {
    let mut dir = DirectoryFrames::open(frames)?;
    let indices: Vec<u64> = dir.indices().collect();
    let input = match gaze {
        Some(g) => {
            let first = *indices.first().ok_or(Error::EmptyInput("frame directory is empty"))?;
            let img = dir.load(first)?;
            GazeInput::Log(parse_gaze_log(&read_text(g)?, FrameSize::new(img.width(), img.height()))?)
        }
        None => GazeInput::Detect(indices),
    };
    Ok(Session { frames: dir, input })
}

pub fn extractor(cfg: &PipelineConfig) -> CliResult<Box<dyn Extractor>> {
    Ok(match &cfg.classify.embeddings {
        Some(p) => Box::new(PrecomputedEmbeddings::parse(&read_text(p)?)?),
        None => Box::new(BuiltinExtractor),
    })
}

pub fn encoder(cfg: &PipelineConfig) -> CliResult<ViewEncoder> {
    let segmenter: Box<dyn Segmenter> = match cfg.segment.method {
        SegmenterChoice::RegionGrow => Box::new(RegionGrowSegmenter {
            config: RegionGrowConfig::new(cfg.segment.tau, cfg.segment.max_pixels.unwrap_or(usize::MAX))?,
        }),
        SegmenterChoice::External => Box::new(ExternalMaskSegmenter {
            mask_dir: cfg
                .segment
                .mask_dir
                .clone()
                .ok_or_else(|| CliError::Usage("external segmentation needs --mask-dir".into()))?,
        }),
    };
    Ok(ViewEncoder {
        crop: CropSpec::new(cfg.crop.size, cfg.crop.resize)?,
        marker_radius: cfg.crop.marker_radius,
        segmenter,
        extractor: extractor(cfg)?,
    })
}

pub fn views(cfg: &PipelineConfig) -> InputViews {
    match cfg.classify.views {
        ViewsChoice::Crop => InputViews::Crop,
        ViewsChoice::Mask => InputViews::Mask,
        ViewsChoice::Both => InputViews::Both,
    }
}

fn class_embeddings(cfg: &PipelineConfig, taxonomy: &ClassTaxonomy, dim: usize) -> CliResult<ClassEmbeddings> {
    let t = cfg.classify.temperature;
    match &cfg.classify.class_embeddings {
        Some(p) => Ok(ClassEmbeddings::parse(&read_text(p)?, taxonomy, t)?),
        None => {
            log("warn", None, &format!("no class embeddings given; drawing random ones from seed {}", cfg.seed));
            Ok(ClassEmbeddings::random(taxonomy.len(), dim, cfg.seed, t)?)
        }
    }
}

fn load_cache(path: Option<&Path>, cfg: &PipelineConfig, flag: &str) -> CliResult<FewShotCache> {
    let path = path.ok_or_else(|| CliError::Usage(format!("the adapter needs {flag}")))?;
    let mut cache = FewShotCache::load(path)?;
    if let Some(a) = cfg.classify.alpha {
        cache.alpha = a;
    }
    if let Some(b) = cfg.classify.beta {
        cache.beta = b;
    }
    Ok(cache)
}

fn load_probe(path: Option<&Path>, flag: &str) -> CliResult<LinearProbe> {
    let path = path.ok_or_else(|| CliError::Usage(format!("the probe classifier needs {flag}")))?;
    Ok(LinearProbe::load(path)?)
}

pub fn pipeline(cfg: &PipelineConfig, taxonomy: &ClassTaxonomy) -> CliResult<Pipeline> {
    let encoder = encoder(cfg)?;
    let views = views(cfg);
    let (use_crop, use_mask) = (views != InputViews::Mask, views != InputViews::Crop);
    let c = &cfg.classify;
    let (crop_classifier, mask_classifier) = match c.method {
        ClassifierChoice::ZeroShot => {
            let ce = class_embeddings(cfg, taxonomy, encoder.extractor.dim())?;
            (Classifier::ZeroShot(ce.clone()), Classifier::ZeroShot(ce))
        }
        ClassifierChoice::Adapter => {
            let ce = class_embeddings(cfg, taxonomy, encoder.extractor.dim())?;
            let pick = |wanted: bool, path: Option<&Path>, flag: &str| -> CliResult<Classifier> {
                Ok(if wanted {
                    Classifier::Adapter(load_cache(path, cfg, flag)?, ce.clone())
                } else {
                    Classifier::ZeroShot(ce.clone())
                })
            };
            (
                pick(use_crop, c.cache.as_deref(), "--cache")?,
                pick(use_mask, c.mask_cache.as_deref(), "--mask-cache")?,
            )
        }
        ClassifierChoice::Probe => {
            let crop = if use_crop { Some(load_probe(c.probe.as_deref(), "--probe")?) } else { None };
            let mask = if use_mask { Some(load_probe(c.mask_probe.as_deref(), "--mask-probe")?) } else { None };
            let (a, b) = match (crop, mask) {
                (Some(a), Some(b)) => (a, b),
                (Some(a), None) => (a.clone(), a),
                (None, Some(b)) => (b.clone(), b),
                (None, None) => unreachable!("at least one view is always selected"),
            };
            (Classifier::Probe(a), Classifier::Probe(b))
        }
    };
    for cl in [&crop_classifier, &mask_classifier] {
        if cl.num_classes() != taxonomy.len() {
            return Err(CliError::Data(Error::Shape(format!(
                "classifier has {} classes, taxonomy has {}",
                cl.num_classes(),
                taxonomy.len()
            ))));
        }
    }
    Ok(Pipeline {
        encoder,
        views,
        crop_classifier,
        mask_classifier,
        fusion: match c.fusion {
            FusionChoice::ProbMean => FusionMode::ProbMean,
            FusionChoice::LogitMean => FusionMode::LogitMean,
        },
    })
}
