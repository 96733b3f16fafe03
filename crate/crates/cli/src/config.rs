//! Pipeline configuration file and its command-line overrides.
//!
//! The file is TOML and must declare `version = 1`. Every key is optional.
//! Relative paths are resolved against the file's directory.
//!
//! ```toml
//! version = 1
//! seed = 0
//! fps = 25.0
//!
//! [crop]
//! size = 128
//! resize = 224
//! marker_radius = 3
//!
//! [segment]
//! method = "region-grow"   # or "external"
//! tau = 40.0
//!
//! [classify]
//! method = "adapter"       # "zero-shot", "adapter" or "probe"
//! views = "both"           # "crop", "mask" or "both"
//! fusion = "prob-mean"     # or "logit-mean"
//! class_embeddings = "class_embeddings.csv"
//! cache = "cache.bin"
//! mask_cache = "mask_cache.bin"
//!
//! [run]
//! workers = 1
//! ```

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Deserialize;

use crate::error::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SegmenterChoice {
    RegionGrow,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierChoice {
    ZeroShot,
    Adapter,
    Probe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ViewsChoice {
    Crop,
    Mask,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FusionChoice {
    ProbMean,
    LogitMean,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CropConfig {
    pub size: u32,
    pub resize: u32,
    pub marker_radius: u32,
}

impl Default for CropConfig {
    fn default() -> Self {
        Self {
            size: 128,
            resize: 224,
            marker_radius: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentConfig {
    pub method: SegmenterChoice,
    pub tau: f64,
    pub max_pixels: Option<usize>,
    pub mask_dir: Option<PathBuf>,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            method: SegmenterChoice::RegionGrow,
            tau: 40.0,
            max_pixels: None,
            mask_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    pub method: ClassifierChoice,
    pub views: ViewsChoice,
    pub fusion: FusionChoice,
    /// Overrides the value stored in the cache file when set.
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub temperature: f64,
    pub class_embeddings: Option<PathBuf>,
    /// Precomputed per-frame embeddings; the built-in extractor otherwise.
    pub embeddings: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub mask_cache: Option<PathBuf>,
    pub probe: Option<PathBuf>,
    pub mask_probe: Option<PathBuf>,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            method: ClassifierChoice::ZeroShot,
            views: ViewsChoice::Both,
            fusion: FusionChoice::ProbMean,
            alpha: None,
            beta: None,
            temperature: egogaze::classify::DEFAULT_TEMPERATURE,
            class_embeddings: None,
            embeddings: None,
            cache: None,
            mask_cache: None,
            probe: None,
            mask_probe: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub workers: usize,
    pub paced: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { workers: 1, paced: false }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    pub taxonomy: Option<PathBuf>,
    pub seed: u64,
    pub fps: f64,
    pub crop: CropConfig,
    pub segment: SegmentConfig,
    pub classify: ClassifyConfig,
    pub run: RunConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            taxonomy: None,
            seed: 0,
            fps: egogaze::analytics::DEFAULT_FPS,
            crop: CropConfig::default(),
            segment: SegmentConfig::default(),
            classify: ClassifyConfig::default(),
            run: RunConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let table: toml::Table = text.parse().map_err(|e| CliError::Usage(format!("config: {e}")))?;
        if !table.contains_key("version") {
            return Err(CliError::Usage(format!("config must declare `version = {CONFIG_VERSION}`")));
        }
        let mut cfg: PipelineConfig = table.try_into().map_err(|e| CliError::Usage(format!("config: {e}")))?;
        if cfg.version != CONFIG_VERSION {
            return Err(CliError::Usage(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(path) = p.as_mut() {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        rebase(&mut cfg.taxonomy);
        rebase(&mut cfg.segment.mask_dir);
        let c = &mut cfg.classify;
        for p in [
            &mut c.class_embeddings,
            &mut c.embeddings,
            &mut c.cache,
            &mut c.mask_cache,
            &mut c.probe,
            &mut c.mask_probe,
        ] {
            rebase(p);
        }
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

/// Flags that override the configuration file.
#[derive(Debug, Clone, Default, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub fps: Option<f64>,
    #[arg(long)]
    pub crop_size: Option<u32>,
    #[arg(long)]
    pub resize: Option<u32>,
    #[arg(long)]
    pub marker_radius: Option<u32>,
    #[arg(long, value_enum)]
    pub segmenter: Option<SegmenterChoice>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub max_pixels: Option<usize>,
    #[arg(long)]
    pub mask_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub classifier: Option<ClassifierChoice>,
    #[arg(long, value_enum)]
    pub views: Option<ViewsChoice>,
    #[arg(long, value_enum)]
    pub fusion: Option<FusionChoice>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub class_embeddings: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub mask_cache: Option<PathBuf>,
    #[arg(long)]
    pub probe: Option<PathBuf>,
    #[arg(long)]
    pub mask_probe: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Release frames at the session frame rate instead of as fast as possible.
    #[arg(long)]
    pub paced: bool,
}

impl PipelineArgs {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        fn set<T: Clone>(dst: &mut T, src: &Option<T>) {
            if let Some(v) = src {
                *dst = v.clone();
            }
        }
        fn set_opt<T: Clone>(dst: &mut Option<T>, src: &Option<T>) {
            if src.is_some() {
                dst.clone_from(src);
            }
        }
        set_opt(&mut cfg.taxonomy, &self.taxonomy);
        set(&mut cfg.seed, &self.seed);
        set(&mut cfg.fps, &self.fps);
        set(&mut cfg.crop.size, &self.crop_size);
        set(&mut cfg.crop.resize, &self.resize);
        set(&mut cfg.crop.marker_radius, &self.marker_radius);
        set(&mut cfg.segment.method, &self.segmenter);
        set(&mut cfg.segment.tau, &self.tau);
        set_opt(&mut cfg.segment.max_pixels, &self.max_pixels);
        set_opt(&mut cfg.segment.mask_dir, &self.mask_dir);
        let c = &mut cfg.classify;
        set(&mut c.method, &self.classifier);
        set(&mut c.views, &self.views);
        set(&mut c.fusion, &self.fusion);
        set_opt(&mut c.alpha, &self.alpha);
        set_opt(&mut c.beta, &self.beta);
        set(&mut c.temperature, &self.temperature);
        set_opt(&mut c.class_embeddings, &self.class_embeddings);
        set_opt(&mut c.embeddings, &self.embeddings);
        set_opt(&mut c.cache, &self.cache);
        set_opt(&mut c.mask_cache, &self.mask_cache);
        set_opt(&mut c.probe, &self.probe);
        set_opt(&mut c.mask_probe, &self.mask_probe);
        set(&mut cfg.run.workers, &self.workers);
        cfg.run.paced |= self.paced;
    }
}
