//! Throughput harness: untimed warm-up batches, then timed repetitions,
//! reported as frames per second.

use std::fmt::Display;
use std::fs;
use std::time::Instant;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchConfig {
    pub batch_size: usize,
    pub repetitions: usize,
    pub warmup_batches: usize,
    pub frames_per_rep: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            batch_size: 1,
            repetitions: 10,
            warmup_batches: 10,
            frames_per_rep: 50,
        }
    }
}

impl BenchConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.repetitions == 0 || self.warmup_batches == 0 || self.frames_per_rep == 0 {
            return Err(Error::InvalidInput("benchmark parameters must be positive".into()));
        }
        Ok(())
    }

    /// Frames consumed by one full measurement.
    pub fn frames_needed(&self) -> usize {
        self.warmup_batches * self.batch_size + self.repetitions * self.frames_per_rep
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub pipeline: String,
    pub config: BenchConfig,
    pub fps: Vec<f64>,
    pub mean_fps: f64,
    /// Population standard deviation of `fps`.
    pub std_fps: f64,
}

impl BenchReport {
    fn from_samples(pipeline: &str, config: BenchConfig, fps: Vec<f64>) -> Self {
        let n = fps.len() as f64;
        let mean_fps = fps.iter().sum::<f64>() / n;
        let std_fps = (fps.iter().map(|f| (f - mean_fps).powi(2)).sum::<f64>() / n).sqrt();
        Self {
            pipeline: pipeline.to_string(),
            config,
            fps,
            mean_fps,
            std_fps,
        }
    }
}

fn next_batch<T>(workload: &mut impl Iterator<Item = T>, n: usize) -> Result<Vec<T>> {
    let batch: Vec<T> = workload.take(n).collect();
    if batch.len() < n {
        return Err(Error::InsufficientData("benchmark workload exhausted".into()));
    }
    Ok(batch)
}

/// Runs `stage` over batches drawn from `workload`. Frames are pulled from
/// the workload before the clock starts, so only `stage` is timed.
pub fn measure_fps<T, E, F>(
    pipeline: &str,
    mut stage: F,
    workload: &mut impl Iterator<Item = T>,
    cfg: &BenchConfig,
) -> Result<BenchReport>
where
    F: FnMut(&[T]) -> std::result::Result<(), E>,
    E: Display,
{
    cfg.validate()?;
    let abort = |e: E| Error::BenchAborted(format!("{pipeline}: {e}"));
    for _ in 0..cfg.warmup_batches {
        let batch = next_batch(workload, cfg.batch_size)?;
        stage(&batch).map_err(abort)?;
    }
    let mut fps = Vec::with_capacity(cfg.repetitions);
    for _ in 0..cfg.repetitions {
        let mut batches = Vec::new();
        let mut remaining = cfg.frames_per_rep;
        while remaining > 0 {
            let n = remaining.min(cfg.batch_size);
            batches.push(next_batch(workload, n)?);
            remaining -= n;
        }
        let start = Instant::now();
        for batch in &batches {
            stage(batch).map_err(abort)?;
        }
        let elapsed = start.elapsed().as_secs_f64().max(1e-9);
        fps.push(cfg.frames_per_rep as f64 / elapsed);
    }
    Ok(BenchReport::from_samples(pipeline, *cfg, fps))
}

/// Host identification for report headers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HardwareInfo {
    pub cpu: String,
    pub gpu: String,
}

impl HardwareInfo {
    /// CPU model from `/proc/cpuinfo`; GPU from `EGOGAZE_GPU`. Missing values
    /// become `unknown`.
    pub fn detect() -> Self {
        let cpu = fs::read_to_string("/proc/cpuinfo")
            .ok()
            .and_then(|s| {
                s.lines()
                    .find(|l| l.starts_with("model name"))
                    .and_then(|l| l.split_once(':'))
                    .map(|(_, v)| v.trim().to_string())
            })
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| "unknown".into());
        let gpu = std::env::var("EGOGAZE_GPU")
            .ok()
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| "unknown".into());
        Self { cpu, gpu }
    }

    pub fn unknown() -> Self {
        Self {
            cpu: "unknown".into(),
            gpu: "unknown".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchCell {
    pub pipeline: String,
    pub config: BenchConfig,
    pub outcome: std::result::Result<BenchReport, String>,
}

#[derive(Debug, Clone)]
pub struct BenchTable {
    pub hardware: HardwareInfo,
    pub cells: Vec<BenchCell>,
}

/// A named stage under test.
pub type BenchStage<'a, T> = (String, Box<dyn FnMut(&[T]) -> std::result::Result<(), String> + 'a>);

/// Every pipeline crossed with every config, run one after another in
/// pipeline-major order. Each cell draws a fresh workload; a failing cell is
/// recorded and the rest still run.
pub fn bench_matrix<T, I>(
    pipelines: &mut [BenchStage<'_, T>],
    cfgs: &[BenchConfig],
    mut workload: impl FnMut() -> I,
    hardware: HardwareInfo,
) -> Result<BenchTable>
where
    I: Iterator<Item = T>,
{
    if pipelines.is_empty() || cfgs.is_empty() {
        return Err(Error::EmptyInput("benchmark matrix needs pipelines and configs"));
    }
    let mut cells = Vec::with_capacity(pipelines.len() * cfgs.len());
    for (name, stage) in pipelines.iter_mut() {
        for cfg in cfgs {
            let mut frames = workload();
            let outcome = measure_fps(name, &mut *stage, &mut frames, cfg).map_err(|e| e.to_string());
            cells.push(BenchCell {
                pipeline: name.clone(),
                config: *cfg,
                outcome,
            });
        }
    }
    Ok(BenchTable { hardware, cells })
}

impl BenchTable {
    /// Raw per-repetition samples: `pipeline,batch_size,rep,fps`.
    pub fn raw_csv(&self) -> String {
        let mut out = String::from("pipeline,batch_size,rep,fps\n");
        for cell in &self.cells {
            if let Ok(r) = &cell.outcome {
                for (i, f) in r.fps.iter().enumerate() {
                    out.push_str(&format!("{},{},{},{:.3}\n", cell.pipeline, cell.config.batch_size, i, f));
                }
            }
        }
        out
    }

    /// One row per pipeline, one mean-FPS column per batch size, headed by
    /// the hardware identification. Failed cells read `failed`.
    pub fn summary_csv(&self) -> String {
        let mut sizes: Vec<usize> = self.cells.iter().map(|c| c.config.batch_size).collect();
        sizes.sort_unstable();
        sizes.dedup();
        let mut names: Vec<&str> = Vec::new();
        for c in &self.cells {
            if !names.contains(&c.pipeline.as_str()) {
                names.push(&c.pipeline);
            }
        }
        let mut out = format!("# cpu: {}\n# gpu: {}\npipeline", self.hardware.cpu, self.hardware.gpu);
        for bs in &sizes {
            out.push_str(&format!(",bs{bs}_mean_fps,bs{bs}_std_fps"));
        }
        out.push('\n');
        for name in names {
            out.push_str(name);
            for bs in &sizes {
                let cell = self
                    .cells
                    .iter()
                    .find(|c| c.pipeline == name && c.config.batch_size == *bs);
                match cell.map(|c| &c.outcome) {
                    Some(Ok(r)) => out.push_str(&format!(",{:.2},{:.2}", r.mean_fps, r.std_fps)),
                    Some(Err(_)) => out.push_str(",failed,failed"),
                    None => out.push_str(",,"),
                }
            }
            out.push('\n');
        }
        out
    }
}
