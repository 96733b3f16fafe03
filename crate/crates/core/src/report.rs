//! Report files: analytics tables as CSV and three SVG charts.
//!
//! | file | content |
//! |------|---------|
//! | `timeline.csv` | `frame,label` |
//! | `frequencies.csv` | `class,predicted,truth` |
//! | `ztests.csv` | one row per tested class |
//! | `transitions.csv` | `from,to,count,prob` for non-zero counts |
//! | `dwell.csv` | `class,start_frame,length,duration_ms` |
//! | `metrics.csv` | `metric,value` |
//! | `bench_raw.csv`, `bench_summary.csv` | throughput samples and summary |
//! | `frequencies.svg` | grouped bars, predicted vs truth |
//! | `transitions.svg` | heatmap; diagonal cells grey and outside the colour scale |
//! | `timeline.svg` | one lane per class, one block per dwell segment |
//!
//! Output bytes depend only on the inputs. Missing inputs give header-only
//! tables and charts without data marks.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::analytics::{
    class_frequencies, compare_timelines, dwell_segments, transition_matrix, DwellSegment, LabeledTimeline,
    TransitionMatrix, ZTestResult,
};
use crate::bench::BenchTable;
use crate::error::{Error, Result};
use crate::ingest::ClassTaxonomy;
use crate::metrics::MetricsReport;

/// Lane and bar colours, one per class index (cycled).
const CLASS_COLORS: [&str; 7] = ["#e07b39", "#3a6ea5", "#7a9e3b", "#c9a227", "#2a9d8f", "#b23a48", "#7b5ea7"];
const PRED_COLOR: &str = "#3a6ea5";
const TRUTH_COLOR: &str = "#b0b0b0";

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyRow {
    pub class_index: usize,
    pub predicted: f64,
    pub truth: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct ReportInputs {
    pub taxonomy: ClassTaxonomy,
    pub timeline: Option<LabeledTimeline>,
    pub frequencies: Vec<FrequencyRow>,
    pub ztests: Vec<ZTestResult>,
    pub transitions: Option<TransitionMatrix>,
    pub dwell: Vec<DwellSegment>,
    pub metrics: MetricsReport,
    pub bench: Option<BenchTable>,
}

impl ReportInputs {
    /// Analytics of a predicted timeline, compared with `truth` when given.
    /// A timeline with fewer than two labelled frames gets no transition
    /// matrix.
    pub fn analyze(
        taxonomy: &ClassTaxonomy,
        predicted: &LabeledTimeline,
        truth: Option<&LabeledTimeline>,
        alpha: f64,
        collapse_runs: bool,
    ) -> Result<Self> {
        let k = taxonomy.len();
        let pred_freq = class_frequencies(predicted, k)?;
        let truth_freq = truth.map(|t| class_frequencies(t, k)).transpose()?;
        let frequencies = (0..k)
            .map(|c| FrequencyRow {
                class_index: c,
                predicted: pred_freq[c],
                truth: truth_freq.as_ref().map(|f| f[c]),
            })
            .collect();
        let ztests = truth
            .map(|t| compare_timelines(predicted, t, k, alpha))
            .transpose()?
            .unwrap_or_default();
        let transitions = match transition_matrix(predicted, k, collapse_runs) {
            Ok(m) => Some(m),
            Err(Error::InsufficientData(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            taxonomy: taxonomy.clone(),
            timeline: Some(predicted.clone()),
            frequencies,
            ztests,
            transitions,
            dwell: dwell_segments(predicted),
            metrics: MetricsReport::default(),
            bench: None,
        })
    }

    fn class_name(&self, c: Option<usize>) -> &str {
        c.and_then(|c| self.taxonomy.name(c)).unwrap_or("")
    }
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

/// Three decimals with negative zero folded, for stable SVG coordinates.
fn coord(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn svg_open(width: u32, height: u32) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"11\">\n<rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"#ffffff\"/>\n"
    )
}

pub fn timeline_csv(r: &ReportInputs) -> String {
    match &r.timeline {
        Some(t) => t.to_csv(&r.taxonomy),
        None => "frame,label\n".into(),
    }
}

pub fn frequencies_csv(r: &ReportInputs) -> String {
    let mut out = String::from("class,predicted,truth\n");
    for f in &r.frequencies {
        let truth = f.truth.map(fmt6).unwrap_or_default();
        let _ = writeln!(out, "{},{},{}", csv_field(r.class_name(Some(f.class_index))), fmt6(f.predicted), truth);
    }
    out
}

pub fn ztests_csv(r: &ReportInputs) -> String {
    let mut out = String::from("class,p_observed,p_expected,z,p_value,significant_raw,significant_bonferroni\n");
    for t in &r.ztests {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6e},{},{}",
            csv_field(r.class_name(Some(t.class_index))),
            fmt6(t.p_observed),
            fmt6(t.p_expected),
            fmt6(t.z),
            t.p_value,
            t.significant_raw,
            t.significant_bonferroni
        );
    }
    out
}

pub fn transitions_csv(r: &ReportInputs) -> String {
    let mut out = String::from("from,to,count,prob\n");
    if let Some(m) = &r.transitions {
        for (a, row) in m.counts.iter().enumerate() {
            for (b, &n) in row.iter().enumerate() {
                if n > 0 {
                    let _ = writeln!(
                        out,
                        "{},{},{},{}",
                        csv_field(r.class_name(Some(a))),
                        csv_field(r.class_name(Some(b))),
                        n,
                        fmt6(m.probs[a][b])
                    );
                }
            }
        }
    }
    out
}

pub fn dwell_csv(r: &ReportInputs) -> String {
    let mut out = String::from("class,start_frame,length,duration_ms\n");
    for d in &r.dwell {
        let _ = writeln!(
            out,
            "{},{},{},{:.3}",
            csv_field(r.class_name(d.class)),
            d.start_frame,
            d.length,
            d.duration_ms
        );
    }
    out
}

const BAR_TOP: f64 = 20.0;
const BAR_PLOT_HEIGHT: f64 = 200.0;

/// Grouped bar chart. Bar heights are proportional to the frequencies, with
/// the largest value filling the plot height.
pub fn frequency_svg(r: &ReportInputs) -> String {
    let n = r.frequencies.len().max(1);
    let group_w = 90.0;
    let width = (60.0 + group_w * n as f64) as u32;
    let height = (BAR_TOP + BAR_PLOT_HEIGHT + 60.0) as u32;
    let base = BAR_TOP + BAR_PLOT_HEIGHT;
    let mut out = svg_open(width, height);
    let max = r
        .frequencies
        .iter()
        .flat_map(|f| [Some(f.predicted), f.truth])
        .flatten()
        .fold(0.0f64, f64::max);
    let _ = writeln!(
        out,
        "<line x1=\"40\" y1=\"{b}\" x2=\"{w}\" y2=\"{b}\" stroke=\"#000000\"/>",
        b = coord(base),
        w = width - 10
    );
    for (i, f) in r.frequencies.iter().enumerate() {
        let x0 = 50.0 + group_w * i as f64;
        let name = xml_escape(r.class_name(Some(f.class_index)));
        let bars = [("predicted", PRED_COLOR, Some(f.predicted)), ("truth", TRUTH_COLOR, f.truth)];
        for (j, (series, color, v)) in bars.iter().enumerate() {
            let Some(v) = v else { continue };
            let h = if max > 0.0 { v / max * BAR_PLOT_HEIGHT } else { 0.0 };
            let _ = writeln!(
                out,
                "<rect class=\"bar {series}\" data-class=\"{name}\" data-value=\"{}\" x=\"{}\" y=\"{}\" width=\"30.000\" height=\"{}\" fill=\"{color}\"/>",
                fmt6(*v),
                coord(x0 + 32.0 * j as f64),
                coord(base - h),
                coord(h),
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{name}</text>",
            coord(x0 + 31.0),
            coord(base + 16.0)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// White to dark blue.
fn heat_color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let mix = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(255.0, 8.0), mix(255.0, 48.0), mix(255.0, 107.0))
}

/// Row-normalized transition heatmap. The colour scale spans the largest
/// off-diagonal probability; self-loops are printed but drawn grey.
pub fn transition_svg(r: &ReportInputs) -> String {
    let k = r.taxonomy.len();
    let cell = 60.0;
    let left = 150.0;
    let top = 30.0;
    let side = (left + cell * k as f64 + 20.0) as u32;
    let mut out = svg_open(side, (top + cell * k as f64 + 20.0) as u32);
    let Some(m) = &r.transitions else {
        out.push_str("</svg>\n");
        return out;
    };
    let max_off = (0..k)
        .flat_map(|a| (0..k).filter(move |&b| b != a).map(move |b| (a, b)))
        .map(|(a, b)| m.probs[a][b])
        .fold(0.0f64, f64::max);
    for a in 0..k {
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
            coord(left - 6.0),
            coord(top + cell * a as f64 + cell / 2.0 + 4.0),
            xml_escape(r.class_name(Some(a)))
        );
        for b in 0..k {
            let p = m.probs[a][b];
            let fill = if a == b {
                "#d9d9d9".to_string()
            } else if max_off > 0.0 {
                heat_color(p / max_off)
            } else {
                heat_color(0.0)
            };
            let (x, y) = (left + cell * b as f64, top + cell * a as f64);
            let _ = writeln!(
                out,
                "<rect class=\"cell{}\" data-from=\"{a}\" data-to=\"{b}\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{fill}\" stroke=\"#ffffff\"/>",
                if a == b { " self" } else { "" },
                coord(x),
                coord(y),
                coord(cell),
                coord(cell)
            );
            let ink = if a != b && max_off > 0.0 && p / max_off > 0.6 { "#ffffff" } else { "#000000" };
            let _ = writeln!(
                out,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"{ink}\">{p:.2}</text>",
                coord(x + cell / 2.0),
                coord(y + cell / 2.0 + 4.0)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Strip chart: one lane per class, one block per dwell segment on it.
pub fn timeline_svg(r: &ReportInputs) -> String {
    let k = r.taxonomy.len();
    let (left, lane, plot_w) = (150.0, 18.0, 900.0);
    let height = (20.0 + lane * k as f64 + 20.0) as u32;
    let mut out = svg_open((left + plot_w + 20.0) as u32, height);
    for c in 0..k {
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
            coord(left - 6.0),
            coord(20.0 + lane * c as f64 + lane - 5.0),
            xml_escape(r.class_name(Some(c)))
        );
    }
    let total: usize = r.dwell.iter().map(|d| d.length).sum();
    if total > 0 {
        let scale = plot_w / total as f64;
        let mut offset = 0usize;
        for d in &r.dwell {
            if let Some(c) = d.class {
                let _ = writeln!(
                    out,
                    "<rect class=\"segment\" data-start=\"{}\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>",
                    d.start_frame,
                    coord(left + offset as f64 * scale),
                    coord(20.0 + lane * c as f64 + 1.0),
                    coord(d.length as f64 * scale),
                    coord(lane - 2.0),
                    CLASS_COLORS[c % CLASS_COLORS.len()]
                );
            }
            offset += d.length;
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Writes every report file into `dir`, creating it if needed, and returns
/// the paths written in a fixed order.
pub fn emit_report(dir: &Path, r: &ReportInputs) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (bench_raw, bench_summary) = match &r.bench {
        Some(b) => (b.raw_csv(), b.summary_csv()),
        None => ("pipeline,batch_size,rep,fps\n".to_string(), "pipeline\n".to_string()),
    };
    let files = [
        ("timeline.csv", timeline_csv(r)),
        ("frequencies.csv", frequencies_csv(r)),
        ("ztests.csv", ztests_csv(r)),
        ("transitions.csv", transitions_csv(r)),
        ("dwell.csv", dwell_csv(r)),
        ("metrics.csv", r.metrics.to_csv()),
        ("bench_raw.csv", bench_raw),
        ("bench_summary.csv", bench_summary),
        ("frequencies.svg", frequency_svg(r)),
        ("transitions.svg", transition_svg(r)),
        ("timeline.svg", timeline_svg(r)),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attr(tag: &str, name: &str) -> f64 {
        let key = format!(" {name}=\"");
        let start = tag.find(&key).unwrap() + key.len();
        let end = start + tag[start..].find('"').unwrap();
        tag[start..end].parse().unwrap()
    }

    fn sample() -> ReportInputs {
        let tax = ClassTaxonomy::default();
        let pred = LabeledTimeline::from_labels("s", 25.0, vec![Some(0), Some(0), Some(1), None, Some(1), Some(2)]);
        let truth = LabeledTimeline::from_labels("s", 25.0, vec![Some(0), Some(1), Some(1), None, Some(1), Some(2)]);
        ReportInputs::analyze(&tax, &pred, Some(&truth), 0.05, false).unwrap()
    }

    #[test]
    fn empty_inputs_give_headers_only() {
        let r = ReportInputs::default();
        assert_eq!(timeline_csv(&r), "frame,label\n");
        assert_eq!(frequencies_csv(&r), "class,predicted,truth\n");
        assert_eq!(transitions_csv(&r).lines().count(), 1);
        assert_eq!(dwell_csv(&r).lines().count(), 1);
        assert_eq!(ztests_csv(&r).lines().count(), 1);
        assert!(!frequency_svg(&r).contains("class=\"bar"));
        assert!(!transition_svg(&r).contains("class=\"cell"));
    }

    #[test]
    fn bar_heights_are_proportional() {
        let r = ReportInputs {
            taxonomy: ClassTaxonomy::new(["a", "b", "c"]).unwrap(),
            frequencies: [0.5, 0.3, 0.2]
                .iter()
                .enumerate()
                .map(|(i, &p)| FrequencyRow { class_index: i, predicted: p, truth: None })
                .collect(),
            ..Default::default()
        };
        let svg = frequency_svg(&r);
        let heights: Vec<f64> = svg
            .lines()
            .filter(|l| l.starts_with("<rect class=\"bar"))
            .map(|l| attr(l, "height"))
            .collect();
        assert_eq!(heights.len(), 3);
        assert!((heights[1] / heights[0] - 0.6).abs() < 1e-4);
        assert!((heights[2] / heights[0] - 0.4).abs() < 1e-4);
    }

    #[test]
    fn heatmap_scale_ignores_diagonal() {
        let r = sample();
        let svg = transition_svg(&r);
        let selfs = svg.lines().filter(|l| l.contains("class=\"cell self\"")).count();
        assert_eq!(selfs, 7);
        assert!(svg.lines().filter(|l| l.contains("class=\"cell self\"")).all(|l| l.contains("#d9d9d9")));
        // Only class 1 -> 2 (probability 1) reaches the top of the scale.
        assert_eq!(svg.matches("fill=\"#08306b\"").count(), 1);
    }

    #[test]
    fn timeline_blocks_cover_labelled_frames() {
        let r = sample();
        let svg = timeline_svg(&r);
        let total: f64 = svg
            .lines()
            .filter(|l| l.starts_with("<rect class=\"segment\""))
            .map(|l| attr(l, "width"))
            .sum();
        assert!((total - 900.0 * 5.0 / 6.0).abs() < 1e-2);
    }

    #[test]
    fn emitted_files_are_deterministic() {
        let r = sample();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let pa = emit_report(a.path(), &r).unwrap();
        let pb = emit_report(b.path(), &r).unwrap();
        assert_eq!(pa.len(), 11);
        for (x, y) in pa.iter().zip(&pb) {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
        }
    }

    #[test]
    fn unwritable_directory() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain");
        fs::write(&file, b"x").unwrap();
        assert!(matches!(emit_report(&file.join("sub"), &sample()), Err(Error::Io { .. })));
    }

    #[test]
    fn csv_tables() {
        let r = sample();
        assert!(frequencies_csv(&r).contains("Infant,0.400000,0.200000\n"));
        assert!(dwell_csv(&r).starts_with("class,start_frame,length,duration_ms\nInfant,0,2,80.000\n"));
        assert!(dwell_csv(&r).contains(",3,1,40.000\n"));
        assert!(transitions_csv(&r).contains("Infant,Infant,1,0.500000\n"));
    }
}
