//! Semantic gaze classification and attention analytics for egocentric
//! eye-tracking sessions.
//!
//! A session is a gaze log plus its video frames. Each frame is reduced to a
//! square crop around the gaze point and an object mask grown from it; both
//! are embedded, scored against the class taxonomy, and fused into one label.
//! The resulting [`LabeledTimeline`] feeds frequency tests, transition
//! matrices and dwell segments, and the [`bench`] harness measures how many
//! frames per second the whole path sustains.
//!
//! ```
//! use egogaze::synth::{generate_synthetic_session, SyntheticSessionSpec};
//! use egogaze::locate::find_gaze_dot;
//!
//! let spec = SyntheticSessionSpec { frames: 3, width: 160, height: 90, ..Default::default() };
//! let session = generate_synthetic_session(&spec).unwrap();
//! let frame = session.render(0).unwrap();
//! assert_eq!(Some(find_gaze_dot(&frame)), session.gaze()[0].point());
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod bench;
pub mod classify;
mod error;
pub mod ingest;
pub mod locate;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod segment;
pub mod synth;

pub use analytics::LabeledTimeline;
pub use classify::{ClassScores, Embedding};
pub use error::{Error, Result};
pub use ingest::{ClassTaxonomy, GazeRecord, Image};
pub use locate::PixelPoint;

#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $file:literal) => {
            #[doc = include_str!(concat!("../../../book/src/", $file))]
            pub struct $name;
        };
    }
    chapter!(Introduction, "introduction.md");
    chapter!(Ingest, "ingest.md");
    chapter!(Locate, "locate.md");
    chapter!(Segment, "segment.md");
    chapter!(Classify, "classify.md");
    chapter!(PipelineRun, "pipeline.md");
    chapter!(Metrics, "metrics.md");
    chapter!(Analytics, "analytics.md");
    chapter!(Bench, "bench.md");
    chapter!(Cli, "cli.md");
}
