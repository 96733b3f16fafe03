//! Session inputs: gaze logs, annotations, frames, splits and flip augmentation.

mod annotations;
mod augment;
mod frames;
mod gaze;
mod image;
mod split;
mod taxonomy;

pub(crate) use self::image::HeaderCursor;
pub use annotations::{parse_annotations, write_annotations, AnnotatedFrame, ANNOTATION_HEADER};
pub use augment::{augment_flips, flip_diagonal, flip_horizontal, flip_vertical};
pub use frames::{DirectoryFrames, FrameSource};
pub use gaze::{parse_gaze_log, write_gaze_log, FrameSize, GazeRecord, GAZE_HEADER};
pub use image::Image;
pub use split::{split_dataset, SplitManifest};
pub use taxonomy::{ClassTaxonomy, DEFAULT_CLASSES};
