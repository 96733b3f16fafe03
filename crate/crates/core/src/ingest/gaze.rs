//! Gaze log CSV: header `frame,timestamp_ms,x,y,valid`, one row per frame.
//!
//! Row numbers in errors count data rows from 1 (the header is row 0).

use crate::error::{Error, Result};
use crate::locate::PixelPoint;

pub const GAZE_HEADER: &str = "frame,timestamp_ms,x,y,valid";

/// Per-frame gaze estimate. Coordinates of invalid records are kept verbatim
/// and carry no meaning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GazeRecord {
    pub frame_index: u64,
    pub timestamp_ms: u64,
    pub x: i64,
    pub y: i64,
    pub valid: bool,
}

impl GazeRecord {
    pub fn new(frame_index: u64, timestamp_ms: u64, x: i64, y: i64, valid: bool) -> Self {
        Self {
            frame_index,
            timestamp_ms,
            x,
            y,
            valid,
        }
    }

    /// The gaze point, when the record is valid.
    pub fn point(&self) -> Option<PixelPoint> {
        self.valid
            .then(|| PixelPoint::new(self.x as u32, self.y as u32))
    }
}

/// Frame dimensions used to range-check valid coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameSize {
    pub width: u32,
    pub height: u32,
}

impl FrameSize {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }
}

fn parse_valid(field: &str) -> Option<bool> {
    match field.to_ascii_lowercase().as_str() {
        "1" | "true" => Some(true),
        "0" | "false" => Some(false),
        _ => None,
    }
}

pub fn parse_gaze_log(text: &str, frame: FrameSize) -> Result<Vec<GazeRecord>> {
    let mut lines = text.lines().map(|l| l.trim_end_matches('\r'));
    match lines.next() {
        Some(h) if h.trim() == GAZE_HEADER => {}
        _ => return Err(Error::format(0, format!("missing header `{GAZE_HEADER}`"))),
    }
    let mut out: Vec<GazeRecord> = Vec::new();
    let mut row = 0;
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        row += 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(Error::format(row, format!("expected 5 fields, found {}", fields.len())));
        }
        let int = |i: usize, what: &str| -> Result<i64> {
            fields[i]
                .parse::<i64>()
                .map_err(|_| Error::format(row, format!("malformed {what} {:?}", fields[i])))
        };
        let frame_index = int(0, "frame")?;
        let timestamp = int(1, "timestamp_ms")?;
        let (x, y) = (int(2, "x")?, int(3, "y")?);
        let valid = parse_valid(fields[4])
            .ok_or_else(|| Error::format(row, format!("malformed valid flag {:?}", fields[4])))?;
        if frame_index < 0 || timestamp < 0 {
            return Err(Error::Range {
                row,
                message: "frame and timestamp must be non-negative".into(),
            });
        }
        let frame_index = frame_index as u64;
        if out.last().is_some_and(|prev| prev.frame_index >= frame_index) {
            return Err(Error::Order { row });
        }
        let inside =
            (0..frame.width as i64).contains(&x) && (0..frame.height as i64).contains(&y);
        if valid && !inside {
            return Err(Error::Range {
                row,
                message: format!(
                    "gaze ({x}, {y}) outside {}x{} frame",
                    frame.width, frame.height
                ),
            });
        }
        out.push(GazeRecord::new(frame_index, timestamp as u64, x, y, valid));
    }
    Ok(out)
}

/// Normalized CSV form: canonical header, `1`/`0` validity, no blank lines.
pub fn write_gaze_log(records: &[GazeRecord]) -> String {
    let mut out = String::with_capacity(32 * (records.len() + 1));
    out.push_str(GAZE_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.frame_index,
            r.timestamp_ms,
            r.x,
            r.y,
            u8::from(r.valid)
        ));
    }
    out
}
