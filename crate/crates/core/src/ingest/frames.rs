use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::Image;
use crate::error::{Error, Result};

/// Supplies decoded frames by index. A video decoder can implement this to
/// replace the directory reader.
pub trait FrameSource: Send {
    fn load(&mut self, frame_index: u64) -> Result<Image>;
}

/// Directory of numbered `.ppm` / `.bmp` files, e.g. `000042.ppm`. The file
/// stem must parse as the frame index; leading zeros are ignored.
#[derive(Debug, Clone)]
pub struct DirectoryFrames {
    files: BTreeMap<u64, PathBuf>,
}

impl DirectoryFrames {
    pub fn open(dir: &Path) -> Result<Self> {
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = BTreeMap::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            let ext_ok = path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("ppm") || e.eq_ignore_ascii_case("bmp"));
            let index = path
                .file_stem()
                .and_then(|s| s.to_str())
                .and_then(|s| s.parse::<u64>().ok());
            if let (true, Some(i)) = (ext_ok, index) {
                files.insert(i, path);
            }
        }
        Ok(Self { files })
    }

    pub fn indices(&self) -> impl Iterator<Item = u64> + '_ {
        self.files.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    /// Canonical file name for frame `index`.
    pub fn file_name(index: u64) -> String {
        format!("{index:06}.ppm")
    }
}

impl FrameSource for DirectoryFrames {
    fn load(&mut self, frame_index: u64) -> Result<Image> {
        let path = self.files.get(&frame_index).ok_or_else(|| {
            Error::io(
                format!("frame {frame_index}"),
                std::io::Error::new(std::io::ErrorKind::NotFound, "no image file for frame"),
            )
        })?;
        Image::read(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_numbered_files() {
        let dir = tempfile::tempdir().unwrap();
        let a = Image::filled(2, 2, [1, 2, 3]).unwrap();
        let b = Image::filled(3, 1, [9, 9, 9]).unwrap();
        a.write(&dir.path().join(DirectoryFrames::file_name(0))).unwrap();
        b.write(&dir.path().join("12.bmp")).unwrap();
        fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let mut src = DirectoryFrames::open(dir.path()).unwrap();
        assert_eq!(src.indices().collect::<Vec<_>>(), vec![0, 12]);
        assert_eq!(src.load(0).unwrap(), a);
        assert_eq!(src.load(12).unwrap(), b);
        assert!(matches!(src.load(5), Err(Error::Io { .. })));
    }
}
