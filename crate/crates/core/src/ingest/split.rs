//! Seeded train/validation split, stratified per source video.
//!
//! Each video's frames are sorted, shuffled with a ChaCha8 stream seeded by
//! the manifest seed (videos visited in lexicographic order), and the first
//! `round(ratio * n)` go to training. The count is clamped to `[1, n - 1]`
//! for videos with at least two frames so every video lands in both sets;
//! the clamped value is always `floor` or `ceil` of `ratio * n`.
//!
//! Manifest text form:
//!
//! ```text
//! egogaze-split v1
//! seed 7
//! ratio 0.8
//! train <video> <id> <id> ...
//! val <video> <id> ...
//! ```

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const MANIFEST_MAGIC: &str = "egogaze-split v1";

#[derive(Debug, Clone, PartialEq)]
pub struct SplitManifest {
    pub seed: u64,
    pub ratio: f64,
    pub train: BTreeMap<String, Vec<u64>>,
    pub val: BTreeMap<String, Vec<u64>>,
}

fn train_count(n: usize, ratio: f64) -> usize {
    let raw = (ratio * n as f64).round() as usize;
    if n >= 2 {
        raw.clamp(1, n - 1)
    } else {
        raw.min(n)
    }
}

pub fn split_dataset(frames: &[(String, u64)], ratio: f64, seed: u64) -> Result<SplitManifest> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("no frames to split"));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidInput(format!("split ratio {ratio} not in (0, 1)")));
    }
    let mut by_video: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    for (video, id) in frames {
        if video.is_empty() || video.contains(char::is_whitespace) {
            return Err(Error::InvalidInput(format!("invalid video id {video:?}")));
        }
        by_video.entry(video.clone()).or_default().push(*id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = BTreeMap::new();
    let mut val = BTreeMap::new();
    for (video, mut ids) in by_video {
        ids.sort_unstable();
        ids.dedup();
        ids.shuffle(&mut rng);
        let k = train_count(ids.len(), ratio);
        let mut t = ids[..k].to_vec();
        let mut v = ids[k..].to_vec();
        t.sort_unstable();
        v.sort_unstable();
        train.insert(video.clone(), t);
        val.insert(video, v);
    }
    Ok(SplitManifest {
        seed,
        ratio,
        train,
        val,
    })
}

impl SplitManifest {
    pub fn train_len(&self) -> usize {
        self.train.values().map(Vec::len).sum()
    }

    pub fn val_len(&self) -> usize {
        self.val.values().map(Vec::len).sum()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{MANIFEST_MAGIC}\nseed {}\nratio {}\n", self.seed, self.ratio);
        for (tag, map) in [("train", &self.train), ("val", &self.val)] {
            for (video, ids) in map {
                out.push_str(tag);
                out.push(' ');
                out.push_str(video);
                for id in ids {
                    out.push_str(&format!(" {id}"));
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        if lines.next().map(|(_, l)| l.trim()) != Some(MANIFEST_MAGIC) {
            return Err(Error::format(0, format!("missing `{MANIFEST_MAGIC}` header")));
        }
        let mut seed = None;
        let mut ratio = None;
        let mut train = BTreeMap::new();
        let mut val = BTreeMap::new();
        for (row, line) in lines {
            let mut parts = line.split_whitespace();
            let Some(tag) = parts.next() else { continue };
            let bad = |what: &str| Error::format(row, format!("malformed {what} line"));
            match tag {
                "seed" => seed = Some(parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("seed"))?),
                "ratio" => ratio = Some(parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("ratio"))?),
                "train" | "val" => {
                    let video = parts.next().ok_or_else(|| bad(tag))?.to_string();
                    let ids = parts
                        .map(|p| p.parse::<u64>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|_| bad(tag))?;
                    let map = if tag == "train" { &mut train } else { &mut val };
                    map.insert(video, ids);
                }
                other => return Err(Error::format(row, format!("unknown manifest key {other:?}"))),
            }
        }
        Ok(Self {
            seed: seed.ok_or_else(|| Error::format(0, "manifest missing seed"))?,
            ratio: ratio.ok_or_else(|| Error::format(0, "manifest missing ratio"))?,
            train,
            val,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frames(videos: &[(&str, u64)]) -> Vec<(String, u64)> {
        videos
            .iter()
            .flat_map(|&(v, n)| (0..n).map(move |i| (v.to_string(), i)))
            .collect()
    }

    #[test]
    fn exact_ratio_single_video() {
        let m = split_dataset(&frames(&[("v1", 10)]), 0.8, 7).unwrap();
        assert_eq!(m.train_len(), 8);
        assert_eq!(m.val_len(), 2);
    }

    #[test]
    fn stratified_per_video() {
        let m = split_dataset(&frames(&[("a", 10), ("b", 10)]), 0.8, 7).unwrap();
        assert_eq!(m.train["a"].len(), 8);
        assert_eq!(m.train["b"].len(), 8);
        assert_eq!(m.val["a"].len(), 2);
        assert_eq!(m.val["b"].len(), 2);
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let f = frames(&[("a", 50), ("b", 13)]);
        let m1 = split_dataset(&f, 0.8, 7).unwrap();
        let m2 = split_dataset(&f, 0.8, 7).unwrap();
        assert_eq!(m1.to_text(), m2.to_text());
        let m3 = split_dataset(&f, 0.8, 8).unwrap();
        assert_ne!(m1.train, m3.train);
    }

    #[test]
    fn small_videos_land_in_both_sets() {
        let m = split_dataset(&frames(&[("a", 2)]), 0.8, 1).unwrap();
        assert_eq!((m.train["a"].len(), m.val["a"].len()), (1, 1));
        let m = split_dataset(&frames(&[("a", 1)]), 0.8, 1).unwrap();
        assert_eq!((m.train["a"].len(), m.val["a"].len()), (1, 0));
    }

    #[test]
    fn errors() {
        assert!(matches!(split_dataset(&[], 0.8, 0), Err(Error::EmptyInput(_))));
        assert!(split_dataset(&frames(&[("a", 3)]), 1.0, 0).is_err());
    }

    #[test]
    fn manifest_text_round_trip() {
        let m = split_dataset(&frames(&[("a", 7), ("b", 4)]), 0.75, 99).unwrap();
        let parsed = SplitManifest::parse(&m.to_text()).unwrap();
        assert_eq!(parsed, m);
    }
}
