//! Fixed-length clips and their on-disk store.
//!
//! A store is a binary file:
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic `AVWSTORE` |
//! | 4     | format version, u32 LE |
//! | 4     | header length `n`, u32 LE |
//! | n     | JSON header: variant, count, shape, fps, provenance |
//! | ...   | `count × 75 × 64 × 64` f32 LE values |
//!
//! with a sidecar CSV index `window_index,start_time,end_time,label`; the
//! label is empty for unlabelled windows.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use cae_engine::{Shape, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::frame::FRAME_SIDE;
use crate::provenance::Provenance;
use crate::variant::VariantKind;

pub const WINDOW_FRAMES: usize = 75;
pub const FRAME_PIXELS: usize = FRAME_SIDE * FRAME_SIDE;
pub const WINDOW_LEN: usize = WINDOW_FRAMES * FRAME_PIXELS;
pub const WINDOW_SHAPE: Shape = Shape::new(1, WINDOW_FRAMES, FRAME_SIDE, FRAME_SIDE);

const MAGIC: &[u8; 8] = b"AVWSTORE";
const STORE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Risk,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Risk => "risk",
        }
    }
}

/// 75 frames of 64×64 values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub index: usize,
    pub start_time: f64,
    pub end_time: f64,
    pub label: Option<Label>,
    pub data: Vec<f32>,
}

impl Window {
    pub fn is_risk(&self) -> bool {
        self.label == Some(Label::Risk)
    }

    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::from_vec(WINDOW_SHAPE, self.data.clone()).expect("window length is fixed")
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.data[t * FRAME_PIXELS..(t + 1) * FRAME_PIXELS]
    }
}

/// Groups consecutive frames into disjoint windows; a trailing remainder
/// shorter than one window is dropped.
pub fn make_windows(frames: &[Vec<f32>], fps: f64) -> Result<Vec<Window>> {
    if fps <= 0.0 || !fps.is_finite() {
        return Err(invalid!("frame rate must be positive, got {fps}"));
    }
    for (i, f) in frames.iter().enumerate() {
        if f.len() != FRAME_PIXELS {
            return Err(invalid!("frame {i} has {} values, expected {FRAME_PIXELS}", f.len()));
        }
        if f.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid!("frame {i} has values outside [0, 1]"));
        }
    }
    Ok(frames
        .chunks_exact(WINDOW_FRAMES)
        .enumerate()
        .map(|(k, chunk)| {
            let (start_time, end_time) = window_span(k, fps);
            Window {
                index: k,
                start_time,
                end_time,
                label: None,
                data: chunk.concat(),
            }
        })
        .collect())
}

pub fn window_span(k: usize, fps: f64) -> (f64, f64) {
    let len = WINDOW_FRAMES as f64;
    (k as f64 * len / fps, (k + 1) as f64 * len / fps)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoreHeader {
    pub variant: VariantKind,
    pub count: usize,
    pub shape: [usize; 3],
    pub fps: f64,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowSet {
    pub variant: VariantKind,
    pub fps: f64,
    pub provenance: Provenance,
    pub windows: Vec<Window>,
}

pub fn index_path(store: &Path) -> PathBuf {
    store.with_extension("csv")
}

impl WindowSet {
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = StoreHeader {
            variant: self.variant,
            count: self.windows.len(),
            shape: [WINDOW_FRAMES, FRAME_SIDE, FRAME_SIDE],
            fps: self.fps,
            provenance: self.provenance.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::format(path, e))?;
        let io = |e| Error::io(path, e);
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        out.write_all(MAGIC).map_err(io)?;
        out.write_all(&STORE_VERSION.to_le_bytes()).map_err(io)?;
        out.write_all(&(json.len() as u32).to_le_bytes()).map_err(io)?;
        out.write_all(&json).map_err(io)?;
        for w in &self.windows {
            let mut buf = Vec::with_capacity(WINDOW_LEN * 4);
            for v in &w.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            out.write_all(&buf).map_err(io)?;
        }
        out.flush().map_err(io)?;

        let idx = index_path(path);
        let mut csv = format!("{INDEX_HEADER}\n");
        for w in &self.windows {
            let label = w.label.map(Label::as_str).unwrap_or("");
            csv.push_str(&format!("{},{},{},{label}\n", w.index, w.start_time, w.end_time));
        }
        std::fs::write(&idx, csv).map_err(|e| Error::io(&idx, e))
    }

    /// Reads only the store header.
    pub fn read_header(path: &Path) -> Result<StoreHeader> {
        let mut input = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
        read_header(&mut input, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut input = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
        let header = read_header(&mut input, path)?;

        let spans = read_index(&index_path(path))?;
        if spans.len() != header.count {
            return Err(Error::format(
                path,
                format!("index lists {} windows, store holds {}", spans.len(), header.count),
            ));
        }
        let mut windows = Vec::with_capacity(header.count);
        let mut buf = vec![0u8; WINDOW_LEN * 4];
        for (index, start_time, end_time, label) in spans {
            input
                .read_exact(&mut buf)
                .map_err(|_| Error::format(path, format!("truncated at window {index}")))?;
            let data = buf
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            windows.push(Window {
                index,
                start_time,
                end_time,
                label,
                data,
            });
        }
        if input.read(&mut [0u8; 1]).map_err(|e| Error::io(path, e))? != 0 {
            return Err(Error::format(path, "trailing bytes after the last window"));
        }
        Ok(WindowSet {
            variant: header.variant,
            fps: header.fps,
            provenance: header.provenance,
            windows,
        })
    }
}

fn read_header(input: &mut impl Read, path: &Path) -> Result<StoreHeader> {
    let mut fixed = [0u8; 16];
    input
        .read_exact(&mut fixed)
        .map_err(|_| Error::format(path, "truncated window store header"))?;
    if &fixed[..8] != MAGIC {
        return Err(Error::format(path, "not a window store"));
    }
    let version = u32::from_le_bytes(fixed[8..12].try_into().unwrap());
    if version != STORE_VERSION {
        return Err(Error::format(path, format!("unsupported store version {version}")));
    }
    let n = u32::from_le_bytes(fixed[12..16].try_into().unwrap()) as usize;
    let mut json = vec![0u8; n];
    input
        .read_exact(&mut json)
        .map_err(|_| Error::format(path, "truncated window store header"))?;
    let header: StoreHeader = serde_json::from_slice(&json).map_err(|e| Error::format(path, e))?;
    if header.shape != [WINDOW_FRAMES, FRAME_SIDE, FRAME_SIDE] {
        return Err(Error::format(path, format!("unsupported window shape {:?}", header.shape)));
    }
    Ok(header)
}

const INDEX_HEADER: &str = "window_index,start_time,end_time,label";

type IndexRow = (usize, f64, f64, Option<Label>);

fn read_index(path: &Path) -> Result<Vec<IndexRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if n == 0 {
            if line != INDEX_HEADER {
                return Err(Error::format(path, format!("expected header `{INDEX_HEADER}`")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::format(path, format!("line {}: malformed index row", n + 1));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad());
        }
        let label = match f[3] {
            "" => None,
            "normal" => Some(Label::Normal),
            "risk" => Some(Label::Risk),
            _ => return Err(bad()),
        };
        out.push((
            f[0].parse().map_err(|_| bad())?,
            f[1].parse().map_err(|_| bad())?,
            f[2].parse().map_err(|_| bad())?,
            label,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frames(n: usize) -> Vec<Vec<f32>> {
        (0..n).map(|i| vec![(i % 256) as f32 / 255.0; FRAME_PIXELS]).collect()
    }

    #[test]
    fn window_counts_follow_remainder_rule() {
        assert_eq!(make_windows(&frames(150), 15.0).unwrap().len(), 2);
        assert_eq!(make_windows(&frames(151), 15.0).unwrap().len(), 2);
        assert_eq!(make_windows(&frames(74), 15.0).unwrap().len(), 0);
        // 9 h at 15 fps
        assert_eq!(9 * 3600 * 15 / WINDOW_FRAMES, 6480);
    }

    #[test]
    fn windows_are_five_seconds_and_tile() {
        let w = make_windows(&frames(300), 15.0).unwrap();
        assert_eq!(w.len(), 4);
        for pair in w.windows(2) {
            assert_eq!(pair[0].end_time, pair[1].start_time);
        }
        assert_eq!((w[1].start_time, w[1].end_time), (5.0, 10.0));
        assert_eq!(w[1].frame(0)[0], 75.0 / 255.0);
        assert!(w.iter().all(|x| x.data.len() == WINDOW_LEN));
    }

    #[test]
    fn out_of_range_frames_are_rejected() {
        let mut f = frames(75);
        f[3][7] = 1.5;
        assert!(make_windows(&f, 15.0).is_err());
        assert!(make_windows(&frames(75)[..74].iter().cloned().chain([vec![0.0; 3]]).collect::<Vec<_>>(), 15.0).is_err());
    }

    #[test]
    fn store_roundtrip_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        let set = WindowSet {
            variant: VariantKind::MaskBg,
            fps: 15.0,
            provenance: Provenance::new("abc", 3),
            windows: make_windows(&frames(225), 15.0).unwrap(),
        };
        let mut set = set;
        set.windows[1].label = Some(Label::Risk);
        set.windows[2].label = Some(Label::Normal);
        set.save(&path).unwrap();
        assert_eq!(WindowSet::load(&path).unwrap(), set);
        assert_eq!(WindowSet::read_header(&path).unwrap().count, 3);

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        assert!(WindowSet::load(&path).is_err());
        std::fs::write(&path, &bytes[..10]).unwrap();
        assert!(WindowSet::load(&path).is_err());
    }
}
