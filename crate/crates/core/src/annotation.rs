//! JSON-lines annotation files.
//!
//! The first line is a header describing the streams the file carries:
//!
//! ```json
//! {"format":"anonvad-annotations","version":1,"width":352,"height":240,"fps":30.0,"layouts":["coco17","body25"],"masks":true}
//! ```
//!
//! Every following line is one frame:
//!
//! ```json
//! {"frame_index":0,"persons":[{"layout":"coco17","joints":[[x,y,conf],...]}],"masks":[[runs...]]}
//! ```
//!
//! Masks are row-major run lengths alternating unset/set, starting with an
//! unset run. Frames without a record have no persons.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mask::Bitmask;
use crate::skeleton::{Layout, Person};

pub const ANNOTATION_FORMAT: &str = "anonvad-annotations";
pub const ANNOTATION_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationHeader {
    pub format: String,
    pub version: u32,
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub layouts: Vec<Layout>,
    pub masks: bool,
}

impl AnnotationHeader {
    pub fn new(width: usize, height: usize, fps: f64, layouts: Vec<Layout>, masks: bool) -> Self {
        AnnotationHeader {
            format: ANNOTATION_FORMAT.into(),
            version: ANNOTATION_VERSION,
            width,
            height,
            fps,
            layouts,
            masks,
        }
    }

    pub fn streams(&self) -> Streams {
        Streams {
            layouts: self.layouts.clone(),
            masks: self.masks,
        }
    }
}

/// Which annotation streams are available for a sequence.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Streams {
    pub layouts: Vec<Layout>,
    pub masks: bool,
}

impl Streams {
    pub fn has_layout(&self, layout: Layout) -> bool {
        self.layouts.contains(&layout)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameAnnotation {
    pub frame_index: usize,
    #[serde(default)]
    pub persons: Vec<Person>,
    #[serde(default)]
    pub masks: Vec<Vec<u32>>,
}

impl FrameAnnotation {
    pub fn empty(frame_index: usize) -> Self {
        FrameAnnotation {
            frame_index,
            ..Default::default()
        }
    }

    pub fn persons_with(&self, layout: Layout) -> Vec<Person> {
        self.persons.iter().filter(|p| p.layout == layout).cloned().collect()
    }

    pub fn decode_masks(&self, width: usize, height: usize) -> Result<Vec<Bitmask>> {
        self.masks.iter().map(|r| Bitmask::from_rle(width, height, r)).collect()
    }

    /// Union of all person masks, or `None` when there are none.
    pub fn union_mask(&self, width: usize, height: usize) -> Result<Option<Bitmask>> {
        let mut union: Option<Bitmask> = None;
        for m in self.decode_masks(width, height)? {
            match union.as_mut() {
                Some(u) => u.union_with(&m),
                None => union = Some(m),
            }
        }
        Ok(union)
    }

    fn check(&self, header: &AnnotationHeader) -> Result<()> {
        for p in &self.persons {
            if !header.layouts.contains(&p.layout) {
                return Err(invalid!("person with undeclared layout {}", p.layout));
            }
            p.validate()?;
        }
        if !header.masks && !self.masks.is_empty() {
            return Err(invalid!("masks present but the header declares none"));
        }
        for m in &self.masks {
            let total: u64 = m.iter().map(|&r| r as u64).sum();
            if total != (header.width * header.height) as u64 {
                return Err(invalid!("mask covers {total} pixels, frame has {}", header.width * header.height));
            }
        }
        Ok(())
    }
}

pub struct AnnotationWriter {
    out: BufWriter<File>,
    path: std::path::PathBuf,
}

impl AnnotationWriter {
    pub fn create(path: &Path, header: &AnnotationHeader) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = AnnotationWriter {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
        };
        w.line(header)?;
        Ok(w)
    }

    pub fn write(&mut self, record: &FrameAnnotation) -> Result<()> {
        self.line(record)
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }

    fn line<T: Serialize>(&mut self, value: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, value).map_err(|e| Error::format(&self.path, e))?;
        self.out.write_all(b"\n").map_err(|e| Error::io(&self.path, e))
    }
}

/// Reads the header and the records whose frame index satisfies `keep`.
pub fn read_annotations(
    path: &Path,
    keep: impl Fn(usize) -> bool,
) -> Result<(AnnotationHeader, BTreeMap<usize, FrameAnnotation>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::format(path, "empty annotation file"))?
        .map_err(|e| Error::io(path, e))?;
    let header: AnnotationHeader =
        serde_json::from_str(&first).map_err(|e| Error::format(path, format!("header: {e}")))?;
    if header.format != ANNOTATION_FORMAT || header.version != ANNOTATION_VERSION {
        return Err(Error::format(
            path,
            format!("unsupported header {} v{}", header.format, header.version),
        ));
    }
    let mut records = BTreeMap::new();
    for (n, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: FrameAnnotation =
            serde_json::from_str(&line).map_err(|e| Error::format(path, format!("line {}: {e}", n + 2)))?;
        if !keep(rec.frame_index) {
            continue;
        }
        rec.check(&header)
            .map_err(|e| Error::format(path, format!("line {}: {e}", n + 2)))?;
        records.insert(rec.frame_index, rec);
    }
    Ok((header, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn person(layout: Layout) -> Person {
        Person {
            layout,
            joints: vec![[1.0, 2.0, 0.5]; layout.joint_count()],
        }
    }

    #[test]
    fn file_roundtrip_with_filter() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.jsonl");
        let header = AnnotationHeader::new(4, 2, 30.0, vec![Layout::Coco17], true);
        let mut w = AnnotationWriter::create(&path, &header).unwrap();
        for i in 0..5 {
            w.write(&FrameAnnotation {
                frame_index: i,
                persons: vec![person(Layout::Coco17)],
                masks: vec![vec![1, 2, 5]],
            })
            .unwrap();
        }
        w.finish().unwrap();
        let (h, recs) = read_annotations(&path, |i| i % 2 == 0).unwrap();
        assert_eq!(h, header);
        assert_eq!(recs.keys().copied().collect::<Vec<_>>(), vec![0, 2, 4]);
        let m = recs[&2].union_mask(4, 2).unwrap().unwrap();
        assert_eq!(m.count(), 2);
    }

    #[test]
    fn undeclared_layout_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.jsonl");
        let header = AnnotationHeader::new(4, 2, 30.0, vec![Layout::Coco17], false);
        let mut w = AnnotationWriter::create(&path, &header).unwrap();
        w.write(&FrameAnnotation {
            frame_index: 0,
            persons: vec![person(Layout::Body25)],
            masks: vec![],
        })
        .unwrap();
        w.finish().unwrap();
        assert!(read_annotations(&path, |_| true).is_err());
    }

    #[test]
    fn bad_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.jsonl");
        std::fs::write(&path, "{\"format\":\"other\",\"version\":1,\"width\":1,\"height\":1,\"fps\":30,\"layouts\":[],\"masks\":false}\n").unwrap();
        assert!(read_annotations(&path, |_| true).is_err());
    }
}
