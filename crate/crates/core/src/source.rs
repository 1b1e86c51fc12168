//! Frame sequences with their annotations.
//!
//! On disk a sequence is a directory holding `frames/NNNNNN.png` (8-bit
//! RGB, numbered from zero without gaps) and `annotations.jsonl`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::annotation::{read_annotations, AnnotationHeader, FrameAnnotation, Streams};
use crate::error::{invalid, Error, Result};
use crate::frame::RgbFrame;

pub trait FrameSource: Sync {
    fn frame_count(&self) -> usize;
    fn fps(&self) -> f64;
    fn dimensions(&self) -> (usize, usize);
    fn streams(&self) -> Streams;
    fn frame(&self, index: usize) -> Result<RgbFrame>;
    fn annotation(&self, index: usize) -> Result<FrameAnnotation>;

    fn load(&self, index: usize) -> Result<(RgbFrame, FrameAnnotation)> {
        Ok((self.frame(index)?, self.annotation(index)?))
    }
}

pub const FRAMES_DIR: &str = "frames";
pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";

pub fn frame_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(FRAMES_DIR).join(format!("{index:06}.png"))
}

pub struct DirSource {
    dir: PathBuf,
    header: AnnotationHeader,
    annotations: BTreeMap<usize, FrameAnnotation>,
    count: usize,
}

impl DirSource {
    /// Opens a sequence directory, loading annotations of the frames
    /// selected by `keep`.
    pub fn open(dir: &Path, keep: impl Fn(usize) -> bool) -> Result<Self> {
        let frames = dir.join(FRAMES_DIR);
        let entries = std::fs::read_dir(&frames).map_err(|e| Error::io(&frames, e))?;
        let mut count: usize = 0;
        for e in entries {
            let e = e.map_err(|e| Error::io(&frames, e))?;
            if e.path().extension().is_some_and(|x| x == "png") {
                count += 1;
            }
        }
        for i in [0, count.saturating_sub(1)] {
            if count > 0 && !frame_path(dir, i).is_file() {
                return Err(Error::format(&frames, "frame files are not numbered 0..n"));
            }
        }
        let (header, annotations) = read_annotations(&dir.join(ANNOTATIONS_FILE), keep)?;
        Ok(DirSource {
            dir: dir.to_path_buf(),
            header,
            annotations,
            count,
        })
    }

    pub fn header(&self) -> &AnnotationHeader {
        &self.header
    }
}

impl FrameSource for DirSource {
    fn frame_count(&self) -> usize {
        self.count
    }

    fn fps(&self) -> f64 {
        self.header.fps
    }

    fn dimensions(&self) -> (usize, usize) {
        (self.header.width, self.header.height)
    }

    fn streams(&self) -> Streams {
        self.header.streams()
    }

    fn frame(&self, index: usize) -> Result<RgbFrame> {
        let f = read_png(&frame_path(&self.dir, index))?;
        if (f.width, f.height) != self.dimensions() {
            return Err(invalid!(
                "frame {index} is {}x{}, annotations declare {}x{}",
                f.width,
                f.height,
                self.header.width,
                self.header.height
            ));
        }
        Ok(f)
    }

    fn annotation(&self, index: usize) -> Result<FrameAnnotation> {
        Ok(self
            .annotations
            .get(&index)
            .cloned()
            .unwrap_or_else(|| FrameAnnotation::empty(index)))
    }
}

pub fn write_png(path: &Path, frame: &RgbFrame) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), frame.width as u32, frame.height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header().map_err(|e| Error::format(path, e))?;
    w.write_image_data(&frame.pixels).map_err(|e| Error::format(path, e))?;
    w.finish().map_err(|e| Error::format(path, e))
}

pub fn read_png(path: &Path) -> Result<RgbFrame> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let dec = png::Decoder::new(std::io::BufReader::new(file));
    let mut reader = dec.read_info().map_err(|e| Error::format(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::format(path, e))?;
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::format(path, "frames must be 8-bit RGB"));
    }
    buf.truncate(info.buffer_size());
    RgbFrame::from_pixels(info.width as usize, info.height as usize, buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::AnnotationWriter;
    use crate::skeleton::Layout;

    #[test]
    fn directory_source_reads_frames_and_annotations() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join(FRAMES_DIR)).unwrap();
        let header = AnnotationHeader::new(5, 3, 30.0, vec![Layout::Coco17], true);
        let mut w = AnnotationWriter::create(&dir.path().join(ANNOTATIONS_FILE), &header).unwrap();
        for i in 0..3 {
            let mut f = RgbFrame::black(5, 3);
            f.set(i, 1, [10 * i as u8, 200, 7]);
            write_png(&frame_path(dir.path(), i), &f).unwrap();
            if i != 1 {
                w.write(&FrameAnnotation {
                    frame_index: i,
                    persons: vec![],
                    masks: vec![vec![i as u32, 1, 14 - i as u32]],
                })
                .unwrap();
            }
        }
        w.finish().unwrap();

        let src = DirSource::open(dir.path(), |_| true).unwrap();
        assert_eq!(src.frame_count(), 3);
        assert_eq!(src.dimensions(), (5, 3));
        assert_eq!(src.frame(2).unwrap().get(2, 1), [20, 200, 7]);
        assert_eq!(src.annotation(2).unwrap().masks.len(), 1);
        assert_eq!(src.annotation(1).unwrap(), FrameAnnotation::empty(1));
        assert!(src.frame(3).is_err());
    }
}
