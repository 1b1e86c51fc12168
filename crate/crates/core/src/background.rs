use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::frame::RgbFrame;
use crate::mask::Bitmask;

/// Per-pixel, per-channel temporal median (lower median for even counts).
///
/// Pixels covered by the frame's exclusion mask are left out of that
/// pixel's sample. A pixel excluded in every frame falls back to black.
pub fn estimate_background(frames: &[RgbFrame], exclude: &[Option<Bitmask>]) -> Result<RgbFrame> {
    let first = frames.first().ok_or_else(|| invalid!("background needs at least one frame"))?;
    let (w, h) = (first.width, first.height);
    if !exclude.is_empty() && exclude.len() != frames.len() {
        return Err(invalid!("{} exclusion masks for {} frames", exclude.len(), frames.len()));
    }
    for f in frames {
        if (f.width, f.height) != (w, h) {
            return Err(invalid!("frame is {}x{}, expected {w}x{h}", f.width, f.height));
        }
    }
    for m in exclude.iter().flatten() {
        if (m.width, m.height) != (w, h) {
            return Err(invalid!("mask is {}x{}, expected {w}x{h}", m.width, m.height));
        }
    }

    let mut pixels = vec![0u8; w * h * 3];
    pixels.par_chunks_mut(w * 3).enumerate().for_each(|(y, row)| {
        let mut samples: [Vec<u8>; 3] = Default::default();
        for x in 0..w {
            for s in samples.iter_mut() {
                s.clear();
            }
            for (i, f) in frames.iter().enumerate() {
                if exclude.get(i).and_then(|m| m.as_ref()).is_some_and(|m| m.get(x, y)) {
                    continue;
                }
                let p = f.get(x, y);
                for c in 0..3 {
                    samples[c].push(p[c]);
                }
            }
            for c in 0..3 {
                let s = &mut samples[c];
                if !s.is_empty() {
                    let mid = (s.len() - 1) / 2;
                    row[x * 3 + c] = *s.select_nth_unstable(mid).1;
                }
            }
        }
    });
    RgbFrame::from_pixels(w, h, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(w: usize, h: usize, seed: u32) -> RgbFrame {
        let px = (0..w * h * 3).map(|i| (((i as u32).wrapping_mul(2654435761) ^ seed) >> 13) as u8).collect();
        RgbFrame::from_pixels(w, h, px).unwrap()
    }

    #[test]
    fn identical_frames_give_that_frame() {
        let f = noise(9, 7, 3);
        assert_eq!(estimate_background(&vec![f.clone(); 6], &[]).unwrap(), f);
        assert_eq!(estimate_background(&[f.clone()], &[]).unwrap(), f);
    }

    #[test]
    fn empty_sequence_is_rejected() {
        assert!(estimate_background(&[], &[]).is_err());
    }

    #[test]
    fn minority_occlusion_is_removed_without_masks() {
        let bg = noise(12, 8, 11);
        for n in 1..12usize {
            let occluded = (n - 1) / 2; // strictly fewer than half
            let frames: Vec<RgbFrame> = (0..n)
                .map(|i| {
                    let mut f = bg.clone();
                    if i < occluded {
                        for y in 2..6 {
                            for x in 3..9 {
                                f.set(x, y, [(i * 40) as u8, 255, (250 - i * 9) as u8]);
                            }
                        }
                    }
                    f
                })
                .collect();
            assert_eq!(estimate_background(&frames, &[]).unwrap(), bg, "n = {n}");
        }
    }

    #[test]
    fn masked_pixels_are_excluded_even_when_majority() {
        let bg = noise(10, 10, 5);
        let mut frames = Vec::new();
        let mut masks = Vec::new();
        for i in 0..5 {
            let mut f = bg.clone();
            let mut m = Bitmask::new(10, 10);
            if i < 4 {
                f.set(2, 2, [255, 0, 255]);
                m.set(2, 2);
            }
            frames.push(f);
            masks.push(Some(m));
        }
        let est = estimate_background(&frames, &masks).unwrap();
        assert_eq!(est, bg);
    }

    #[test]
    fn never_visible_pixel_is_black() {
        let f = RgbFrame::filled(3, 3, [200, 200, 200]);
        let mut m = Bitmask::new(3, 3);
        m.set(1, 1);
        let est = estimate_background(&[f.clone(), f], &[Some(m.clone()), Some(m)]).unwrap();
        assert_eq!(est.get(1, 1), [0, 0, 0]);
        assert_eq!(est.get(0, 0), [200, 200, 200]);
    }
}
