use crate::error::{invalid, Result};
use crate::frame::{Rgb, RgbFrame};

/// Binary per-person mask at frame resolution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bitmask {
    pub width: usize,
    pub height: usize,
    bits: Vec<bool>,
}

impl Bitmask {
    pub fn new(width: usize, height: usize) -> Self {
        Bitmask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize) {
        self.bits[y * self.width + x] = true;
    }

    /// Sets the bit if `(x, y)` lies inside the mask.
    pub fn plot(&mut self, x: i64, y: i64) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.set(x as usize, y as usize);
        }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn union_with(&mut self, other: &Bitmask) {
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
    }

    /// Inclusive `(x0, y0, x1, y1)` of the set bits.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for (i, _) in self.bits.iter().enumerate().filter(|(_, &b)| b) {
            let (x, y) = (i % self.width, i / self.width);
            bb = Some(match bb {
                None => (x, y, x, y),
                Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
            });
        }
        bb
    }

    /// Row-major run lengths, alternating unset/set and starting with an
    /// unset run (which may be zero).
    pub fn to_rle(&self) -> Vec<u32> {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0u32;
        for &b in &self.bits {
            if b != current {
                runs.push(len);
                current = b;
                len = 0;
            }
            len += 1;
        }
        runs.push(len);
        runs
    }

    pub fn from_rle(width: usize, height: usize, runs: &[u32]) -> Result<Self> {
        let total: u64 = runs.iter().map(|&r| r as u64).sum();
        if total != (width * height) as u64 {
            return Err(invalid!(
                "run lengths cover {total} pixels, mask is {width}x{height}"
            ));
        }
        let mut bits = Vec::with_capacity(width * height);
        for (i, &r) in runs.iter().enumerate() {
            bits.extend(std::iter::repeat(i % 2 == 1).take(r as usize));
        }
        Ok(Bitmask { width, height, bits })
    }
}

/// Paints `fill` wherever any mask is set.
pub fn render_mask(canvas: &mut RgbFrame, masks: &[Bitmask], fill: Rgb) -> Result<()> {
    for m in masks {
        if (m.width, m.height) != (canvas.width, canvas.height) {
            return Err(invalid!(
                "mask is {}x{}, canvas is {}x{}",
                m.width,
                m.height,
                canvas.width,
                canvas.height
            ));
        }
    }
    for m in masks {
        for (i, _) in m.bits.iter().enumerate().filter(|(_, &b)| b) {
            canvas.pixels[i * 3..i * 3 + 3].copy_from_slice(&fill);
        }
    }
    Ok(())
}
