use crate::error::{invalid, Result};

/// Side length of the square frames fed to the models.
pub const FRAME_SIDE: usize = 64;

pub type Rgb = [u8; 3];

pub const BLACK: Rgb = [0, 0, 0];
pub const WHITE: Rgb = [255, 255, 255];

/// Interleaved 8-bit RGB image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbFrame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl RgbFrame {
    pub fn filled(width: usize, height: usize, color: Rgb) -> Self {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            pixels.extend_from_slice(&color);
        }
        RgbFrame {
            width,
            height,
            pixels,
        }
    }

    pub fn black(width: usize, height: usize) -> Self {
        RgbFrame {
            width,
            height,
            pixels: vec![0; width * height * 3],
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height * 3 {
            return Err(invalid!(
                "{width}x{height} RGB frame needs {} bytes, got {}",
                width * height * 3,
                pixels.len()
            ));
        }
        Ok(RgbFrame {
            width,
            height,
            pixels,
        })
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        let o = (y * self.width + x) * 3;
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, c: Rgb) {
        let o = (y * self.width + x) * 3;
        self.pixels[o..o + 3].copy_from_slice(&c);
    }

    /// Sets the pixel if `(x, y)` lies on the canvas.
    pub fn plot(&mut self, x: i64, y: i64, c: Rgb) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.set(x as usize, y as usize, c);
        }
    }

    pub fn colors(&self) -> impl Iterator<Item = Rgb> + '_ {
        self.pixels.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    pub fn contains_color(&self, c: Rgb) -> bool {
        self.colors().any(|p| p == c)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayFrame {
    pub width: usize,
    pub height: usize,
    pub values: Vec<u8>,
}

/// BT.601 luma in integer arithmetic, rounded to nearest.
pub fn luma(c: Rgb) -> u8 {
    let y = 299 * c[0] as u32 + 587 * c[1] as u32 + 114 * c[2] as u32;
    ((y + 500) / 1000) as u8
}

pub fn to_grayscale(frame: &RgbFrame) -> GrayFrame {
    GrayFrame {
        width: frame.width,
        height: frame.height,
        values: frame.colors().map(luma).collect(),
    }
}

/// Scales to [0, 1] and resamples bilinearly to `out_w × out_h` with
/// corner pixels aligned.
pub fn normalize_resize(frame: &GrayFrame, out_w: usize, out_h: usize) -> Result<Vec<f32>> {
    let (w, h) = (frame.width, frame.height);
    if w == 0 || h == 0 || out_w == 0 || out_h == 0 {
        return Err(invalid!("cannot resize {w}x{h} to {out_w}x{out_h}"));
    }
    if frame.values.len() != w * h {
        return Err(invalid!("{w}x{h} gray frame has {} values", frame.values.len()));
    }
    let norm: Vec<f32> = frame.values.iter().map(|&v| v as f32 / 255.0).collect();
    let xs = sample_positions(w, out_w);
    let ys = sample_positions(h, out_h);
    let mut out = Vec::with_capacity(out_w * out_h);
    for &(y0, y1, fy) in &ys {
        let (r0, r1) = (&norm[y0 * w..(y0 + 1) * w], &norm[y1 * w..(y1 + 1) * w]);
        for &(x0, x1, fx) in &xs {
            let top = lerp(r0[x0], r0[x1], fx);
            let bottom = lerp(r1[x0], r1[x1], fx);
            out.push(lerp(top, bottom, fy));
        }
    }
    Ok(out)
}

pub fn to_model_frame(frame: &RgbFrame) -> Result<Vec<f32>> {
    normalize_resize(&to_grayscale(frame), FRAME_SIDE, FRAME_SIDE)
}

fn lerp(a: f32, b: f32, t: f32) -> f32 {
    a + (b - a) * t
}

fn sample_positions(input: usize, output: usize) -> Vec<(usize, usize, f32)> {
    (0..output)
        .map(|i| {
            if output == 1 || input == 1 {
                return (0, 0, 0.0);
            }
            let src = (i * (input - 1)) as f64 / (output - 1) as f64;
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, (src - i0 as f64) as f32)
        })
        .collect()
}

/// Source indices kept when halving the frame rate: every even index.
pub fn temporal_subsample(count: usize) -> Vec<usize> {
    (0..count).step_by(2).collect()
}
