//! Column unfolding shared by convolution and transposed convolution.
//!
//! The "large" side is the convolution input (or transposed-convolution
//! output); the "small" side is the convolution output (or
//! transposed-convolution input). Both ops relate them through the same
//! kernel/stride/padding, so one `im2col`/`col2im` pair serves both.

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug)]
pub(crate) struct Geometry {
    pub channels: usize,
    pub large: [usize; 3],
    pub small: [usize; 3],
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

/// Range of small-side indices `o` with `0 <= o*s + k - p < n`.
fn valid_range(count: usize, n: usize, k: usize, s: usize, p: usize) -> (usize, usize) {
    let lo = if k >= p { 0 } else { (p - k).div_ceil(s) };
    let hi = if n + p > k { ((n + p - k - 1) / s + 1).min(count) } else { 0 };
    (lo.min(hi), hi)
}

impl Geometry {
    pub fn rows(&self) -> usize {
        self.channels * self.kernel.iter().product::<usize>()
    }

    pub fn cols(&self) -> usize {
        self.small.iter().product()
    }

    fn large_volume(&self) -> usize {
        self.large.iter().product()
    }

    /// Unfolds `x` (`channels × large`) into `rows × cols`.
    pub fn im2col<T: Scalar>(&self, x: &[T], out: &mut [T]) {
        let [kt, kh, kw] = self.kernel;
        let [st, sh, sw] = self.stride;
        let [pt, ph, pw] = self.padding;
        let [lt, lh, lw] = self.large;
        let [nt, nh, nw] = self.small;
        let ncols = self.cols();
        let lvol = self.large_volume();
        debug_assert_eq!(x.len(), self.channels * lvol);
        debug_assert_eq!(out.len(), self.rows() * ncols);

        let mut row = 0;
        for c in 0..self.channels {
            let xc = &x[c * lvol..(c + 1) * lvol];
            for a in 0..kt {
                let (t_lo, t_hi) = valid_range(nt, lt, a, st, pt);
                for b in 0..kh {
                    let (h_lo, h_hi) = valid_range(nh, lh, b, sh, ph);
                    for d in 0..kw {
                        let (w_lo, w_hi) = valid_range(nw, lw, d, sw, pw);
                        let dst = &mut out[row * ncols..(row + 1) * ncols];
                        row += 1;
                        for ot in 0..nt {
                            let plane = &mut dst[ot * nh * nw..(ot + 1) * nh * nw];
                            if ot < t_lo || ot >= t_hi {
                                plane.fill(T::zero());
                                continue;
                            }
                            let it = ot * st + a - pt;
                            for oh in 0..nh {
                                let line = &mut plane[oh * nw..(oh + 1) * nw];
                                if oh < h_lo || oh >= h_hi {
                                    line.fill(T::zero());
                                    continue;
                                }
                                let ih = oh * sh + b - ph;
                                let src = &xc[(it * lh + ih) * lw..(it * lh + ih + 1) * lw];
                                line[..w_lo].fill(T::zero());
                                line[w_hi..].fill(T::zero());
                                if w_lo < w_hi {
                                    let iw0 = w_lo * sw + d - pw;
                                    if sw == 1 {
                                        line[w_lo..w_hi].copy_from_slice(&src[iw0..iw0 + (w_hi - w_lo)]);
                                    } else {
                                        for (j, v) in line[w_lo..w_hi].iter_mut().enumerate() {
                                            *v = src[iw0 + j * sw];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Folds `cols` (`rows × cols`) back onto `x`, accumulating overlaps.
    pub fn col2im<T: Scalar>(&self, cols: &[T], x: &mut [T]) {
        let [kt, kh, kw] = self.kernel;
        let [st, sh, sw] = self.stride;
        let [pt, ph, pw] = self.padding;
        let [lt, lh, lw] = self.large;
        let [nt, nh, nw] = self.small;
        let ncols = self.cols();
        let lvol = self.large_volume();
        debug_assert_eq!(x.len(), self.channels * lvol);
        debug_assert_eq!(cols.len(), self.rows() * ncols);

        let mut row = 0;
        for c in 0..self.channels {
            let xc = &mut x[c * lvol..(c + 1) * lvol];
            for a in 0..kt {
                let (t_lo, t_hi) = valid_range(nt, lt, a, st, pt);
                for b in 0..kh {
                    let (h_lo, h_hi) = valid_range(nh, lh, b, sh, ph);
                    for d in 0..kw {
                        let (w_lo, w_hi) = valid_range(nw, lw, d, sw, pw);
                        let srcrow = &cols[row * ncols..(row + 1) * ncols];
                        row += 1;
                        if w_lo >= w_hi {
                            continue;
                        }
                        let iw0 = w_lo * sw + d - pw;
                        for ot in t_lo..t_hi {
                            let it = ot * st + a - pt;
                            for oh in h_lo..h_hi {
                                let ih = oh * sh + b - ph;
                                let dst = &mut xc[(it * lh + ih) * lw..(it * lh + ih + 1) * lw];
                                let src = &srcrow[(ot * nh + oh) * nw..(ot * nh + oh + 1) * nw];
                                if sw == 1 {
                                    for (o, &v) in dst[iw0..iw0 + (w_hi - w_lo)].iter_mut().zip(&src[w_lo..w_hi]) {
                                        *o = *o + v;
                                    }
                                } else {
                                    for (j, &v) in src[w_lo..w_hi].iter().enumerate() {
                                        let o = &mut dst[iw0 + j * sw];
                                        *o = *o + v;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_im2col(g: &Geometry, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; g.rows() * g.cols()];
        let mut row = 0;
        for c in 0..g.channels {
            for a in 0..g.kernel[0] {
                for b in 0..g.kernel[1] {
                    for d in 0..g.kernel[2] {
                        let mut col = 0;
                        for ot in 0..g.small[0] {
                            for oh in 0..g.small[1] {
                                for ow in 0..g.small[2] {
                                    let it = (ot * g.stride[0] + a) as isize - g.padding[0] as isize;
                                    let ih = (oh * g.stride[1] + b) as isize - g.padding[1] as isize;
                                    let iw = (ow * g.stride[2] + d) as isize - g.padding[2] as isize;
                                    let inside = (0..g.large[0] as isize).contains(&it)
                                        && (0..g.large[1] as isize).contains(&ih)
                                        && (0..g.large[2] as isize).contains(&iw);
                                    if inside {
                                        let idx = ((c * g.large[0] + it as usize) * g.large[1] + ih as usize)
                                            * g.large[2]
                                            + iw as usize;
                                        out[row * g.cols() + col] = x[idx];
                                    }
                                    col += 1;
                                }
                            }
                        }
                        row += 1;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn im2col_matches_naive_and_col2im_is_its_adjoint() {
        let g = Geometry {
            channels: 2,
            large: [5, 7, 6],
            small: [2, 4, 3],
            kernel: [3, 3, 2],
            stride: [2, 2, 2],
            padding: [0, 1, 0],
        };
        let n = g.channels * 5 * 7 * 6;
        let x: Vec<f64> = (0..n).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let mut cols = vec![0.0; g.rows() * g.cols()];
        g.im2col(&x, &mut cols);
        assert_eq!(cols, naive_im2col(&g, &x));

        // <im2col(x), y> == <x, col2im(y)>
        let y: Vec<f64> = (0..cols.len()).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
        let mut back = vec![0.0; n];
        g.col2im(&y, &mut back);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }
}
