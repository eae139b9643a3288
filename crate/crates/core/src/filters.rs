//! Gaussian smoothing of raw frames and median filtering of label masks.

use crate::error::{Error, Result};
use crate::imgcore::{GrayFrame, Label, LabelMask};

/// Truncation radius of the sampled Gaussian, `ceil(3 sigma)`.
pub fn gaussian_radius(sigma: f64) -> usize {
    (3.0 * sigma).ceil() as usize
}

/// Normalized 1-D sampled Gaussian of length `2r + 1`.
pub fn gaussian_kernel_1d(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!(
            "gaussian sigma must be positive, got {sigma}"
        )));
    }
    let r = gaussian_radius(sigma) as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= sum);
    Ok(k)
}

/// Separable Gaussian blur with replicate padding.
pub fn gaussian_smooth(frame: &GrayFrame, sigma: f64) -> Result<GrayFrame> {
    let kernel = gaussian_kernel_1d(sigma)?;
    let r = (kernel.len() / 2) as isize;
    let (w, h) = frame.dims();
    let src = frame.pixels();

    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;

    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (i, &k) in kernel.iter().enumerate() {
                acc += k * row[clamp(x as isize + i as isize - r, w)];
            }
            tmp[y * w + x] = acc;
        }
    }

    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (i, &k) in kernel.iter().enumerate() {
            let sy = clamp(y as isize + i as isize - r, h);
            let src_row = &tmp[sy * w..(sy + 1) * w];
            for (o, &s) in out[y * w..(y + 1) * w].iter_mut().zip(src_row) {
                *o += k * s;
            }
        }
    }
    out.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    Ok(GrayFrame::from_raw_unchecked(w, h, out))
}

pub(crate) fn check_kernel(kernel: usize) -> Result<()> {
    if kernel == 0 || kernel.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "median kernel must be odd and positive, got {kernel}"
        )));
    }
    Ok(())
}

/// Summed-area tables of the non-background labels, answering "how many
/// pixels of each label fall in a square window" in constant time. Window
/// slots outside the image count as background.
pub(crate) struct LabelIntegral {
    width: usize,
    height: usize,
    // (w + 1) x (h + 1) table per label 1..=3
    tables: [Vec<u32>; 3],
}

impl LabelIntegral {
    pub(crate) fn new(mask: &LabelMask) -> Self {
        let (w, h) = mask.dims();
        let stride = w + 1;
        let mut tables = [
            vec![0u32; stride * (h + 1)],
            vec![0u32; stride * (h + 1)],
            vec![0u32; stride * (h + 1)],
        ];
        let labels = mask.labels();
        for (t, table) in tables.iter_mut().enumerate() {
            let target = t as u8 + 1;
            for y in 0..h {
                let mut row_sum = 0u32;
                for x in 0..w {
                    row_sum += u32::from(labels[y * w + x] == target);
                    table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + row_sum;
                }
            }
        }
        Self {
            width: w,
            height: h,
            tables,
        }
    }

    /// Label histogram of the `kernel x kernel` window centered on `(x, y)`.
    pub(crate) fn window_counts(&self, x: usize, y: usize, kernel: usize) -> [u32; 4] {
        let half = kernel / 2;
        let x0 = x.saturating_sub(half);
        let y0 = y.saturating_sub(half);
        let x1 = (x + half + 1).min(self.width);
        let y1 = (y + half + 1).min(self.height);
        let stride = self.width + 1;
        let mut counts = [0u32; 4];
        let mut fg = 0;
        for (t, table) in self.tables.iter().enumerate() {
            let c = table[y1 * stride + x1] + table[y0 * stride + x0]
                - table[y0 * stride + x1]
                - table[y1 * stride + x0];
            counts[t + 1] = c;
            fg += c;
        }
        counts[0] = (kernel * kernel) as u32 - fg;
        counts
    }
}

/// Median of a label histogram whose total is odd.
fn histogram_median(counts: &[u32; 4], total: u32) -> u8 {
    let rank = total / 2;
    let mut cum = 0;
    for (label, &c) in counts.iter().enumerate() {
        cum += c;
        if cum > rank {
            return label as u8;
        }
    }
    unreachable!("histogram does not sum to window size")
}

/// `kernel x kernel` median of integer labels under `0 < 1 < 2 < 3`, zero
/// padded at the image border.
pub fn median_filter_mask(mask: &LabelMask, kernel: usize) -> Result<LabelMask> {
    check_kernel(kernel)?;
    if kernel == 1 {
        return Ok(mask.clone());
    }
    let (w, h) = mask.dims();
    let integral = LabelIntegral::new(mask);
    let total = (kernel * kernel) as u32;
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            out.push(histogram_median(
                &integral.window_counts(x, y, kernel),
                total,
            ));
        }
    }
    debug_assert!(out.iter().all(|&l| (l as usize) < Label::COUNT));
    Ok(LabelMask::from_raw_unchecked(w, h, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense_convolution(frame: &GrayFrame, sigma: f64) -> Vec<f64> {
        let r = (3.0 * sigma).ceil() as isize;
        let mut k = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                k.push((
                    (dx, dy),
                    (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp(),
                ));
            }
        }
        let norm: f64 = k.iter().map(|(_, w)| w).sum();
        let (w, h) = frame.dims();
        let mut out = vec![0.0; w * h];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut acc = 0.0;
                for &((dx, dy), wt) in &k {
                    let sx = (x + dx).clamp(0, w as isize - 1) as usize;
                    let sy = (y + dy).clamp(0, h as isize - 1) as usize;
                    acc += wt / norm * frame.get(sx, sy);
                }
                out[y as usize * w + x as usize] = acc;
            }
        }
        out
    }

    #[test]
    fn constant_image_is_preserved() {
        let f = GrayFrame::filled(7, 5, 0.3).unwrap();
        let s = gaussian_smooth(&f, 0.5).unwrap();
        assert!(s.pixels().iter().all(|&v| (v - 0.3).abs() < 1e-12));
    }

    #[test]
    fn impulse_center_weight() {
        let mut px = vec![0.0; 81];
        px[40] = 1.0;
        let f = GrayFrame::new(9, 9, px).unwrap();
        let s = gaussian_smooth(&f, 0.5).unwrap();
        // normalized 5x5 sampled kernel, center weight
        assert!((s.get(4, 4) - 0.6186935068229404).abs() < 1e-12);
        assert!((s.get(5, 4) - 0.08373106098253583).abs() < 1e-12);
        assert_eq!(gaussian_radius(0.5), 2);
    }

    #[test]
    fn rejects_non_positive_sigma() {
        let f = GrayFrame::filled(3, 3, 0.0).unwrap();
        assert!(gaussian_smooth(&f, 0.0).is_err());
        assert!(gaussian_smooth(&f, -1.0).is_err());
    }

    #[test]
    fn median_examples() {
        let mut labels = vec![2u8; 15 * 15];
        labels[7 * 15 + 7] = 0;
        let m = LabelMask::new(15, 15, labels).unwrap();
        let f = median_filter_mask(&m, 9).unwrap();
        assert_eq!(f.get(7, 7), 2);

        let ones = LabelMask::filled(12, 12, Label::RightVentricle);
        let f = median_filter_mask(&ones, 9).unwrap();
        assert_eq!(f.get(0, 0), 0);
        assert_eq!(f.get(6, 6), 1);

        assert_eq!(median_filter_mask(&m, 1).unwrap(), m);
        assert!(median_filter_mask(&m, 4).is_err());
        assert!(median_filter_mask(&m, 0).is_err());
    }

    #[test]
    fn window_counts_zero_pad() {
        let m = LabelMask::filled(3, 3, Label::LvCavity);
        let integral = LabelIntegral::new(&m);
        assert_eq!(integral.window_counts(0, 0, 3), [5, 0, 0, 4]);
        assert_eq!(integral.window_counts(1, 1, 5), [16, 0, 0, 9]);
    }

    proptest! {
        #[test]
        fn smooth_matches_dense(px in prop::collection::vec(0.0f64..=1.0, 16 * 16), sigma in 0.3f64..1.5) {
            let f = GrayFrame::new(16, 16, px).unwrap();
            let fast = gaussian_smooth(&f, sigma).unwrap();
            let dense = dense_convolution(&f, sigma);
            for (a, b) in fast.pixels().iter().zip(&dense) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn binary_median_is_majority(bits in prop::collection::vec(0u8..2, 10 * 10), k in prop::sample::select(vec![3usize, 5, 9])) {
            let m = LabelMask::new(10, 10, bits).unwrap();
            let f = median_filter_mask(&m, k).unwrap();
            let half = (k / 2) as isize;
            for y in 0..10isize {
                for x in 0..10isize {
                    let mut ones = 0;
                    for dy in -half..=half {
                        for dx in -half..=half {
                            let (sx, sy) = (x + dx, y + dy);
                            if (0..10).contains(&sx) && (0..10).contains(&sy) {
                                ones += m.get(sx as usize, sy as usize) as usize;
                            }
                        }
                    }
                    let majority = u8::from(2 * ones > k * k);
                    prop_assert_eq!(f.get(x as usize, y as usize), majority);
                }
            }
        }

        #[test]
        fn median_alphabet_closed(labels in prop::collection::vec(prop::sample::select(vec![0u8, 2, 3]), 64)) {
            let m = LabelMask::new(8, 8, labels).unwrap();
            let f = median_filter_mask(&m, 3).unwrap();
            prop_assert!(f.labels().iter().all(|l| m.labels().contains(l) || *l == 0));
        }
    }
}
