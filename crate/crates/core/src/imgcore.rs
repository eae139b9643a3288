//! Value types shared by the whole pipeline: grayscale frames, label masks,
//! superpixel maps and binary maps. All buffers are row-major, so pixel
//! `(x, y)` lives at index `y * width + x`.

use std::collections::VecDeque;
use std::fmt;

use crate::error::{Error, Result};

/// One anatomical label of a segmentation mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Label {
    Background = 0,
    RightVentricle = 1,
    Myocardium = 2,
    LvCavity = 3,
}

impl Label {
    pub const ALL: [Label; 4] = [
        Label::Background,
        Label::RightVentricle,
        Label::Myocardium,
        Label::LvCavity,
    ];

    /// The three cardiac structures that are scored.
    pub const STRUCTURES: [Label; 3] = [Label::RightVentricle, Label::Myocardium, Label::LvCavity];

    pub const COUNT: usize = 4;

    pub fn from_u8(value: u8) -> Result<Label> {
        match value {
            0 => Ok(Label::Background),
            1 => Ok(Label::RightVentricle),
            2 => Ok(Label::Myocardium),
            3 => Ok(Label::LvCavity),
            other => Err(Error::InvalidLabel(other as i64)),
        }
    }

    pub fn value(self) -> u8 {
        self as u8
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Label::Background => "BG",
            Label::RightVentricle => "RV",
            Label::Myocardium => "MYO",
            Label::LvCavity => "LV",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

pub(crate) fn ensure_same_dims(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            expected_width: expected.0,
            expected_height: expected.1,
            width: actual.0,
            height: actual.1,
        });
    }
    Ok(())
}

fn ensure_len(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::invalid(format!("empty image {width}x{height}")));
    }
    if width.checked_mul(height) != Some(len) {
        return Err(Error::invalid(format!(
            "buffer of {len} values does not match {width}x{height}"
        )));
    }
    Ok(())
}

/// A 2-D grayscale slice with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        ensure_len(width, height, pixels.len())?;
        for (i, &v) in pixels.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    x: i % width,
                    y: i / width,
                    value: v,
                });
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!(
                    "intensity {v} at pixel ({}, {}) is outside [0, 1]",
                    i % width,
                    i / width
                )));
            }
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Caller guarantees the invariants.
    pub(crate) fn from_raw_unchecked(width: usize, height: usize, pixels: Vec<f64>) -> Self {
        debug_assert_eq!(pixels.len(), width * height);
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }
}

/// Min-max rescale an arbitrary finite 2-D array into a [`GrayFrame`].
///
/// A constant image maps to all zeros.
pub fn normalize_intensity(width: usize, height: usize, raw: &[f64]) -> Result<GrayFrame> {
    ensure_len(width, height, raw.len())?;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for (i, &v) in raw.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                x: i % width,
                y: i / width,
                value: v,
            });
        }
        min = min.min(v);
        max = max.max(v);
    }
    let range = max - min;
    let pixels = if range > 0.0 {
        raw.iter()
            .map(|&v| ((v - min) / range).clamp(0.0, 1.0))
            .collect()
    } else {
        vec![0.0; raw.len()]
    };
    Ok(GrayFrame::from_raw_unchecked(width, height, pixels))
}

/// Per-pixel anatomical labels drawn from `{0, 1, 2, 3}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelMask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl LabelMask {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        ensure_len(width, height, labels.len())?;
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= Label::COUNT) {
            return Err(Error::InvalidLabel(bad as i64));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn filled(width: usize, height: usize, label: Label) -> Self {
        assert!(width > 0 && height > 0, "empty mask");
        Self {
            width,
            height,
            labels: vec![label.value(); width * height],
        }
    }

    pub(crate) fn from_raw_unchecked(width: usize, height: usize, labels: Vec<u8>) -> Self {
        debug_assert_eq!(labels.len(), width * height);
        debug_assert!(labels.iter().all(|&l| (l as usize) < Label::COUNT));
        Self {
            width,
            height,
            labels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label.value()).count()
    }

    pub fn is_uniform(&self) -> bool {
        self.labels.iter().all(|&l| l == self.labels[0])
    }

    /// Indicator map of `label`. Rejects values outside the alphabet.
    pub fn one_hot(&self, label: u8) -> Result<BinaryMap> {
        let label = Label::from_u8(label)?.value();
        let bits = self.labels.iter().map(|&l| u8::from(l == label)).collect();
        Ok(BinaryMap {
            width: self.width,
            height: self.height,
            bits,
        })
    }

    pub fn into_labels(self) -> Vec<u8> {
        self.labels
    }
}

/// Free-function form of [`LabelMask::one_hot`].
pub fn one_hot(mask: &LabelMask, label: u8) -> Result<BinaryMap> {
    mask.one_hot(label)
}

/// A `{0, 1}` per-pixel map: one-hot channels and error maps.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMap {
    width: usize,
    height: usize,
    bits: Vec<u8>,
}

impl BinaryMap {
    pub fn new(width: usize, height: usize, bits: Vec<u8>) -> Result<Self> {
        ensure_len(width, height, bits.len())?;
        if let Some(&bad) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::invalid(format!(
                "binary map value {bad} is not 0 or 1"
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub(crate) fn from_raw_unchecked(width: usize, height: usize, bits: Vec<u8>) -> Self {
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }
}

/// A partition of a frame into 4-connected cells indexed `0..cell_count`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SuperpixelMap {
    width: usize,
    height: usize,
    cells: Vec<u32>,
    cell_count: usize,
}

impl SuperpixelMap {
    /// Builds a map and checks every partition invariant, including
    /// connectivity of each cell.
    pub fn new(width: usize, height: usize, cells: Vec<u32>) -> Result<Self> {
        ensure_len(width, height, cells.len())?;
        let cell_count = cells.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
        let map = Self {
            width,
            height,
            cells,
            cell_count,
        };
        map.validate()?;
        Ok(map)
    }

    pub(crate) fn from_raw_unchecked(
        width: usize,
        height: usize,
        cells: Vec<u32>,
        cell_count: usize,
    ) -> Self {
        Self {
            width,
            height,
            cells,
            cell_count,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn cells(&self) -> &[u32] {
        &self.cells
    }

    pub fn cell_count(&self) -> usize {
        self.cell_count
    }

    pub fn cell_at(&self, x: usize, y: usize) -> u32 {
        self.cells[y * self.width + x]
    }

    /// Pixel counts per cell.
    pub fn cell_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.cell_count];
        for &c in &self.cells {
            sizes[c as usize] += 1;
        }
        sizes
    }

    /// True where a pixel's right or lower neighbour belongs to another cell.
    pub fn boundaries(&self) -> BinaryMap {
        let (w, h) = self.dims();
        let mut bits = vec![0u8; w * h];
        for y in 0..h {
            for x in 0..w {
                let c = self.cells[y * w + x];
                let right = x + 1 < w && self.cells[y * w + x + 1] != c;
                let down = y + 1 < h && self.cells[(y + 1) * w + x] != c;
                bits[y * w + x] = u8::from(right || down);
            }
        }
        BinaryMap::from_raw_unchecked(w, h, bits)
    }

    /// Checks: indices dense in `0..cell_count`, each cell one 4-connected
    /// component.
    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.dims();
        if self.cells.len() != w * h {
            return Err(Error::invalid("superpixel buffer length mismatch"));
        }
        let sizes = {
            let mut sizes = vec![0usize; self.cell_count];
            for &c in &self.cells {
                let c = c as usize;
                if c >= self.cell_count {
                    return Err(Error::invalid(format!(
                        "cell index {c} out of range 0..{}",
                        self.cell_count
                    )));
                }
                sizes[c] += 1;
            }
            sizes
        };
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::invalid(format!("cell index {empty} is unused")));
        }
        let mut seen = vec![false; self.cell_count];
        let mut visited = vec![false; w * h];
        let mut queue = VecDeque::new();
        for start in 0..w * h {
            if visited[start] {
                continue;
            }
            let cell = self.cells[start];
            if seen[cell as usize] {
                return Err(Error::invalid(format!("cell {cell} is not 4-connected")));
            }
            seen[cell as usize] = true;
            visited[start] = true;
            queue.push_back(start);
            while let Some(p) = queue.pop_front() {
                for q in neighbours4(p, w, h) {
                    if !visited[q] && self.cells[q] == cell {
                        visited[q] = true;
                        queue.push_back(q);
                    }
                }
            }
        }
        Ok(())
    }
}

/// 4-neighbourhood of a flat index, in the fixed order left, right, up, down.
pub(crate) fn neighbours4(p: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    let x = p % w;
    let y = p / w;
    let left = (x > 0).then(|| p - 1);
    let right = (x + 1 < w).then(|| p + 1);
    let up = (y > 0).then(|| p - w);
    let down = (y + 1 < h).then(|| p + w);
    [left, right, up, down].into_iter().flatten()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_three_values() {
        let f = normalize_intensity(3, 1, &[10.0, 20.0, 30.0]).unwrap();
        assert_eq!(f.pixels(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn normalize_constant_is_zero() {
        let f = normalize_intensity(2, 2, &[7.0; 4]).unwrap();
        assert!(f.pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalize_unit_range_is_identity() {
        let raw = [0.0, 0.25, 1.0, 0.75];
        let f = normalize_intensity(2, 2, &raw).unwrap();
        assert_eq!(f.pixels(), &raw);
    }

    #[test]
    fn normalize_rejects_nan_with_location() {
        let err = normalize_intensity(2, 2, &[0.0, 1.0, f64::NAN, 3.0]).unwrap_err();
        match err {
            Error::NonFinite { x, y, .. } => assert_eq!((x, y), (0, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn frame_rejects_out_of_range() {
        assert!(GrayFrame::new(1, 1, vec![1.5]).is_err());
        assert!(GrayFrame::new(2, 1, vec![0.5]).is_err());
    }

    #[test]
    fn one_hot_examples() {
        let m = LabelMask::filled(3, 3, Label::Myocardium);
        assert_eq!(m.one_hot(2).unwrap().count_ones(), 9);
        assert_eq!(m.one_hot(1).unwrap().count_ones(), 0);

        let q = LabelMask::new(2, 2, vec![0, 1, 2, 3]).unwrap();
        assert_eq!(q.one_hot(3).unwrap().bits(), &[0, 0, 0, 1]);
        assert!(matches!(q.one_hot(4), Err(Error::InvalidLabel(4))));
    }

    #[test]
    fn mask_rejects_bad_label() {
        assert!(LabelMask::new(2, 1, vec![0, 7]).is_err());
    }

    #[test]
    fn superpixel_validate_detects_split_cell() {
        // cell 0 appears on both sides of cell 1
        let err = SuperpixelMap::new(3, 1, vec![0, 1, 0]).unwrap_err();
        assert!(err.to_string().contains("not 4-connected"));
        assert!(SuperpixelMap::new(3, 1, vec![0, 2, 2]).is_err());
        assert!(SuperpixelMap::new(3, 1, vec![0, 1, 1]).is_ok());
    }

    proptest! {
        #[test]
        fn one_hot_partition_of_unity(labels in prop::collection::vec(0u8..4, 1..64)) {
            let n = labels.len();
            let m = LabelMask::new(n, 1, labels).unwrap();
            let mut sum = vec![0u8; n];
            for l in 0..4u8 {
                for (s, b) in sum.iter_mut().zip(m.one_hot(l).unwrap().bits()) {
                    *s += b;
                }
            }
            prop_assert!(sum.iter().all(|&s| s == 1));
        }

        #[test]
        fn normalize_spans_unit_interval(raw in prop::collection::vec(-1e6f64..1e6, 2..50)) {
            let n = raw.len();
            let f = normalize_intensity(n, 1, &raw).unwrap();
            let lo = f.pixels().iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = f.pixels().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let constant = raw.iter().all(|&v| v == raw[0]);
            if constant {
                prop_assert_eq!(hi, 0.0);
            } else {
                prop_assert_eq!(lo, 0.0);
                prop_assert_eq!(hi, 1.0);
                let again = normalize_intensity(n, 1, f.pixels()).unwrap();
                for (a, b) in again.pixels().iter().zip(f.pixels()) {
                    prop_assert!((a - b).abs() <= 1e-15);
                }
            }
        }
    }
}
