//! 8-bit RGB PNG renderings of frames, masks, error maps and cell boundaries.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::Result;
use crate::imgcore::{ensure_same_dims, BinaryMap, GrayFrame, LabelMask, SuperpixelMap};

/// Tint per label; background stays untinted.
pub const LABEL_COLORS: [[u8; 3]; 4] = [[0, 0, 0], [255, 0, 0], [0, 255, 0], [0, 0, 255]];
pub const ERROR_BACKGROUND: u8 = 128;
pub const ERROR_FOREGROUND: u8 = 255;
pub const BOUNDARY_COLOR: [u8; 3] = [255, 255, 0];

pub fn gray_level(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Half-and-half blend, rounding halves up.
fn blend(gray: u8, tint: u8) -> u8 {
    (gray as u16 + tint as u16).div_ceil(2) as u8
}

/// Interleaved RGB rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = BufWriter::new(File::create(path)?);
        let mut enc = png::Encoder::new(file, self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header()?;
        writer.write_image_data(&self.data)?;
        writer.finish()?;
        Ok(())
    }
}

pub fn render_gray(frame: &GrayFrame) -> RgbImage {
    let data = frame
        .pixels()
        .iter()
        .flat_map(|&v| [gray_level(v); 3])
        .collect();
    RgbImage {
        width: frame.width(),
        height: frame.height(),
        data,
    }
}

pub fn render_overlay(frame: &GrayFrame, mask: &LabelMask) -> Result<RgbImage> {
    ensure_same_dims(frame.dims(), mask.dims())?;
    let data = frame
        .pixels()
        .iter()
        .zip(mask.labels())
        .flat_map(|(&v, &l)| {
            let g = gray_level(v);
            if l == 0 {
                [g; 3]
            } else {
                LABEL_COLORS[l as usize].map(|c| blend(g, c))
            }
        })
        .collect();
    Ok(RgbImage {
        width: frame.width(),
        height: frame.height(),
        data,
    })
}

pub fn render_error_map(errors: &BinaryMap) -> RgbImage {
    let data = errors
        .bits()
        .iter()
        .flat_map(|&b| {
            [if b != 0 {
                ERROR_FOREGROUND
            } else {
                ERROR_BACKGROUND
            }; 3]
        })
        .collect();
    RgbImage {
        width: errors.width(),
        height: errors.height(),
        data,
    }
}

pub fn render_boundaries(frame: &GrayFrame, cells: &SuperpixelMap) -> Result<RgbImage> {
    ensure_same_dims(frame.dims(), cells.dims())?;
    let edges = cells.boundaries();
    let data = frame
        .pixels()
        .iter()
        .zip(edges.bits())
        .flat_map(|(&v, &b)| {
            if b != 0 {
                BOUNDARY_COLOR
            } else {
                [gray_level(v); 3]
            }
        })
        .collect();
    Ok(RgbImage {
        width: frame.width(),
        height: frame.height(),
        data,
    })
}

pub fn export_gray_png(frame: &GrayFrame, path: impl AsRef<Path>) -> Result<()> {
    render_gray(frame).write_png(path)
}

pub fn export_overlay_png(
    frame: &GrayFrame,
    mask: &LabelMask,
    path: impl AsRef<Path>,
) -> Result<()> {
    render_overlay(frame, mask)?.write_png(path)
}

pub fn export_error_map_png(errors: &BinaryMap, path: impl AsRef<Path>) -> Result<()> {
    render_error_map(errors).write_png(path)
}

pub fn export_boundary_png(
    frame: &GrayFrame,
    cells: &SuperpixelMap,
    path: impl AsRef<Path>,
) -> Result<()> {
    render_boundaries(frame, cells)?.write_png(path)
}
