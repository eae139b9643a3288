//! One temporal step: re-label the cells of the next frame from the previous
//! mask by majority vote, then median-filter the result.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{check_kernel, gaussian_smooth, median_filter_mask};
use crate::imgcore::{ensure_same_dims, GrayFrame, Label, LabelMask, SuperpixelMap};
use crate::superpixels::{
    cells_for_area, slic_segment, SuperpixelConfig, DEFAULT_CELL_AREA, DEFAULT_COMPACTNESS,
    DEFAULT_CONVERGENCE_TOL, DEFAULT_MAX_ITERATIONS,
};

pub const DEFAULT_GAUSSIAN_SIGMA: f64 = 0.5;
pub const DEFAULT_MEDIAN_KERNEL: usize = 9;

/// How many superpixels to request for a frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellTarget {
    /// `floor(width * height / area)` cells.
    MeanArea(f64),
    Absolute(usize),
}

impl CellTarget {
    pub fn resolve(self, width: usize, height: usize) -> usize {
        match self {
            CellTarget::MeanArea(area) => cells_for_area(width, height, area),
            CellTarget::Absolute(k) => k,
        }
    }
}

/// Superpixel settings that are independent of the frame size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuperpixelParams {
    pub cells: CellTarget,
    pub compactness: f64,
    pub max_iterations: usize,
    pub convergence_tol: f64,
}

impl Default for SuperpixelParams {
    fn default() -> Self {
        Self {
            cells: CellTarget::MeanArea(DEFAULT_CELL_AREA),
            compactness: DEFAULT_COMPACTNESS,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            convergence_tol: DEFAULT_CONVERGENCE_TOL,
        }
    }
}

impl SuperpixelParams {
    pub fn for_dims(&self, width: usize, height: usize) -> SuperpixelConfig {
        SuperpixelConfig {
            target_cells: self.cells.resolve(width, height),
            compactness: self.compactness,
            max_iterations: self.max_iterations,
            convergence_tol: self.convergence_tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub gaussian_sigma: f64,
    pub median_kernel: usize,
    pub superpixel: SuperpixelParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            gaussian_sigma: DEFAULT_GAUSSIAN_SIGMA,
            median_kernel: DEFAULT_MEDIAN_KERNEL,
            superpixel: SuperpixelParams::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gaussian_sigma > 0.0 && self.gaussian_sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "gaussian sigma must be positive, got {}",
                self.gaussian_sigma
            )));
        }
        check_kernel(self.median_kernel)?;
        match self.superpixel.cells {
            CellTarget::MeanArea(a) if !(a > 0.0 && a.is_finite()) => {
                return Err(Error::invalid(format!(
                    "mean cell area must be positive, got {a}"
                )))
            }
            CellTarget::Absolute(0) => return Err(Error::invalid("cell count must be at least 1")),
            _ => {}
        }
        let sp = &self.superpixel;
        if !(sp.compactness > 0.0 && sp.compactness.is_finite()) {
            return Err(Error::invalid(format!(
                "compactness must be positive, got {}",
                sp.compactness
            )));
        }
        if sp.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if sp.convergence_tol.is_nan() || sp.convergence_tol < 0.0 {
            return Err(Error::invalid("convergence tolerance must be non-negative"));
        }
        Ok(())
    }
}

/// Most frequent label of `prev_mask` over `cell_pixels`; ties go to the
/// smallest label.
pub fn majority_label(prev_mask: &LabelMask, cell_pixels: &[(usize, usize)]) -> Result<Label> {
    if cell_pixels.is_empty() {
        return Err(Error::invalid("cannot vote on an empty cell"));
    }
    let mut counts = [0usize; Label::COUNT];
    for &(x, y) in cell_pixels {
        if x >= prev_mask.width() || y >= prev_mask.height() {
            return Err(Error::invalid(format!(
                "cell pixel ({x}, {y}) outside {}x{} mask",
                prev_mask.width(),
                prev_mask.height()
            )));
        }
        counts[prev_mask.get(x, y) as usize] += 1;
    }
    Ok(Label::ALL[argmax_lowest(&counts)])
}

/// Index of the maximum, first index on ties.
pub(crate) fn argmax_lowest<T: PartialOrd + Copy>(counts: &[T]) -> usize {
    let mut best = 0;
    for i in 1..counts.len() {
        if counts[i] > counts[best] {
            best = i;
        }
    }
    best
}

/// Gives every cell of `cells` the majority label of `prev_mask` inside it.
pub fn vote_cells(prev_mask: &LabelMask, cells: &SuperpixelMap) -> Result<LabelMask> {
    ensure_same_dims(prev_mask.dims(), cells.dims())?;
    let mut hist = vec![[0usize; Label::COUNT]; cells.cell_count()];
    for (&c, &l) in cells.cells().iter().zip(prev_mask.labels()) {
        hist[c as usize][l as usize] += 1;
    }
    let winners: Vec<u8> = hist.iter().map(|h| argmax_lowest(h) as u8).collect();
    let labels = cells.cells().iter().map(|&c| winners[c as usize]).collect();
    let (w, h) = prev_mask.dims();
    Ok(LabelMask::from_raw_unchecked(w, h, labels))
}

/// Intermediate products of one propagation step.
#[derive(Debug, Clone)]
pub struct StepTrace {
    pub smoothed: GrayFrame,
    pub superpixels: SuperpixelMap,
    /// Cell-constant mask before median filtering.
    pub voted: LabelMask,
    pub mask: LabelMask,
}

pub fn propagate_step(
    prev_mask: &LabelMask,
    next_raw: &GrayFrame,
    config: &PipelineConfig,
) -> Result<LabelMask> {
    propagate_step_traced(prev_mask, next_raw, config).map(|t| t.mask)
}

pub fn propagate_step_traced(
    prev_mask: &LabelMask,
    next_raw: &GrayFrame,
    config: &PipelineConfig,
) -> Result<StepTrace> {
    ensure_same_dims(prev_mask.dims(), next_raw.dims())?;
    config.validate()?;
    let (w, h) = next_raw.dims();
    let smoothed = gaussian_smooth(next_raw, config.gaussian_sigma)?;
    let superpixels = slic_segment(&smoothed, &config.superpixel.for_dims(w, h))?;
    let voted = vote_cells(prev_mask, &superpixels)?;
    let mask = median_filter_mask(&voted, config.median_kernel)?;
    Ok(StepTrace {
        smoothed,
        superpixels,
        voted,
        mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column_mask(values: &[u8]) -> (LabelMask, Vec<(usize, usize)>) {
        let m = LabelMask::new(values.len(), 1, values.to_vec()).unwrap();
        let px = (0..values.len()).map(|x| (x, 0)).collect();
        (m, px)
    }

    #[test]
    fn majority_examples() {
        let (m, px) = column_mask(&[1, 1, 2, 3]);
        assert_eq!(majority_label(&m, &px).unwrap(), Label::RightVentricle);
        let (m, px) = column_mask(&[2, 1, 2, 1]);
        assert_eq!(majority_label(&m, &px).unwrap(), Label::RightVentricle);
        let (m, px) = column_mask(&[3, 3]);
        assert_eq!(majority_label(&m, &px).unwrap(), Label::LvCavity);
        assert!(majority_label(&m, &[]).is_err());
        assert!(majority_label(&m, &[(5, 0)]).is_err());
    }

    #[test]
    fn background_stays_background() {
        let f = GrayFrame::new(30, 30, (0..900).map(|p| (p % 7) as f64 / 6.0).collect()).unwrap();
        let m = LabelMask::filled(30, 30, Label::Background);
        let out = propagate_step(&m, &f, &PipelineConfig::default()).unwrap();
        assert_eq!(out, m);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let f = GrayFrame::filled(10, 12, 0.5).unwrap();
        let m = LabelMask::filled(12, 10, Label::Background);
        assert!(matches!(
            propagate_step(&m, &f, &PipelineConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn voted_mask_is_cell_constant() {
        let f = GrayFrame::new(
            24,
            24,
            (0..576).map(|p| ((p * 37) % 101) as f64 / 100.0).collect(),
        )
        .unwrap();
        let labels: Vec<u8> = (0..576)
            .map(|p| ((p / 24 + p % 24) / 12) as u8 % 4)
            .collect();
        let m = LabelMask::new(24, 24, labels).unwrap();
        let trace = propagate_step_traced(&m, &f, &PipelineConfig::default()).unwrap();
        let mut per_cell = vec![None; trace.superpixels.cell_count()];
        for (&c, &l) in trace.superpixels.cells().iter().zip(trace.voted.labels()) {
            let slot = &mut per_cell[c as usize];
            assert!(slot.is_none() || *slot == Some(l));
            *slot = Some(l);
        }
    }

    #[test]
    fn defaults_are_tuned_values() {
        let c = PipelineConfig::default();
        assert_eq!(c.gaussian_sigma, 0.5);
        assert_eq!(c.median_kernel, 9);
        let mut bad = c;
        bad.median_kernel = 8;
        assert!(bad.validate().is_err());
        bad = c;
        bad.gaussian_sigma = 0.0;
        assert!(bad.validate().is_err());
    }
}
