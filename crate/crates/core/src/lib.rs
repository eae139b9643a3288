//! Superpixel-based pixel tracking of cardiac segmentation masks through
//! cyclic cine MR sequences.
//!
//! Starting from the labelled end-diastolic frame, each following frame is
//! smoothed, split into superpixel cells, and every cell takes the majority
//! label of the previous mask; a median filter cleans the result. Tracking
//! runs both forward and backward around the cycle, and the two end-systolic
//! predictions are fused and scored with Dice against ground truth.

pub mod cli;
pub mod dataio;
pub mod error;
pub mod filters;
pub mod imgcore;
pub mod metrics;
pub mod phantom;
pub mod propagation;
pub mod superpixels;
pub mod tracking;

pub use error::{Error, Result};
pub use imgcore::{
    normalize_intensity, one_hot, BinaryMap, GrayFrame, Label, LabelMask, SuperpixelMap,
};
pub use metrics::{dice, error_map, summarize, DiceReport, Group, StructureDice};
pub use propagation::{
    majority_label, propagate_step, CellTarget, PipelineConfig, SuperpixelParams,
};
pub use superpixels::{enforce_connectivity, slic_segment, SuperpixelConfig};
pub use tracking::{
    build_paths, fuse_masks, track_bidirectional, track_path, CineSequence, TrackResult,
};
