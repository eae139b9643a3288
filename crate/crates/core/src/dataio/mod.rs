//! File formats: NIfTI-1 volumes, ACDC patient directories, PNG renderings
//! and the metrics CSV.

pub mod acdc;
pub mod export;
pub mod nifti;
pub mod report;

pub use acdc::{load_acdc_patient, PatientRecord};
pub use export::{export_boundary_png, export_error_map_png, export_gray_png, export_overlay_png};
pub use nifti::{read_nifti, write_nifti, Datatype, Endian, NiftiVolume, VoxelData};
pub use report::write_metrics_csv;
