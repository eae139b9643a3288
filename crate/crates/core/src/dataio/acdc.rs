//! Patient directories in the ACDC layout:
//!
//! ```text
//! patient001/
//!   Info.cfg                      "ED: 1", "ES: 12", "Group: DCM", ...
//!   patient001_4d.nii.gz          cine volume (x, y, z, t)
//!   patient001_frame01_gt.nii.gz  labels at ED
//!   patient001_frame12_gt.nii.gz  labels at ES
//! ```
//!
//! Frame numbers in `Info.cfg` and file names are 1-based. They stay 1-based
//! in [`PatientRecord`] and become 0-based indices in [`CineSequence`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::dataio::nifti::{read_nifti, NiftiVolume, VoxelData};
use crate::error::{Error, Result};
use crate::imgcore::{normalize_intensity, GrayFrame, LabelMask};
use crate::metrics::Group;
use crate::tracking::CineSequence;

pub const INFO_FILE: &str = "Info.cfg";
const NIFTI_SUFFIXES: [&str; 2] = [".nii.gz", ".nii"];

/// `Key: value` lines; blank lines are skipped.
pub fn parse_info(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once(':').ok_or_else(|| {
            Error::Metadata(format!("line {} is not `Key: value`: {line:?}", n + 1))
        })?;
        out.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(out)
}

pub fn format_info(entries: &[(&str, String)]) -> String {
    entries.iter().map(|(k, v)| format!("{k}: {v}\n")).collect()
}

fn required<'a>(info: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    info.get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::Metadata(format!("missing key `{key}` in {INFO_FILE}")))
}

fn frame_number(info: &BTreeMap<String, String>, key: &str) -> Result<usize> {
    let raw = required(info, key)?;
    match raw.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(Error::Metadata(format!(
            "`{key}` must be a 1-based frame number, got {raw:?}"
        ))),
    }
}

pub fn cine_file_name(id: &str) -> String {
    format!("{id}_4d.nii.gz")
}

pub fn gt_file_name(id: &str, frame: usize) -> String {
    format!("{id}_frame{frame:02}_gt.nii.gz")
}

/// `{dir}/{stem}.nii.gz` or `{dir}/{stem}.nii`, whichever exists.
fn find_nifti(dir: &Path, stem: &str, what: &str) -> Result<PathBuf> {
    NIFTI_SUFFIXES
        .iter()
        .map(|s| dir.join(format!("{stem}{s}")))
        .find(|p| p.is_file())
        .ok_or_else(|| Error::MissingComponent {
            what: what.to_string(),
            path: dir.join(format!("{stem}.nii[.gz]")),
        })
}

/// Patient id from the unique `*_4d.nii[.gz]` file, else the directory name.
fn patient_id(dir: &Path) -> Result<String> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(id) = NIFTI_SUFFIXES
            .iter()
            .find_map(|s| name.strip_suffix(s)?.strip_suffix("_4d"))
        {
            ids.push(id.to_string());
        }
    }
    ids.sort();
    ids.dedup();
    match ids.len() {
        1 => Ok(ids.pop().expect("one id")),
        0 => dir
            .file_name()
            .and_then(|n| n.to_str())
            .map(str::to_string)
            .ok_or_else(|| {
                Error::invalid(format!("cannot derive a patient id from {}", dir.display()))
            }),
        _ => Err(Error::Metadata(format!(
            "several cine volumes in {}: {ids:?}",
            dir.display()
        ))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    pub id: String,
    pub group: Group,
    /// 1-based, as in the metadata.
    pub ed_frame: usize,
    /// 1-based, as in the metadata.
    pub es_frame: usize,
    pub cine: NiftiVolume,
    pub gt_ed: NiftiVolume,
    pub gt_es: NiftiVolume,
    pub info: BTreeMap<String, String>,
    pub cine_path: PathBuf,
    pub gt_ed_path: PathBuf,
    pub gt_es_path: PathBuf,
}

pub fn load_acdc_patient(dir: impl AsRef<Path>) -> Result<PatientRecord> {
    let dir = dir.as_ref();
    let info_path = dir.join(INFO_FILE);
    if !info_path.is_file() {
        return Err(Error::MissingComponent {
            what: "patient metadata".into(),
            path: info_path,
        });
    }
    let info = parse_info(&fs::read_to_string(&info_path)?)?;
    let ed_frame = frame_number(&info, "ED")?;
    let es_frame = frame_number(&info, "ES")?;
    if ed_frame == es_frame {
        return Err(Error::Metadata(format!(
            "ED and ES are both frame {ed_frame}"
        )));
    }
    let group: Group = required(&info, "Group")?.parse()?;

    let id = patient_id(dir)?;
    let cine_path = find_nifti(dir, &format!("{id}_4d"), "cine volume")?;
    let gt_ed_path = find_nifti(
        dir,
        &format!("{id}_frame{ed_frame:02}_gt"),
        "ED ground truth",
    )?;
    let gt_es_path = find_nifti(
        dir,
        &format!("{id}_frame{es_frame:02}_gt"),
        "ES ground truth",
    )?;
    let cine = read_nifti(&cine_path)?;
    let gt_ed = read_nifti(&gt_ed_path)?;
    let gt_es = read_nifti(&gt_es_path)?;

    let record = PatientRecord {
        id,
        group,
        ed_frame,
        es_frame,
        cine,
        gt_ed,
        gt_es,
        info,
        cine_path,
        gt_ed_path,
        gt_es_path,
    };
    record.validate()?;
    Ok(record)
}

impl PatientRecord {
    /// `(x, y, z, t)` extents of the cine volume.
    pub fn cine_dims(&self) -> [usize; 4] {
        std::array::from_fn(|a| self.cine.extent(a))
    }

    pub fn frame_count(&self) -> usize {
        self.cine.extent(3)
    }

    pub fn slice_count(&self) -> usize {
        self.cine.extent(2)
    }

    pub fn ed_index(&self) -> usize {
        self.ed_frame - 1
    }

    pub fn es_index(&self) -> usize {
        self.es_frame - 1
    }

    fn validate(&self) -> Result<()> {
        let [x, y, z, t] = self.cine_dims();
        if self.cine.dims.len() != 4 || t < 2 {
            return Err(Error::invalid(format!(
                "cine volume must be 4-D with at least 2 frames, got extents {:?}",
                self.cine.dims
            )));
        }
        for (name, frame) in [("ED", self.ed_frame), ("ES", self.es_frame)] {
            if frame > t {
                return Err(Error::Metadata(format!(
                    "{name} frame {frame} exceeds the {t} cine frames"
                )));
            }
        }
        for (name, gt) in [("ED", &self.gt_ed), ("ES", &self.gt_es)] {
            let dims = [gt.extent(0), gt.extent(1), gt.extent(2), gt.extent(3)];
            if dims != [x, y, z, 1] {
                return Err(Error::invalid(format!(
                    "{name} ground truth extents {:?} do not match cine slices {x}x{y}x{z}",
                    gt.dims
                )));
            }
        }
        Ok(())
    }

    /// Label mask per slice at ED.
    pub fn ed_masks(&self) -> Result<Vec<LabelMask>> {
        label_slices(&self.gt_ed)
    }

    /// Label mask per slice at ES.
    pub fn es_masks(&self) -> Result<Vec<LabelMask>> {
        label_slices(&self.gt_es)
    }

    /// One cine sequence per slice, in slice order, with ES truth attached.
    pub fn sequences(&self) -> Result<Vec<CineSequence>> {
        let frames = cine_slices(&self.cine)?;
        let ed = self.ed_masks()?;
        let es = self.es_masks()?;
        frames
            .into_iter()
            .zip(ed.into_iter().zip(es))
            .map(|(f, (ed, es))| {
                CineSequence::new(f, self.ed_index(), self.es_index(), ed, Some(es))
            })
            .collect()
    }
}

/// Frames of every slice of a 4-D volume, `result[z][t]`, each frame
/// min-max normalized on its own after slope/intercept scaling.
pub fn cine_slices(volume: &NiftiVolume) -> Result<Vec<Vec<GrayFrame>>> {
    let [x, y, z, t] = std::array::from_fn(|a| volume.extent(a));
    let plane = x * y;
    let values = volume.scaled_values();
    (0..z)
        .map(|zi| {
            (0..t)
                .map(|ti| {
                    let start = plane * (zi + z * ti);
                    normalize_intensity(x, y, &values[start..start + plane])
                })
                .collect()
        })
        .collect()
}

/// Label masks for every slice of a 3-D label volume.
pub fn label_slices(volume: &NiftiVolume) -> Result<Vec<LabelMask>> {
    let [x, y, z] = std::array::from_fn(|a| volume.extent(a));
    if volume.extent(3) != 1 {
        return Err(Error::invalid(format!(
            "label volume has time extent {}",
            volume.extent(3)
        )));
    }
    let values = volume.scaled_values();
    let plane = x * y;
    (0..z)
        .map(|zi| {
            let labels = values[zi * plane..(zi + 1) * plane]
                .iter()
                .map(|&v| {
                    if v.fract() == 0.0 && (0.0..=3.0).contains(&v) {
                        Ok(v as u8)
                    } else if v.is_finite() {
                        Err(Error::InvalidLabel(v.round() as i64))
                    } else {
                        Err(Error::invalid(format!("non-finite label value {v}")))
                    }
                })
                .collect::<Result<Vec<u8>>>()?;
            LabelMask::new(x, y, labels)
        })
        .collect()
}

/// Stacks equally sized slice masks into a 3-D `uint8` label volume.
pub fn label_volume(slices: &[LabelMask]) -> Result<NiftiVolume> {
    let first = slices
        .first()
        .ok_or_else(|| Error::invalid("no slices to stack"))?;
    let (w, h) = first.dims();
    let mut voxels = Vec::with_capacity(w * h * slices.len());
    for s in slices {
        crate::imgcore::ensure_same_dims((w, h), s.dims())?;
        voxels.extend_from_slice(s.labels());
    }
    NiftiVolume::new(vec![w, h, slices.len()], VoxelData::Uint8(voxels))
}

/// Stacks `frames[z][t]` into a 4-D `float32` cine volume.
pub fn cine_volume(frames: &[Vec<GrayFrame>]) -> Result<NiftiVolume> {
    let z = frames.len();
    let t = frames.first().map_or(0, Vec::len);
    if z == 0 || t == 0 {
        return Err(Error::invalid("no frames to stack"));
    }
    let (w, h) = frames[0][0].dims();
    let mut voxels = vec![0f32; w * h * z * t];
    for (zi, slice) in frames.iter().enumerate() {
        if slice.len() != t {
            return Err(Error::invalid("slices have different frame counts"));
        }
        for (ti, frame) in slice.iter().enumerate() {
            crate::imgcore::ensure_same_dims((w, h), frame.dims())?;
            let start = w * h * (zi + z * ti);
            for (dst, &src) in voxels[start..start + w * h].iter_mut().zip(frame.pixels()) {
                *dst = src as f32;
            }
        }
    }
    NiftiVolume::new(vec![w, h, z, t], VoxelData::Float32(voxels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn info_parsing() {
        let info = parse_info("ED: 1\nES: 12\nGroup: DCM\n\nHeight: 184.0\n").unwrap();
        assert_eq!(frame_number(&info, "ED").unwrap(), 1);
        assert_eq!(frame_number(&info, "ES").unwrap(), 12);
        assert_eq!(info["Group"], "DCM");
        let missing = parse_info("ED: 1\nGroup: NOR").unwrap();
        let err = frame_number(&missing, "ES").unwrap_err();
        assert!(err.to_string().contains("`ES`"), "{err}");
        assert!(parse_info("garbage line").is_err());
        assert!(frame_number(&parse_info("ED: 0").unwrap(), "ED").is_err());
    }

    #[test]
    fn slice_layout_follows_file_order() {
        // voxel (x, y, z, t) holds 1000 t + 100 z + 10 y + x
        let (x, y, z, t) = (3, 2, 2, 2);
        let mut v = Vec::new();
        for ti in 0..t {
            for zi in 0..z {
                for yi in 0..y {
                    for xi in 0..x {
                        v.push((1000 * ti + 100 * zi + 10 * yi + xi) as f64);
                    }
                }
            }
        }
        let vol = NiftiVolume::new(vec![x, y, z, t], VoxelData::Float64(v)).unwrap();
        let slices = cine_slices(&vol).unwrap();
        assert_eq!(slices.len(), 2);
        assert_eq!(slices[0].len(), 2);
        // slice 1, frame 1 spans 1100..=1112; normalized by 12
        let f = &slices[1][1];
        assert_eq!(f.get(0, 0), 0.0);
        assert_eq!(f.get(2, 1), 1.0);
        assert!((f.get(1, 0) - 1.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn label_volume_round_trip_and_rejection() {
        let a = LabelMask::new(2, 2, vec![0, 1, 2, 3]).unwrap();
        let b = LabelMask::new(2, 2, vec![3, 2, 1, 0]).unwrap();
        let vol = label_volume(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(label_slices(&vol).unwrap(), vec![a, b]);
        let bad = NiftiVolume::new(vec![2, 1, 1], VoxelData::Int16(vec![0, 7])).unwrap();
        assert!(matches!(label_slices(&bad), Err(Error::InvalidLabel(7))));
    }
}
