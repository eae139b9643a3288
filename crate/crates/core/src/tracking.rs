//! Forward and reverse propagation around the cardiac cycle, and fusion of the
//! two end-systole predictions.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filters::{check_kernel, LabelIntegral};
use crate::imgcore::{ensure_same_dims, GrayFrame, LabelMask};
use crate::metrics::{structure_dice, StructureDice};
use crate::propagation::{argmax_lowest, propagate_step, PipelineConfig};

/// The frames of one short-axis slice over a full, cyclic heartbeat.
#[derive(Debug, Clone, PartialEq)]
pub struct CineSequence {
    frames: Vec<GrayFrame>,
    ed_index: usize,
    es_index: usize,
    ed_mask: LabelMask,
    es_mask_gt: Option<LabelMask>,
}

impl CineSequence {
    pub fn new(
        frames: Vec<GrayFrame>,
        ed_index: usize,
        es_index: usize,
        ed_mask: LabelMask,
        es_mask_gt: Option<LabelMask>,
    ) -> Result<Self> {
        let t = frames.len();
        if t < 2 {
            return Err(Error::invalid(format!(
                "a cine sequence needs at least 2 frames, got {t}"
            )));
        }
        if ed_index >= t || es_index >= t {
            return Err(Error::invalid(format!(
                "ED/ES indices ({ed_index}, {es_index}) out of range for {t} frames"
            )));
        }
        if ed_index == es_index {
            return Err(Error::invalid("ED and ES must be different frames"));
        }
        let dims = frames[0].dims();
        for f in &frames[1..] {
            ensure_same_dims(dims, f.dims())?;
        }
        ensure_same_dims(dims, ed_mask.dims())?;
        if let Some(gt) = &es_mask_gt {
            ensure_same_dims(dims, gt.dims())?;
        }
        Ok(Self {
            frames,
            ed_index,
            es_index,
            ed_mask,
            es_mask_gt,
        })
    }

    pub fn frames(&self) -> &[GrayFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }

    pub fn ed_index(&self) -> usize {
        self.ed_index
    }

    pub fn es_index(&self) -> usize {
        self.es_index
    }

    pub fn ed_mask(&self) -> &LabelMask {
        &self.ed_mask
    }

    pub fn es_mask_gt(&self) -> Option<&LabelMask> {
        self.es_mask_gt.as_ref()
    }
}

/// Frame indices from ED to ES going forward and backward in time. Both
/// paths include both endpoints.
pub fn build_paths(frame_count: usize, ed: usize, es: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    if ed >= frame_count || es >= frame_count {
        return Err(Error::invalid(format!(
            "indices ({ed}, {es}) out of range for {frame_count} frames"
        )));
    }
    if ed == es {
        return Err(Error::invalid("ED and ES coincide; no path to follow"));
    }
    let t = frame_count;
    let forward_len = (es + t - ed) % t + 1;
    let backward_len = (ed + t - es) % t + 1;
    let forward = (0..forward_len).map(|k| (ed + k) % t).collect();
    let backward = (0..backward_len).map(|k| (ed + t * k - k) % t).collect();
    Ok((forward, backward))
}

/// Propagates the ED mask along `path`. Element `k` of the result is the
/// predicted mask at frame `path[k]`.
pub fn track_path(
    seq: &CineSequence,
    path: &[usize],
    config: &PipelineConfig,
) -> Result<Vec<LabelMask>> {
    match path.first() {
        Some(&first) if first == seq.ed_index => {}
        _ => return Err(Error::invalid("path must start at the ED frame")),
    }
    if let Some(&bad) = path.iter().find(|&&i| i >= seq.len()) {
        return Err(Error::invalid(format!("path index {bad} out of range")));
    }
    let mut masks = Vec::with_capacity(path.len());
    masks.push(seq.ed_mask.clone());
    for &idx in &path[1..] {
        let next = propagate_step(masks.last().expect("non-empty"), &seq.frames[idx], config)?;
        masks.push(next);
    }
    Ok(masks)
}

/// Fuses two predictions. Pixels where they agree keep their label; at each
/// disagreement pixel both masks vote over the `kernel x kernel` window
/// (zero padded, `2 kernel^2` votes) and the most voted label wins, ties to
/// the smallest label.
pub fn fuse_masks(a: &LabelMask, b: &LabelMask, kernel: usize) -> Result<LabelMask> {
    ensure_same_dims(a.dims(), b.dims())?;
    check_kernel(kernel)?;
    let (w, h) = a.dims();
    let (ia, ib) = (LabelIntegral::new(a), LabelIntegral::new(b));
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let (la, lb) = (a.labels()[p], b.labels()[p]);
            if la == lb {
                out.push(la);
                continue;
            }
            let ca = ia.window_counts(x, y, kernel);
            let cb = ib.window_counts(x, y, kernel);
            let votes: [u32; 4] = std::array::from_fn(|i| ca[i] + cb[i]);
            out.push(argmax_lowest(&votes) as u8);
        }
    }
    Ok(LabelMask::from_raw_unchecked(w, h, out))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackResult {
    pub forward_path: Vec<usize>,
    pub backward_path: Vec<usize>,
    pub forward_masks: Vec<LabelMask>,
    pub backward_masks: Vec<LabelMask>,
    pub fused_es: LabelMask,
    pub dice_per_structure: Option<StructureDice>,
}

impl TrackResult {
    pub fn forward_es(&self) -> &LabelMask {
        self.forward_masks.last().expect("path is never empty")
    }

    pub fn backward_es(&self) -> &LabelMask {
        self.backward_masks.last().expect("path is never empty")
    }
}

pub fn track_bidirectional(seq: &CineSequence, config: &PipelineConfig) -> Result<TrackResult> {
    config.validate()?;
    let (forward_path, backward_path) = build_paths(seq.len(), seq.ed_index, seq.es_index)?;
    let (forward, backward) = rayon::join(
        || track_path(seq, &forward_path, config),
        || track_path(seq, &backward_path, config),
    );
    let (forward_masks, backward_masks) = (forward?, backward?);
    let fused_es = fuse_masks(
        forward_masks.last().expect("non-empty"),
        backward_masks.last().expect("non-empty"),
        config.median_kernel,
    )?;
    let dice_per_structure = match &seq.es_mask_gt {
        Some(gt) => Some(structure_dice(&fused_es, gt)?),
        None => None,
    };
    Ok(TrackResult {
        forward_path,
        backward_path,
        forward_masks,
        backward_masks,
        fused_es,
        dice_per_structure,
    })
}

/// Tracks every slice of a volume independently, preserving slice order.
pub fn track_slices(seqs: &[CineSequence], config: &PipelineConfig) -> Result<Vec<TrackResult>> {
    seqs.par_iter()
        .map(|s| track_bidirectional(s, config))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::Label;

    #[test]
    fn paths_examples() {
        let (f, b) = build_paths(20, 0, 9).unwrap();
        assert_eq!(f, (0..=9).collect::<Vec<_>>());
        let mut expected = vec![0];
        expected.extend((9..=19).rev());
        assert_eq!(b, expected);
        assert_eq!(b.len(), 12);

        let (f, b) = build_paths(2, 0, 1).unwrap();
        assert_eq!(f, vec![0, 1]);
        assert_eq!(b, vec![0, 1]);

        let (f, b) = build_paths(10, 7, 2).unwrap();
        assert_eq!(f, vec![7, 8, 9, 0, 1, 2]);
        assert_eq!(b, vec![7, 6, 5, 4, 3, 2]);
        assert!(build_paths(10, 3, 3).is_err());
        assert!(build_paths(10, 3, 10).is_err());
    }

    #[test]
    fn fuse_identity_and_lone_pixel() {
        let mut labels = vec![0u8; 15 * 15];
        labels[7 * 15 + 7] = 3;
        let b = LabelMask::new(15, 15, labels).unwrap();
        let a = LabelMask::filled(15, 15, Label::Background);
        assert_eq!(fuse_masks(&b, &b, 9).unwrap(), b);
        assert_eq!(fuse_masks(&a, &b, 9).unwrap(), a);
        assert!(fuse_masks(&a, &b, 2).is_err());
    }

    #[test]
    fn fuse_half_planes_splits_disagreement() {
        // label 1 on x < 8 in a, x < 10 in b; disagreement columns 8 and 9
        let w = 20;
        let a = LabelMask::new(w, 20, (0..400).map(|p| u8::from(p % w < 8)).collect()).unwrap();
        let b = LabelMask::new(w, 20, (0..400).map(|p| u8::from(p % w < 10)).collect()).unwrap();
        let f = fuse_masks(&a, &b, 9).unwrap();
        for y in 0..20 {
            for x in 0..w {
                let expected = if x < 8 {
                    1
                } else if x >= 10 {
                    0
                } else {
                    // count votes within the 9x9 window, zero padded
                    let mut c = [0u32; 2];
                    for yy in y as isize - 4..=y as isize + 4 {
                        for xx in x as isize - 4..=x as isize + 4 {
                            for m in [&a, &b] {
                                let inside = (0..w as isize).contains(&xx) && (0..20).contains(&yy);
                                let l = if inside {
                                    m.get(xx as usize, yy as usize)
                                } else {
                                    0
                                };
                                c[l as usize] += 1;
                            }
                        }
                    }
                    u8::from(c[1] > c[0])
                };
                assert_eq!(f.get(x, y), expected, "({x},{y})");
            }
        }
    }

    #[test]
    fn sequence_validation() {
        let f = GrayFrame::filled(4, 4, 0.1).unwrap();
        let m = LabelMask::filled(4, 4, Label::Background);
        assert!(CineSequence::new(vec![f.clone()], 0, 0, m.clone(), None).is_err());
        assert!(CineSequence::new(vec![f.clone(), f.clone()], 1, 1, m.clone(), None).is_err());
        let small = LabelMask::filled(3, 4, Label::Background);
        assert!(CineSequence::new(vec![f.clone(), f.clone()], 0, 1, small, None).is_err());
        assert!(CineSequence::new(vec![f.clone(), f], 0, 1, m, None).is_ok());
    }

    #[test]
    fn single_frame_path_returns_ed_mask() {
        let f = GrayFrame::filled(8, 8, 0.1).unwrap();
        let m = LabelMask::filled(8, 8, Label::Myocardium);
        let seq = CineSequence::new(vec![f.clone(), f], 1, 0, m.clone(), None).unwrap();
        let out = track_path(&seq, &[1], &PipelineConfig::default()).unwrap();
        assert_eq!(out, vec![m]);
        assert!(track_path(&seq, &[0], &PipelineConfig::default()).is_err());
    }
}
