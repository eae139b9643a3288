//! Dice overlap, error maps and distribution summaries.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{ensure_same_dims, BinaryMap, Label, LabelMask};

/// Overlap tallies for one label: `|A ∩ B|`, `|A|`, `|B|`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OverlapCounts {
    pub intersection: usize,
    pub size_a: usize,
    pub size_b: usize,
}

impl OverlapCounts {
    pub fn of(a: &LabelMask, b: &LabelMask, label: Label) -> Result<Self> {
        ensure_same_dims(a.dims(), b.dims())?;
        let l = label.value();
        let mut c = OverlapCounts::default();
        for (&x, &y) in a.labels().iter().zip(b.labels()) {
            let (in_a, in_b) = (x == l, y == l);
            c.size_a += usize::from(in_a);
            c.size_b += usize::from(in_b);
            c.intersection += usize::from(in_a && in_b);
        }
        Ok(c)
    }

    /// `2 |A ∩ B| / (|A| + |B|)`, or 1 when both sets are empty.
    pub fn dice(&self) -> f64 {
        let denom = self.size_a + self.size_b;
        if denom == 0 {
            1.0
        } else {
            2.0 * self.intersection as f64 / denom as f64
        }
    }
}

impl std::ops::Add for OverlapCounts {
    type Output = OverlapCounts;

    fn add(self, o: OverlapCounts) -> OverlapCounts {
        OverlapCounts {
            intersection: self.intersection + o.intersection,
            size_a: self.size_a + o.size_a,
            size_b: self.size_b + o.size_b,
        }
    }
}

pub fn dice(a: &LabelMask, b: &LabelMask, label: u8) -> Result<f64> {
    Ok(OverlapCounts::of(a, b, Label::from_u8(label)?)?.dice())
}

/// Dice over a stack of slices, pooling the pixel counts of every slice.
pub fn volume_dice(pred: &[LabelMask], truth: &[LabelMask], label: Label) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::invalid(format!(
            "slice count mismatch: {} predicted vs {} ground truth",
            pred.len(),
            truth.len()
        )));
    }
    let mut total = OverlapCounts::default();
    for (p, t) in pred.iter().zip(truth) {
        total = total + OverlapCounts::of(p, t, label)?;
    }
    Ok(total.dice())
}

/// Marks the pixels where the two masks disagree.
pub fn error_map(pred: &LabelMask, truth: &LabelMask) -> Result<BinaryMap> {
    ensure_same_dims(pred.dims(), truth.dims())?;
    let bits = pred
        .labels()
        .iter()
        .zip(truth.labels())
        .map(|(a, b)| u8::from(a != b))
        .collect();
    Ok(BinaryMap::from_raw_unchecked(
        pred.width(),
        pred.height(),
        bits,
    ))
}

/// Dice for each of the three scored structures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureDice {
    pub rv: f64,
    pub myo: f64,
    pub lv: f64,
}

impl StructureDice {
    pub fn get(&self, label: Label) -> Option<f64> {
        match label {
            Label::RightVentricle => Some(self.rv),
            Label::Myocardium => Some(self.myo),
            Label::LvCavity => Some(self.lv),
            Label::Background => None,
        }
    }
}

pub fn structure_dice(pred: &LabelMask, truth: &LabelMask) -> Result<StructureDice> {
    volume_structure_dice(std::slice::from_ref(pred), std::slice::from_ref(truth))
}

pub fn volume_structure_dice(pred: &[LabelMask], truth: &[LabelMask]) -> Result<StructureDice> {
    Ok(StructureDice {
        rv: volume_dice(pred, truth, Label::RightVentricle)?,
        myo: volume_dice(pred, truth, Label::Myocardium)?,
        lv: volume_dice(pred, truth, Label::LvCavity)?,
    })
}

/// Diagnostic subgroup of a patient. `Phantom` tags synthetic data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    #[serde(rename = "NOR")]
    Nor,
    #[serde(rename = "MINF")]
    Minf,
    #[serde(rename = "DCM")]
    Dcm,
    #[serde(rename = "HCM")]
    Hcm,
    #[serde(rename = "RV")]
    Rv,
    #[serde(rename = "PHANTOM")]
    Phantom,
}

impl Group {
    pub fn as_str(self) -> &'static str {
        match self {
            Group::Nor => "NOR",
            Group::Minf => "MINF",
            Group::Dcm => "DCM",
            Group::Hcm => "HCM",
            Group::Rv => "RV",
            Group::Phantom => "PHANTOM",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Group> {
        match s.trim().to_ascii_uppercase().as_str() {
            "NOR" => Ok(Group::Nor),
            "MINF" => Ok(Group::Minf),
            "DCM" => Ok(Group::Dcm),
            "HCM" => Ok(Group::Hcm),
            "RV" => Ok(Group::Rv),
            "PHANTOM" => Ok(Group::Phantom),
            other => Err(Error::Metadata(format!("unknown group '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiceReport {
    pub patient_id: String,
    pub group: Group,
    pub dice_rv: f64,
    pub dice_myo: f64,
    pub dice_lv: f64,
}

impl DiceReport {
    pub fn new(patient_id: impl Into<String>, group: Group, dice: StructureDice) -> Self {
        Self {
            patient_id: patient_id.into(),
            group,
            dice_rv: dice.rv,
            dice_myo: dice.myo,
            dice_lv: dice.lv,
        }
    }

    pub fn structure(&self, label: Label) -> Option<f64> {
        match label {
            Label::RightVentricle => Some(self.dice_rv),
            Label::Myocardium => Some(self.dice_myo),
            Label::LvCavity => Some(self.dice_lv),
            Label::Background => None,
        }
    }
}

/// Five-number summary plus mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

impl DistributionStats {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("cannot summarize an empty set of values"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            min: sorted[0],
            q1: quantile_sorted(&sorted, 0.25),
            median: quantile_sorted(&sorted, 0.5),
            q3: quantile_sorted(&sorted, 0.75),
            max: sorted[sorted.len() - 1],
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        })
    }
}

/// Linear interpolation between order statistics (the "type 7" rule).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiceSummary {
    pub rv: DistributionStats,
    pub myo: DistributionStats,
    pub lv: DistributionStats,
}

pub fn summarize(reports: &[DiceReport]) -> Result<DiceSummary> {
    if reports.is_empty() {
        return Err(Error::invalid("no reports to summarize"));
    }
    let column = |f: fn(&DiceReport) -> f64| -> Vec<f64> { reports.iter().map(f).collect() };
    Ok(DiceSummary {
        rv: DistributionStats::from_values(&column(|r| r.dice_rv))?,
        myo: DistributionStats::from_values(&column(|r| r.dice_myo))?,
        lv: DistributionStats::from_values(&column(|r| r.dice_lv))?,
    })
}

impl fmt::Display for DiceSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<10}{:>10}{:>10}{:>10}{:>10}{:>10}{:>10}",
            "structure", "min", "q1", "median", "q3", "max", "mean"
        )?;
        for (name, s) in [("RV", &self.rv), ("MYO", &self.myo), ("LV", &self.lv)] {
            writeln!(
                f,
                "{:<10}{:>10.6}{:>10.6}{:>10.6}{:>10.6}{:>10.6}{:>10.6}",
                name, s.min, s.q1, s.median, s.q3, s.max, s.mean
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn block(x0: usize) -> LabelMask {
        let labels = (0..16)
            .map(|p| u8::from((x0..x0 + 2).contains(&(p % 4)) && p / 4 < 2))
            .collect();
        LabelMask::new(4, 4, labels).unwrap()
    }

    #[test]
    fn dice_examples() {
        let a = block(0);
        assert_eq!(dice(&a, &a, 1).unwrap(), 1.0);
        assert_eq!(dice(&a, &block(1), 1).unwrap(), 0.5);
        assert_eq!(dice(&a, &block(2), 1).unwrap(), 0.0);
        // both empty
        assert_eq!(dice(&a, &a, 3).unwrap(), 1.0);
        assert!(dice(&a, &a, 9).is_err());
        let other = LabelMask::filled(4, 5, Label::Background);
        assert!(dice(&a, &other, 1).is_err());
    }

    #[test]
    fn error_map_examples() {
        let a = block(0);
        assert_eq!(error_map(&a, &a).unwrap().count_ones(), 0);
        let mut labels = a.labels().to_vec();
        labels[15] = 2;
        let b = LabelMask::new(4, 4, labels).unwrap();
        assert_eq!(error_map(&a, &b).unwrap().count_ones(), 1);
        let c = block(1);
        let o = OverlapCounts::of(&a, &c, Label::RightVentricle).unwrap();
        assert_eq!(
            error_map(&a, &c).unwrap().count_ones(),
            o.size_a + o.size_b - 2 * o.intersection
        );
    }

    fn report(id: &str, v: f64) -> DiceReport {
        DiceReport::new(
            id,
            Group::Nor,
            StructureDice {
                rv: v,
                myo: v,
                lv: v,
            },
        )
    }

    #[test]
    fn summarize_examples() {
        let s = summarize(&[report("a", 0.7)]).unwrap();
        for v in [s.rv.min, s.rv.q1, s.rv.median, s.rv.q3, s.rv.max, s.rv.mean] {
            assert_eq!(v, 0.7);
        }
        let rs: Vec<_> = [0.8, 0.2, 0.6, 0.4]
            .iter()
            .map(|&v| report("x", v))
            .collect();
        let s = summarize(&rs).unwrap();
        assert!((s.myo.median - 0.5).abs() < 1e-12);
        assert!((s.myo.q1 - 0.35).abs() < 1e-12);
        assert!((s.myo.q3 - 0.65).abs() < 1e-12);
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn group_parsing() {
        assert_eq!("dcm".parse::<Group>().unwrap(), Group::Dcm);
        assert_eq!(" MINF ".parse::<Group>().unwrap(), Group::Minf);
        assert!("XYZ".parse::<Group>().is_err());
    }

    proptest! {
        #[test]
        fn dice_symmetric_and_bounded(
            a in prop::collection::vec(0u8..4, 36),
            b in prop::collection::vec(0u8..4, 36),
            l in 0u8..4,
        ) {
            let ma = LabelMask::new(6, 6, a).unwrap();
            let mb = LabelMask::new(6, 6, b).unwrap();
            let d = dice(&ma, &mb, l).unwrap();
            prop_assert_eq!(d, dice(&mb, &ma, l).unwrap());
            prop_assert!((0.0..=1.0).contains(&d));
            let same = ma.one_hot(l).unwrap() == mb.one_hot(l).unwrap();
            prop_assert_eq!(d == 1.0, same);
            prop_assert_eq!(error_map(&ma, &mb).unwrap(), error_map(&mb, &ma).unwrap());
        }

        #[test]
        fn summary_is_ordered(values in prop::collection::vec(0.0f64..=1.0, 1..40)) {
            let s = DistributionStats::from_values(&values).unwrap();
            prop_assert!(s.min <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= s.max);
            prop_assert!(s.min <= s.mean && s.mean <= s.max);
        }
    }
}
