//! Per-patient Dice table as CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{DiceReport, Group};

pub const CSV_HEADER: &str = "patient_id,group,dice_rv,dice_myo,dice_lv";

/// Rows sorted by patient id, reals with six decimals.
pub fn format_metrics_csv(reports: &[DiceReport]) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::invalid("no reports to write"));
    }
    let mut sorted: Vec<&DiceReport> = reports.iter().collect();
    sorted.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in sorted {
        if r.patient_id.contains([',', '\n', '"']) {
            return Err(Error::invalid(format!(
                "patient id {:?} cannot be written to CSV",
                r.patient_id
            )));
        }
        writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6}",
            r.patient_id, r.group, r.dice_rv, r.dice_myo, r.dice_lv
        )
        .expect("string write");
    }
    Ok(out)
}

pub fn write_metrics_csv(reports: &[DiceReport], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_metrics_csv(reports)?)?;
    Ok(())
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<DiceReport>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => return Err(Error::Metadata(format!("unexpected CSV header {other:?}"))),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            let [id, group, rv, myo, lv] = fields[..] else {
                return Err(Error::Metadata(format!("expected 5 fields in {line:?}")));
            };
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Metadata(format!("bad number {s:?} in {line:?}")))
            };
            Ok(DiceReport {
                patient_id: id.to_string(),
                group: group.parse::<Group>()?,
                dice_rv: num(rv)?,
                dice_myo: num(myo)?,
                dice_lv: num(lv)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::StructureDice;

    fn report(id: &str, v: f64) -> DiceReport {
        DiceReport::new(
            id,
            Group::Dcm,
            StructureDice {
                rv: v,
                myo: v,
                lv: v,
            },
        )
    }

    #[test]
    fn single_row() {
        let csv = format_metrics_csv(&[report("p001", 1.0)]).unwrap();
        assert_eq!(
            csv,
            "patient_id,group,dice_rv,dice_myo,dice_lv\np001,DCM,1.000000,1.000000,1.000000\n"
        );
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn rows_sorted_and_deterministic() {
        let shuffled = [
            report("p003", 0.3),
            report("p001", 0.1),
            report("p002", 0.25),
        ];
        let csv = format_metrics_csv(&shuffled).unwrap();
        let ids: Vec<&str> = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').next().unwrap())
            .collect();
        assert_eq!(ids, ["p001", "p002", "p003"]);
        assert_eq!(csv, format_metrics_csv(&shuffled).unwrap());
        assert!(csv.contains("0.250000"));
        let back = parse_metrics_csv(&csv).unwrap();
        assert_eq!(back[1].dice_rv, 0.25);
        assert!(format_metrics_csv(&[]).is_err());
    }
}
