//! Best-record speed-ups between two campaigns and their CSV/SVG renderings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::PENALTY_Y;
use crate::error::CoreError;
use crate::records::{best_curves, TrialRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRow {
    pub circuit_id: String,
    pub baseline_best: f64,
    pub method_best: f64,
    /// `baseline_best / method_best`; absent when either side never converged.
    pub speedup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupReport {
    pub rows: Vec<SpeedupRow>,
    pub mean: Option<f64>,
    pub max: Option<f64>,
    /// Circuits left out because a side has no converged run.
    pub excluded: Vec<String>,
    pub baseline_curves: BTreeMap<String, Vec<f64>>,
    pub method_curves: BTreeMap<String, Vec<f64>>,
}

/// Per-circuit best-record speed-up of `method` over `baseline`.
pub fn speedup_report(baseline: &[TrialRecord], method: &[TrialRecord]) -> Result<SpeedupReport, CoreError> {
    let baseline_curves = best_curves(baseline);
    let method_curves = best_curves(method);
    let a: BTreeSet<&String> = baseline_curves.keys().collect();
    let b: BTreeSet<&String> = method_curves.keys().collect();
    if a != b {
        let diff: Vec<&&String> = a.symmetric_difference(&b).collect();
        return Err(CoreError::DisjointCircuits(format!("circuits present on one side only: {diff:?}")));
    }
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    for (id, curve) in &baseline_curves {
        let base = *curve.last().expect("curves are non-empty");
        let meth = *method_curves[id].last().expect("curves are non-empty");
        let speedup = (base < PENALTY_Y && meth < PENALTY_Y).then(|| base / meth);
        if speedup.is_none() {
            excluded.push(id.clone());
        }
        rows.push(SpeedupRow { circuit_id: id.clone(), baseline_best: base, method_best: meth, speedup });
    }
    let kept: Vec<f64> = rows.iter().filter_map(|r| r.speedup).collect();
    let mean = (!kept.is_empty()).then(|| kept.iter().sum::<f64>() / kept.len() as f64);
    let max = kept.iter().copied().reduce(f64::max);
    Ok(SpeedupReport { rows, mean, max, excluded, baseline_curves, method_curves })
}

/// Speed-up of a campaign over its own epoch-0 default runs.
pub fn speedup_vs_default(records: &[TrialRecord]) -> Result<SpeedupReport, CoreError> {
    let defaults: Vec<TrialRecord> = records.iter().filter(|r| r.epoch == 0).cloned().collect();
    speedup_report(&defaults, records)
}

impl SpeedupReport {
    pub fn to_csv(&self) -> Result<String, CoreError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let fail = |e: csv::Error| CoreError::Format { what: "csv", message: e.to_string() };
        w.write_record(["circuit", "baseline_best", "method_best", "speedup", "excluded"]).map_err(fail)?;
        for r in &self.rows {
            let s = r.speedup.map_or(String::new(), |s| format!("{s:.6}"));
            w.write_record([
                r.circuit_id.clone(),
                r.baseline_best.to_string(),
                r.method_best.to_string(),
                s,
                r.speedup.is_none().to_string(),
            ])
            .map_err(fail)?;
        }
        let fmt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
        w.write_record(["mean", "", "", &fmt(self.mean), ""]).map_err(fail)?;
        w.write_record(["max", "", "", &fmt(self.max), ""]).map_err(fail)?;
        let bytes = w.into_inner().map_err(|e| CoreError::Format { what: "csv", message: e.to_string() })?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write(&self, csv_path: &Path, svg_path: &Path) -> Result<(), CoreError> {
        std::fs::write(csv_path, self.to_csv()?).map_err(|e| CoreError::io(csv_path, e))?;
        std::fs::write(svg_path, curves_svg(&self.method_curves, Some(&self.baseline_curves)))
            .map_err(|e| CoreError::io(svg_path, e))
    }
}

/// One row per circuit with the running best after every epoch.
pub fn best_record_csv(records: &[TrialRecord]) -> Result<String, CoreError> {
    let curves = best_curves(records);
    let epochs = curves.values().map(Vec::len).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| CoreError::Format { what: "csv", message: e.to_string() };
    let mut header = vec!["circuit".to_string()];
    header.extend((0..epochs).map(|e| format!("best_epoch_{e}")));
    w.write_record(&header).map_err(fail)?;
    for (id, c) in &curves {
        let mut row = vec![id.clone()];
        row.extend(c.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| CoreError::Format { what: "csv", message: e.to_string() })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Best-record curves normalized by each circuit's epoch-0 value; the optional
/// baseline is drawn dashed.
pub fn curves_svg(method: &BTreeMap<String, Vec<f64>>, baseline: Option<&BTreeMap<String, Vec<f64>>>) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let norm = |c: &[f64]| -> Vec<f64> {
        let first = c.iter().copied().find(|v| *v < PENALTY_Y).unwrap_or(1.0);
        c.iter().map(|v| if *v < PENALTY_Y { v / first } else { f64::NAN }).collect()
    };
    let mut all: Vec<(usize, bool, Vec<f64>)> = Vec::new();
    for (k, c) in method.values().enumerate() {
        all.push((k, false, norm(c)));
    }
    if let Some(b) = baseline {
        for (k, c) in b.values().enumerate() {
            all.push((k, true, norm(c)));
        }
    }
    let n = all.iter().map(|(_, _, c)| c.len()).max().unwrap_or(1).max(2);
    let top = all.iter().flat_map(|(_, _, c)| c.iter().copied()).filter(|v| v.is_finite()).fold(1.0, f64::max);
    let sx = |e: usize| pad + (w - 2.0 * pad) * e as f64 / (n - 1) as f64;
    let sy = |v: f64| h - pad - (h - 2.0 * pad) * v / top;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{pad} {pad} V{} H{}" stroke="black" fill="none"/>"#,
        h - pad,
        w - pad
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">epoch</text>"#, w / 2.0, h - 15.0);
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" font-size="12" transform="rotate(-90 15 {})" text-anchor="middle">best / default</text>"#,
        h / 2.0,
        h / 2.0
    );
    for v in [0.0, 0.5, 1.0] {
        let y = sy(v * top);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{:.2}</text>"#, pad - 5.0, y + 3.0, v * top);
    }
    for (k, dashed, c) in &all {
        let pts: Vec<String> = c
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(e, v)| format!("{:.1},{:.1}", sx(e), sy(*v)))
            .collect();
        if pts.is_empty() {
            continue;
        }
        let dash = if *dashed { r#" stroke-dasharray="4 3""# } else { "" };
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"{dash}/>"#,
            pts.join(" "),
            PALETTE[k % PALETTE.len()]
        );
    }
    for (k, id) in method.keys().enumerate() {
        let y = pad + 14.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{y}" font-size="11" fill="{}">{id}</text>"#,
            w - pad - 110.0,
            PALETTE[k % PALETTE.len()]
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::RunKind;
    use boapta_circuit::SolverParams;

    fn rec(id: &str, epoch: usize, y: f64) -> TrialRecord {
        TrialRecord {
            circuit_id: id.into(),
            x: SolverParams::new(1.0, 1.0, 1.0, 1.0, 1.0).unwrap(),
            y,
            iterations: y as u64,
            epoch,
            kind: RunKind::Proposal,
            budget: None,
            converged: y < PENALTY_Y,
            halted: false,
            wall_time: 0.0,
        }
    }

    #[test]
    fn self_comparison_is_unity() {
        let rs = vec![rec("a", 0, 100.0), rec("a", 1, 70.0), rec("b", 0, 40.0)];
        let r = speedup_report(&rs, &rs).unwrap();
        assert!(r.rows.iter().all(|row| row.speedup == Some(1.0)));
        assert_eq!(r.mean, Some(1.0));
    }

    #[test]
    fn ratio_and_exclusion() {
        let base = vec![rec("a", 0, 100.0), rec("b", 0, PENALTY_Y)];
        let meth = vec![rec("a", 0, 50.0), rec("b", 0, 30.0)];
        let r = speedup_report(&base, &meth).unwrap();
        assert_eq!(r.rows[0].speedup, Some(2.0));
        assert_eq!(r.rows[1].speedup, None);
        assert_eq!(r.excluded, vec!["b".to_string()]);
        assert_eq!((r.mean, r.max), (Some(2.0), Some(2.0)));
        assert!(r.to_csv().unwrap().contains("b,9999,30,,true"));
    }

    #[test]
    fn disjoint_sets_rejected() {
        let r = speedup_report(&[rec("a", 0, 1.0)], &[rec("b", 0, 1.0)]);
        assert!(matches!(r, Err(CoreError::DisjointCircuits(_))));
    }

    #[test]
    fn outputs_render() {
        let rs = vec![rec("a", 0, 100.0), rec("a", 1, 70.0), rec("a", 2, 90.0)];
        let csv = best_record_csv(&rs).unwrap();
        assert_eq!(csv.lines().nth(1).unwrap(), "a,100,70,70");
        let svg = curves_svg(&best_curves(&rs), None);
        assert!(svg.starts_with("<svg") && svg.contains("polyline"));
        let r = speedup_vs_default(&rs).unwrap();
        assert!((r.rows[0].speedup.unwrap() - 100.0 / 70.0).abs() < 1e-15);
    }
}
