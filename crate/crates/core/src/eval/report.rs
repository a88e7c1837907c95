//! Report bundle: `counts.csv`, `gar_table.csv`, `gar_points.csv` and one
//! `roc_<scenario>.csv` per scenario.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use super::{compute_roc, gar_at_far, EvalError, OperatingPoint, PairKind, ScoreSet};
use crate::dataset::CountStats;

/// FAR of 0.001%, 0.01% and 0.1%.
pub const DEFAULT_FAR_TARGETS: [f64; 3] = [1e-5, 1e-4, 1e-3];

#[derive(Debug, Clone)]
pub struct ReportScenario {
    pub name: String,
    pub scores: ScoreSet,
    pub counts: Option<CountStats>,
    pub rejection_fraction: Option<f64>,
}

impl ReportScenario {
    pub fn new(name: impl Into<String>, scores: ScoreSet) -> Self {
        Self { name: name.into(), scores, counts: None, rejection_fraction: None }
    }
}

fn file_safe(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn percent_label(fraction: f64) -> String {
    let s = format!("{:.6}", fraction * 100.0);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    format!("far_{s}%")
}

/// `[low - value - high]` in percent with one decimal, like a printed GAR table.
pub fn format_cell(op: &OperatingPoint) -> String {
    format!("[{:.1} - {:.1} - {:.1}]", op.ci_low * 100.0, op.gar * 100.0, op.ci_high * 100.0)
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), EvalError> {
    let file_err = |e: &dyn std::fmt::Display| EvalError::File { path: path.to_path_buf(), reason: e.to_string() };
    let mut w = csv::Writer::from_path(path).map_err(|e| file_err(&e))?;
    w.write_record(header).map_err(|e| file_err(&e))?;
    for r in rows {
        w.write_record(r).map_err(|e| file_err(&e))?;
    }
    w.flush().map_err(|e| file_err(&e))
}

/// Write the bundle into `dir` (created if needed) and return the files written.
pub fn emit_report(dir: &Path, scenarios: &[ReportScenario], far_targets: &[f64]) -> Result<Vec<PathBuf>, EvalError> {
    if scenarios.is_empty() {
        return Err(EvalError::EmptyReport);
    }
    let mut names = BTreeSet::new();
    for s in scenarios {
        if !names.insert(file_safe(&s.name)) {
            return Err(EvalError::Other(format!("scenario name `{}` is not unique", s.name)));
        }
    }
    fs::create_dir_all(dir).map_err(|e| EvalError::File { path: dir.to_path_buf(), reason: e.to_string() })?;

    let mut written = Vec::new();

    let counts_path = dir.join("counts.csv");
    let rows: Vec<Vec<String>> = scenarios
        .iter()
        .filter_map(|s| {
            s.counts.map(|c| {
                vec![
                    s.name.clone(),
                    format!("{:.1}", c.mean),
                    format!("{:.1}", c.std),
                    c.min.to_string(),
                    c.max.to_string(),
                ]
            })
        })
        .collect();
    write_csv(&counts_path, &["scenario", "mean", "std", "min", "max"].map(String::from), &rows)?;
    written.push(counts_path);

    let mut table_header: Vec<String> =
        ["scenario", "genuine", "imposter", "rejected"].iter().map(|s| s.to_string()).collect();
    table_header.extend(far_targets.iter().map(|&f| percent_label(f)));
    let mut table_rows = Vec::new();
    let mut point_rows = Vec::new();

    for s in scenarios {
        let roc = compute_roc(&s.scores)?;
        let roc_path = dir.join(format!("roc_{}.csv", file_safe(&s.name)));
        let rows: Vec<Vec<String>> =
            roc.points.iter().map(|p| vec![p.threshold.to_string(), p.far.to_string(), p.gar.to_string()]).collect();
        write_csv(&roc_path, &["threshold", "far", "gar"].map(String::from), &rows)?;
        written.push(roc_path);

        let genuine = s.scores.entries.iter().filter(|e| e.pair.kind == PairKind::Genuine).count();
        let mut row = vec![
            s.name.clone(),
            genuine.to_string(),
            (s.scores.entries.len() - genuine).to_string(),
            s.rejection_fraction.map(|f| format!("{f:.4}")).unwrap_or_default(),
        ];
        for &target in far_targets {
            let op = gar_at_far(&roc, &s.scores, target)?;
            row.push(format_cell(&op));
            point_rows.push(vec![
                s.name.clone(),
                target.to_string(),
                op.threshold.to_string(),
                op.achieved_far.to_string(),
                op.gar.to_string(),
                op.ci_low.to_string(),
                op.ci_high.to_string(),
            ]);
        }
        table_rows.push(row);
    }

    let table_path = dir.join("gar_table.csv");
    write_csv(&table_path, &table_header, &table_rows)?;
    written.push(table_path);

    let points_path = dir.join("gar_points.csv");
    write_csv(
        &points_path,
        &["scenario", "target_far", "threshold", "achieved_far", "gar", "ci_low", "ci_high"].map(String::from),
        &point_rows,
    )?;
    written.push(points_path);
    Ok(written)
}
