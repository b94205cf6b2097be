//! Result files: one CSV row per iteration per method, plus a JSON sidecar.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::optimizer::{IterationRecord, RunTrajectory};
use crate::validate::MomentCheck;
use crate::{Error, Result};

pub const CSV_HEADER: [&str; 10] = [
    "iter",
    "method",
    "chosen_w",
    "y_star_norm",
    "y_star_raw",
    "epistemic",
    "aleatoric",
    "best_so_far",
    "gap",
    "oracle_calls",
];

/// Wall-clock information. Kept in a single field so that two runs with the
/// same seed differ only here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_unix_seconds: f64,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub initial_best: f64,
    pub final_best: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub config: RunConfig,
    pub seed: u64,
    pub methods: Vec<MethodSummary>,
    pub moment_diagnostic: Option<MomentCheck>,
    pub timing: Timing,
}

impl Metadata {
    pub fn new(config: &RunConfig, runs: &[RunTrajectory], moment_diagnostic: Option<MomentCheck>, timing: Timing) -> Self {
        Self {
            config: config.clone(),
            seed: config.seed,
            methods: runs
                .iter()
                .map(|r| MethodSummary {
                    method: r.method.clone(),
                    initial_best: r.initial_best,
                    final_best: r.final_best(),
                })
                .collect(),
            moment_diagnostic,
            timing,
        }
    }
}

/// The sidecar path for a CSV: same stem, `.json` extension.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Writes the CSV and its JSON sidecar. Every trajectory must be complete.
pub fn write_results(path: &Path, runs: &[RunTrajectory], metadata: &Metadata) -> Result<PathBuf> {
    if let Some(r) = runs.iter().find(|r| !r.is_complete()) {
        return Err(Error::invalid(format!(
            "run `{}` is incomplete: {}",
            r.method,
            r.incomplete.as_deref().unwrap_or_default()
        )));
    }
    write_csv(path, runs)?;
    let sidecar = sidecar_path(path);
    let json = serde_json::to_string_pretty(metadata)?;
    std::fs::write(&sidecar, json).map_err(|e| Error::io(&sidecar, e))?;
    Ok(sidecar)
}

pub fn write_csv(path: &Path, runs: &[RunTrajectory]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(CSV_HEADER)?;
    for run in runs {
        for r in &run.records {
            w.write_record([
                r.k.to_string(),
                run.method.clone(),
                cell(r.chosen_w),
                cell(r.y_star_norm),
                cell(r.y_star_raw),
                cell(r.epistemic),
                cell(r.aleatoric),
                r.best_so_far.to_string(),
                cell(r.gap),
                r.oracle_calls.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

// `Display` for f64 prints the shortest string that parses back exactly.
fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Reads a results CSV back as `(method, record)` rows.
pub fn read_csv(path: &Path) -> Result<Vec<(String, IterationRecord)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header = rdr.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::invalid(format!("unexpected CSV header in {}", path.display())));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<Option<f64>> {
            let s = &rec[i];
            if s.is_empty() {
                return Ok(None);
            }
            s.parse()
                .map(Some)
                .map_err(|_| Error::invalid(format!("bad number `{s}` in column {}", CSV_HEADER[i])))
        };
        let int = |i: usize| -> Result<usize> {
            rec[i]
                .parse()
                .map_err(|_| Error::invalid(format!("bad integer `{}` in column {}", &rec[i], CSV_HEADER[i])))
        };
        rows.push((
            rec[1].to_string(),
            IterationRecord {
                k: int(0)?,
                chosen_w: f(2)?,
                y_star_norm: f(3)?,
                y_star_raw: f(4)?,
                epistemic: f(5)?,
                aleatoric: f(6)?,
                best_so_far: f(7)?.ok_or_else(|| Error::invalid("empty best_so_far"))?,
                gap: f(8)?,
                oracle_calls: int(9)?,
            },
        ));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(k: usize, acquired: bool) -> IterationRecord {
        let some = |x: f64| acquired.then_some(x);
        IterationRecord {
            k,
            chosen_w: some(0.7),
            y_star_norm: some(0.1 + 0.2),
            y_star_raw: some(-1.0 / 3.0),
            epistemic: some(1e-17),
            aleatoric: some(123456.789e10),
            best_so_far: -2.0 / 7.0 + k as f64,
            gap: some(std::f64::consts::PI),
            oracle_calls: 20 * k,
        }
    }

    fn runs() -> Vec<RunTrajectory> {
        ["uae", "random"]
            .iter()
            .map(|m| RunTrajectory {
                method: m.to_string(),
                seed: 3,
                initial_best: -5.0,
                records: (1..=16).map(|k| record(k, *m != "random")).collect(),
                incomplete: None,
            })
            .collect()
    }

    fn meta(runs: &[RunTrajectory]) -> Metadata {
        let timing = Timing {
            started_unix_seconds: 0.0,
            wall_clock_seconds: 1.0,
        };
        Metadata::new(&RunConfig::new("sphere2d"), runs, None, timing)
    }

    #[test]
    fn header_and_row_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let runs = runs();
        let sidecar = write_results(&path, &runs, &meta(&runs)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "iter,method,chosen_w,y_star_norm,y_star_raw,epistemic,aleatoric,best_so_far,gap,oracle_calls"
        );
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 32);
        assert_eq!(rows.iter().filter(|l| l.split(',').nth(1) == Some("uae")).count(), 16);
        assert!(rows.iter().all(|l| l.split(',').count() == 10));
        assert!(rows.last().unwrap().starts_with("16,random,,,,,,"));
        let back: Metadata = serde_json::from_str(&std::fs::read_to_string(sidecar).unwrap()).unwrap();
        assert_eq!(back, meta(&runs));
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let runs = runs();
        write_csv(&path, &runs).unwrap();
        let back = read_csv(&path).unwrap();
        let expected: Vec<(String, IterationRecord)> = runs
            .iter()
            .flat_map(|r| r.records.iter().map(|rec| (r.method.clone(), rec.clone())))
            .collect();
        assert_eq!(back, expected);
    }

    #[test]
    fn incomplete_runs_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut runs = runs();
        runs[0].incomplete = Some("oracle failure".into());
        let err = write_results(&dir.path().join("r.csv"), &runs, &meta(&runs)).unwrap_err();
        assert!(err.to_string().contains("incomplete"));
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let runs = runs();
        let err = write_results(Path::new("/nonexistent/dir/r.csv"), &runs, &meta(&runs)).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
