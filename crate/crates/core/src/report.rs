//! Campaign results and their on-disk form.
//!
//! `emit_results` writes three kinds of files into a directory:
//!
//! * `se_table.csv` with header `ue,scheme,direction,se,stderr`; `ue` runs
//!   over all setups (`setup · K + k`),
//! * `cdf_<scheme>_<direction>.csv` with columns `se,cdf`,
//! * `metadata.json` with the config, seed, fingerprint and the cluster
//!   assignment of every setup.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Scheme, SimulationConfig};
use crate::dcc::ClusterAssignment;
use crate::error::{Error, Result};
use crate::performance::cdf_statistics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Direction {
    #[serde(rename = "UL")]
    Ul,
    #[serde(rename = "DL")]
    Dl,
    /// DL with the instantaneous effective channel known at the UE.
    #[serde(rename = "DL-genie")]
    DlGenie,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Ul => "UL",
            Direction::Dl => "DL",
            Direction::DlGenie => "DL-genie",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeRow {
    pub ue: usize,
    pub setup: usize,
    pub scheme: Scheme,
    pub direction: Direction,
    pub se: f64,
    pub stderr: f64,
}

/// Cluster structure of one setup, kept for reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssignmentSummary {
    pub setup: usize,
    pub pilots: Vec<usize>,
    pub masters: Vec<usize>,
    pub serving_aps: Vec<Vec<usize>>,
    pub partner_counts: Vec<usize>,
    pub max_ap_load: usize,
}

impl AssignmentSummary {
    pub fn new(setup: usize, a: &ClusterAssignment, partners: &[Vec<usize>]) -> Self {
        AssignmentSummary {
            setup,
            pilots: a.pilots(),
            masters: (0..a.num_ues()).map(|k| a.master(k)).collect(),
            serving_aps: (0..a.num_ues()).map(|k| a.serving_list(k)).collect(),
            partner_counts: partners.iter().map(Vec::len).collect(),
            max_ap_load: (0..a.num_aps()).map(|l| a.served_by_ap(l).len()).max().unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeReport {
    pub config: SimulationConfig,
    pub fingerprint: String,
    /// Sorted by scheme, direction, then UE.
    pub rows: Vec<SeRow>,
    pub assignments: Vec<AssignmentSummary>,
}

impl SeReport {
    /// `(scheme, direction)` pairs present, in row order.
    pub fn columns(&self) -> Vec<(Scheme, Direction)> {
        let mut out: Vec<(Scheme, Direction)> = Vec::new();
        for r in &self.rows {
            if out.last() != Some(&(r.scheme, r.direction)) {
                out.push((r.scheme, r.direction));
            }
        }
        out
    }

    /// Per-UE SE values of one column, ordered by UE.
    pub fn values(&self, scheme: Scheme, direction: Direction) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.scheme == scheme && r.direction == direction)
            .map(|r| r.se)
            .collect()
    }

    pub fn mean(&self, scheme: Scheme, direction: Direction) -> Option<f64> {
        let v = self.values(scheme, direction);
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Mean SE over the UEs of each setup.
    pub fn setup_means(&self, scheme: Scheme, direction: Direction) -> Vec<f64> {
        let mut sums = vec![0.0; self.config.num_setups];
        let mut counts = vec![0usize; self.config.num_setups];
        for r in self.rows.iter().filter(|r| r.scheme == scheme && r.direction == direction) {
            sums[r.setup] += r.se;
            counts[r.setup] += 1;
        }
        sums.iter().zip(&counts).filter(|(_, &c)| c > 0).map(|(s, &c)| s / c as f64).collect()
    }
}

#[derive(Serialize)]
struct Metadata<'a> {
    seed: u64,
    fingerprint: &'a str,
    config: &'a SimulationConfig,
    columns: Vec<String>,
    assignments: &'a [AssignmentSummary],
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.write_record(&r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes the result files; returns the paths written.
pub fn emit_results(report: &SeReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();

    let table = dir.join("se_table.csv");
    write_csv(
        &table,
        &["ue", "scheme", "direction", "se", "stderr"],
        report.rows.iter().map(|r| {
            vec![
                r.ue.to_string(),
                r.scheme.to_string(),
                r.direction.to_string(),
                r.se.to_string(),
                r.stderr.to_string(),
            ]
        }),
    )?;
    written.push(table);

    for (scheme, direction) in report.columns() {
        let cdf = cdf_statistics(&report.values(scheme, direction))?;
        let path = dir.join(format!("cdf_{scheme}_{direction}.csv"));
        write_csv(
            &path,
            &["se", "cdf"],
            cdf.values
                .iter()
                .zip(&cdf.levels)
                .map(|(v, c)| vec![v.to_string(), c.to_string()]),
        )?;
        written.push(path);
    }

    let meta = Metadata {
        seed: report.config.seed,
        fingerprint: &report.fingerprint,
        config: &report.config,
        columns: report
            .columns()
            .iter()
            .map(|(s, d)| format!("{s}/{d}"))
            .collect(),
        assignments: &report.assignments,
    };
    let path = dir.join("metadata.json");
    let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    written.push(path);
    Ok(written)
}
