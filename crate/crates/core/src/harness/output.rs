//! sweep.csv, sweep.json and per-cell solution CSVs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::sweep::{CellSolution, SweepRow, SweepTable};
use super::HarnessError;

/// Column order of sweep.csv. Empty fields mean "not applicable" or, with
/// `status = failed`, "not computed".
pub const CSV_HEADER: [&str; 15] = [
    "kind",
    "n",
    "p",
    "status",
    "node_count",
    "iterations",
    "energy",
    "objective",
    "kkt_residual",
    "sup_diff_to_next",
    "sup_diff_to_limit",
    "objective_gap",
    "holder_excess",
    "error",
    "solution_file",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub version: String,
    pub timestamp_unix: u64,
    pub seed: u64,
    pub workers: usize,
    pub command: String,
}

impl RunMetadata {
    pub fn now(config: &ExperimentConfig, workers: usize, command: &str) -> Self {
        Self {
            version: format!("fraktal {}", env!("CARGO_PKG_VERSION")),
            timestamp_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            seed: config.solver.seed,
            workers,
            command: command.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepDocument {
    pub metadata: RunMetadata,
    pub config: ExperimentConfig,
    pub table: SweepTable,
}

fn num<T: std::fmt::Debug>(v: Option<T>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

pub fn cell_file_name(n: u32, p: &str) -> String {
    format!("cell_n{n}_p{p}.csv")
}

fn csv_row(row: &SweepRow, solution: Option<&str>) -> Vec<String> {
    vec![
        row.kind.as_str().to_string(),
        row.n.to_string(),
        row.p.label(),
        row.status.as_str().to_string(),
        row.node_count.to_string(),
        row.iterations.map(|i| i.to_string()).unwrap_or_default(),
        num(row.energy),
        num(row.objective),
        num(row.kkt_residual),
        num(row.sup_diff_to_next),
        num(row.sup_diff_to_limit),
        num(row.objective_gap),
        num(row.holder_excess),
        row.error.clone().unwrap_or_default(),
        solution.unwrap_or_default().to_string(),
    ]
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_sweep_csv(table: &SweepTable, path: &Path, with_cells: bool) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::Csv {
        path: path.display().to_string(),
        source: e,
    })?;
    let wrap = |e: csv::Error| HarnessError::Csv {
        path: path.display().to_string(),
        source: e,
    };
    w.write_record(CSV_HEADER).map_err(wrap)?;
    for row in &table.rows {
        let file = (with_cells && table.solution(row.n, row.p).is_some() && row.is_ok())
            .then(|| cell_file_name(row.n, &row.p.label()));
        w.write_record(csv_row(row, file.as_deref())).map_err(wrap)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// `node_index,x,y,u[,class]`.
pub fn write_cell_csv(cell: &CellSolution, path: &Path) -> Result<(), HarnessError> {
    let wrap = |e: csv::Error| HarnessError::Csv {
        path: path.display().to_string(),
        source: e,
    };
    let mut w = csv::Writer::from_path(path).map_err(wrap)?;
    let mut header = vec!["node_index", "x", "y", "u"];
    if cell.classes.is_some() {
        header.push("class");
    }
    w.write_record(&header).map_err(wrap)?;
    for (i, (pt, u)) in cell.nodes.iter().zip(&cell.values).enumerate() {
        let mut rec = vec![i.to_string(), format!("{:?}", pt.x), format!("{:?}", pt.y), format!("{u:?}")];
        if let Some(c) = &cell.classes {
            rec.push(c[i].as_str().to_string());
        }
        w.write_record(&rec).map_err(wrap)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Writes the configured formats into `dir` and returns the files written.
pub fn emit_outputs(
    table: &SweepTable,
    config: &ExperimentConfig,
    metadata: &RunMetadata,
    dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    let formats = &config.output.formats;
    if formats.iter().any(|f| f == "csv") {
        for cell in &table.solutions {
            let path = dir.join(cell_file_name(cell.n, &cell.p.label()));
            write_cell_csv(cell, &path)?;
            written.push(path);
        }
        let path = dir.join("sweep.csv");
        write_sweep_csv(table, &path, true)?;
        written.push(path);
    }
    if formats.iter().any(|f| f == "json") {
        let doc = SweepDocument {
            metadata: metadata.clone(),
            config: config.clone(),
            table: table.clone(),
        };
        let path = dir.join("sweep.json");
        let text = serde_json::to_string_pretty(&doc)?;
        fs::write(&path, text).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}

pub fn read_sweep_json(path: &Path) -> Result<SweepDocument, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}
