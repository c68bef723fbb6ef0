//! File formats: numeric CSV input, atomic output writing, and the JSON
//! result records.
//!
//! The CSV reader accepts the RFC-4180 subset this tool emits: UTF-8,
//! comma-separated numeric cells with '.' decimals, optional single header
//! row (detected when the first row fails to parse as numbers), no quoting.

use hiertest_core::Matrix;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Errors carry the process exit code demanded by the interface contract:
/// 2 for anything that failed to parse or validate, 3 for dimension
/// mismatches between otherwise valid inputs.
#[derive(Debug)]
pub enum CliError {
    Parse(String),
    Dimension(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Dimension(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Parse(m) => write!(f, "parse error: {m}"),
            CliError::Dimension(m) => write!(f, "dimension mismatch: {m}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn parse_cell(cell: &str, line_no: usize, col_no: usize) -> Result<f64, CliError> {
    let trimmed = cell.trim();
    trimmed.parse::<f64>().map_err(|_| {
        CliError::Parse(format!(
            "non-numeric cell '{trimmed}' at line {line_no}, column {col_no}"
        ))
    })
}

/// Reads a numeric matrix; returns the parsed data and the header row when
/// one was detected.
pub fn parse_matrix_csv(path: &Path) -> Result<(Matrix, Option<Vec<String>>), CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?;
    parse_matrix_str(&text, path)
}

fn parse_matrix_str(text: &str, path: &Path) -> Result<(Matrix, Option<Vec<String>>), CliError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut header: Option<Vec<String>> = None;
    let mut width: Option<usize> = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if idx == 0 && cells.iter().any(|c| c.trim().parse::<f64>().is_err()) {
            // header row: every later row must parse as numbers
            header = Some(cells.iter().map(|c| c.trim().to_string()).collect());
            width = Some(cells.len());
            continue;
        }
        if let Some(w) = width {
            if cells.len() != w {
                return Err(CliError::Parse(format!(
                    "ragged row at line {line_no}: expected {w} cells, found {}",
                    cells.len()
                )));
            }
        } else {
            width = Some(cells.len());
        }
        let mut row = Vec::with_capacity(cells.len());
        for (j, cell) in cells.iter().enumerate() {
            row.push(parse_cell(cell, line_no, j + 1)?);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Parse(format!(
            "{} contains no data rows",
            path.display()
        )));
    }
    let matrix = Matrix::from_rows(&rows)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    Ok((matrix, header))
}

/// Reads a single-column response vector (optional header).
pub fn parse_vector_csv(path: &Path) -> Result<Vec<f64>, CliError> {
    let (m, _) = parse_matrix_csv(path)?;
    if m.cols() != 1 {
        return Err(CliError::Dimension(format!(
            "{} holds a {}x{} matrix; the response must be a single column",
            path.display(),
            m.rows(),
            m.cols()
        )));
    }
    Ok(m.col(0))
}

/// Writes a matrix with 17 significant digits so reading it back
/// reproduces every f64 bit-exactly.
pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<(), CliError> {
    let mut out = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

/// All-or-nothing write: the content lands in a temporary sibling first and
/// is renamed into place, so a crash never leaves a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = PathBuf::from(dir);
    tmp.push(format!(
        ".{}.tmp-{}",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out"),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// One row per tree node in `results.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRecord {
    pub cluster_id: usize,
    /// 1-based variable indices.
    pub variables: Vec<usize>,
    pub size: usize,
    pub p_c: f64,
    pub p_h: f64,
    pub rejected: bool,
    pub minimal_detection: bool,
}
