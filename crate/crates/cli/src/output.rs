//! Exit-code mapping and small file-writing helpers.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tcpspread::Error;

/// Why a command stopped. Each variant maps to one exit code.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    /// Bad flags or parameters (exit 1).
    #[error("{0}")]
    Usage(String),
    /// Some acceptance checks failed (exit 2).
    #[error("{0} check(s) failed")]
    Verification(usize),
    /// Files could not be read or written, or held bad data (exit 3).
    #[error("{0}")]
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Verification(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. }
            | Error::UnreachableRate { .. }
            | Error::IntervalMismatch { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Io(e.to_string()),
        }
    }
}

pub fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))
}

pub fn write_file(path: &Path, contents: &str) -> Result<PathBuf, Failure> {
    fs::write(path, contents).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    Ok(path.to_path_buf())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf, Failure> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    write_file(path, &(text + "\n"))
}

/// CSV text from a header and rows of already formatted cells.
pub fn csv(header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Whitespace-separated columns with a `#` comment header, for gnuplot.
pub fn dat(comment: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = String::new();
    for line in comment.lines() {
        let _ = writeln!(out, "# {line}");
    }
    for row in rows {
        let cells: Vec<String> = row.iter().map(|x| format!("{x}")).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}
