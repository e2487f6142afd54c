//! Trace files on disk.
//!
//! A run is stored as `<run-id>.trace.csv` with header `t_end_s,flow_id,bytes`
//! (one row per interval and flow, ascending) next to `<run-id>.meta.json`
//! holding the configuration, seed, counters and engine version.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::sim::{FlowCounters, RateTrace, ScenarioConfig, TraceMeta, ENGINE_VERSION};

pub const CSV_HEADER: &str = "t_end_s,flow_id,bytes";

/// What was written for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub config: ScenarioConfig,
    pub counters: Vec<FlowCounters>,
    pub trace_path: PathBuf,
    pub meta_path: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    run_id: String,
    interval_s: f64,
    start_s: f64,
    num_intervals: usize,
    meta: TraceMeta,
}

/// Stable identifier of a run: SHA-256 over the canonical JSON of the
/// configuration, the seed and the engine version, hex encoded.
pub fn run_id(config: &ScenarioConfig, seed: u64, engine_version: &str) -> String {
    content_id(config, &format!("{seed}\n{engine_version}"))
}

/// Short hex digest of the canonical JSON of `value` followed by `salt`.
pub fn content_id<T: Serialize>(value: &T, salt: &str) -> String {
    // serde_json::Value keeps object keys sorted, which makes the encoding
    // independent of field order.
    let value = serde_json::to_value(value).expect("value serializes");
    let canonical = serde_json::to_string(&value).expect("value serializes");
    let mut h = Sha256::new();
    h.update(canonical.as_bytes());
    h.update(b"\n");
    h.update(salt.as_bytes());
    let digest = h.finalize();
    digest[..8].iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn trace_file(dir: &Path, run_id: &str) -> PathBuf {
    metric_file(dir, run_id, "trace")
}

pub fn meta_file(dir: &Path, run_id: &str) -> PathBuf {
    dir.join(format!("{run_id}.meta.json"))
}

/// `<dir>/<run-id>.<metric>.csv`
pub fn metric_file(dir: &Path, run_id: &str, metric: &str) -> PathBuf {
    dir.join(format!("{run_id}.{metric}.csv"))
}

/// Sidecar path for a trace CSV: `x.trace.csv` maps to `x.meta.json`.
pub fn sidecar_for(trace_path: &Path) -> PathBuf {
    let name = trace_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let stem = name
        .strip_suffix(".trace.csv")
        .or_else(|| name.strip_suffix(".csv"))
        .unwrap_or(&name);
    trace_path.with_file_name(format!("{stem}.meta.json"))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Formats interval end times without float noise (`t_end_s` column).
fn format_time(t: f64) -> String {
    let r = (t * 1e9).round() / 1e9;
    format!("{r}")
}

pub fn trace_csv(trace: &RateTrace) -> String {
    let mut out = String::with_capacity(16 * trace.num_intervals() * trace.num_flows() + 32);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for k in 0..trace.num_intervals() {
        let t_end = format_time(trace.start_s + (k + 1) as f64 * trace.interval_s);
        for (f, series) in trace.bytes.iter().enumerate() {
            let _ = writeln!(out, "{t_end},{f},{}", series[k]);
        }
    }
    out
}

/// Writes the trace CSV and its metadata sidecar into `dir`.
pub fn write_trace(trace: &RateTrace, dir: &Path) -> Result<RunRecord> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let id = run_id(
        &trace.meta.config,
        trace.meta.seed,
        &trace.meta.engine_version,
    );
    let trace_path = trace_file(dir, &id);
    let meta_path = meta_file(dir, &id);
    fs::write(&trace_path, trace_csv(trace)).map_err(io_err(&trace_path))?;
    let sidecar = Sidecar {
        run_id: id.clone(),
        interval_s: trace.interval_s,
        start_s: trace.start_s,
        num_intervals: trace.num_intervals(),
        meta: trace.meta.clone(),
    };
    let json = serde_json::to_string_pretty(&sidecar).map_err(|source| Error::Json {
        path: meta_path.clone(),
        source,
    })?;
    fs::write(&meta_path, json + "\n").map_err(io_err(&meta_path))?;
    Ok(RunRecord {
        run_id: id,
        config: trace.meta.config.clone(),
        counters: trace.meta.counters.clone(),
        trace_path,
        meta_path,
    })
}

/// A trace read back from disk plus non-fatal findings.
#[derive(Debug, Clone)]
pub struct LoadedTrace {
    pub trace: RateTrace,
    pub run_id: String,
    pub warnings: Vec<String>,
}

/// Reads a trace CSV and its sidecar and checks them against each other.
pub fn read_trace(trace_path: &Path) -> Result<LoadedTrace> {
    let meta_path = sidecar_for(trace_path);
    if !meta_path.exists() {
        return Err(Error::MissingMetadata(meta_path));
    }
    let meta_text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
    let sidecar: Sidecar = serde_json::from_str(&meta_text).map_err(|source| Error::Json {
        path: meta_path.clone(),
        source,
    })?;
    let text = fs::read_to_string(trace_path).map_err(io_err(trace_path))?;
    let n_flows = sidecar.meta.counters.len();
    let bytes = parse_csv(&text, trace_path, n_flows, &sidecar)?;

    let mut warnings = Vec::new();
    if sidecar.meta.engine_version != ENGINE_VERSION {
        warnings.push(format!(
            "trace written by {}, reading with {}",
            sidecar.meta.engine_version, ENGINE_VERSION
        ));
    }
    let trace = RateTrace {
        interval_s: sidecar.interval_s,
        start_s: sidecar.start_s,
        bytes,
        meta: sidecar.meta,
    };
    if trace.start_s == 0.0 {
        trace.validate()?;
    }
    Ok(LoadedTrace {
        trace,
        run_id: sidecar.run_id,
        warnings,
    })
}

fn parse_csv(text: &str, path: &Path, n_flows: usize, sidecar: &Sidecar) -> Result<Vec<Vec<u64>>> {
    let err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        Some((_, h)) => return Err(err(1, format!("expected header `{CSV_HEADER}`, got `{h}`"))),
        None => return Err(err(1, "empty file".into())),
    }
    let mut bytes = vec![Vec::with_capacity(sidecar.num_intervals); n_flows];
    let mut rows = 0usize;
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let (t, f, b) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(t), Some(f), Some(b), None) => (t, f, b),
            _ => return Err(err(lineno, format!("expected 3 fields, got `{line}`"))),
        };
        let t: f64 = t
            .trim()
            .parse()
            .map_err(|_| err(lineno, format!("bad t_end_s `{t}`")))?;
        let f: usize = f
            .trim()
            .parse()
            .map_err(|_| err(lineno, format!("bad flow_id `{f}`")))?;
        let b: u64 = b
            .trim()
            .parse()
            .map_err(|_| err(lineno, format!("bad bytes `{b}`")))?;
        // Rows must come interval by interval, flows in order.
        let (k, expected_flow) = (rows / n_flows.max(1), rows % n_flows.max(1));
        if f != expected_flow {
            return Err(err(
                lineno,
                format!("expected flow {expected_flow}, got {f}"),
            ));
        }
        let t_expected = sidecar.start_s + (k + 1) as f64 * sidecar.interval_s;
        if (t - t_expected).abs() > 1e-6 * t_expected.max(1.0) {
            return Err(err(
                lineno,
                format!("expected t_end_s {t_expected}, got {t}"),
            ));
        }
        bytes[f].push(b);
        rows += 1;
    }
    let expected_rows = sidecar.num_intervals * n_flows;
    if rows != expected_rows {
        return Err(err(
            text.lines().count() + 1,
            format!("file ends after {rows} rows, metadata promises {expected_rows}"),
        ));
    }
    Ok(bytes)
}
