//! Signal bundle persistence.
//!
//! A bundle is two files sharing a stem: `<stem>.bin` holds little-endian f64
//! samples, row-major (signal by signal), and `<stem>.json` holds the header
//! `{version, n_signals, n_samples, sample_rate_hz, labels, source_id}`.
//! CSV files (one signal per row) can be imported but are never written.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{SignalSet, VibrationSignal};

pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleHeader {
    pub version: u32,
    pub n_signals: usize,
    pub n_samples: usize,
    pub sample_rate_hz: f64,
    pub labels: Vec<Option<String>>,
    #[serde(default)]
    pub source_id: String,
}

/// Header and payload paths for a bundle given either file or the bare stem.
pub fn bundle_paths(path: impl AsRef<Path>) -> (PathBuf, PathBuf) {
    let p = path.as_ref();
    (p.with_extension("json"), p.with_extension("bin"))
}

pub fn save_bundle(set: &SignalSet, path: impl AsRef<Path>) -> Result<()> {
    let (header_path, data_path) = bundle_paths(path);
    let header = BundleHeader {
        version: BUNDLE_VERSION,
        n_signals: set.len(),
        n_samples: set.segment_len(),
        sample_rate_hz: set.sample_rate_hz(),
        labels: set.iter().map(|s| s.label().map(str::to_owned)).collect(),
        source_id: set.source_id().to_owned(),
    };
    let mut bytes = Vec::with_capacity(set.len() * set.segment_len() * 8);
    for s in set.iter() {
        for v in s.samples() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let json = serde_json::to_string_pretty(&header)
        .map_err(|e| Error::format("header", e.to_string()))?;
    fs::write(&header_path, json).map_err(|e| Error::io(&header_path, e))?;
    fs::write(&data_path, bytes).map_err(|e| Error::io(&data_path, e))?;
    Ok(())
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<SignalSet> {
    let (header_path, data_path) = bundle_paths(path);
    let text = fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
    let header: BundleHeader =
        serde_json::from_str(&text).map_err(|e| Error::format("header", e.to_string()))?;
    let bytes = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
    decode_bundle(&header, &bytes)
}

/// Rebuilds a set from a parsed header and raw payload bytes.
pub fn decode_bundle(header: &BundleHeader, bytes: &[u8]) -> Result<SignalSet> {
    if header.version != BUNDLE_VERSION {
        return Err(Error::format(
            "version",
            format!("unsupported version {}", header.version),
        ));
    }
    if header.n_signals == 0 {
        return Err(Error::format("n_signals", "must be at least 1"));
    }
    if header.n_samples < 2 {
        return Err(Error::format("n_samples", "must be at least 2"));
    }
    if !(header.sample_rate_hz.is_finite() && header.sample_rate_hz > 0.0) {
        return Err(Error::format("sample_rate_hz", "must be positive"));
    }
    if header.labels.len() != header.n_signals {
        return Err(Error::format(
            "labels",
            format!(
                "{} labels for {} signals",
                header.labels.len(),
                header.n_signals
            ),
        ));
    }
    let expected = header
        .n_signals
        .checked_mul(header.n_samples)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::format("n_signals", "size overflow"))?;
    if bytes.len() != expected {
        return Err(Error::format(
            "payload",
            format!(
                "header says {}x{} samples ({expected} bytes) but payload has {} bytes",
                header.n_signals,
                header.n_samples,
                bytes.len()
            ),
        ));
    }
    let mut signals = Vec::with_capacity(header.n_signals);
    for (i, row) in bytes.chunks_exact(header.n_samples * 8).enumerate() {
        let samples: Vec<f64> = row
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        if let Some(j) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::format(
                "payload",
                format!("non-finite sample at signal {i}, index {j}"),
            ));
        }
        let mut s = VibrationSignal::new(samples, header.sample_rate_hz)?;
        if let Some(label) = &header.labels[i] {
            s = s.with_label(label.clone());
        }
        signals.push(s);
    }
    SignalSet::new(signals, header.source_id.clone())
}

/// Parses CSV text with one signal per row.
pub fn parse_csv(text: &str, sample_rate_hz: f64, source_id: &str) -> Result<SignalSet> {
    let mut rows = Vec::new();
    for (r, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .enumerate()
            .map(|(c, cell)| {
                let v: f64 = cell.trim().parse().map_err(|_| {
                    Error::format(format!("row {r}, column {c}"), format!("not a number: {cell:?}"))
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::format(
                        format!("row {r}, column {c}"),
                        "non-finite value",
                    ))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if let Some(first) = rows.first() {
        let n = first.len();
        if let Some(r) = rows.iter().position(|row| row.len() != n) {
            return Err(Error::format(
                format!("row {r}"),
                format!("has {} columns, expected {n}", rows[r].len()),
            ));
        }
    }
    SignalSet::from_rows(rows, sample_rate_hz, source_id)
}

pub fn import_csv(path: impl AsRef<Path>, sample_rate_hz: f64) -> Result<SignalSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_csv(&text, sample_rate_hz, &id)
}

/// Loads `.csv` files through the CSV importer and anything else as a bundle.
pub fn load_any(path: impl AsRef<Path>, csv_rate_hz: f64) -> Result<SignalSet> {
    let p = path.as_ref();
    match p.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => import_csv(p, csv_rate_hz),
        _ => load_bundle(p),
    }
}
