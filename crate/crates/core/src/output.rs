//! Persistence: CSV/JSONL writers with fixed numeric formatting, trajectory
//! snapshots, and the run manifest.
//!
//! Numeric CSV fields use a fixed 17-significant-digit scientific form so
//! that re-running a configuration reproduces files byte for byte and every
//! value round-trips through f64 exactly.

use crate::error::Result;
use crate::stats::DiagnosticsRow;
use crate::vec3::Vec3;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// 17 significant digits: 1 leading + 16 fractional.
pub fn format_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.16e}")
    }
}

pub fn parse_f64(s: &str) -> f64 {
    if s == "nan" {
        f64::NAN
    } else {
        s.parse().unwrap_or(f64::NAN)
    }
}

pub fn write_csv(path: &Path, header: &str, rows: &[Vec<f64>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{header}")?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format_f64(*v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_diagnostics_csv(path: &Path, rows: &[DiagnosticsRow]) -> Result<()> {
    let data: Vec<Vec<f64>> = rows.iter().map(|r| r.csv_fields().to_vec()).collect();
    write_csv(path, DiagnosticsRow::CSV_HEADER, &data)
}

/// Append serialized rows as complete JSON lines (one flush per line, so a
/// killed run still leaves parseable output).
pub fn append_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = BufWriter::new(OpenOptions::new().create(true).append(true).open(path)?);
    for row in rows {
        let line = serde_json::to_string(row)
            .map_err(|e| crate::Error::InvalidInput(format!("serialize: {e}")))?;
        writeln!(w, "{line}")?;
        w.flush()?;
    }
    Ok(())
}

pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    Ok(std::fs::read_to_string(path)?
        .lines()
        .map(str::to_string)
        .collect())
}

/// Positions at the stored times, long format.
pub fn write_snapshots_csv(path: &Path, times: &[f64], snapshots: &[Vec<Vec3>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t,particle,x,y,z")?;
    for (t, snap) in times.iter().zip(snapshots) {
        for (i, p) in snap.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{}",
                format_f64(*t),
                i,
                format_f64(p[0]),
                format_f64(p[1]),
                format_f64(p[2])
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Flat little-endian binary layout: magic, counts, times, then positions
/// per snapshot in particle-major order.
pub fn write_snapshots_binary(path: &Path, times: &[f64], snapshots: &[Vec<Vec3>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(b"MFTRAJ01")?;
    let n = snapshots.first().map(|s| s.len()).unwrap_or(0) as u64;
    w.write_all(&(times.len() as u64).to_le_bytes())?;
    w.write_all(&n.to_le_bytes())?;
    for t in times {
        w.write_all(&t.to_le_bytes())?;
    }
    for snap in snapshots {
        for p in snap {
            for c in p {
                w.write_all(&c.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Radial PDE series: r-centers header row, one row per output time.
pub fn write_radial_series_csv(path: &Path, series: &[crate::pde::RadialField]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let first = series
        .first()
        .ok_or_else(|| crate::Error::InvalidInput("empty series".into()))?;
    let centers: Vec<String> = (0..first.cells())
        .map(|m| format_f64(first.center(m)))
        .collect();
    writeln!(w, "t,{}", centers.join(","))?;
    for field in series {
        let values: Vec<String> = field.values().iter().map(|v| format_f64(*v)).collect();
        writeln!(w, "{},{}", format_f64(field.t), values.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub kind: String,
    pub config_hash: String,
    pub code_version: String,
    pub wall_seconds: f64,
    pub seeds: Vec<u64>,
    pub files: Vec<String>,
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<PathBuf> {
    let path = dir.join("manifest.json");
    let body = serde_json::to_string_pretty(manifest)
        .map_err(|e| crate::Error::InvalidInput(format!("serialize manifest: {e}")))?;
    std::fs::write(&path, body)?;
    Ok(path)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
