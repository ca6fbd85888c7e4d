use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::outer::StepDiagnostics;

/// Writes through a temporary file in the same directory, then renames.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn csv_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// One row per particle: its parameters, then its normalized weight.
pub fn particles_csv(names: &[&str], thetas: &[Vec<f64>], weights: &[f64]) -> Result<Vec<u8>> {
    let mut header: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    header.push("weight".into());
    csv_bytes(
        &header,
        thetas.iter().zip(weights).map(|(t, w)| {
            let mut row: Vec<String> = t.iter().map(f64::to_string).collect();
            row.push(w.to_string());
            row
        }),
    )
}

pub const SCHEDULE_COLUMNS: [&str; 10] = [
    "step",
    "epsilon",
    "ess",
    "cess",
    "resampled",
    "acceptance",
    "moves",
    "inner_acceptance",
    "log_evidence",
    "elapsed_secs",
];

pub fn schedule_csv(steps: &[StepDiagnostics]) -> Result<Vec<u8>> {
    let header: Vec<String> = SCHEDULE_COLUMNS.iter().map(|s| s.to_string()).collect();
    csv_bytes(
        &header,
        steps.iter().map(|s| {
            vec![
                s.step.to_string(),
                s.epsilon.to_string(),
                s.ess.to_string(),
                s.cess.to_string(),
                s.resampled.to_string(),
                opt(s.acceptance),
                s.moves.to_string(),
                opt(s.inner_acceptance),
                s.log_evidence.to_string(),
                s.elapsed_secs.to_string(),
            ]
        }),
    )
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    atomic_write(path, &csv_bytes(&header, rows.iter().cloned())?)
}
