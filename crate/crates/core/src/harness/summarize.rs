use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::experiment::{ExperimentManifest, ReplicateManifest, EXPERIMENT_MANIFEST, REPLICATE_MANIFEST};
use super::io::write_csv;
use crate::error::{Error, Result};

pub const LONG_COLUMNS: [&str; 4] = ["algorithm", "replicate", "statistic", "value"];
pub const SCHEDULE_COLUMNS: [&str; 4] = ["algorithm", "replicate", "step", "epsilon"];

/// Box-plot-ready tables built from replicate manifests.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Summary {
    /// `(algorithm, replicate, statistic, value)`.
    pub long: Vec<Vec<String>>,
    /// `(algorithm, replicate, step, epsilon)`.
    pub schedule: Vec<Vec<String>>,
}

/// A replicate manifest and the directory its file names are relative to.
struct Loaded {
    manifest: ReplicateManifest,
    dir: PathBuf,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    Ok(serde_json::from_str(&text)?)
}

fn parent(path: &Path) -> PathBuf {
    path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

/// Accepts replicate manifests, experiment manifests, or directories holding either.
fn load(path: &Path, out: &mut Vec<Loaded>) -> Result<()> {
    let path = if path.is_dir() {
        let exp = path.join(EXPERIMENT_MANIFEST);
        if exp.exists() {
            exp
        } else {
            path.join(REPLICATE_MANIFEST)
        }
    } else {
        path.to_path_buf()
    };
    let value: serde_json::Value = read_json(&path)?;
    match value.get("kind").and_then(|k| k.as_str()) {
        Some("replicate") => out.push(Loaded {
            manifest: serde_json::from_value(value)?,
            dir: parent(&path),
        }),
        Some("experiment") => {
            let exp: ExperimentManifest = serde_json::from_value(value)?;
            let root = parent(&path);
            for entry in &exp.replicates {
                let dir = root.join(&entry.dir);
                out.push(Loaded {
                    manifest: read_json(&dir.join(REPLICATE_MANIFEST))?,
                    dir,
                });
            }
        }
        _ => return Err(Error::Parse(format!("{} is not a run manifest", path.display()))),
    }
    Ok(())
}

/// Results are comparable when they share the model and the observed data.
fn check_compatible(loaded: &[Loaded]) -> Result<()> {
    let first = &loaded[0].manifest;
    let mut mismatched = Vec::new();
    for l in &loaded[1..] {
        let m = &l.manifest;
        if m.config.model != first.config.model {
            mismatched.push(format!(
                "model: {} has {:?}, {} has {:?}",
                loaded[0].dir.display(),
                first.config.model,
                l.dir.display(),
                m.config.model
            ));
        }
        if m.data_sha256 != first.data_sha256 {
            mismatched.push(format!(
                "data_sha256: {} has {}, {} has {}",
                loaded[0].dir.display(),
                first.data_sha256,
                l.dir.display(),
                m.data_sha256
            ));
        }
    }
    if mismatched.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("incompatible results:\n{}", mismatched.join("\n"))))
    }
}

fn read_schedule(path: &Path) -> Result<Vec<(String, String)>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("{}: no {name} column", path.display())))
    };
    let (step, eps) = (col("step")?, col("epsilon")?);
    reader
        .records()
        .map(|r| {
            let r = r?;
            Ok((r[step].to_string(), r[eps].to_string()))
        })
        .collect()
}

/// Builds the long statistics table and the schedule table. Rows are ordered
/// by algorithm, then replicate; statistics come in a fixed order. Failed
/// replicates contribute no rows.
pub fn summarize(paths: &[PathBuf]) -> Result<Summary> {
    if paths.is_empty() {
        return Err(Error::InvalidConfig("summarize needs at least one result".into()));
    }
    let mut loaded = Vec::new();
    for p in paths {
        load(p, &mut loaded)?;
    }
    check_compatible(&loaded)?;
    let mut by_key: BTreeMap<(String, usize), Loaded> = BTreeMap::new();
    for l in loaded {
        let key = (l.manifest.config.algorithm.to_string(), l.manifest.replicate);
        if by_key.contains_key(&key) {
            return Err(Error::InvalidConfig(format!(
                "replicate {} of {} appears twice (second copy in {})",
                key.1,
                key.0,
                l.dir.display()
            )));
        }
        by_key.insert(key, l);
    }
    let mut summary = Summary::default();
    for ((alg, rep), l) in &by_key {
        let m = &l.manifest;
        if !m.succeeded() {
            continue;
        }
        let names = m.config.model.parameter_names();
        let mut stats: Vec<(String, String)> = names
            .iter()
            .zip(&m.posterior_mean)
            .map(|(n, v)| (format!("posterior_mean_{n}"), v.to_string()))
            .collect();
        stats.push(("final_epsilon".into(), m.final_epsilon.to_string()));
        if let Some(z) = m.log_evidence {
            stats.push(("log_evidence".into(), z.to_string()));
        }
        stats.push(("elapsed_secs".into(), m.elapsed_secs.to_string()));
        stats.push(("steps".into(), m.steps.to_string()));
        for (stat, value) in stats {
            summary.long.push(vec![alg.clone(), rep.to_string(), stat, value]);
        }
        for (step, eps) in read_schedule(&l.dir.join(&m.schedule))? {
            summary.schedule.push(vec![alg.clone(), rep.to_string(), step, eps]);
        }
    }
    Ok(summary)
}

/// Writes `summary_long.csv` and `schedule_long.csv` into `out`.
pub fn write_summary_files(summary: &Summary, out: &Path) -> Result<(PathBuf, PathBuf)> {
    let long = out.join("summary_long.csv");
    let schedule = out.join("schedule_long.csv");
    write_csv(&long, &LONG_COLUMNS, &summary.long)?;
    write_csv(&schedule, &SCHEDULE_COLUMNS, &summary.schedule)?;
    Ok((long, schedule))
}
