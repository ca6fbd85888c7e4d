use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use super::config::ModelSpec;
use super::io::{atomic_write, file_digest};
use crate::error::{Error, Result};
use crate::models::{GaussianModel, Graph, GraphModel};
use crate::rng::{Purpose, Streams};

#[derive(Clone, Debug, PartialEq)]
pub enum ObservedData {
    Vector(Vec<f64>),
    Graph(Graph),
}

impl ObservedData {
    pub fn to_text(&self) -> String {
        match self {
            Self::Vector(y) => {
                let mut s = String::from("y\n");
                for v in y {
                    s.push_str(&format!("{v}\n"));
                }
                s
            }
            Self::Graph(g) => g.to_edge_list(),
        }
    }

    pub fn parse(model: &ModelSpec, text: &str) -> Result<Self> {
        match model {
            ModelSpec::Gaussian(_) => {
                let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
                if lines.next() != Some("y") {
                    return Err(Error::Parse("vector data must start with the header line \"y\"".into()));
                }
                let y = lines
                    .map(|l| l.parse::<f64>().map_err(|_| Error::Parse(format!("bad value {l:?}"))))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Self::Vector(y))
            }
            ModelSpec::Graph(_) => Ok(Self::Graph(Graph::parse_edge_list(text)?)),
        }
    }

    pub fn read(model: &ModelSpec, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Self::parse(model, &text)
    }
}

/// Provenance of a synthesized data file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataManifest {
    pub model: ModelSpec,
    pub seed: u64,
    pub file: PathBuf,
    pub sha256: String,
    pub version: String,
}

/// Path of the manifest written next to a data file.
pub fn data_manifest_path(data: &Path) -> PathBuf {
    let mut name = data.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    data.with_file_name(name)
}

/// Draws observed data from the model at its generating parameters.
pub fn generate(model: &ModelSpec, seed: u64) -> Result<ObservedData> {
    model.validate()?;
    let mut rng = Streams::new(seed, 0).rng(0, Purpose::Data, 0, 0);
    Ok(match model {
        ModelSpec::Gaussian(c) => ObservedData::Vector(GaussianModel::synthesize(c, &mut rng)),
        ModelSpec::Graph(c) => ObservedData::Graph(GraphModel::synthesize(c, &mut rng)?),
    })
}

/// Writes synthesized data to `path` and its manifest next to it.
pub fn synthesize_data(model: &ModelSpec, seed: u64, path: &Path) -> Result<DataManifest> {
    let data = generate(model, seed)?;
    atomic_write(path, data.to_text().as_bytes())?;
    let manifest = DataManifest {
        model: model.clone(),
        seed,
        file: PathBuf::from(path.file_name().unwrap_or_default()),
        sha256: file_digest(path)?,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    atomic_write(&data_manifest_path(path), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(manifest)
}
