use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use phdgn::graph::{truncated_icosahedron, Graph};
use phdgn::tasks::Topology;

/// Process exit status for a failed run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Verify = 1,
    Config = 2,
    Numeric = 3,
}

#[derive(Debug)]
pub struct Failure {
    pub kind: ExitKind,
    pub message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

pub fn config_error(message: impl Into<String>) -> anyhow::Error {
    Failure {
        kind: ExitKind::Config,
        message: message.into(),
    }
    .into()
}

/// Maps any error in the chain to an exit status.
pub fn classify(err: &anyhow::Error) -> ExitKind {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return f.kind;
        }
        if let Some(e) = cause.downcast_ref::<phdgn::Error>() {
            return match e {
                phdgn::Error::NonFinite { .. } | phdgn::Error::Diverged { .. } | phdgn::Error::NoConvergence => {
                    ExitKind::Numeric
                }
                _ => ExitKind::Config,
            };
        }
    }
    ExitKind::Config
}

pub fn load<T: DeserializeOwned>(path: Option<&Path>) -> anyhow::Result<T> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|e| config_error(format!("reading {}: {e}", p.display())))?,
        None => "{}".to_string(),
    };
    serde_json::from_str(&text).map_err(|e| config_error(format!("invalid config: {e}")))
}

/// Writes `resolved_config.json`; feeding it back reproduces the run.
pub fn echo<T: Serialize>(config: &T, out: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("resolved_config.json"), serde_json::to_string_pretty(config)?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSource {
    #[default]
    C60,
    Transfer {
        topology: Topology,
        k: usize,
    },
    File {
        path: PathBuf,
    },
}

impl GraphSource {
    pub fn load(&self) -> anyhow::Result<Graph> {
        Ok(match self {
            GraphSource::C60 => truncated_icosahedron(),
            GraphSource::Transfer { topology, k } => topology.build(*k)?.graph,
            GraphSource::File { path } => {
                let text =
                    fs::read_to_string(path).map_err(|e| config_error(format!("reading {}: {e}", path.display())))?;
                Graph::from_json(&text)?
            }
        })
    }
}
