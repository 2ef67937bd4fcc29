//! Dataset directories and training history files.
//!
//! A dataset directory holds `manifest.json`, `targets.json` and one graph
//! JSON per sample under `graphs/` (node features embedded).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Dataset, EpochRecord, Sample, Split, TaskSpec};
use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub spec: TaskSpec,
    pub seed: u64,
    pub counts: BTreeMap<String, usize>,
    pub graphs: BTreeMap<String, Vec<String>>,
    pub targets: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetRecord {
    target: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target_node: Option<usize>,
}

fn graph_file(split: Split, i: usize) -> String {
    format!("graphs/{}_{i:05}.json", split.name())
}

pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir.join("graphs"))?;
    let mut counts = BTreeMap::new();
    let mut graphs = BTreeMap::new();
    let mut targets = BTreeMap::new();
    for split in Split::ALL {
        let samples = dataset.split(split);
        let mut files = Vec::with_capacity(samples.len());
        let mut records = Vec::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            let name = graph_file(split, i);
            fs::write(dir.join(&name), s.graph.to_json()?)?;
            files.push(name);
            records.push(TargetRecord {
                target: s.target.iter().copied().collect(),
                source: s.source,
                target_node: s.target_node,
            });
        }
        counts.insert(split.name().to_string(), samples.len());
        graphs.insert(split.name().to_string(), files);
        targets.insert(split.name().to_string(), records);
    }
    fs::write(dir.join("targets.json"), serde_json::to_string(&targets)?)?;
    let manifest = Manifest {
        spec: dataset.spec.clone(),
        seed: dataset.spec.seed,
        counts,
        graphs,
        targets: "targets.json".into(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    let targets: BTreeMap<String, Vec<TargetRecord>> =
        serde_json::from_str(&fs::read_to_string(dir.join(&manifest.targets))?)?;
    let mut splits = Vec::new();
    for split in Split::ALL {
        let files = manifest.graphs.get(split.name()).cloned().unwrap_or_default();
        let records = targets.get(split.name()).map(Vec::as_slice).unwrap_or_default();
        if files.len() != records.len() {
            return Err(Error::Config(format!(
                "{} split: {} graphs but {} targets",
                split.name(),
                files.len(),
                records.len()
            )));
        }
        let samples = files
            .iter()
            .zip(records)
            .map(|(f, r)| {
                let graph = Graph::from_json(&fs::read_to_string(dir.join(f))?)?;
                let rows = graph
                    .features()
                    .ok_or_else(|| Error::Config(format!("{f} has no node features")))?;
                let width = rows.first().map_or(0, Vec::len);
                let features = DMatrix::from_fn(width, rows.len(), |i, j| rows[j][i]);
                let target = DMatrix::from_row_slice(1, r.target.len(), &r.target);
                let mut s = Sample::new(graph, features, target)?;
                s.source = r.source;
                s.target_node = r.target_node;
                Ok(s)
            })
            .collect::<Result<Vec<_>>>()?;
        splits.push(samples);
    }
    let test = splits.pop().unwrap_or_default();
    let val = splits.pop().unwrap_or_default();
    let train = splits.pop().unwrap_or_default();
    Ok(Dataset {
        spec: manifest.spec,
        train,
        val,
        test,
    })
}

/// Columns `epoch,train_mse,val_mse`.
pub fn write_history_csv(history: &[EpochRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_mse", "val_mse"])?;
    for r in history {
        w.write_record([r.epoch.to_string(), r.train_mse.to_string(), r.val_mse.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::{generate, TaskKind, Topology};

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for spec in [
            TaskSpec::new(
                TaskKind::GraphTransfer {
                    topology: Topology::CrossedRing,
                    k: 3,
                },
                5,
            )
            .with_splits(6, 2, 2),
            TaskSpec::new(TaskKind::Sssp, 5).with_splits(3, 1, 1),
        ] {
            let ds = generate(&spec).unwrap();
            let path = dir.path().join(format!("{:?}", spec.kind.is_transfer()));
            let m = write_dataset(&ds, &path).unwrap();
            assert_eq!(m.counts["train"] + m.counts["val"] + m.counts["test"], spec.splits().total());
            let first = fs::read(path.join("manifest.json")).unwrap();
            assert_eq!(read_dataset(&path).unwrap(), ds);
            write_dataset(&generate(&spec).unwrap(), &path).unwrap();
            assert_eq!(fs::read(path.join("manifest.json")).unwrap(), first);
        }
    }

    #[test]
    fn history_csv_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        let h = [EpochRecord {
            epoch: 0,
            train_mse: 0.5,
            val_mse: 0.25,
        }];
        write_history_csv(&h, &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "epoch,train_mse,val_mse\n0,0.5,0.25\n");
    }
}
