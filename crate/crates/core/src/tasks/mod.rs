//! Synthetic long-range tasks: dataset generation, evaluation and training.

mod io;
mod oracles;
mod train;

pub use io::{read_dataset, write_dataset, write_history_csv, Manifest};
pub use oracles::{oracle_diameter, oracle_eccentricity, oracle_sssp};
pub use train::{default_model, train, Budget, EpochRecord, TrainReport};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Head, Model};
use crate::error::{Error, Result};
use crate::graph::{crossed_ring_graph, line_graph, random_task_graph, ring_graph, Graph, GraphMixture, TransferGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Line,
    Ring,
    CrossedRing,
}

impl Topology {
    pub fn build(self, k: usize) -> Result<TransferGraph> {
        match self {
            Topology::Line => line_graph(k),
            Topology::Ring => ring_graph(k),
            Topology::CrossedRing => crossed_ring_graph(k),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskKind {
    GraphTransfer { topology: Topology, k: usize },
    Diameter,
    Sssp,
    Eccentricity,
}

impl TaskKind {
    pub fn is_transfer(self) -> bool {
        matches!(self, TaskKind::GraphTransfer { .. })
    }

    /// Node features per sample.
    pub fn input_dim(self) -> usize {
        if self.is_transfer() {
            1
        } else {
            2
        }
    }

    pub fn head(self) -> Head {
        match self {
            TaskKind::Diameter => Head::Graph,
            _ => Head::Node,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Splits {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Splits {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Val => 2,
            Split::Test => 3,
        }
    }
}

fn default_node_range() -> [usize; 2] {
    [25, 35]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    #[serde(rename = "task")]
    pub kind: TaskKind,
    /// Defaults to 1000/100/100 for transfer and 200/50/50 otherwise.
    #[serde(default)]
    pub splits: Option<Splits>,
    #[serde(default)]
    pub seed: u64,
    /// Node-count range of the property-task graphs.
    #[serde(default = "default_node_range")]
    pub node_range: [usize; 2],
    #[serde(default)]
    pub mixture: GraphMixture,
}

impl TaskSpec {
    pub fn new(kind: TaskKind, seed: u64) -> Self {
        Self {
            kind,
            splits: None,
            seed,
            node_range: default_node_range(),
            mixture: GraphMixture::default(),
        }
    }

    pub fn with_splits(mut self, train: usize, val: usize, test: usize) -> Self {
        self.splits = Some(Splits { train, val, test });
        self
    }

    pub fn splits(&self) -> Splits {
        self.splits.unwrap_or(if self.kind.is_transfer() {
            Splits {
                train: 1000,
                val: 100,
                test: 100,
            }
        } else {
            Splits {
                train: 200,
                val: 50,
                test: 50,
            }
        })
    }

    pub fn split_len(&self, split: Split) -> usize {
        let s = self.splits();
        match split {
            Split::Train => s.train,
            Split::Val => s.val,
            Split::Test => s.test,
        }
    }

    /// Independent generator for sample `index` of `split`.
    fn sample_rng(&self, split: Split, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((split.stream() << 40) | index as u64);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Graph with node features attached.
    pub graph: Graph,
    /// `input_dim × n`.
    pub features: DMatrix<f64>,
    /// `1 × n` for node tasks, `1 × 1` for graph tasks.
    pub target: DMatrix<f64>,
    pub source: Option<usize>,
    pub target_node: Option<usize>,
}

impl Sample {
    pub fn new(graph: Graph, features: DMatrix<f64>, target: DMatrix<f64>) -> Result<Self> {
        let n = graph.node_count();
        if features.ncols() != n {
            return Err(Error::Dimension(format!("{} feature columns for {n} nodes", features.ncols())));
        }
        if target.nrows() != 1 || (target.ncols() != n && target.ncols() != 1) {
            return Err(Error::Dimension(format!("target shape {:?}", target.shape())));
        }
        let rows = features.column_iter().map(|c| c.iter().copied().collect()).collect();
        Ok(Self {
            graph: graph.with_features(rows)?,
            features,
            target,
            source: None,
            target_node: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: TaskSpec,
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[Sample] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Transfer sample: intermediates uniform on `[0, 0.5)`, source 1, target 0;
/// the target vector swaps source and target values.
fn transfer_sample<R: Rng + ?Sized>(rng: &mut R, tg: &TransferGraph) -> Result<Sample> {
    let n = tg.graph.node_count();
    let mut x = DMatrix::from_fn(1, n, |_, _| rng.random_range(0.0..0.5));
    x[(0, tg.source)] = 1.0;
    x[(0, tg.target)] = 0.0;
    let mut y = x.clone();
    y.swap((0, tg.source), (0, tg.target));
    let mut s = Sample::new(tg.graph.clone(), x, y)?;
    s.source = Some(tg.source);
    s.target_node = Some(tg.target);
    Ok(s)
}

/// Property sample. Channel 0 is a uniform random node value, channel 1 the
/// source indicator (all zero unless the task has a source).
fn property_sample<R: Rng + ?Sized>(rng: &mut R, spec: &TaskSpec) -> Result<Sample> {
    let graph = random_task_graph(rng, spec.node_range, &spec.mixture)?;
    let n = graph.node_count();
    let mut x = DMatrix::zeros(2, n);
    for j in 0..n {
        x[(0, j)] = rng.random::<f64>();
    }
    let as_row = |v: Vec<usize>| DMatrix::from_iterator(1, v.len(), v.into_iter().map(|d| d as f64));
    let mut source = None;
    let y = match spec.kind {
        TaskKind::Sssp => {
            let s = rng.random_range(0..n);
            x[(1, s)] = 1.0;
            source = Some(s);
            as_row(oracle_sssp(&graph, s)?)
        }
        TaskKind::Eccentricity => as_row(oracle_eccentricity(&graph)?),
        TaskKind::Diameter => DMatrix::from_element(1, 1, oracle_diameter(&graph)? as f64),
        TaskKind::GraphTransfer { .. } => unreachable!("transfer samples are built separately"),
    };
    let mut s = Sample::new(graph, x, y)?;
    s.source = source;
    Ok(s)
}

pub fn generate(spec: &TaskSpec) -> Result<Dataset> {
    if let TaskKind::GraphTransfer { k, .. } = spec.kind {
        if k == 0 {
            return Err(Error::Config("transfer distance k must be >= 1".into()));
        }
    }
    let transfer = match spec.kind {
        TaskKind::GraphTransfer { topology, k } => Some(topology.build(k)?),
        _ => None,
    };
    let build = |split: Split| -> Result<Vec<Sample>> {
        (0..spec.split_len(split))
            .into_par_iter()
            .map(|i| {
                let mut rng = spec.sample_rng(split, i);
                match &transfer {
                    Some(tg) => transfer_sample(&mut rng, tg),
                    None => property_sample(&mut rng, spec),
                }
            })
            .collect()
    };
    Ok(Dataset {
        spec: spec.clone(),
        train: build(Split::Train)?,
        val: build(Split::Val)?,
        test: build(Split::Test)?,
    })
}

/// Mean squared error of one sample.
pub fn sample_mse(pred: &DMatrix<f64>, target: &DMatrix<f64>) -> f64 {
    (pred - target).norm_squared() / target.len().max(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub log10_mse: f64,
}

/// Reported in place of `log10(0)`.
pub const LOG10_ZERO: f64 = -99.0;

impl Metrics {
    pub fn from_mse(mse: f64) -> Self {
        Self {
            mse,
            log10_mse: if mse == 0.0 { LOG10_ZERO } else { mse.log10() },
        }
    }
}

/// Mean over samples of the per-sample MSE.
pub fn evaluate(model: &Model, samples: &[Sample]) -> Result<Metrics> {
    let errors: Vec<f64> = samples
        .par_iter()
        .map(|s| Ok(sample_mse(&model.predict(&s.graph, &s.features)?, &s.target)))
        .collect::<Result<_>>()?;
    Ok(Metrics::from_mse(mean(&errors)))
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Error of the constant that minimises the evaluation metric on `samples`.
pub fn best_constant(samples: &[Sample]) -> (f64, Metrics) {
    // Per-sample MSE weights every entry by 1 / (S · entries).
    let (mut num, mut den) = (0.0, 0.0);
    for s in samples {
        let w = 1.0 / s.target.len() as f64;
        num += w * s.target.sum();
        den += w * s.target.len() as f64;
    }
    let c = if den > 0.0 { num / den } else { 0.0 };
    (c, constant_metrics(samples, c))
}

pub fn constant_metrics(samples: &[Sample], c: f64) -> Metrics {
    let errors: Vec<f64> = samples
        .iter()
        .map(|s| sample_mse(&DMatrix::from_element(1, s.target.ncols(), c), &s.target))
        .collect();
    Metrics::from_mse(mean(&errors))
}
