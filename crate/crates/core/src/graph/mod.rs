//! Undirected graphs with cached neighbourhoods.
//!
//! A [`Graph`] is immutable once built. [`Graph::new`] rejects self-loops,
//! duplicate edges and out-of-range endpoints; [`Graph::from_raw_parts`]
//! skips those checks so that [`Graph::validate`] can be exercised on
//! deliberately broken input.

mod generators;

pub use generators::{
    crossed_ring_graph, line_graph, random_task_graph, ring_graph, truncated_icosahedron,
    GraphMixture, TransferGraph,
};

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// A single invariant violation reported by [`Graph::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphIssue {
    SelfLoop(usize),
    Duplicate(usize, usize),
    OutOfRange(usize, usize),
    Asymmetric(usize, usize),
    EdgeListMismatch(usize, usize),
    FeatureCount { expected: usize, found: usize },
}

impl fmt::Display for GraphIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphIssue::SelfLoop(u) => write!(f, "self-loop at {u}"),
            GraphIssue::Duplicate(u, v) => write!(f, "duplicate ({u},{v})"),
            GraphIssue::OutOfRange(u, v) => write!(f, "out of range ({u},{v})"),
            GraphIssue::Asymmetric(u, v) => write!(f, "asymmetric ({u},{v})"),
            GraphIssue::EdgeListMismatch(u, v) => {
                write!(f, "adjacency ({u},{v}) not in edge list")
            }
            GraphIssue::FeatureCount { expected, found } => {
                write!(f, "feature rows {found} != node count {expected}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    max_degree: usize,
    features: Option<Vec<Vec<f64>>>,
    meta: Map<String, Value>,
}

impl Graph {
    /// Builds a validated graph from an undirected edge list.
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in &edges {
            if u < n && v < n {
                adjacency[u].push(v);
                adjacency[v].push(u);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let graph = Self::from_raw_parts(n, edges, adjacency);
        graph.validate().map_err(|issues| {
            Error::InvalidGraph(
                issues
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join("; "),
            )
        })?;
        Ok(graph)
    }

    /// Assembles a graph without checking any invariant.
    pub fn from_raw_parts(
        n: usize,
        edges: Vec<(usize, usize)>,
        adjacency: Vec<Vec<usize>>,
    ) -> Self {
        let max_degree = adjacency.iter().map(Vec::len).max().unwrap_or(0);
        Self {
            n,
            edges,
            adjacency,
            max_degree,
            features: None,
            meta: Map::new(),
        }
    }

    pub fn with_features(mut self, features: Vec<Vec<f64>>) -> Result<Self> {
        if features.len() != self.n {
            return Err(Error::InvalidGraph(
                GraphIssue::FeatureCount {
                    expected: self.n,
                    found: features.len(),
                }
                .to_string(),
            ));
        }
        self.features = Some(features);
        Ok(self)
    }

    pub fn with_meta(mut self, key: &str, value: Value) -> Self {
        self.meta.insert(key.to_string(), value);
        self
    }

    /// Returns every invariant violation, or `Ok(())` for a well-formed graph.
    pub fn validate(&self) -> std::result::Result<(), Vec<GraphIssue>> {
        let mut issues = Vec::new();
        let mut seen = BTreeSet::new();
        for &(u, v) in &self.edges {
            if u >= self.n || v >= self.n {
                issues.push(GraphIssue::OutOfRange(u, v));
                continue;
            }
            if u == v {
                issues.push(GraphIssue::SelfLoop(u));
                continue;
            }
            if !seen.insert((u.min(v), u.max(v))) {
                issues.push(GraphIssue::Duplicate(u.min(v), u.max(v)));
            }
        }
        if self.adjacency.len() != self.n {
            issues.push(GraphIssue::OutOfRange(self.adjacency.len(), self.n));
            return Err(issues);
        }
        for (u, list) in self.adjacency.iter().enumerate() {
            for &v in list {
                if v >= self.n {
                    issues.push(GraphIssue::OutOfRange(u, v));
                    continue;
                }
                if v == u {
                    if !issues.contains(&GraphIssue::SelfLoop(u)) {
                        issues.push(GraphIssue::SelfLoop(u));
                    }
                    continue;
                }
                if !self.adjacency[v].contains(&u) {
                    issues.push(GraphIssue::Asymmetric(u.min(v), u.max(v)));
                } else if !seen.contains(&(u.min(v), u.max(v))) {
                    issues.push(GraphIssue::EdgeListMismatch(u, v));
                }
            }
        }
        if let Some(features) = &self.features {
            if features.len() != self.n {
                issues.push(GraphIssue::FeatureCount {
                    expected: self.n,
                    found: features.len(),
                });
            }
        }
        issues.dedup();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(issues)
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adjacency[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adjacency[u].len()
    }

    /// Largest neighbourhood size over all nodes.
    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn features(&self) -> Option<&[Vec<f64>]> {
        self.features.as_deref()
    }

    pub fn meta(&self) -> &Map<String, Value> {
        &self.meta
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Dense 0/1 adjacency matrix.
    pub fn adjacency_matrix(&self) -> nalgebra::DMatrix<f64> {
        let mut a = nalgebra::DMatrix::zeros(self.n, self.n);
        for (u, list) in self.adjacency.iter().enumerate() {
            for &v in list {
                a[(u, v)] = 1.0;
            }
        }
        a
    }

    /// Unweighted hop distances from `source`; `None` marks unreachable nodes.
    pub fn bfs_distances(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        let mut queue = VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            for &v in &self.adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.n == 0 || self.bfs_distances(0).iter().all(Option::is_some)
    }

    /// Disjoint union of several graphs; node ids of part `i` are shifted by
    /// the returned offset `i`.
    pub fn disjoint_union(parts: &[&Graph]) -> (Graph, Vec<usize>) {
        let mut offsets = Vec::with_capacity(parts.len());
        let mut n = 0;
        let mut edges = Vec::new();
        let mut adjacency = Vec::new();
        for g in parts {
            offsets.push(n);
            edges.extend(g.edges.iter().map(|&(u, v)| (u + n, v + n)));
            adjacency.extend(
                g.adjacency
                    .iter()
                    .map(|list| list.iter().map(|&v| v + n).collect::<Vec<_>>()),
            );
            n += g.n;
        }
        (Graph::from_raw_parts(n, edges, adjacency), offsets)
    }

    /// Returns the same graph with node `i` renamed to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Graph> {
        if perm.len() != self.n {
            return Err(Error::Dimension(format!(
                "permutation of length {} for {} nodes",
                perm.len(),
                self.n
            )));
        }
        let edges = self
            .edges
            .iter()
            .map(|&(u, v)| (perm[u], perm[v]))
            .collect();
        let mut g = Graph::new(self.n, edges)?;
        if let Some(features) = &self.features {
            let mut permuted = vec![Vec::new(); self.n];
            for (i, f) in features.iter().enumerate() {
                permuted[perm[i]] = f.clone();
            }
            g.features = Some(permuted);
        }
        g.meta = self.meta.clone();
        Ok(g)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&GraphFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text)?;
        file.try_into()
    }
}

/// On-disk form: `{"n", "edges": [[u,v],..], "features": [[..],..] | null, "meta": {..}}`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
    #[serde(default)]
    pub features: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub meta: Map<String, Value>,
}

impl From<&Graph> for GraphFile {
    fn from(g: &Graph) -> Self {
        Self {
            n: g.n,
            edges: g.edges.iter().map(|&(u, v)| [u, v]).collect(),
            features: g.features.clone(),
            meta: g.meta.clone(),
        }
    }
}

impl TryFrom<GraphFile> for Graph {
    type Error = Error;

    fn try_from(file: GraphFile) -> Result<Self> {
        let mut g = Graph::new(file.n, file.edges.iter().map(|e| (e[0], e[1])).collect())?;
        if let Some(features) = file.features {
            g = g.with_features(features)?;
        }
        g.meta = file.meta;
        Ok(g)
    }
}
