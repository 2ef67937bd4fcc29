//! Topologies used by the experiments.

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::Graph;
use crate::error::{Error, Result};

/// A graph-transfer topology together with its source and target nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferGraph {
    pub graph: Graph,
    pub source: usize,
    pub target: usize,
}

fn check_distance(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Config("source-target distance must be >= 1".into()));
    }
    Ok(())
}

/// Path `0 - 1 - ... - k`; source 0, target k.
pub fn line_graph(k: usize) -> Result<TransferGraph> {
    check_distance(k)?;
    let edges = (0..k).map(|i| (i, i + 1)).collect();
    let graph = Graph::new(k + 1, edges)?
        .with_meta("topology", Value::from("line"))
        .with_meta("distance", Value::from(k));
    Ok(TransferGraph {
        graph,
        source: 0,
        target: k,
    })
}

/// Cycle on `2k` nodes with source 0 and the antipodal target `k`.
pub fn ring_graph(k: usize) -> Result<TransferGraph> {
    check_distance(k)?;
    let graph = Graph::new(2 * k, ring_edges(k))?
        .with_meta("topology", Value::from("ring"))
        .with_meta("distance", Value::from(k));
    Ok(TransferGraph {
        graph,
        source: 0,
        target: k,
    })
}

fn ring_edges(k: usize) -> Vec<(usize, usize)> {
    let n = 2 * k;
    if k == 1 {
        return vec![(0, 1)];
    }
    (0..n).map(|i| (i, (i + 1) % n)).collect()
}

/// Ring of [`ring_graph`] plus a chord between every pair of nodes mirrored
/// across the source-target axis (`i` and `2k - i`). The chords never shorten
/// the source-target distance.
pub fn crossed_ring_graph(k: usize) -> Result<TransferGraph> {
    check_distance(k)?;
    let mut edges = ring_edges(k);
    // Mirrored nodes sit at the same hop distance from the source, and are
    // never ring-adjacent (their index gap is even).
    edges.extend((1..k).map(|i| (i, 2 * k - i)));
    let graph = Graph::new(2 * k, edges)?
        .with_meta("topology", Value::from("crossed_ring"))
        .with_meta("distance", Value::from(k));
    Ok(TransferGraph {
        graph,
        source: 0,
        target: k,
    })
}

/// Carbon-60 cage (truncated icosahedron): 60 nodes, 90 edges, 3-regular.
///
/// Node features are a fixed planar projection of the standard 3-d vertex
/// coordinates, scaled into the unit disc.
pub fn truncated_icosahedron() -> Graph {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let bases = [
        [0.0, 1.0, 3.0 * phi],
        [1.0, 2.0 + phi, 2.0 * phi],
        [phi, 2.0, 2.0 * phi + 1.0],
    ];
    let mut points: Vec<[f64; 3]> = Vec::with_capacity(60);
    for base in bases {
        for shift in 0..3 {
            let cyc = [base[shift], base[(shift + 1) % 3], base[(shift + 2) % 3]];
            for signs in 0..8u32 {
                let p = [
                    if signs & 1 == 1 { -cyc[0] } else { cyc[0] },
                    if signs & 2 == 2 { -cyc[1] } else { cyc[1] },
                    if signs & 4 == 4 { -cyc[2] } else { cyc[2] },
                ];
                if !points.iter().any(|q| dist2(q, &p) < 1e-9) {
                    points.push(p);
                }
            }
        }
    }
    points.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    debug_assert_eq!(points.len(), 60);

    let mut edges = Vec::with_capacity(90);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            // Edge length of this embedding is 2.
            if (dist2(&points[i], &points[j]) - 4.0).abs() < 1e-6 {
                edges.push((i, j));
            }
        }
    }

    // Generic projection plane so that no two vertices coincide.
    let axis1 = normalize([1.0, 2f64.sqrt(), 3f64.sqrt()]);
    let helper = [0.3, -0.9, 0.2];
    let dot = axis1.iter().zip(helper).map(|(a, b)| a * b).sum::<f64>();
    let axis2 = normalize([
        helper[0] - dot * axis1[0],
        helper[1] - dot * axis1[1],
        helper[2] - dot * axis1[2],
    ]);
    let radius = points
        .iter()
        .map(|p| dist2(p, &[0.0; 3]).sqrt())
        .fold(0.0, f64::max);
    let features = points
        .iter()
        .map(|p| {
            vec![
                (p[0] * axis1[0] + p[1] * axis1[1] + p[2] * axis1[2]) / radius,
                (p[0] * axis2[0] + p[1] * axis2[1] + p[2] * axis2[2]) / radius,
            ]
        })
        .collect();

    Graph::new(points.len(), edges)
        .and_then(|g| g.with_features(features))
        .expect("truncated icosahedron construction is valid")
        .with_meta("topology", Value::from("c60"))
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Generator mixture for the random property-prediction graphs. One of the
/// three families is picked uniformly per graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphMixture {
    /// Edge probability of the Erdős–Rényi family.
    pub erdos_renyi_p: f64,
    /// Edges added per new node in the preferential-attachment family.
    pub preferential_m: usize,
    /// Column range of the 2-d grid patches.
    pub grid_columns: [usize; 2],
}

impl Default for GraphMixture {
    fn default() -> Self {
        Self {
            erdos_renyi_p: 0.25,
            preferential_m: 2,
            grid_columns: [3, 7],
        }
    }
}

/// Connected random graph with `n_range[0] <= n <= n_range[1]` nodes drawn
/// from `mixture`; retries until the sample is connected.
pub fn random_task_graph<R: Rng + ?Sized>(
    rng: &mut R,
    n_range: [usize; 2],
    mixture: &GraphMixture,
) -> Result<Graph> {
    if n_range[0] < 2 || n_range[0] > n_range[1] {
        return Err(Error::Config(format!("bad node range {n_range:?}")));
    }
    loop {
        let n = rng.random_range(n_range[0]..=n_range[1]);
        let family = rng.random_range(0..3u32);
        let (name, edges) = match family {
            0 => ("erdos_renyi", erdos_renyi(rng, n, mixture.erdos_renyi_p)),
            1 => ("preferential", preferential(rng, n, mixture.preferential_m)),
            _ => ("grid", grid_patch(rng, n, mixture.grid_columns)),
        };
        let g = Graph::new(n, edges)?.with_meta("generator", Value::from(name));
        if g.is_connected() {
            return Ok(g);
        }
    }
}

fn erdos_renyi<R: Rng + ?Sized>(rng: &mut R, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    edges
}

fn preferential<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> Vec<(usize, usize)> {
    let m = m.max(1);
    let seed = (m + 1).min(n);
    let mut edges = Vec::new();
    // Endpoint multiset: sampling uniformly from it is degree-proportional.
    let mut endpoints = Vec::new();
    for u in 0..seed {
        for v in u + 1..seed {
            edges.push((u, v));
            endpoints.push(u);
            endpoints.push(v);
        }
    }
    for new in seed..n {
        let mut chosen: Vec<usize> = Vec::with_capacity(m);
        while chosen.len() < m.min(new) {
            let candidate = endpoints[rng.random_range(0..endpoints.len())];
            if !chosen.contains(&candidate) {
                chosen.push(candidate);
            }
        }
        for &v in &chosen {
            edges.push((v, new));
            endpoints.push(v);
            endpoints.push(new);
        }
    }
    edges
}

fn grid_patch<R: Rng + ?Sized>(rng: &mut R, n: usize, columns: [usize; 2]) -> Vec<(usize, usize)> {
    let lo = columns[0].max(1);
    let hi = columns[1].max(lo);
    let cols = rng.random_range(lo..=hi);
    let mut edges = Vec::new();
    for i in 0..n {
        let (r, c) = (i / cols, i % cols);
        if c + 1 < cols && i + 1 < n {
            edges.push((i, i + 1));
        }
        if (r + 1) * cols + c < n {
            edges.push((i, i + cols));
        }
    }
    edges
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dist(t: &TransferGraph) -> usize {
        t.graph.bfs_distances(t.source)[t.target].unwrap()
    }

    #[test]
    fn line_of_three_is_path_of_four() {
        let t = line_graph(3).unwrap();
        assert_eq!(t.graph.node_count(), 4);
        let ecc = (0..4)
            .map(|u| t.graph.bfs_distances(u).into_iter().flatten().max().unwrap())
            .max()
            .unwrap();
        assert_eq!(ecc, 3);
    }

    #[test]
    fn ring_five_has_ten_nodes_and_antipodal_target() {
        let t = ring_graph(5).unwrap();
        assert_eq!(t.graph.node_count(), 10);
        assert_eq!(dist(&t), 5);
    }

    #[test]
    fn crossed_ring_keeps_distance() {
        let t = crossed_ring_graph(5).unwrap();
        assert_eq!(dist(&t), 5);
        assert!(t.graph.edge_count() > 10);
    }

    #[test]
    fn zero_distance_rejected() {
        assert!(line_graph(0).is_err());
        assert!(ring_graph(0).is_err());
        assert!(crossed_ring_graph(0).is_err());
    }

    #[test]
    fn transfer_distances_for_all_benchmark_k() {
        for k in [1, 2, 3, 5, 10, 50] {
            for t in [line_graph(k), ring_graph(k), crossed_ring_graph(k)] {
                let t = t.unwrap();
                assert!(t.graph.validate().is_ok());
                assert_eq!(dist(&t), k, "k={k} {:?}", t.graph.meta());
            }
        }
    }

    #[test]
    fn c60_is_cubic() {
        let g = truncated_icosahedron();
        assert_eq!(g.node_count(), 60);
        assert_eq!(g.edge_count(), 90);
        assert!((0..60).all(|u| g.degree(u) == 3));
        assert!(g.is_connected());
        let f = g.features().unwrap();
        for i in 0..60 {
            for j in i + 1..60 {
                let d = (f[i][0] - f[j][0]).hypot(f[i][1] - f[j][1]);
                assert!(d > 1e-6, "projection collides for {i},{j}");
            }
        }
    }

    #[test]
    fn random_graphs_are_connected_and_deterministic() {
        let mix = GraphMixture::default();
        for seed in 0..20 {
            let mut a = ChaCha8Rng::seed_from_u64(seed);
            let mut b = ChaCha8Rng::seed_from_u64(seed);
            let g = random_task_graph(&mut a, [25, 35], &mix).unwrap();
            let h = random_task_graph(&mut b, [25, 35], &mix).unwrap();
            assert_eq!(g, h);
            assert!((25..=35).contains(&g.node_count()));
            assert!(g.bfs_distances(0).iter().all(Option::is_some));
        }
    }
}
