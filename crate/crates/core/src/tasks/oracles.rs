//! Exact unweighted distance targets.

use crate::error::{Error, Result};
use crate::graph::Graph;

fn distances(graph: &Graph, source: usize) -> Result<Vec<usize>> {
    if source >= graph.node_count() {
        return Err(Error::Config(format!("source {source} out of range")));
    }
    graph
        .bfs_distances(source)
        .into_iter()
        .map(|d| d.ok_or(Error::Disconnected))
        .collect()
}

/// Hop distances from `source` to every node.
pub fn oracle_sssp(graph: &Graph, source: usize) -> Result<Vec<usize>> {
    distances(graph, source)
}

/// Largest hop distance from each node.
pub fn oracle_eccentricity(graph: &Graph) -> Result<Vec<usize>> {
    if graph.node_count() == 0 {
        return Err(Error::InvalidGraph("empty graph".into()));
    }
    (0..graph.node_count())
        .map(|u| Ok(distances(graph, u)?.into_iter().max().unwrap_or(0)))
        .collect()
}

pub fn oracle_diameter(graph: &Graph) -> Result<usize> {
    Ok(oracle_eccentricity(graph)?.into_iter().max().unwrap_or(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{line_graph, ring_graph};
    use proptest::prelude::*;

    fn floyd_warshall(g: &Graph) -> Vec<Vec<Option<usize>>> {
        let n = g.node_count();
        let mut d = vec![vec![None; n]; n];
        for (u, row) in d.iter_mut().enumerate() {
            row[u] = Some(0);
        }
        for &(u, v) in g.edges() {
            d[u][v] = Some(1);
            d[v][u] = Some(1);
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if let (Some(a), Some(b)) = (d[i][k], d[k][j]) {
                        if d[i][j].is_none_or(|c| a + b < c) {
                            d[i][j] = Some(a + b);
                        }
                    }
                }
            }
        }
        d
    }

    #[test]
    fn hand_examples() {
        let ring6 = ring_graph(3).unwrap().graph;
        assert_eq!(oracle_diameter(&ring6).unwrap(), 3);
        let line4 = line_graph(3).unwrap().graph;
        assert_eq!(oracle_eccentricity(&line4).unwrap(), vec![3, 2, 2, 3]);
        assert_eq!(oracle_sssp(&line4, 0).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn disconnected_is_an_error() {
        let g = Graph::new(3, vec![(0, 1)]).unwrap();
        assert!(matches!(oracle_sssp(&g, 0), Err(Error::Disconnected)));
        assert!(matches!(oracle_diameter(&g), Err(Error::Disconnected)));
    }

    fn small_graph() -> impl Strategy<Value = Graph> {
        (1usize..=12).prop_flat_map(|n| {
            proptest::collection::vec((0..n, 0..n), 0..(n * 3)).prop_map(move |pairs| {
                let mut edges: Vec<(usize, usize)> = pairs
                    .into_iter()
                    .filter(|(a, b)| a != b)
                    .map(|(a, b)| (a.min(b), a.max(b)))
                    .collect();
                edges.sort_unstable();
                edges.dedup();
                Graph::new(n, edges).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn agrees_with_floyd_warshall(g in small_graph()) {
            let fw = floyd_warshall(&g);
            let connected = fw.iter().flatten().all(Option::is_some);
            for s in 0..g.node_count() {
                match oracle_sssp(&g, s) {
                    Ok(d) => prop_assert_eq!(d.into_iter().map(Some).collect::<Vec<_>>(), fw[s].clone()),
                    Err(_) => prop_assert!(fw[s].iter().any(Option::is_none)),
                }
            }
            match oracle_eccentricity(&g) {
                Ok(ecc) => {
                    prop_assert!(connected);
                    for (u, e) in ecc.iter().enumerate() {
                        prop_assert_eq!(Some(*e), fw[u].iter().map(|d| d.unwrap()).max());
                    }
                    prop_assert_eq!(oracle_diameter(&g).unwrap(), *ecc.iter().max().unwrap());
                }
                Err(_) => prop_assert!(!connected),
            }
        }
    }
}
