//! Global system state `y = (p, q)`.
//!
//! Each half is stored as a `(d/2) x n` matrix whose column `u` is the
//! momentum (resp. position) of node `u`. The flat global vector lists all
//! momenta first, node by node, then all positions, which is exactly the
//! column-major layout of the two halves.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Serialized with one array per feature row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    #[serde(with = "crate::linalg::rows")]
    pub p: DMatrix<f64>,
    #[serde(with = "crate::linalg::rows")]
    pub q: DMatrix<f64>,
}

impl SystemState {
    pub fn new(p: DMatrix<f64>, q: DMatrix<f64>) -> Result<Self> {
        if p.shape() != q.shape() {
            return Err(Error::Dimension(format!(
                "momentum {:?} vs position {:?}",
                p.shape(),
                q.shape()
            )));
        }
        Ok(Self { p, q })
    }

    pub fn zeros(dim: usize, n: usize) -> Self {
        let half = dim / 2;
        Self {
            p: DMatrix::zeros(half, n),
            q: DMatrix::zeros(half, n),
        }
    }

    /// Entries drawn uniformly from `[-scale, scale)`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, dim: usize, n: usize, scale: f64) -> Self {
        let half = dim / 2;
        let mut draw = || DMatrix::from_fn(half, n, |_, _| scale * (2.0 * rng.random::<f64>() - 1.0));
        let p = draw();
        let q = draw();
        Self { p, q }
    }

    /// Full node-state dimension `d`.
    /// `x_u = E f_u` with a Glorot-uniform `dim × f` encoder `E` drawn from
    /// `rng`; the first half of `x_u` is the momentum. `None` when the graph
    /// has no node features.
    pub fn encode_features<R: Rng + ?Sized>(rng: &mut R, graph: &crate::graph::Graph, dim: usize) -> Option<Self> {
        let rows = graph.features()?;
        let f = rows.first().map_or(0, Vec::len);
        if f == 0 || dim == 0 || dim % 2 != 0 {
            return None;
        }
        let a = (6.0 / (f + dim) as f64).sqrt();
        let enc = DMatrix::from_fn(dim, f, |_, _| rng.random_range(-a..a));
        let y = enc * DMatrix::from_fn(f, rows.len(), |i, j| rows[j][i]);
        let h = dim / 2;
        Some(Self {
            p: y.rows(0, h).into_owned(),
            q: y.rows(h, h).into_owned(),
        })
    }

    pub fn dim(&self) -> usize {
        2 * self.p.nrows()
    }

    pub fn half_dim(&self) -> usize {
        self.p.nrows()
    }

    pub fn node_count(&self) -> usize {
        self.p.ncols()
    }

    /// `x_u = (p_u, q_u)`.
    pub fn node(&self, u: usize) -> DVector<f64> {
        let h = self.half_dim();
        DVector::from_fn(2 * h, |i, _| {
            if i < h {
                self.p[(i, u)]
            } else {
                self.q[(i - h, u)]
            }
        })
    }

    pub fn set_node(&mut self, u: usize, x: &DVector<f64>) {
        let h = self.half_dim();
        for i in 0..h {
            self.p[(i, u)] = x[i];
            self.q[(i, u)] = x[h + i];
        }
    }

    /// Flat `y = (p_1..p_n, q_1..q_n)`.
    pub fn to_global(&self) -> DVector<f64> {
        let mut y = Vec::with_capacity(2 * self.p.len());
        y.extend_from_slice(self.p.as_slice());
        y.extend_from_slice(self.q.as_slice());
        DVector::from_vec(y)
    }

    pub fn from_global(dim: usize, n: usize, y: &[f64]) -> Result<Self> {
        if dim % 2 != 0 {
            return Err(Error::Dimension(format!("odd state dimension {dim}")));
        }
        let half = dim / 2;
        if y.len() != dim * n {
            return Err(Error::Dimension(format!(
                "global vector of length {} for d={dim}, n={n}",
                y.len()
            )));
        }
        let (p, q) = y.split_at(half * n);
        Ok(Self {
            p: DMatrix::from_column_slice(half, n, p),
            q: DMatrix::from_column_slice(half, n, q),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(self.q.iter()).all(|x| x.is_finite())
    }

    /// Fails with [`Error::NonFinite`] tagged with `step`.
    pub fn ensure_finite(&self, step: usize) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite {
                step,
                what: "state".into(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn global_round_trip(half in 1usize..4, n in 1usize..6, seed in any::<u64>()) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let s = SystemState::random(&mut rng, 2 * half, n, 3.0);
            let y = s.to_global();
            let back = SystemState::from_global(2 * half, n, y.as_slice()).unwrap();
            prop_assert_eq!(&back, &s);
            for u in 0..n {
                let x = s.node(u);
                prop_assert_eq!(x[0], y[u * half]);
                prop_assert_eq!(x[half], y[half * n + u * half]);
            }
        }
    }

    #[test]
    fn odd_dimension_rejected() {
        assert!(SystemState::from_global(3, 1, &[0.0; 3]).is_err());
    }

    #[test]
    fn set_node_round_trips() {
        let mut s = SystemState::zeros(4, 3);
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        s.set_node(1, &x);
        assert_eq!(s.node(1), x);
        assert_eq!(s.node(0), DVector::zeros(4));
    }
}
