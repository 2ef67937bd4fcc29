//! Graph Hamiltonian
//!
//! ```text
//! H(y) = Σ_u 1ᵀ σ̃(W x_u + Φ_u + b)
//! ```
//!
//! With block-diagonal weights the energy splits into a momentum part
//! depending on `p` only and a position part depending on `q` only, each of
//! the form `Σ_u 1ᵀ σ̃(W_• x_u + Σ_{v∈N_u} c_uv V_• x_v + b_•)`. Everything
//! below works on one half at a time.

mod activation;
mod weights;

pub use activation::Activation;
pub use weights::{Aggregation, CouplingWeights, HalfWeights, WeightsDocument};
pub(crate) use weights::glorot_limit;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::block_diag;
use crate::state::SystemState;

/// Neighborhood aggregate `Φ_G({x_v}_{v∈N_u})` of one half-state at node `u`.
pub fn aggregate(
    graph: &Graph,
    agg: Aggregation,
    v: &DMatrix<f64>,
    x: &DMatrix<f64>,
    u: usize,
) -> Result<DVector<f64>> {
    if v.ncols() != x.nrows() || x.ncols() != graph.node_count() {
        return Err(Error::Dimension(format!(
            "V is {:?}, half-state is {:?} on {} nodes",
            v.shape(),
            x.shape(),
            graph.node_count()
        )));
    }
    let mut s = DVector::zeros(x.nrows());
    for &w in graph.neighbors(u) {
        s.axpy(agg.coefficient(graph, u, w), &x.column(w), 1.0);
    }
    Ok(v * s)
}

/// `H_G` bound to a graph, weights and activation.
#[derive(Debug, Clone, Copy)]
pub struct Hamiltonian<'a> {
    pub graph: &'a Graph,
    pub weights: &'a CouplingWeights,
    pub activation: Activation,
}

impl<'a> Hamiltonian<'a> {
    pub fn new(graph: &'a Graph, weights: &'a CouplingWeights, activation: Activation) -> Self {
        Self {
            graph,
            weights,
            activation,
        }
    }

    pub fn check_state(&self, state: &SystemState) -> Result<()> {
        let h = self.weights.half_dim();
        let n = self.graph.node_count();
        if state.p.shape() != (h, n) || state.q.shape() != (h, n) {
            return Err(Error::Dimension(format!(
                "state {:?} for weights of half-dimension {h} on {n} nodes",
                state.p.shape()
            )));
        }
        Ok(())
    }

    /// Pre-activations `Z = W X + V (X Â) + b 1ᵀ` of one half.
    pub fn preactivation(&self, half: HalfWeights<'_>, x: &DMatrix<f64>) -> DMatrix<f64> {
        let xa = self.weights.agg.apply(self.graph, x);
        let mut z = half.w * x + half.v * xa;
        for mut col in z.column_iter_mut() {
            col += half.b;
        }
        z
    }

    pub fn half_energy(&self, half: HalfWeights<'_>, x: &DMatrix<f64>) -> f64 {
        let act = self.activation;
        self.preactivation(half, x)
            .iter()
            .map(|&z| act.antiderivative(z))
            .sum()
    }

    /// `∂E/∂X = Wᵀ σ(Z) + Vᵀ σ(Z) Â`.
    pub fn half_gradient(&self, half: HalfWeights<'_>, x: &DMatrix<f64>) -> DMatrix<f64> {
        let act = self.activation;
        let s = self.preactivation(half, x).map(|z| act.value(z));
        let sa = self.weights.agg.apply(self.graph, &s);
        half.w.transpose() * s + half.v.transpose() * sa
    }

    /// `Wᵀ diag(σ'(z_u)) W + Σ_{v∈N_u} c_uv² Vᵀ diag(σ'(z_v)) V`.
    pub fn half_hessian_node(&self, half: HalfWeights<'_>, x: &DMatrix<f64>, u: usize) -> DMatrix<f64> {
        let z = self.preactivation(half, x);
        self.half_hessian_from_preactivation(half, &z, u)
    }

    pub(crate) fn half_hessian_from_preactivation(
        &self,
        half: HalfWeights<'_>,
        z: &DMatrix<f64>,
        u: usize,
    ) -> DMatrix<f64> {
        let act = self.activation;
        let weighted = |m: &DMatrix<f64>, col: usize, scale: f64| {
            let mut dm = m.clone();
            for (i, mut row) in dm.row_iter_mut().enumerate() {
                row *= scale * act.derivative(z[(i, col)]);
            }
            m.transpose() * dm
        };
        let mut s = weighted(half.w, u, 1.0);
        for &v in self.graph.neighbors(u) {
            let c = self.weights.agg.coefficient(self.graph, v, u);
            s += weighted(half.v, v, c * c);
        }
        (&s + s.transpose()) * 0.5
    }

    pub fn energy(&self, state: &SystemState) -> Result<f64> {
        self.check_state(state)?;
        let e = self.half_energy(self.weights.momentum(), &state.p)
            + self.half_energy(self.weights.position(), &state.q);
        if !e.is_finite() {
            return Err(Error::NonFinite {
                step: 0,
                what: "energy".into(),
            });
        }
        Ok(e)
    }

    /// `(∇_p H, ∇_q H)` for all nodes.
    pub fn gradient(&self, state: &SystemState) -> Result<SystemState> {
        self.check_state(state)?;
        Ok(SystemState {
            p: self.half_gradient(self.weights.momentum(), &state.p),
            q: self.half_gradient(self.weights.position(), &state.q),
        })
    }

    pub fn grad_node(&self, state: &SystemState, u: usize) -> Result<DVector<f64>> {
        Ok(self.gradient(state)?.node(u))
    }

    /// `S_u = ∇²_{x_u} H`, block-diagonal in `(p_u, q_u)`.
    pub fn hessian_node(&self, state: &SystemState, u: usize) -> Result<DMatrix<f64>> {
        self.check_state(state)?;
        Ok(block_diag(
            &self.half_hessian_node(self.weights.momentum(), &state.p, u),
            &self.half_hessian_node(self.weights.position(), &state.q, u),
        ))
    }

    /// `ẏ = J ∇H`: `ṗ = -∇_q H`, `q̇ = ∇_p H`.
    pub fn dynamics(&self, state: &SystemState) -> Result<SystemState> {
        let g = self.gradient(state)?;
        Ok(SystemState { p: -g.q, q: g.p })
    }

    pub fn dynamics_node(&self, state: &SystemState, u: usize) -> Result<DVector<f64>> {
        Ok(self.dynamics(state)?.node(u))
    }
}
