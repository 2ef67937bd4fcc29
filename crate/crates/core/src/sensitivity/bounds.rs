//! Analytic bounds on backward sensitivity.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::forces::PortForces;
use crate::graph::Graph;
use crate::hamiltonian::{Activation, CouplingWeights};
use crate::linalg::{max_abs, power_spectral_norm};

/// Constants behind the exponential upper bound and the cross-node bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundValues {
    pub dim: usize,
    /// Derivative bound `M` of the activation.
    pub m: f64,
    /// Lipschitz constant `c_σ`.
    pub c_sigma: f64,
    /// `max(‖W_p‖₂, ‖W_q‖₂)`.
    pub w_spectral: f64,
    pub v_spectral: f64,
    /// Largest entry magnitude over all of `W` and `V`.
    pub w_entry: f64,
    pub max_degree: usize,
    /// `Q = √d M ‖W‖₂² + √d M N ‖V‖₂²`.
    pub q: f64,
    pub spectral_converged: bool,
}

impl BoundValues {
    /// `√d exp(Q T)`.
    pub fn upper(&self, t: f64) -> f64 {
        (self.dim as f64).sqrt() * (self.q * t).exp()
    }
}

const POWER_TOL: f64 = 1e-10;
const POWER_ITERS: usize = 100_000;

pub fn bound_q(weights: &CouplingWeights, activation: Activation, graph: &Graph) -> BoundValues {
    let spec = |a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>| {
        // The block-diagonal norm is the larger block norm.
        let x = power_spectral_norm(a, POWER_TOL, POWER_ITERS);
        let y = power_spectral_norm(b, POWER_TOL, POWER_ITERS);
        (x.norm.max(y.norm), x.converged && y.converged)
    };
    let (w2, wc) = spec(&weights.wp, &weights.wq);
    let (v2, vc) = spec(&weights.vp, &weights.vq);
    let dim = weights.dim();
    let m = activation.derivative_bound();
    let n = graph.max_degree() as f64;
    let sd = (dim as f64).sqrt();
    BoundValues {
        dim,
        m,
        c_sigma: activation.lipschitz(),
        w_spectral: w2,
        v_spectral: v2,
        w_entry: entry_bound(weights),
        max_degree: graph.max_degree(),
        q: sd * m * w2 * w2 + sd * m * n * v2 * v2,
        spectral_converged: wc && vc,
    }
}

fn entry_bound(weights: &CouplingWeights) -> f64 {
    [&weights.wp, &weights.wq, &weights.vp, &weights.vq]
        .into_iter()
        .map(max_abs)
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossNodeBound {
    /// `(d w N c_σ)^ℓ ((w I + w (N+1) A)^ℓ)_{uv}`.
    pub bound: f64,
    /// Message-passing comparison `(c_σ w d)^ℓ ((I + A)^ℓ)_{uv}`.
    pub mpnn: f64,
}

pub fn bound_cross_node(
    weights: &CouplingWeights,
    activation: Activation,
    graph: &Graph,
    layers: usize,
    u: usize,
    v: usize,
) -> CrossNodeBound {
    let d = weights.dim() as f64;
    let w = entry_bound(weights);
    let nmax = graph.max_degree() as f64;
    let c = activation.lipschitz();
    let n = graph.node_count();
    let a = graph.adjacency_matrix();
    let id = nalgebra::DMatrix::<f64>::identity(n, n);
    let base = &id * w + &a * (w * (nmax + 1.0));
    let mpnn_base = &id + &a;
    let mut pw = id.clone();
    let mut pm = id;
    for _ in 0..layers {
        pw = &pw * &base;
        pm = &pm * &mpnn_base;
    }
    let l = layers as i32;
    CrossNodeBound {
        bound: (d * w * nmax * c).powi(l) * pw[(u, v)],
        mpnn: (c * w * d).powi(l) * pm[(u, v)],
    }
}

/// One-step bounds for port-Hamiltonian layers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortBounds {
    pub eps: f64,
    pub b_d: f64,
    pub w: f64,
    pub max_degree: usize,
    /// `c'_σ = max(b_σ, c_σ)`.
    pub c_prime: f64,
    /// `1 - ε w B_d c'_σ (N + 3 + w)`.
    pub lower: f64,
    /// `d (1 + ε c'_σ w (1 + B_d)(N + w + 3))`.
    pub upper_same: f64,
    /// `d ε c'_σ w (1 + B_d)(N + w + 3)`.
    pub upper_cross: f64,
}

pub fn bound_port(
    weights: &CouplingWeights,
    activation: Activation,
    graph: &Graph,
    forces: &PortForces,
    eps: f64,
) -> Result<PortBounds> {
    let b_d = forces.bound_constant()?;
    let w = entry_bound(weights);
    let nmax = graph.max_degree() as f64;
    let c = activation.sup().max(activation.lipschitz());
    let d = weights.dim() as f64;
    let growth = eps * c * w * (1.0 + b_d) * (nmax + w + 3.0);
    Ok(PortBounds {
        eps,
        b_d,
        w,
        max_degree: graph.max_degree(),
        c_prime: c,
        lower: 1.0 - eps * w * b_d * c * (nmax + 3.0 + w),
        upper_same: d * (1.0 + growth),
        upper_cross: d * growth,
    })
}
