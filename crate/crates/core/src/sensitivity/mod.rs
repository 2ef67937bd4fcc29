//! Backward sensitivity of node states through symplectic layers.
//!
//! The same-node backward sensitivity matrix (BSM) `Ψ(L, L-ℓ)` is the
//! Jacobian of `x_u^(L)` with respect to `x_u^(L-ℓ)` when every other node
//! follows its recorded trajectory.

mod bounds;

pub use bounds::{bound_cross_node, bound_port, bound_q, BoundValues, CrossNodeBound, PortBounds};

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forces::{step_port_symplectic, PortForces};
use crate::hamiltonian::Hamiltonian;
use crate::integrators::{step, Scheme, Trajectory};
use crate::linalg::{spectral_norm, symplectic_j};
use crate::state::SystemState;

/// Analytic `∂x_u^(ℓ+1)/∂x_u^(ℓ)` of one symplectic Euler layer:
///
/// ```text
/// [[ I,         -ε S_q(q)          ],
///  [ ε S_p(p'),  I - ε² S_p(p') S_q(q) ]]
/// ```
pub fn layer_jacobian_same_node(
    h: &Hamiltonian<'_>,
    state: &SystemState,
    u: usize,
    eps: f64,
    scheme: Scheme,
) -> Result<DMatrix<f64>> {
    if scheme != Scheme::SymplecticEuler {
        return Err(Error::Unsupported(format!(
            "analytic same-node Jacobian for {}",
            scheme.name()
        )));
    }
    h.check_state(state)?;
    let (mom, pos) = (h.weights.momentum(), h.weights.position());
    let p_next = &state.p - h.half_gradient(pos, &state.q) * eps;
    let sq = h.half_hessian_node(pos, &state.q, u);
    let sp = h.half_hessian_node(mom, &p_next, u);
    let k = h.weights.half_dim();
    let mut m = DMatrix::identity(2 * k, 2 * k);
    m.view_mut((0, k), (k, k)).copy_from(&(&sq * -eps));
    m.view_mut((k, 0), (k, k)).copy_from(&(&sp * eps));
    let corner = DMatrix::identity(k, k) - &sp * &sq * (eps * eps);
    m.view_mut((k, k), (k, k)).copy_from(&corner);
    Ok(m)
}

/// Analytic same-node Jacobian of one port-Hamiltonian layer (current-state
/// evaluation). With `G = -ε S_q - ε diag(∇_p H_u) ∂D_u/∂q_u + ε ∂F_u/∂q_u`
/// and `K = I - ε diag(D_u) S_p(p)`:
///
/// ```text
/// [[ K,            G                ],
///  [ ε S_p(p') K,  I + ε S_p(p') G  ]]
/// ```
pub fn layer_jacobian_port_same_node(
    h: &Hamiltonian<'_>,
    forces: &PortForces,
    t: f64,
    state: &SystemState,
    u: usize,
    eps: f64,
) -> Result<DMatrix<f64>> {
    if forces.evaluate_at != crate::forces::PortEvaluation::Current {
        return Err(Error::Unsupported("analytic Jacobian of the q-first port layer".into()));
    }
    h.check_state(state)?;
    forces.check(h.weights.half_dim())?;
    let (mom, pos) = (h.weights.momentum(), h.weights.position());
    let k = h.weights.half_dim();
    let next = step_port_symplectic(h, forces, t, state, eps)?;
    let sq = h.half_hessian_node(pos, &state.q, u);
    let sp = h.half_hessian_node(mom, &state.p, u);
    let sp_next = h.half_hessian_node(mom, &next.p, u);
    let mut kk = DMatrix::identity(k, k);
    let mut g = &sq * -eps;
    if let Some(d) = &forces.dampening {
        let du = d.eval(h.graph, &state.q).column(u).into_owned();
        let gp = h.half_gradient(mom, &state.p).column(u).into_owned();
        kk -= DMatrix::from_diagonal(&du) * &sp * eps;
        g -= DMatrix::from_diagonal(&gp) * d.own_jacobian(h.graph, &state.q, u) * eps;
    }
    if let Some(f) = &forces.forcing {
        g += f.own_jacobian(h.graph, &state.q, t, u) * eps;
    }
    let mut m = DMatrix::zeros(2 * k, 2 * k);
    m.view_mut((0, 0), (k, k)).copy_from(&kk);
    m.view_mut((0, k), (k, k)).copy_from(&g);
    m.view_mut((k, 0), (k, k)).copy_from(&(&sp_next * &kk * eps));
    m.view_mut((k, k), (k, k)).copy_from(&(DMatrix::identity(k, k) + &sp_next * &g * eps));
    Ok(m)
}

/// `A_u = S_u J_uᵀ`.
pub fn jacobian_a(h: &Hamiltonian<'_>, state: &SystemState, u: usize) -> Result<DMatrix<f64>> {
    let s = h.hessian_node(state, u)?;
    Ok(&s * symplectic_j(s.nrows()).transpose())
}

/// `‖Ψᵀ J Ψ - J‖_F`.
pub fn symplectic_residual(psi: &DMatrix<f64>) -> f64 {
    let j = symplectic_j(psi.nrows());
    (psi.transpose() * &j * psi - j).norm()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityReport {
    pub node: usize,
    pub eps: f64,
    pub layers: usize,
    pub scheme: Scheme,
    /// Per-layer Jacobians, `step_jacobians[ℓ] = ∂x_u^(ℓ+1)/∂x_u^(ℓ)`.
    #[serde(skip)]
    pub step_jacobians: Vec<DMatrix<f64>>,
    /// `chain[ℓ] = Ψ(L, L-ℓ)` for `ℓ = 0..=L`.
    #[serde(skip)]
    pub chain: Vec<DMatrix<f64>>,
    pub norms: Vec<f64>,
    pub residuals: Vec<f64>,
}

impl SensitivityReport {
    pub fn min_norm(&self) -> f64 {
        self.norms.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_norm(&self) -> f64 {
        self.norms.iter().copied().fold(0.0, f64::max)
    }

    /// Largest `residual / (1 + ‖Ψ‖²)` over depths.
    pub fn max_relative_residual(&self) -> f64 {
        self.norms
            .iter()
            .zip(&self.residuals)
            .map(|(n, r)| r / (1.0 + n * n))
            .fold(0.0, f64::max)
    }
}

/// Chains the same-node layer Jacobians of a recorded symplectic Euler
/// trajectory into `Ψ(L, L-ℓ) = M_{L-1} ⋯ M_{L-ℓ}`.
pub fn bsm_chain(h: &Hamiltonian<'_>, trajectory: &Trajectory, u: usize) -> Result<SensitivityReport> {
    let states = trajectory
        .states
        .as_ref()
        .ok_or_else(|| Error::MissingStates("rollout did not record states".into()))?;
    let layers = states.len().saturating_sub(1);
    let eps = trajectory.eps;
    let step_jacobians = states[..layers]
        .iter()
        .map(|s| layer_jacobian_same_node(h, s, u, eps, Scheme::SymplecticEuler))
        .collect::<Result<Vec<_>>>()?;
    let dim = h.weights.dim();
    let mut chain = Vec::with_capacity(layers + 1);
    chain.push(DMatrix::identity(dim, dim));
    for l in 1..=layers {
        let next = &chain[l - 1] * &step_jacobians[layers - l];
        chain.push(next);
    }
    let norms = chain.iter().map(spectral_norm).collect();
    let residuals = chain.iter().map(symplectic_residual).collect();
    Ok(SensitivityReport {
        node: u,
        eps,
        layers,
        scheme: Scheme::SymplecticEuler,
        step_jacobians,
        chain,
        norms,
        residuals,
    })
}

/// Rows `node,depth,norm2,residual,lower_ok,upper_bound,upper_ok`. The upper
/// bound is `√d exp(Q T)` with `T` the rollout horizon.
pub fn write_report_csv<W: Write>(reports: &[SensitivityReport], bound: &BoundValues, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["node", "depth", "norm2", "residual", "lower_ok", "upper_bound", "upper_ok"])?;
    for r in reports {
        let upper = bound.upper(r.layers as f64 * r.eps);
        for (depth, (n, res)) in r.norms.iter().zip(&r.residuals).enumerate() {
            w.write_record([
                r.node.to_string(),
                depth.to_string(),
                n.to_string(),
                res.to_string(),
                (*n >= 1.0 - 1e-6).to_string(),
                upper.to_string(),
                (*n <= upper).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Central-difference Jacobian of `f` at `x`, Richardson-extrapolated.
pub fn fd_jacobian<F>(f: F, x: &DVector<f64>, step: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let m = f(x).len();
    let mut jac = DMatrix::zeros(m, x.len());
    for j in 0..x.len() {
        let central = |h: f64| {
            let mut a = x.clone();
            let mut b = x.clone();
            a[j] += h;
            b[j] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        };
        let col = (central(step / 2.0) * 4.0 - central(step)) / 3.0;
        jac.set_column(j, &col);
    }
    jac
}

/// The one-layer map `x_u ↦ x_u'` with every other node held at its recorded
/// values (including the intermediate momenta of the layer). `forces = None`
/// means the conservative symplectic Euler layer.
pub fn same_node_step_map(
    h: &Hamiltonian<'_>,
    forces: Option<&PortForces>,
    t: f64,
    state: &SystemState,
    u: usize,
    eps: f64,
    x_u: &DVector<f64>,
) -> Result<DVector<f64>> {
    let conservative = PortForces::default();
    let forces = forces.unwrap_or(&conservative);
    if forces.evaluate_at != crate::forces::PortEvaluation::Current {
        return Err(Error::Unsupported("same-node map for the q-first port layer".into()));
    }
    let reference = step_port_symplectic(h, forces, t, state, eps)?;
    let mut perturbed = state.clone();
    perturbed.set_node(u, x_u);
    let moved = step_port_symplectic(h, forces, t, &perturbed, eps)?;
    let mut p_next = reference.p.clone();
    p_next.set_column(u, &moved.p.column(u));
    let gp = h.half_gradient(h.weights.momentum(), &p_next);
    let k = h.weights.half_dim();
    Ok(DVector::from_fn(2 * k, |i, _| {
        if i < k {
            p_next[(i, u)]
        } else {
            x_u[i] + eps * gp[(i - k, u)]
        }
    }))
}

/// Finite-difference same-node one-layer Jacobian.
pub fn fd_same_node_jacobian(
    h: &Hamiltonian<'_>,
    forces: Option<&PortForces>,
    t: f64,
    state: &SystemState,
    u: usize,
    eps: f64,
) -> Result<DMatrix<f64>> {
    same_node_step_map(h, forces, t, state, u, eps, &state.node(u))?;
    Ok(fd_jacobian(
        |x| same_node_step_map(h, forces, t, state, u, eps, x).expect("validated above"),
        &state.node(u),
        1e-4,
    ))
}

/// Full-graph Jacobian `∂x_u^(L)/∂x_v^(0)` of `layers` conservative layers by
/// finite differences.
pub fn fd_cross_node_jacobian(
    h: &Hamiltonian<'_>,
    scheme: Scheme,
    state: &SystemState,
    layers: usize,
    eps: f64,
    u: usize,
    v: usize,
) -> Result<DMatrix<f64>> {
    let run = |x: &DVector<f64>| -> Result<DVector<f64>> {
        let mut s = state.clone();
        s.set_node(v, x);
        for _ in 0..layers {
            s = step(h, scheme, &s, eps)?;
        }
        Ok(s.node(u))
    };
    run(&state.node(v))?;
    Ok(fd_jacobian(|x| run(x).expect("validated above"), &state.node(v), 1e-4))
}

/// `∂x_u(T)/∂x_u(0)` of the continuous flow with the other nodes following
/// their own trajectories, from RK4 on the state and the variational equation
/// `Φ' = J S_u(y(t)) Φ`.
pub fn continuous_bsm(
    h: &Hamiltonian<'_>,
    initial: &SystemState,
    u: usize,
    t_end: f64,
    steps: usize,
) -> Result<DMatrix<f64>> {
    let dim = h.weights.dim();
    let j = symplectic_j(dim);
    let rhs = |y: &SystemState, phi: &DMatrix<f64>| -> Result<(SystemState, DMatrix<f64>)> {
        let f = h.dynamics(y)?;
        let dphi = &j * h.hessian_node(y, u)? * phi;
        Ok((f, dphi))
    };
    let axpy = |y: &SystemState, a: f64, k: &SystemState| SystemState {
        p: &y.p + &k.p * a,
        q: &y.q + &k.q * a,
    };
    let dt = t_end / steps as f64;
    let mut y = initial.clone();
    let mut phi = DMatrix::identity(dim, dim);
    for step in 0..steps {
        let (k1, l1) = rhs(&y, &phi)?;
        let (k2, l2) = rhs(&axpy(&y, dt / 2.0, &k1), &(&phi + &l1 * (dt / 2.0)))?;
        let (k3, l3) = rhs(&axpy(&y, dt / 2.0, &k2), &(&phi + &l2 * (dt / 2.0)))?;
        let (k4, l4) = rhs(&axpy(&y, dt, &k3), &(&phi + &l3 * dt))?;
        y = SystemState {
            p: &y.p + (&k1.p + &k2.p * 2.0 + &k3.p * 2.0 + &k4.p) * (dt / 6.0),
            q: &y.q + (&k1.q + &k2.q * 2.0 + &k3.q * 2.0 + &k4.q) * (dt / 6.0),
        };
        phi += (l1 + l2 * 2.0 + l3 * 2.0 + l4) * (dt / 6.0);
        y.ensure_finite(step + 1)?;
    }
    Ok(phi)
}
