//! Seeded verification suite over random small instances.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use phdgn::forces::{step_port_symplectic, DampeningSpec, ForcingKind, ForcingSpec};
use phdgn::graph::{line_graph, Graph};
use phdgn::integrators::step_symplectic_euler;
use phdgn::linalg::{eigenvalues, entrywise_l1, max_abs, spectral_norm, symplectic_j};
use phdgn::sensitivity::{
    bound_cross_node, bound_port, bound_q, bsm_chain, fd_cross_node_jacobian, fd_jacobian, fd_same_node_jacobian,
    layer_jacobian_same_node,
};
use phdgn::{
    rollout, Activation, Aggregation, CouplingWeights, DampeningKind, Hamiltonian, PortForces, RolloutConfig, Scheme,
    SystemState,
};

use crate::config::echo;

fn default_instances() -> usize {
    100
}
fn default_max_dim() -> usize {
    6
}
fn default_max_nodes() -> usize {
    8
}
fn default_eps() -> f64 {
    0.1
}
fn default_layers() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(default = "default_max_dim")]
    pub max_dim: usize,
    #[serde(default = "default_max_nodes")]
    pub max_nodes: usize,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_layers")]
    pub layers: usize,
    /// Negative control: replace `J` by the symmetric block swap in the
    /// spectrum check.
    #[serde(default)]
    pub inject_symmetric_j: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub instances: usize,
    /// Largest violation measure seen; compared against `tolerance`.
    pub worst: f64,
    pub tolerance: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

/// A random instance: connected graph, weights, state.
struct Instance {
    graph: Graph,
    weights: CouplingWeights,
    activation: Activation,
    state: SystemState,
    rng: ChaCha8Rng,
}

fn connected_graph<R: Rng>(rng: &mut R, n: usize) -> Graph {
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.random_range(0..v), v));
    }
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < 0.2 && !edges.contains(&(u, v)) {
                edges.push((u, v));
            }
        }
    }
    Graph::new(n, edges).expect("valid random graph")
}

impl VerifyConfig {
    fn instance(&self, check: u64, index: usize) -> Instance {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((check << 32) | index as u64);
        let n = rng.random_range(2..=self.max_nodes.max(2));
        let half = rng.random_range(1..=(self.max_dim / 2).max(1));
        let agg = if rng.random::<bool>() { Aggregation::SumV } else { Aggregation::Gcn };
        let activation = if rng.random::<f64>() < 0.75 { Activation::Tanh } else { Activation::Sigmoid };
        let graph = connected_graph(&mut rng, n);
        let weights = CouplingWeights::random(&mut rng, 2 * half, agg, 0.8);
        let state = SystemState::random(&mut rng, 2 * half, n, 1.0);
        Instance {
            graph,
            weights,
            activation,
            state,
            rng,
        }
    }
}

type Measure = dyn Fn(&VerifyConfig, Instance) -> phdgn::Result<f64> + Sync;

struct Check {
    name: &'static str,
    tolerance: f64,
    measure: Box<Measure>,
}

fn rel(diff: f64, scale: f64) -> f64 {
    diff / scale.max(1.0)
}

fn checks() -> Vec<Check> {
    let c = |name, tolerance, measure: Box<Measure>| Check {
        name,
        tolerance,
        measure,
    };
    vec![
        c(
            "gradient_fd",
            1e-6,
            Box::new(|_, inst| {
                let h = Hamiltonian::new(&inst.graph, &inst.weights, inst.activation);
                let s = &inst.state;
                let (d, n) = (s.dim(), s.node_count());
                let fd = fd_jacobian(
                    |y| {
                        let e = SystemState::from_global(d, n, y.as_slice()).and_then(|x| h.energy(&x));
                        DVector::from_element(1, e.unwrap_or(f64::NAN))
                    },
                    &s.to_global(),
                    1e-3,
                );
                let g = h.gradient(s)?.to_global();
                let diff = (fd.row(0).transpose() - &g).amax();
                Ok(rel(diff, g.amax()))
            }),
        ),
        c(
            "hessian_fd",
            1e-5,
            Box::new(|_, inst| {
                let h = Hamiltonian::new(&inst.graph, &inst.weights, inst.activation);
                let mut worst: f64 = 0.0;
                for u in 0..inst.graph.node_count() {
                    let fd = fd_jacobian(
                        |x| {
                            let mut s = inst.state.clone();
                            s.set_node(u, x);
                            h.grad_node(&s, u).unwrap_or_else(|_| DVector::from_element(x.len(), f64::NAN))
                        },
                        &inst.state.node(u),
                        1e-3,
                    );
                    let an = h.hessian_node(&inst.state, u)?;
                    worst = worst.max(rel(max_abs(&(&fd - &an)), max_abs(&an)));
                }
                Ok(worst)
            }),
        ),
        c(
            "spectrum_imaginary",
            1e-8,
            Box::new(|cfg, inst| {
                let h = Hamiltonian::new(&inst.graph, &inst.weights, inst.activation);
                let mut worst: f64 = 0.0;
                for u in 0..inst.graph.node_count() {
                    let s = h.hessian_node(&inst.state, u)?;
                    let j = if cfg.inject_symmetric_j {
                        symmetric_swap(s.nrows())
                    } else {
                        symplectic_j(s.nrows())
                    };
                    let a = &s * j.transpose();
                    let ev = eigenvalues(&a)?;
                    let scale = ev.iter().map(|(re, im)| re.hypot(*im)).fold(0.0, f64::max);
                    let re = ev.iter().map(|(re, _)| re.abs()).fold(0.0, f64::max);
                    worst = worst.max(rel(re, scale));
                }
                Ok(worst)
            }),
        ),
        c(
            "trace_zero",
            1e-10,
            Box::new(|_, inst| {
                let h = Hamiltonian::new(&inst.graph, &inst.weights, inst.activation);
                let mut worst: f64 = 0.0;
                for u in 0..inst.graph.node_count() {
                    let a = phdgn::sensitivity::jacobian_a(&h, &inst.state, u)?;
                    worst = worst.max(a.trace().abs());
                }
                Ok(worst)
            }),
        ),
        c(
            "aj_symmetric",
            1e-10,
            Box::new(|_, inst| {
                let h = Hamiltonian::new(&inst.graph, &inst.weights, inst.activation);
                let mut worst: f64 = 0.0;
                for u in 0..inst.graph.node_count() {
                    let a = phdgn::sensitivity::jacobian_a(&h, &inst.state, u)?;
                    let aj = &a * symplectic_j(a.nrows());
                    worst = worst.max((&aj - aj.transpose()).norm());
                }
                Ok(worst)
            }),
        ),
        c(
            "energy_orthogonal",
            1e-12,
            Box::new(|_, inst| {
                let h = Hamiltonian::new(&inst.graph, &inst.weights, inst.activation);
                let g = h.gradient(&inst.state)?.to_global();
                let f = h.dynamics(&inst.state)?.to_global();
                Ok(g.dot(&f).abs() / (1.0 + g.norm_squared()))
            }),
        ),
        c(
            "layer_jacobian_fd",
            1e-6,
            Box::new(|cfg, inst| {
                let h = Hamiltonian::new(&inst.graph, &inst.weights, inst.activation);
                let mut worst: f64 = 0.0;
                for u in 0..inst.graph.node_count() {
                    let an = layer_jacobian_same_node(&h, &inst.state, u, cfg.eps, Scheme::SymplecticEuler)?;
                    let fd = fd_same_node_jacobian(&h, None, 0.0, &inst.state, u, cfg.eps)?;
                    worst = worst.max(rel(max_abs(&(&fd - &an)), max_abs(&an)));
                }
                Ok(worst)
            }),
        ),
        c(
            "bsm_lower",
            1e-6,
            Box::new(|cfg, inst| {
                let h = Hamiltonian::new(&inst.graph, &inst.weights, inst.activation);
                let traj = rollout(&h, &horizon(cfg).with_states(), &inst.state)?;
                let r = bsm_chain(&h, &traj, 0)?;
                Ok((1.0 - r.min_norm()).max(0.0))
            }),
        ),
        c(
            "bsm_symplectic",
            1e-8,
            Box::new(|cfg, inst| {
                let h = Hamiltonian::new(&inst.graph, &inst.weights, inst.activation);
                let traj = rollout(&h, &horizon(cfg).with_states(), &inst.state)?;
                Ok(bsm_chain(&h, &traj, 0)?.max_relative_residual())
            }),
        ),
        c(
            "bsm_upper",
            0.0,
            Box::new(|cfg, inst| {
                let h = Hamiltonian::new(&inst.graph, &inst.weights, inst.activation);
                let rc = horizon(cfg).with_states();
                let traj = rollout(&h, &rc, &inst.state)?;
                let r = bsm_chain(&h, &traj, 0)?;
                let bound = bound_q(&inst.weights, inst.activation, &inst.graph).upper(rc.t_end);
                Ok((r.max_norm() - bound).max(0.0))
            }),
        ),
        c(
            "port_reduction",
            0.0,
            Box::new(|cfg, inst| {
                let h = Hamiltonian::new(&inst.graph, &inst.weights, inst.activation);
                let plain = step_symplectic_euler(&h, &inst.state, cfg.eps)?;
                let port = step_port_symplectic(&h, &PortForces::default(), 0.0, &inst.state, cfg.eps)?;
                Ok(if plain == port { 0.0 } else { 1.0 })
            }),
        ),
        c(
            "port_dissipation",
            0.0,
            Box::new(|_, mut inst| {
                let h = Hamiltonian::new(&inst.graph, &inst.weights, inst.activation);
                let half = inst.weights.half_dim();
                let forces = PortForces::new(
                    Some(DampeningSpec::random(&mut inst.rng, DampeningKind::ParamPlus, half, 1.0)),
                    None,
                );
                let mut worst: f64 = 0.0;
                for _ in 0..20 {
                    let s = SystemState::random(&mut inst.rng, inst.weights.dim(), inst.graph.node_count(), 2.0);
                    worst = worst.max(forces.energy_rate(&h, &s, 0.0)?);
                }
                Ok(worst.max(0.0))
            }),
        ),
        c(
            "port_bounds",
            0.0,
            Box::new(|_, mut inst| {
                let n = inst.graph.node_count().min(4);
                let graph = connected_graph(&mut inst.rng, n);
                let half = inst.weights.half_dim().min(2);
                let weights = CouplingWeights::random(&mut inst.rng, 2 * half, inst.weights.agg, 0.8);
                let state = SystemState::random(&mut inst.rng, 2 * half, n, 1.0);
                let h = Hamiltonian::new(&graph, &weights, inst.activation);
                let forces = PortForces::new(
                    Some(DampeningSpec::random(&mut inst.rng, DampeningKind::ParamPlus, half, 0.5)),
                    Some(ForcingSpec::random(&mut inst.rng, ForcingKind::DgnTanh, half, 0.5)),
                );
                let eps = 0.01;
                let b = bound_port(&weights, inst.activation, &graph, &forces, eps)?;
                let mut worst: f64 = 0.0;
                for u in 0..n {
                    let m = spectral_norm(&fd_same_node_jacobian(&h, Some(&forces), 0.0, &state, u, eps)?);
                    worst = worst.max(b.lower - m).max(m - b.upper_same);
                }
                Ok(worst.max(0.0))
            }),
        ),
        c(
            "cross_node_bound",
            0.0,
            Box::new(|_, mut inst| {
                let graph = line_graph(2).expect("path").graph;
                let weights = CouplingWeights::random(&mut inst.rng, 2, Aggregation::SumV, 0.8);
                let state = SystemState::random(&mut inst.rng, 2, 3, 1.0);
                let h = Hamiltonian::new(&graph, &weights, inst.activation);
                let jac = fd_cross_node_jacobian(&h, Scheme::SymplecticEuler, &state, 2, 1.0, 0, 2)?;
                let b = bound_cross_node(&weights, inst.activation, &graph, 2, 0, 2);
                Ok((entrywise_l1(&jac) - b.bound).max(0.0))
            }),
        ),
    ]
}

fn horizon(cfg: &VerifyConfig) -> RolloutConfig {
    RolloutConfig::new(cfg.eps, cfg.eps * cfg.layers as f64, Scheme::SymplecticEuler)
}

/// `[[0, I], [I, 0]]`: symmetric, so `S Jᵀ` has a real spectrum.
fn symmetric_swap(dim: usize) -> DMatrix<f64> {
    let j = symplectic_j(dim);
    DMatrix::from_fn(dim, dim, |r, c| j[(r, c)].abs())
}

pub fn run_checks(cfg: &VerifyConfig) -> VerifyReport {
    let results: Vec<CheckResult> = checks()
        .into_par_iter()
        .enumerate()
        .map(|(k, check)| {
            let mut worst: f64 = 0.0;
            let mut failures = 0;
            for i in 0..cfg.instances {
                let v = (check.measure)(cfg, cfg.instance(k as u64, i)).unwrap_or(f64::INFINITY);
                if !(v <= check.tolerance) {
                    failures += 1;
                }
                worst = if v.is_nan() { f64::INFINITY } else { worst.max(v) };
            }
            CheckResult {
                name: check.name.to_string(),
                passed: failures == 0,
                instances: cfg.instances,
                worst,
                tolerance: check.tolerance,
                failures,
            }
        })
        .collect();
    VerifyReport {
        seed: cfg.seed,
        passed: results.iter().all(|r| r.passed),
        checks: results,
    }
}

pub fn run(cfg: &VerifyConfig, out: &Path) -> anyhow::Result<VerifyReport> {
    echo(cfg, out)?;
    let report = run_checks(cfg);
    for r in &report.checks {
        println!(
            "{} {:<20} worst={:.3e} tol={:.1e} ({} of {} failed)",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.worst,
            r.tolerance,
            r.failures,
            r.instances
        );
    }
    fs::write(out.join("verify_report.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}
