//! Acceptance gates. Prints one `criterion N: PASS|FAIL` line per gate and
//! exits non-zero when any gate fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use phdgn::autodiff::{mse, Model, ModelConfig, ReadoutInput};
use phdgn::forces::step_port_symplectic;
use phdgn::graph::{line_graph, truncated_icosahedron, Graph};
use phdgn::integrators::step_symplectic_euler;
use phdgn::linalg::{eigenvalues, entrywise_l1, max_abs, spectral_norm, symplectic_j};
use phdgn::sensitivity::{
    bound_cross_node, bound_port, bound_q, bsm_chain, fd_cross_node_jacobian, fd_jacobian, fd_same_node_jacobian,
    jacobian_a, layer_jacobian_port_same_node, layer_jacobian_same_node,
};
use phdgn::tasks::{best_constant, default_model, evaluate, generate, train, Budget, TaskKind, TaskSpec, Topology};
use phdgn::{
    rollout, Activation, Aggregation, CouplingWeights, DampeningKind, DampeningSpec, ForcingKind, ForcingSpec,
    Hamiltonian, PortForces, RolloutConfig, Scheme, SystemState,
};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn connected_graph<R: Rng>(rng: &mut R, n: usize) -> Graph {
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.random_range(0..v), v));
    }
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < 0.25 && !edges.contains(&(u, v)) {
                edges.push((u, v));
            }
        }
    }
    Graph::new(n, edges).expect("valid random graph")
}

struct Instance {
    graph: Graph,
    weights: CouplingWeights,
    activation: Activation,
    state: SystemState,
    rng: ChaCha8Rng,
}

/// Random connected graph, weights and state with `n ≤ max_nodes`, `d ≤ max_dim`.
fn instance(criterion: u64, i: u64, max_nodes: usize, max_dim: usize) -> Instance {
    let mut r = rng(1000 + criterion, i);
    let n = r.random_range(2..=max_nodes);
    let half = r.random_range(1..=max_dim / 2);
    let agg = if i % 2 == 0 { Aggregation::SumV } else { Aggregation::Gcn };
    let activation = if r.random::<f64>() < 0.75 { Activation::Tanh } else { Activation::Sigmoid };
    let graph = connected_graph(&mut r, n);
    let weights = CouplingWeights::random(&mut r, 2 * half, agg, 0.8);
    let state = SystemState::random(&mut r, 2 * half, n, 1.0);
    Instance {
        graph,
        weights,
        activation,
        state,
        rng: r,
    }
}

fn rel(diff: f64, scale: f64) -> f64 {
    diff / scale.max(1e-8)
}

/// C60 with Glorot weights (d = 8) and the feature-encoded initial state.
fn c60_setup() -> (Graph, CouplingWeights, SystemState) {
    let graph = truncated_icosahedron();
    let weights = CouplingWeights::glorot(&mut rng(3, 0), 8, Aggregation::SumV);
    let state = SystemState::encode_features(&mut rng(3, 1), &graph, 8).expect("C60 has features");
    (graph, weights, state)
}

fn energy_conservation() -> phdgn::Result<Verdict> {
    let (graph, weights, state) = c60_setup();
    let h = Hamiltonian::new(&graph, &weights, Activation::Tanh);
    let mut drifts = Vec::new();
    let mut trend_ok = true;
    for eps in [0.1, 0.01, 0.001] {
        let traj = rollout(&h, &RolloutConfig::new(eps, 10.0, Scheme::SymplecticEuler), &state)?;
        trend_ok &= traj.final_drift() <= 2.0 * traj.first_half_max_drift();
        drifts.push((eps, traj.max_drift(), traj.final_drift(), traj.first_half_max_drift()));
    }
    let ratio = drifts[0].1 / drifts[2].1;
    let rows: Vec<String> = drifts
        .iter()
        .map(|(e, m, f, h)| format!("eps={e}: max={m:.3e} final={f:.3e} half={h:.3e}"))
        .collect();
    Ok(verdict(
        ratio >= 10.0 && trend_ok,
        format!("ratio {ratio:.1} (>= 10); {}", rows.join("; ")),
    ))
}

fn integrator_contrast() -> phdgn::Result<Verdict> {
    let (graph, weights, state) = c60_setup();
    let h = Hamiltonian::new(&graph, &weights, Activation::Tanh);
    let run = |s| rollout(&h, &RolloutConfig::new(0.1, 10.0, s), &state);
    let se = run(Scheme::SymplecticEuler)?.max_drift();
    let fe = run(Scheme::ForwardEuler)?.final_drift();
    let sv = run(Scheme::StormerVerlet)?.max_drift();
    Ok(verdict(
        fe >= 10.0 * se && sv <= se,
        format!("FE |dH(T)|={fe:.3e}, SE max={se:.3e}, SV max={sv:.3e}"),
    ))
}

fn bsm_lower_bound() -> phdgn::Result<Verdict> {
    let (graph, weights, state) = c60_setup();
    let h = Hamiltonian::new(&graph, &weights, Activation::Tanh);
    let mut min_norm = f64::INFINITY;
    let mut residual: f64 = 0.0;
    let mut max_norm: f64 = 0.0;
    for (eps, t) in [(0.1, 10.0), (0.3, 300.0)] {
        let traj = rollout(&h, &RolloutConfig::new(eps, t, Scheme::SymplecticEuler).with_states(), &state)?;
        for u in 0..15 {
            let r = bsm_chain(&h, &traj, u)?;
            min_norm = min_norm.min(r.min_norm());
            max_norm = max_norm.max(r.max_norm());
            residual = residual.max(r.max_relative_residual());
        }
    }
    Ok(verdict(
        min_norm >= 1.0 - 1e-6 && residual <= 1e-8,
        format!("min ||Psi|| {min_norm:.9}, max ||Psi|| {max_norm:.3e}, relative residual {residual:.2e} (<= 1e-8)"),
    ))
}

fn bsm_upper_bound() -> phdgn::Result<Verdict> {
    let mut violations = 0;
    let mut tightest: f64 = 0.0;
    for i in 0..50 {
        let mut inst = instance(4, i, 10, 6);
        let h = Hamiltonian::new(&inst.graph, &inst.weights, inst.activation);
        let layers = inst.rng.random_range(1..=40);
        let rc = RolloutConfig::new(0.05, 0.05 * layers as f64, Scheme::SymplecticEuler).with_states();
        let traj = rollout(&h, &rc, &inst.state)?;
        let bound = bound_q(&inst.weights, inst.activation, &inst.graph).upper(rc.t_end);
        for u in 0..inst.graph.node_count() {
            let r = bsm_chain(&h, &traj, u)?;
            violations += r.norms.iter().filter(|&&n| n > bound).count();
            tightest = tightest.max(r.max_norm() / bound);
        }
    }
    Ok(verdict(
        violations == 0,
        format!("{violations} violations over 50 instances; largest norm/bound {tightest:.3}"),
    ))
}

fn spectrum_and_structure() -> phdgn::Result<Verdict> {
    let (mut re_worst, mut tr_worst, mut aj_worst): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for i in 0..100 {
        let inst = instance(5, i, 10, 8);
        let h = Hamiltonian::new(&inst.graph, &inst.weights, inst.activation);
        for u in 0..inst.graph.node_count() {
            let a = jacobian_a(&h, &inst.state, u)?;
            let ev = eigenvalues(&a)?;
            let scale = ev.iter().map(|(re, im)| re.hypot(*im)).fold(0.0, f64::max);
            let re = ev.iter().map(|(re, _)| re.abs()).fold(0.0, f64::max);
            re_worst = re_worst.max(re / scale.max(1.0));
            tr_worst = tr_worst.max(a.trace().abs());
            let aj = &a * symplectic_j(a.nrows());
            aj_worst = aj_worst.max((&aj - aj.transpose()).norm());
        }
    }
    Ok(verdict(
        re_worst <= 1e-8 && tr_worst <= 1e-10 && aj_worst <= 1e-10,
        format!("max|Re| {re_worst:.2e}, |trace| {tr_worst:.2e}, AJ asymmetry {aj_worst:.2e}"),
    ))
}

fn random_forces<R: Rng>(r: &mut R, half: usize, damp: Option<DampeningKind>, force: Option<ForcingKind>) -> PortForces {
    PortForces::new(
        damp.map(|k| DampeningSpec::random(r, k, half, 0.8)),
        force.map(|k| ForcingSpec::random(r, k, half, 0.8)),
    )
}

const DAMPENING: [DampeningKind; 4] = [
    DampeningKind::Param,
    DampeningKind::ParamPlus,
    DampeningKind::Mlp4Relu,
    DampeningKind::DgnRelu,
];
const FORCING: [ForcingKind; 2] = [ForcingKind::Mlp4Sin, ForcingKind::DgnTanh];

/// Force combinations: conservative, each dampening, each forcing, and both.
fn force_grid() -> Vec<(Option<DampeningKind>, Option<ForcingKind>)> {
    let mut grid = vec![(None, None)];
    grid.extend(DAMPENING.iter().map(|&d| (Some(d), None)));
    grid.extend(FORCING.iter().map(|&f| (None, Some(f))));
    grid.extend(FORCING.iter().map(|&f| (Some(DampeningKind::ParamPlus), Some(f))));
    grid
}

struct OracleTally {
    cases: usize,
    worst: f64,
}

impl OracleTally {
    fn new() -> Self {
        Self { cases: 0, worst: 0.0 }
    }

    fn add(&mut self, err: f64) {
        self.cases += 1;
        self.worst = if err.is_nan() { f64::INFINITY } else { self.worst.max(err) };
    }
}

fn backprop_error(cfg: ModelConfig, seed: u64) -> phdgn::Result<f64> {
    let graph = Graph::new(6, vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3), (1, 4)])?;
    let mut r = rng(seed, 7);
    let mut model = Model::init(cfg, &mut r)?;
    let mut flat = model.params.flatten();
    for x in flat.iter_mut() {
        *x += 0.1 * (2.0 * r.random::<f64>() - 1.0);
    }
    model.params.unflatten(&flat)?;
    let x = DMatrix::from_fn(2, 6, |_, _| r.random::<f64>());
    let y = DMatrix::from_fn(1, 6, |_, _| r.random::<f64>());
    let tape = model.forward_with_tape(&graph, &x, &[0])?;
    let (_, bar) = mse(&tape.prediction, &y)?;
    let analytic = model.backward(&graph, &tape, &bar)?.flatten();
    let loss = |params: &[f64]| -> phdgn::Result<f64> {
        let mut m = model.clone();
        m.params.unflatten(params)?;
        Ok(mse(&m.predict(&graph, &x)?, &y)?.0)
    };
    let step = 1e-5;
    let mut fd = vec![0.0; flat.len()];
    for (i, g) in fd.iter_mut().enumerate() {
        let mut up = flat.clone();
        let mut dn = flat.clone();
        up[i] += step;
        dn[i] -= step;
        *g = (loss(&up)? - loss(&dn)?) / (2.0 * step);
    }
    let a = DVector::from_vec(analytic);
    let f = DVector::from_vec(fd);
    Ok(rel((&a - &f).amax(), a.amax()))
}

fn gradient_oracles() -> phdgn::Result<Verdict> {
    let (mut grad, mut hess, mut layer, mut back) =
        (OracleTally::new(), OracleTally::new(), OracleTally::new(), OracleTally::new());
    for i in 0..30 {
        let inst = instance(6, i, 8, 6);
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
        grad.add(rel((fd.row(0).transpose() - &g).amax(), g.amax()));

        let mut worst: f64 = 0.0;
        for u in 0..n {
            let fd = fd_jacobian(
                |x| {
                    let mut st = s.clone();
                    st.set_node(u, x);
                    h.grad_node(&st, u).unwrap_or_else(|_| DVector::from_element(x.len(), f64::NAN))
                },
                &s.node(u),
                1e-3,
            );
            let an = h.hessian_node(s, u)?;
            worst = worst.max(rel(max_abs(&(&fd - &an)), max_abs(&an)));
        }
        hess.add(worst);
    }
    let grid = force_grid();
    for i in 0..40u64 {
        let mut inst = instance(6, 100 + i, 6, 6);
        let (damp, force) = grid[i as usize % grid.len()];
        let half = inst.weights.half_dim();
        let h = Hamiltonian::new(&inst.graph, &inst.weights, inst.activation);
        let forces = random_forces(&mut inst.rng, half, damp, force);
        let t = inst.rng.random_range(0.0..2.0);
        let eps = 0.1;
        let mut worst: f64 = 0.0;
        for u in 0..inst.graph.node_count() {
            let an = if forces.is_conservative() {
                layer_jacobian_same_node(&h, &inst.state, u, eps, Scheme::SymplecticEuler)?
            } else {
                layer_jacobian_port_same_node(&h, &forces, t, &inst.state, u, eps)?
            };
            let fd = fd_same_node_jacobian(&h, Some(&forces), t, &inst.state, u, eps)?;
            worst = worst.max(rel(max_abs(&(&fd - &an)), max_abs(&an)));
        }
        layer.add(worst);
    }
    for (i, &(damp, force)) in grid.iter().enumerate() {
        for agg in [Aggregation::SumV, Aggregation::Gcn] {
            let cfg = ModelConfig {
                aggregation: agg,
                readout: ReadoutInput::Pq,
                dampening: damp,
                forcing: force,
                ..ModelConfig::conservative(2, 4, 3, 0.3)
            };
            back.add(backprop_error(cfg, 40 + i as u64)?);
        }
    }
    let cases = grad.cases + hess.cases + layer.cases + back.cases;
    let passed = cases >= 100 && grad.worst <= 1e-6 && hess.worst <= 1e-5 && layer.worst <= 1e-6 && back.worst <= 1e-4;
    Ok(verdict(
        passed,
        format!(
            "{cases} cases; gradient {:.1e} ({}), Hessian {:.1e} ({}), layer {:.1e} ({}), backprop {:.1e} ({})",
            grad.worst, grad.cases, hess.worst, hess.cases, layer.worst, layer.cases, back.worst, back.cases
        ),
    ))
}

/// Least-squares fit `y = a x + b x²` with the coefficient of determination.
fn quadratic_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let design = DMatrix::from_fn(x.len(), 2, |i, j| x[i].powi(j as i32 + 1));
    let rhs = DVector::from_column_slice(y);
    let coef = design
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .expect("SVD computed with both factors");
    let resid = &design * &coef - &rhs;
    let mean = rhs.mean();
    let total: f64 = rhs.iter().map(|v| (v - mean).powi(2)).sum();
    let r2 = if total > 0.0 { 1.0 - resid.norm_squared() / total } else { 1.0 };
    (coef[0], coef[1], r2)
}

fn port_reduction_and_dissipation() -> phdgn::Result<Verdict> {
    let mut identical = 0;
    for i in 0..100 {
        let inst = instance(7, i, 8, 6);
        let h = Hamiltonian::new(&inst.graph, &inst.weights, inst.activation);
        let half = inst.weights.half_dim();
        let plain = step_symplectic_euler(&h, &inst.state, 0.1)?;
        // Explicit all-zero networks, not only the absent-force shortcut.
        let zero = PortForces::new(
            Some(DampeningSpec::zeros(DAMPENING[i as usize % 4], half)),
            Some(ForcingSpec::zeros(FORCING[i as usize % 2], half)),
        );
        let same = [PortForces::default(), zero]
            .iter()
            .map(|f| step_port_symplectic(&h, f, 0.3, &inst.state, 0.1))
            .collect::<phdgn::Result<Vec<_>>>()?
            .iter()
            .all(|s| *s == plain);
        identical += usize::from(same);
    }

    let ladder: Vec<f64> = (0..6).map(|k| 0.1 / 2f64.powi(k)).collect();
    let mut min_r2 = f64::INFINITY;
    let mut c_est: f64 = 0.0;
    let mut increments = Vec::new();
    for i in 0..20 {
        let mut inst = instance(7, 200 + i, 8, 6);
        let half = inst.weights.half_dim();
        let h = Hamiltonian::new(&inst.graph, &inst.weights, inst.activation);
        let forces = random_forces(&mut inst.rng, half, Some(DampeningKind::ParamPlus), None);
        let h0 = h.energy(&inst.state)?;
        let mut dh = Vec::with_capacity(ladder.len());
        for &eps in &ladder {
            dh.push(h.energy(&step_port_symplectic(&h, &forces, 0.0, &inst.state, eps)?)? - h0);
        }
        let (_, b, r2) = quadratic_fit(&ladder, &dh);
        min_r2 = min_r2.min(r2);
        c_est = c_est.max(b.max(0.0));
        increments.push(dh);
    }
    let c = 1.5 * c_est + 1e-12;
    let dissipative = increments
        .iter()
        .all(|dh| dh.iter().zip(&ladder).all(|(d, e)| *d <= c * e * e));

    let mut max_rate = f64::NEG_INFINITY;
    let mut states = 0;
    for i in 0..100 {
        let mut inst = instance(7, 400 + i, 8, 6);
        let half = inst.weights.half_dim();
        let h = Hamiltonian::new(&inst.graph, &inst.weights, inst.activation);
        let forces = random_forces(&mut inst.rng, half, Some(DampeningKind::ParamPlus), None);
        for _ in 0..100 {
            let s = SystemState::random(&mut inst.rng, 2 * half, inst.graph.node_count(), 2.0);
            max_rate = max_rate.max(forces.energy_rate(&h, &s, 0.0)?);
            states += 1;
        }
    }
    Ok(verdict(
        identical == 100 && min_r2 >= 0.9 && dissipative && max_rate <= 0.0 && states >= 10_000,
        format!(
            "{identical}/100 bit-identical; dH <= C eps^2 with C={c:.3e}: {dissipative}, min R^2 {min_r2:.4}; \
             max dH/dt {max_rate:.2e} over {states} states"
        ),
    ))
}

fn port_bounds() -> phdgn::Result<Verdict> {
    let damp = [None, Some(DampeningKind::Param), Some(DampeningKind::ParamPlus)];
    let force = [None, Some(ForcingKind::Mlp4Sin), Some(ForcingKind::DgnTanh)];
    let mut violations = 0;
    let mut measured = 0;
    let (mut low, mut high) = (f64::INFINITY, 0.0f64);
    for seed in 0..50u64 {
        let mut inst = instance(8, seed, 4, 4);
        let half = inst.weights.half_dim();
        let (mut dk, fk) = (damp[seed as usize % 3], force[(seed as usize / 3) % 3]);
        if dk.is_none() && fk.is_none() {
            dk = Some(DampeningKind::ParamPlus);
        }
        let forces = random_forces(&mut inst.rng, half, dk, fk);
        let h = Hamiltonian::new(&inst.graph, &inst.weights, inst.activation);
        for eps in [0.01, 0.005] {
            let b = bound_port(&inst.weights, inst.activation, &inst.graph, &forces, eps)?;
            let t = inst.rng.random_range(0.0..1.0);
            for u in 0..inst.graph.node_count() {
                let m = spectral_norm(&fd_same_node_jacobian(&h, Some(&forces), t, &inst.state, u, eps)?);
                measured += 1;
                low = low.min(m - b.lower);
                high = high.max(m / b.upper_same);
                violations += usize::from(m < b.lower || m > b.upper_same);
            }
        }
    }
    Ok(verdict(
        violations == 0,
        format!(
            "{violations} violations over {measured} node norms (50 seeds); min margin above lower {low:.2e}, \
             max norm/upper {high:.3}"
        ),
    ))
}

fn cross_node_bound() -> phdgn::Result<Verdict> {
    let graph = line_graph(2)?.graph;
    let mut violations = 0;
    let mut checks = 0;
    let mut tightest: f64 = 0.0;
    for seed in 0..20 {
        let mut r = rng(1009, seed);
        let weights = CouplingWeights::random(&mut r, 2, Aggregation::SumV, 0.8);
        let state = SystemState::random(&mut r, 2, 3, 1.0);
        let h = Hamiltonian::new(&graph, &weights, Activation::Tanh);
        for u in 0..3 {
            for v in 0..3 {
                let jac = fd_cross_node_jacobian(&h, Scheme::SymplecticEuler, &state, 2, 1.0, u, v)?;
                let b = bound_cross_node(&weights, Activation::Tanh, &graph, 2, u, v);
                let l1 = entrywise_l1(&jac);
                checks += 1;
                violations += usize::from(l1 > b.bound);
                if b.bound > 0.0 {
                    tightest = tightest.max(l1 / b.bound);
                }
            }
        }
    }
    Ok(verdict(
        violations == 0,
        format!("{violations} violations over {checks} node pairs; largest L1/bound {tightest:.3}"),
    ))
}

fn desk_scale_learning() -> phdgn::Result<Verdict> {
    let mut rows = Vec::new();
    let mut passed = true;
    let transfer = [
        (Topology::Line, 3, 6),
        (Topology::Line, 5, 5),
        (Topology::Ring, 3, 6),
        (Topology::Ring, 5, 6),
    ];
    for (topology, k, layers) in transfer {
        let kind = TaskKind::GraphTransfer { topology, k };
        let data = generate(&TaskSpec::new(kind, 0))?;
        let budget = Budget {
            patience: 300,
            stop_below: Some(2e-4),
            ..Budget::for_task(kind)
        };
        let report = train(default_model(kind, 16, layers, 0.5), &data, &budget)?;
        let test = evaluate(&report.model, &data.test)?.mse;
        passed &= test <= 1e-3 && report.history.len() <= 2001;
        rows.push(format!("{topology:?} k={k} L={layers}: {test:.2e} ({} epochs)", report.history.len() - 1));
    }
    let kind = TaskKind::Sssp;
    let data = generate(&TaskSpec::new(kind, 0).with_splits(200, 50, 50))?;
    let budget = Budget {
        max_epochs: 1000,
        patience: 300,
        batch_size: 16,
        ..Budget::for_task(kind)
    };
    let report = train(default_model(kind, 16, 10, 0.5), &data, &budget)?;
    let test = evaluate(&report.model, &data.test)?.mse;
    let (_, baseline) = best_constant(&data.test);
    passed &= test <= 0.5 * baseline.mse;
    rows.push(format!("SSSP: {test:.3} vs constant {:.3} (ratio {:.2})", baseline.mse, test / baseline.mse));
    Ok(verdict(passed, rows.join("; ")))
}

type Gate = fn() -> phdgn::Result<Verdict>;

fn main() -> ExitCode {
    let gates: [(&str, Gate, u64); 10] = [
        ("energy conservation", energy_conservation, 120),
        ("integrator contrast", integrator_contrast, 60),
        ("BSM lower bound and symplecticity", bsm_lower_bound, 300),
        ("BSM upper bound", bsm_upper_bound, 300),
        ("spectrum and structure", spectrum_and_structure, 300),
        ("gradient oracles", gradient_oracles, 300),
        ("port reduction and dissipation", port_reduction_and_dissipation, 300),
        ("port bounds", port_bounds, 300),
        ("cross-node bound", cross_node_bound, 300),
        ("desk-scale learning", desk_scale_learning, 900),
    ];
    let mut failed = 0;
    for (i, (name, gate, limit)) in gates.into_iter().enumerate() {
        let start = Instant::now();
        let v = gate().unwrap_or_else(|e| verdict(false, format!("error: {e}")));
        let elapsed = start.elapsed();
        let on_time = elapsed <= Duration::from_secs(limit);
        let ok = v.passed && on_time;
        failed += usize::from(!ok);
        println!(
            "criterion {}: {} {name}: {} [{:.1}s, limit {limit}s]",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            v.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
