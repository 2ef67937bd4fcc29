use std::fs;
use std::io::BufWriter;
use std::path::Path;

use anyhow::Context;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use phdgn::forces::rollout_port;
use phdgn::graph::Graph;
use phdgn::{
    rollout, Activation, Aggregation, CouplingWeights, Hamiltonian, PortForces, RolloutConfig, Scheme, SystemState,
    WeightsDocument,
};

use crate::config::{config_error, echo, GraphSource};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightsSource {
    /// Glorot-uniform blocks, zero biases.
    #[default]
    Glorot,
    /// Every entry uniform on `[-scale, scale]`.
    Uniform { scale: f64 },
    File { path: std::path::PathBuf },
}

fn default_dim() -> usize {
    8
}

fn default_schemes() -> Vec<Scheme> {
    vec![Scheme::SymplecticEuler]
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default)]
    pub graph: GraphSource,
    #[serde(default)]
    pub weights: WeightsSource,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub aggregation: Aggregation,
    pub eps: Vec<f64>,
    pub t_end: f64,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    #[serde(default)]
    pub forces: Option<PortForces>,
    #[serde(default)]
    pub record_states: bool,
    /// Scale of random initial states on graphs without node features.
    #[serde(default = "default_scale")]
    pub init_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
struct RunSummary {
    scheme: Scheme,
    eps: f64,
    layers: usize,
    dir: String,
    initial_energy: f64,
    max_drift: f64,
    final_drift: f64,
    first_half_max_drift: f64,
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Initial state from node features through a seeded linear encoder, or
/// uniform random when the graph has no features.
pub fn initial_state(graph: &Graph, dim: usize, scale: f64, seed: u64) -> SystemState {
    let mut r = rng(seed, 1);
    SystemState::encode_features(&mut r, graph, dim)
        .unwrap_or_else(|| SystemState::random(&mut r, dim, graph.node_count(), scale))
}

fn load_weights(cfg: &SimulateConfig) -> anyhow::Result<(CouplingWeights, Option<PortForces>)> {
    let mut r = rng(cfg.seed, 0);
    Ok(match &cfg.weights {
        WeightsSource::Glorot => (CouplingWeights::glorot(&mut r, cfg.dim, cfg.aggregation), None),
        WeightsSource::Uniform { scale } => (CouplingWeights::random(&mut r, cfg.dim, cfg.aggregation, *scale), None),
        WeightsSource::File { path } => {
            let text = fs::read_to_string(path).map_err(|e| config_error(format!("reading {}: {e}", path.display())))?;
            let doc = WeightsDocument::from_json(&text)?;
            if doc.weights.dim() != cfg.dim {
                return Err(config_error(format!("weights have d = {}, config says {}", doc.weights.dim(), cfg.dim)));
            }
            (doc.weights, doc.forces)
        }
    })
}

fn eps_label(eps: f64) -> String {
    format!("{eps:e}")
}

pub fn run(cfg: &SimulateConfig, out: &Path) -> anyhow::Result<()> {
    if cfg.dim == 0 || cfg.dim % 2 != 0 {
        return Err(config_error(format!("dim must be even and positive, got {}", cfg.dim)));
    }
    if cfg.eps.is_empty() || cfg.schemes.is_empty() {
        return Err(config_error("eps and schemes must be non-empty"));
    }
    echo(cfg, out)?;
    let graph = cfg.graph.load()?;
    let (weights, file_forces) = load_weights(cfg)?;
    let forces = match (&cfg.forces, file_forces) {
        (Some(_), Some(_)) => return Err(config_error("forces given both in the config and the weights file")),
        (Some(f), None) => Some(f.clone()),
        (None, f) => f,
    };
    if let Some(f) = &forces {
        f.check(cfg.dim / 2)?;
        if cfg.schemes.iter().any(|&s| s != Scheme::SymplecticEuler) && !f.is_conservative() {
            return Err(config_error("port forces require the symplectic_euler scheme"));
        }
    }
    let h = Hamiltonian::new(&graph, &weights, cfg.activation);
    let initial = initial_state(&graph, cfg.dim, cfg.init_scale, cfg.seed);
    let combos: Vec<(Scheme, f64)> = cfg
        .schemes
        .iter()
        .flat_map(|&s| cfg.eps.iter().map(move |&e| (s, e)))
        .collect();
    for &(s, e) in &combos {
        let mut rc = RolloutConfig::new(e, cfg.t_end, s);
        rc.record_states = cfg.record_states;
        rc.layers().map_err(|err| config_error(err.to_string()))?;
    }
    let summaries = combos
        .par_iter()
        .map(|&(scheme, eps)| -> anyhow::Result<RunSummary> {
            let mut rc = RolloutConfig::new(eps, cfg.t_end, scheme);
            rc.record_states = cfg.record_states;
            let traj = match &forces {
                Some(f) if !f.is_conservative() => rollout_port(&h, f, &rc, &initial),
                _ => rollout(&h, &rc, &initial),
            }
            .with_context(|| format!("{} at eps = {eps}", scheme.name()))?;
            let dir = format!("{}_eps{}", scheme.name(), eps_label(eps));
            let path = out.join(&dir);
            fs::create_dir_all(&path)?;
            traj.write_energy_csv(BufWriter::new(fs::File::create(path.join("energy.csv"))?))?;
            if let Some(states) = &traj.states {
                fs::write(path.join("states.json"), serde_json::to_string(states)?)?;
            }
            Ok(RunSummary {
                scheme,
                eps,
                layers: traj.layers(),
                dir,
                initial_energy: traj.energy[0],
                max_drift: traj.max_drift(),
                final_drift: traj.final_drift(),
                first_half_max_drift: traj.first_half_max_drift(),
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    for s in &summaries {
        println!(
            "{:<16} eps={:<8} layers={:<6} max|dH|={:.3e} final|dH|={:.3e}",
            s.scheme.name(),
            s.eps,
            s.layers,
            s.max_drift,
            s.final_drift
        );
    }
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summaries)?)?;
    Ok(())
}
