//! Fixed-step schemes for the conservative flow and energy recording.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::Hamiltonian;
use crate::state::SystemState;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ForwardEuler,
    #[default]
    SymplecticEuler,
    StormerVerlet,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::ForwardEuler => "forward_euler",
            Scheme::SymplecticEuler => "symplectic_euler",
            Scheme::StormerVerlet => "stormer_verlet",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutConfig {
    pub eps: f64,
    /// Terminal time `T`.
    pub t_end: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "yes")]
    pub record_energy: bool,
    #[serde(default)]
    pub record_states: bool,
}

fn yes() -> bool {
    true
}

impl RolloutConfig {
    pub fn new(eps: f64, t_end: f64, scheme: Scheme) -> Self {
        Self {
            eps,
            t_end,
            scheme,
            record_energy: true,
            record_states: false,
        }
    }

    pub fn with_states(mut self) -> Self {
        self.record_states = true;
        self
    }

    /// `L = T / ε`, which must be an integer up to `1e-12 max(1, T)`.
    pub fn layers(&self) -> Result<usize> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!("step size must be positive, got {}", self.eps)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("terminal time must be >= 0, got {}", self.t_end)));
        }
        let l = (self.t_end / self.eps).round();
        if (l * self.eps - self.t_end).abs() > 1e-12 * self.t_end.max(1.0) {
            return Err(Error::Config(format!(
                "T = {} is not an integer multiple of eps = {}",
                self.t_end, self.eps
            )));
        }
        Ok(l as usize)
    }
}

/// `p' = p - ε ∇_q H(q)`, then `q' = q + ε ∇_p H(p')`.
pub fn step_symplectic_euler(h: &Hamiltonian<'_>, state: &SystemState, eps: f64) -> Result<SystemState> {
    h.check_state(state)?;
    let p = &state.p - h.half_gradient(h.weights.position(), &state.q) * eps;
    let q = &state.q + h.half_gradient(h.weights.momentum(), &p) * eps;
    Ok(SystemState { p, q })
}

/// `y' = y + ε J ∇H(y)`.
pub fn step_forward_euler(h: &Hamiltonian<'_>, state: &SystemState, eps: f64) -> Result<SystemState> {
    let f = h.dynamics(state)?;
    Ok(SystemState {
        p: &state.p + f.p * eps,
        q: &state.q + f.q * eps,
    })
}

/// Leapfrog: half kick, drift, half kick.
pub fn step_stormer_verlet(h: &Hamiltonian<'_>, state: &SystemState, eps: f64) -> Result<SystemState> {
    h.check_state(state)?;
    let pos = h.weights.position();
    let mid = &state.p - h.half_gradient(pos, &state.q) * (0.5 * eps);
    let q = &state.q + h.half_gradient(h.weights.momentum(), &mid) * eps;
    let p = mid - h.half_gradient(pos, &q) * (0.5 * eps);
    Ok(SystemState { p, q })
}

pub fn step(h: &Hamiltonian<'_>, scheme: Scheme, state: &SystemState, eps: f64) -> Result<SystemState> {
    match scheme {
        Scheme::ForwardEuler => step_forward_euler(h, state, eps),
        Scheme::SymplecticEuler => step_symplectic_euler(h, state, eps),
        Scheme::StormerVerlet => step_stormer_verlet(h, state, eps),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub eps: f64,
    /// `H(y^(ℓ))` for `ℓ = 0..=L` when recorded.
    pub energy: Vec<f64>,
    /// `y^(0..=L)` when recorded.
    pub states: Option<Vec<SystemState>>,
    pub final_state: SystemState,
}

impl Trajectory {
    pub fn layers(&self) -> usize {
        self.energy.len().saturating_sub(1)
    }

    /// `max_ℓ |H(ℓε) - H(0)|`.
    pub fn max_drift(&self) -> f64 {
        let h0 = self.energy.first().copied().unwrap_or(0.0);
        self.energy.iter().map(|h| (h - h0).abs()).fold(0.0, f64::max)
    }

    pub fn final_drift(&self) -> f64 {
        match (self.energy.first(), self.energy.last()) {
            (Some(a), Some(b)) => (b - a).abs(),
            _ => 0.0,
        }
    }

    /// `max |ΔH|` over the first half of the series (inclusive of the midpoint).
    pub fn first_half_max_drift(&self) -> f64 {
        let h0 = self.energy.first().copied().unwrap_or(0.0);
        let half = self.energy.len() / 2;
        self.energy[..=half.min(self.energy.len().saturating_sub(1))]
            .iter()
            .map(|h| (h - h0).abs())
            .fold(0.0, f64::max)
    }

    /// Rows `step,t,H,dH`.
    pub fn write_energy_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "t", "H", "dH"])?;
        let h0 = self.energy.first().copied().unwrap_or(0.0);
        for (l, h) in self.energy.iter().enumerate() {
            w.write_record([
                l.to_string(),
                (l as f64 * self.eps).to_string(),
                h.to_string(),
                (h - h0).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Drives `step_fn(state, ℓ)` for `L` layers, recording energy with `h`.
pub(crate) fn drive<F>(
    h: &Hamiltonian<'_>,
    config: &RolloutConfig,
    initial: &SystemState,
    mut step_fn: F,
) -> Result<Trajectory>
where
    F: FnMut(&SystemState, usize) -> Result<SystemState>,
{
    let layers = config.layers()?;
    h.check_state(initial)?;
    initial.ensure_finite(0)?;
    let energy_at = |s: &SystemState, l: usize| {
        h.energy(s).map_err(|e| match e {
            Error::NonFinite { what, .. } => Error::NonFinite { step: l, what },
            other => other,
        })
    };
    let mut energy = Vec::new();
    let mut states = config.record_states.then(|| Vec::with_capacity(layers + 1));
    if config.record_energy {
        energy.reserve(layers + 1);
        energy.push(energy_at(initial, 0)?);
    }
    if let Some(st) = states.as_mut() {
        st.push(initial.clone());
    }
    let mut current = initial.clone();
    for l in 0..layers {
        current = step_fn(&current, l)?;
        current.ensure_finite(l + 1)?;
        if config.record_energy {
            energy.push(energy_at(&current, l + 1)?);
        }
        if let Some(st) = states.as_mut() {
            st.push(current.clone());
        }
    }
    Ok(Trajectory {
        eps: config.eps,
        energy,
        states,
        final_state: current,
    })
}

pub fn rollout(h: &Hamiltonian<'_>, config: &RolloutConfig, initial: &SystemState) -> Result<Trajectory> {
    drive(h, config, initial, |s, _| step(h, config.scheme, s, config.eps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{ring_graph, Graph};
    use crate::hamiltonian::{Activation, Aggregation, CouplingWeights};
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single() -> (Graph, CouplingWeights) {
        let g = Graph::new(1, vec![]).unwrap();
        let mut w = CouplingWeights::identity(2, Aggregation::SumV);
        w.vp.fill(0.0);
        w.vq.fill(0.0);
        (g, w)
    }

    fn s1(p: f64, q: f64) -> SystemState {
        SystemState::new(DMatrix::from_element(1, 1, p), DMatrix::from_element(1, 1, q)).unwrap()
    }

    #[test]
    fn zero_state_is_fixed_for_every_scheme() {
        let g = ring_graph(3).unwrap().graph;
        let w = CouplingWeights::identity(4, Aggregation::SumV);
        let h = Hamiltonian::new(&g, &w, Activation::Tanh);
        let z = SystemState::zeros(4, 6);
        for s in [Scheme::ForwardEuler, Scheme::SymplecticEuler, Scheme::StormerVerlet] {
            assert_eq!(step(&h, s, &z, 0.1).unwrap(), z);
        }
    }

    #[test]
    fn hand_steps_on_single_node() {
        let (g, w) = single();
        let h = Hamiltonian::new(&g, &w, Activation::Tanh);
        let y = s1(1.0, 0.0);
        let se = step_symplectic_euler(&h, &y, 0.1).unwrap();
        assert_eq!((se.p[(0, 0)], se.q[(0, 0)]), (1.0, 0.1 * 1f64.tanh()));
        let fe = step_forward_euler(&h, &y, 0.1).unwrap();
        assert_eq!(fe, se);
        // Second steps differ: forward Euler drifts q with the old p.
        let se2 = step_symplectic_euler(&h, &se, 0.1).unwrap();
        let fe2 = step_forward_euler(&h, &fe, 0.1).unwrap();
        assert_ne!(se2, fe2);
    }

    #[test]
    fn symplectic_euler_matches_implicit_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = ring_graph(3).unwrap().graph;
        for agg in [Aggregation::SumV, Aggregation::Gcn] {
            let w = CouplingWeights::random(&mut rng, 4, agg, 0.7);
            let h = Hamiltonian::new(&g, &w, Activation::Tanh);
            let y = SystemState::random(&mut rng, 4, 6, 1.0);
            let eps = 0.05;
            // p' = p - ε ∇_q H(p', q), q' = q + ε ∇_p H(p', q) solved by iteration.
            let mut guess = y.clone();
            for _ in 0..200 {
                let grad = h
                    .gradient(&SystemState {
                        p: guess.p.clone(),
                        q: y.q.clone(),
                    })
                    .unwrap();
                guess = SystemState {
                    p: &y.p - grad.q * eps,
                    q: &y.q + grad.p * eps,
                };
            }
            let explicit = step_symplectic_euler(&h, &y, eps).unwrap();
            // The position gradient at the updated momentum is the second map.
            let q_next = &y.q + h.half_gradient(w.momentum(), &guess.p) * eps;
            assert!((&explicit.p - &guess.p).norm() < 1e-10);
            assert!((&explicit.q - q_next).norm() < 1e-10);
        }
    }

    #[test]
    fn stormer_verlet_is_time_reversible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = ring_graph(4).unwrap().graph;
        let w = CouplingWeights::random(&mut rng, 6, Aggregation::SumV, 0.8);
        let h = Hamiltonian::new(&g, &w, Activation::Tanh);
        let y = SystemState::random(&mut rng, 6, 8, 1.0);
        let fwd = step_stormer_verlet(&h, &y, 0.1).unwrap();
        let back = step_stormer_verlet(&h, &fwd, -0.1).unwrap();
        assert!((back.to_global() - y.to_global()).norm() < 1e-9);
    }

    #[test]
    fn energy_error_orders() {
        let (g, w) = single();
        let h = Hamiltonian::new(&g, &w, Activation::Tanh);
        let y = s1(0.05, 0.02);
        let drift = |scheme, eps| {
            rollout(&h, &RolloutConfig::new(eps, 2.0, scheme), &y)
                .unwrap()
                .max_drift()
        };
        let se = drift(Scheme::SymplecticEuler, 0.02) / drift(Scheme::SymplecticEuler, 0.01);
        let sv = drift(Scheme::StormerVerlet, 0.02) / drift(Scheme::StormerVerlet, 0.01);
        assert!((se - 2.0).abs() < 0.3, "symplectic Euler ratio {se}");
        assert!((sv - 4.0).abs() < 0.5, "Stormer-Verlet ratio {sv}");
    }

    #[test]
    fn zero_horizon_records_initial_energy() {
        let (g, w) = single();
        let h = Hamiltonian::new(&g, &w, Activation::Tanh);
        let y = s1(0.3, -0.2);
        let t = rollout(&h, &RolloutConfig::new(0.1, 0.0, Scheme::SymplecticEuler), &y).unwrap();
        assert_eq!(t.energy, vec![h.energy(&y).unwrap()]);
        assert_eq!(t.final_state, y);
        let mut buf = Vec::new();
        t.write_energy_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("step,t,H,dH\n0,0,"));
    }

    #[test]
    fn config_validation() {
        assert_eq!(RolloutConfig::new(0.1, 10.0, Scheme::SymplecticEuler).layers().unwrap(), 100);
        assert_eq!(RolloutConfig::new(0.3, 300.0, Scheme::SymplecticEuler).layers().unwrap(), 1000);
        assert!(RolloutConfig::new(0.0, 1.0, Scheme::SymplecticEuler).layers().is_err());
        assert!(RolloutConfig::new(0.3, 1.0, Scheme::SymplecticEuler).layers().is_err());
        assert!(RolloutConfig::new(0.1, -1.0, Scheme::SymplecticEuler).layers().is_err());
    }

    #[test]
    fn overflow_reports_step() {
        let (g, mut w) = single();
        w.wp *= 1e200;
        w.wq *= 1e200;
        let h = Hamiltonian::new(&g, &w, Activation::Tanh);
        let err = rollout(&h, &RolloutConfig::new(1.0, 5.0, Scheme::SymplecticEuler), &s1(1.0, 1.0))
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite { step, .. } if step >= 1), "{err}");
    }

    #[test]
    fn rollouts_are_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = ring_graph(5).unwrap().graph;
        let w = CouplingWeights::glorot(&mut rng, 4, Aggregation::Gcn);
        let h = Hamiltonian::new(&g, &w, Activation::Tanh);
        let y = SystemState::random(&mut rng, 4, 10, 1.0);
        let c = RolloutConfig::new(0.1, 3.0, Scheme::StormerVerlet).with_states();
        assert_eq!(rollout(&h, &c, &y).unwrap(), rollout(&h, &c, &y).unwrap());
    }
}
