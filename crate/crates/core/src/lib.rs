//! Port-Hamiltonian message passing on graphs.
//!
//! Node states are split into momenta `p` and positions `q`; a learned graph
//! Hamiltonian drives them through symplectic layers, optionally extended
//! with dampening and external forcing. The crate also certifies the
//! sensitivity properties of those layers numerically and trains small
//! models on synthetic long-range tasks.

pub mod autodiff;
pub mod error;
pub mod forces;
pub mod graph;
pub mod hamiltonian;
pub mod integrators;
pub mod linalg;
pub mod sensitivity;
pub mod tasks;
pub mod state;

pub use error::{Error, Result};
pub use forces::{DampeningKind, DampeningSpec, ForcingKind, ForcingSpec, PortEvaluation, PortForces};
pub use graph::Graph;
pub use hamiltonian::{Activation, Aggregation, CouplingWeights, Hamiltonian, WeightsDocument};
pub use integrators::{rollout, RolloutConfig, Scheme, Trajectory};
pub use state::SystemState;
