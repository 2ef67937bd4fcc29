//! Reverse-mode gradients through the layer maps, optimizers and checkpoints.

mod model;

pub use model::{EncoderTarget, Head, IndexEntry, Model, ModelConfig, ModelParams, ReadoutInput, Tape};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weighted squared error `Σ_ij w_j (pred_ij - target_ij)²` and its gradient
/// with respect to `pred`. `column_weights` scales every column (node or
/// graph); use `1 / entries` for a plain mean.
pub fn weighted_squared_error(
    pred: &DMatrix<f64>,
    target: &DMatrix<f64>,
    column_weights: &[f64],
) -> Result<(f64, DMatrix<f64>)> {
    if pred.shape() != target.shape() || column_weights.len() != pred.ncols() {
        return Err(Error::Dimension(format!(
            "prediction {:?}, target {:?}, {} weights",
            pred.shape(),
            target.shape(),
            column_weights.len()
        )));
    }
    let mut loss = 0.0;
    let mut grad = DMatrix::zeros(pred.nrows(), pred.ncols());
    for j in 0..pred.ncols() {
        for i in 0..pred.nrows() {
            let r = pred[(i, j)] - target[(i, j)];
            loss += column_weights[j] * r * r;
            grad[(i, j)] = 2.0 * column_weights[j] * r;
        }
    }
    Ok((loss, grad))
}

/// Mean squared error over all entries, and its gradient.
pub fn mse(pred: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
    let w = 1.0 / pred.len().max(1) as f64;
    weighted_squared_error(pred, target, &vec![w; pred.ncols()])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerKind {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        #[serde(default = "beta1")]
        beta1: f64,
        #[serde(default = "beta2")]
        beta2: f64,
        #[serde(default = "adam_eps")]
        eps: f64,
    },
}

fn beta1() -> f64 {
    0.9
}
fn beta2() -> f64 {
    0.999
}
fn adam_eps() -> f64 {
    1e-8
}

impl OptimizerKind {
    pub fn adam(lr: f64) -> Self {
        OptimizerKind::Adam {
            lr,
            beta1: beta1(),
            beta2: beta2(),
            eps: adam_eps(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    /// Some gradient entry was NaN or infinite; parameters are untouched.
    SkippedNonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, len: usize) -> Self {
        let buffers = if matches!(kind, OptimizerKind::Adam { .. }) { len } else { 0 };
        Self {
            kind,
            step: 0,
            m: vec![0.0; buffers],
            v: vec![0.0; buffers],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<StepOutcome> {
        if params.len() != grads.len() {
            return Err(Error::Dimension(format!("{} parameters, {} gradients", params.len(), grads.len())));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Ok(StepOutcome::SkippedNonFinite);
        }
        match self.kind {
            OptimizerKind::Sgd { lr } => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam { lr, beta1, beta2, eps } => {
                if self.m.len() != params.len() {
                    return Err(Error::Dimension("optimizer state does not match parameters".into()));
                }
                self.step += 1;
                let c1 = 1.0 - beta1.powi(self.step as i32);
                let c2 = 1.0 - beta2.powi(self.step as i32);
                for i in 0..params.len() {
                    let g = grads[i];
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
                    let m_hat = self.m[i] / c1;
                    let v_hat = self.v[i] / c2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
                return Ok(StepOutcome::Applied);
            }
        }
        self.step += 1;
        Ok(StepOutcome::Applied)
    }
}

/// Flattened parameters with their layout and optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub index: Vec<IndexEntry>,
    pub params: Vec<f64>,
    pub optimizer: Option<Optimizer>,
}

impl Checkpoint {
    pub fn capture(model: &Model, optimizer: Option<&Optimizer>) -> Self {
        Self {
            config: model.config.clone(),
            index: model.params.index(),
            params: model.params.flatten(),
            optimizer: optimizer.cloned(),
        }
    }

    pub fn restore(&self) -> Result<Model> {
        let mut params = ModelParams::zeros(&self.config);
        if params.index() != self.index {
            return Err(Error::Dimension("checkpoint index does not match its model configuration".into()));
        }
        params.unflatten(&self.params)?;
        Model::new(self.config.clone(), params)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
