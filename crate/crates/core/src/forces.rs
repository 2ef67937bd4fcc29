//! Dissipative extension: dampening `D(q)`, external forcing `F(q, t)` and
//! the port-Hamiltonian step.
//!
//! All evaluations work on the whole graph at once: inputs and outputs are
//! `(d/2) x n` matrices with one column per node. Dampening outputs hold the
//! diagonal of `D_u` in column `u`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::hamiltonian::{Aggregation, Hamiltonian};
use crate::integrators::{drive, step_symplectic_euler, RolloutConfig, Scheme, Trajectory};
use crate::linalg::{column, max_abs, rows};
use crate::state::SystemState;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nonlinearity {
    Identity,
    Relu,
    Sin,
    Tanh,
}

impl Nonlinearity {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Nonlinearity::Identity => x,
            Nonlinearity::Relu => x.max(0.0),
            Nonlinearity::Sin => x.sin(),
            Nonlinearity::Tanh => x.tanh(),
        }
    }

    #[inline]
    fn derivative(self, x: f64) -> f64 {
        match self {
            Nonlinearity::Identity => 1.0,
            Nonlinearity::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Nonlinearity::Sin => x.cos(),
            Nonlinearity::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }
}

/// `x ↦ W x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Affine {
    #[serde(with = "rows")]
    pub w: DMatrix<f64>,
    #[serde(with = "column")]
    pub b: DVector<f64>,
}

impl Affine {
    pub fn zeros(out: usize, inp: usize) -> Self {
        Self {
            w: DMatrix::zeros(out, inp),
            b: DVector::zeros(out),
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, out: usize, inp: usize, scale: f64) -> Self {
        Self {
            w: DMatrix::from_fn(out, inp, |_, _| scale * (2.0 * rng.random::<f64>() - 1.0)),
            b: DVector::from_fn(out, |_, _| scale * (2.0 * rng.random::<f64>() - 1.0)),
        }
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &self.w * x;
        add_bias(&mut z, &self.b);
        z
    }
}

fn add_bias(z: &mut DMatrix<f64>, b: &DVector<f64>) {
    for mut col in z.column_iter_mut() {
        col += b;
    }
}

/// Rows of an own-node Jacobian from one vector-Jacobian product per output.
fn own_jacobian_rows<F>(out: &DMatrix<f64>, inputs: usize, u: usize, mut vjp: F) -> DMatrix<f64>
where
    F: FnMut(&DMatrix<f64>) -> DMatrix<f64>,
{
    let mut jac = DMatrix::zeros(out.nrows(), inputs);
    for i in 0..out.nrows() {
        let mut bar = DMatrix::zeros(out.nrows(), out.ncols());
        bar[(i, u)] = 1.0;
        jac.row_mut(i).copy_from(&vjp(&bar).column(u).transpose());
    }
    jac
}

fn row_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(m.nrows(), |i, _| m.row(i).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DampeningKind {
    Param,
    ParamPlus,
    Mlp4Relu,
    DgnRelu,
}

impl fmt::Display for DampeningKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DampeningKind::Param => "Param",
            DampeningKind::ParamPlus => "ParamPlus",
            DampeningKind::Mlp4Relu => "MLP4ReLU",
            DampeningKind::DgnRelu => "DGNReLU",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForcingKind {
    Mlp4Sin,
    DgnTanh,
}

impl fmt::Display for ForcingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ForcingKind::Mlp4Sin => "MLP4Sin",
            ForcingKind::DgnTanh => "DGNTanh",
        })
    }
}

/// Diagonal dampening `D(q)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DampeningSpec {
    /// `diag(w)`, sign-indefinite.
    Param {
        #[serde(with = "column")]
        w: DVector<f64>,
    },
    /// `diag(ReLU(w))`.
    ParamPlus {
        #[serde(with = "column")]
        w: DVector<f64>,
    },
    /// Four affine layers of width `d/2`, each followed by a ReLU.
    Mlp4Relu { layers: Vec<Affine> },
    /// `ReLU(W q_u + Σ_{v∈N_u} V q_v + b)`.
    DgnRelu {
        #[serde(with = "rows")]
        w: DMatrix<f64>,
        #[serde(with = "rows")]
        v: DMatrix<f64>,
        #[serde(with = "column")]
        b: DVector<f64>,
    },
}

/// External forcing `F(q, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingSpec {
    /// Three sine layers of width `d/2 + 1` on `(q_u, t)`, then a linear
    /// layer to `d/2`.
    Mlp4Sin { layers: Vec<Affine> },
    /// `tanh(W q_u + Σ_{v∈N_u} V q_v + c t + b)`.
    DgnTanh {
        #[serde(with = "rows")]
        w: DMatrix<f64>,
        #[serde(with = "rows")]
        v: DMatrix<f64>,
        #[serde(with = "column")]
        c: DVector<f64>,
        #[serde(with = "column")]
        b: DVector<f64>,
    },
}

/// Intermediates of one force evaluation, consumed by the adjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct NetCache {
    inputs: Vec<DMatrix<f64>>,
    pre: Vec<DMatrix<f64>>,
}

fn mlp_forward(layers: &[Affine], hidden: Nonlinearity, last: Nonlinearity, x: &DMatrix<f64>) -> (DMatrix<f64>, NetCache) {
    let mut cache = NetCache {
        inputs: Vec::with_capacity(layers.len()),
        pre: Vec::with_capacity(layers.len()),
    };
    let mut a = x.clone();
    for (k, layer) in layers.iter().enumerate() {
        let act = if k + 1 == layers.len() { last } else { hidden };
        let z = layer.apply(&a);
        let next = z.map(|v| act.apply(v));
        cache.inputs.push(std::mem::replace(&mut a, next));
        cache.pre.push(z);
    }
    (a, cache)
}

/// Returns the input adjoint and accumulates layer gradients into `grads`.
fn mlp_backward(
    layers: &[Affine],
    hidden: Nonlinearity,
    last: Nonlinearity,
    cache: &NetCache,
    out_bar: &DMatrix<f64>,
    grads: &mut [Affine],
) -> DMatrix<f64> {
    let mut g = out_bar.clone();
    for k in (0..layers.len()).rev() {
        let act = if k + 1 == layers.len() { last } else { hidden };
        let z_bar = g.zip_map(&cache.pre[k], |gb, z| gb * act.derivative(z));
        grads[k].w += &z_bar * cache.inputs[k].transpose();
        grads[k].b += row_sums(&z_bar);
        g = layers[k].w.transpose() * z_bar;
    }
    g
}

struct DgnParams<'a> {
    w: &'a DMatrix<f64>,
    v: &'a DMatrix<f64>,
    c: Option<&'a DVector<f64>>,
    b: &'a DVector<f64>,
}

fn dgn_forward(graph: &Graph, p: &DgnParams<'_>, act: Nonlinearity, q: &DMatrix<f64>, t: f64) -> (DMatrix<f64>, NetCache) {
    let qa = Aggregation::SumV.apply(graph, q);
    let mut z = p.w * q + p.v * &qa;
    add_bias(&mut z, p.b);
    if let Some(c) = p.c {
        add_bias(&mut z, &(c * t));
    }
    let out = z.map(|v| act.apply(v));
    (
        out,
        NetCache {
            inputs: vec![q.clone(), qa],
            pre: vec![z],
        },
    )
}

struct DgnGrads<'a> {
    w: &'a mut DMatrix<f64>,
    v: &'a mut DMatrix<f64>,
    c: Option<&'a mut DVector<f64>>,
    b: &'a mut DVector<f64>,
}

fn dgn_backward(
    graph: &Graph,
    p: &DgnParams<'_>,
    act: Nonlinearity,
    cache: &NetCache,
    t: f64,
    out_bar: &DMatrix<f64>,
    g: DgnGrads<'_>,
) -> DMatrix<f64> {
    let z_bar = out_bar.zip_map(&cache.pre[0], |gb, z| gb * act.derivative(z));
    *g.w += &z_bar * cache.inputs[0].transpose();
    *g.v += &z_bar * cache.inputs[1].transpose();
    let sums = row_sums(&z_bar);
    if let Some(c) = g.c {
        *c += &sums * t;
    }
    *g.b += sums;
    p.w.transpose() * &z_bar + Aggregation::SumV.apply(graph, &(p.v.transpose() * &z_bar))
}

impl DampeningSpec {
    pub fn kind(&self) -> DampeningKind {
        match self {
            DampeningSpec::Param { .. } => DampeningKind::Param,
            DampeningSpec::ParamPlus { .. } => DampeningKind::ParamPlus,
            DampeningSpec::Mlp4Relu { .. } => DampeningKind::Mlp4Relu,
            DampeningSpec::DgnRelu { .. } => DampeningKind::DgnRelu,
        }
    }

    pub fn zeros(kind: DampeningKind, half: usize) -> Self {
        match kind {
            DampeningKind::Param => DampeningSpec::Param { w: DVector::zeros(half) },
            DampeningKind::ParamPlus => DampeningSpec::ParamPlus { w: DVector::zeros(half) },
            DampeningKind::Mlp4Relu => DampeningSpec::Mlp4Relu {
                layers: (0..4).map(|_| Affine::zeros(half, half)).collect(),
            },
            DampeningKind::DgnRelu => DampeningSpec::DgnRelu {
                w: DMatrix::zeros(half, half),
                v: DMatrix::zeros(half, half),
                b: DVector::zeros(half),
            },
        }
    }

    /// Entries uniform on `[-scale, scale)`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, kind: DampeningKind, half: usize, scale: f64) -> Self {
        let mut spec = Self::zeros(kind, half);
        for (_, values) in spec.tensors_mut() {
            for x in values {
                *x = scale * (2.0 * rng.random::<f64>() - 1.0);
            }
        }
        spec
    }

    fn check(&self, half: usize) -> Result<()> {
        let bad = |what: &str| Err(Error::Dimension(format!("{} dampening: {what}", self.kind())));
        match self {
            DampeningSpec::Param { w } | DampeningSpec::ParamPlus { w } => {
                if w.len() != half {
                    return bad("vector length");
                }
            }
            DampeningSpec::Mlp4Relu { layers } => {
                if layers.len() != 4 || layers.iter().any(|l| l.w.shape() != (half, half) || l.b.len() != half) {
                    return bad("expected 4 layers of width d/2");
                }
            }
            DampeningSpec::DgnRelu { w, v, b } => {
                if w.shape() != (half, half) || v.shape() != (half, half) || b.len() != half {
                    return bad("layer shape");
                }
            }
        }
        Ok(())
    }

    /// Diagonals `D_u` for every node, as columns.
    pub fn eval(&self, graph: &Graph, q: &DMatrix<f64>) -> DMatrix<f64> {
        self.forward(graph, q).0
    }

    /// `D_u` as a matrix.
    pub fn eval_node(&self, graph: &Graph, q: &DMatrix<f64>, u: usize) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.eval(graph, q).column(u).into_owned())
    }

    pub fn forward(&self, graph: &Graph, q: &DMatrix<f64>) -> (DMatrix<f64>, NetCache) {
        let n = q.ncols();
        let empty = NetCache {
            inputs: vec![],
            pre: vec![],
        };
        match self {
            DampeningSpec::Param { w } => (DMatrix::from_fn(w.len(), n, |i, _| w[i]), empty),
            DampeningSpec::ParamPlus { w } => (DMatrix::from_fn(w.len(), n, |i, _| w[i].max(0.0)), empty),
            DampeningSpec::Mlp4Relu { layers } => mlp_forward(layers, Nonlinearity::Relu, Nonlinearity::Relu, q),
            DampeningSpec::DgnRelu { w, v, b } => dgn_forward(
                graph,
                &DgnParams { w, v, c: None, b },
                Nonlinearity::Relu,
                q,
                0.0,
            ),
        }
    }

    /// `∂D_u/∂q_u` with every other node held fixed (`d/2 × d/2`).
    pub fn own_jacobian(&self, graph: &Graph, q: &DMatrix<f64>, u: usize) -> DMatrix<f64> {
        let (out, cache) = self.forward(graph, q);
        own_jacobian_rows(&out, q.nrows(), u, |bar| {
            let mut g = DampeningSpec::zeros(self.kind(), q.nrows());
            self.backward(graph, q, &cache, bar, &mut g)
        })
    }

    /// Adjoint of [`Self::forward`]: accumulates parameter gradients into
    /// `grads` (same variant) and returns `∂/∂q`.
    pub fn backward(
        &self,
        graph: &Graph,
        q: &DMatrix<f64>,
        cache: &NetCache,
        out_bar: &DMatrix<f64>,
        grads: &mut DampeningSpec,
    ) -> DMatrix<f64> {
        let zero = || DMatrix::zeros(q.nrows(), q.ncols());
        match (self, grads) {
            (DampeningSpec::Param { .. }, DampeningSpec::Param { w: gw }) => {
                *gw += row_sums(out_bar);
                zero()
            }
            (DampeningSpec::ParamPlus { w }, DampeningSpec::ParamPlus { w: gw }) => {
                let s = row_sums(out_bar);
                for i in 0..w.len() {
                    if w[i] > 0.0 {
                        gw[i] += s[i];
                    }
                }
                zero()
            }
            (DampeningSpec::Mlp4Relu { layers }, DampeningSpec::Mlp4Relu { layers: gl }) => {
                mlp_backward(layers, Nonlinearity::Relu, Nonlinearity::Relu, cache, out_bar, gl)
            }
            (DampeningSpec::DgnRelu { w, v, b }, DampeningSpec::DgnRelu { w: gw, v: gv, b: gb }) => dgn_backward(
                graph,
                &DgnParams { w, v, c: None, b },
                Nonlinearity::Relu,
                cache,
                0.0,
                out_bar,
                DgnGrads {
                    w: gw,
                    v: gv,
                    c: None,
                    b: gb,
                },
            ),
            _ => panic!("dampening gradient buffer has a different kind"),
        }
    }

    /// Named parameter tensors in a fixed order (column-major data).
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        match self {
            DampeningSpec::Param { w } | DampeningSpec::ParamPlus { w } => vec![("w".into(), vec![w.len()], w.as_slice())],
            DampeningSpec::Mlp4Relu { layers } => layer_tensors(layers),
            DampeningSpec::DgnRelu { w, v, b } => vec![
                ("w".into(), vec![w.nrows(), w.ncols()], w.as_slice()),
                ("v".into(), vec![v.nrows(), v.ncols()], v.as_slice()),
                ("b".into(), vec![b.len()], b.as_slice()),
            ],
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        match self {
            DampeningSpec::Param { w } | DampeningSpec::ParamPlus { w } => vec![("w".into(), w.as_mut_slice())],
            DampeningSpec::Mlp4Relu { layers } => layer_tensors_mut(layers),
            DampeningSpec::DgnRelu { w, v, b } => vec![
                ("w".into(), w.as_mut_slice()),
                ("v".into(), v.as_mut_slice()),
                ("b".into(), b.as_mut_slice()),
            ],
        }
    }

    /// `(sup |D|, sup |∂D/∂q|)` when both are finite.
    pub fn bound(&self) -> Result<(f64, f64)> {
        match self {
            DampeningSpec::Param { w } => Ok((w.amax(), 0.0)),
            DampeningSpec::ParamPlus { w } => Ok((w.iter().fold(0.0, |a, x| a.max(x.max(0.0))), 0.0)),
            _ => Err(Error::UnboundedForce(self.kind().to_string())),
        }
    }
}

fn layer_tensors(layers: &[Affine]) -> Vec<(String, Vec<usize>, &[f64])> {
    let mut out = Vec::new();
    for (k, l) in layers.iter().enumerate() {
        out.push((format!("layer{k}.w"), vec![l.w.nrows(), l.w.ncols()], l.w.as_slice()));
        out.push((format!("layer{k}.b"), vec![l.b.len()], l.b.as_slice()));
    }
    out
}

fn layer_tensors_mut(layers: &mut [Affine]) -> Vec<(String, &mut [f64])> {
    let mut out = Vec::new();
    for (k, l) in layers.iter_mut().enumerate() {
        out.push((format!("layer{k}.w"), l.w.as_mut_slice()));
        out.push((format!("layer{k}.b"), l.b.as_mut_slice()));
    }
    out
}

impl ForcingSpec {
    pub fn kind(&self) -> ForcingKind {
        match self {
            ForcingSpec::Mlp4Sin { .. } => ForcingKind::Mlp4Sin,
            ForcingSpec::DgnTanh { .. } => ForcingKind::DgnTanh,
        }
    }

    pub fn zeros(kind: ForcingKind, half: usize) -> Self {
        match kind {
            ForcingKind::Mlp4Sin => ForcingSpec::Mlp4Sin {
                layers: vec![
                    Affine::zeros(half + 1, half + 1),
                    Affine::zeros(half + 1, half + 1),
                    Affine::zeros(half + 1, half + 1),
                    Affine::zeros(half, half + 1),
                ],
            },
            ForcingKind::DgnTanh => ForcingSpec::DgnTanh {
                w: DMatrix::zeros(half, half),
                v: DMatrix::zeros(half, half),
                c: DVector::zeros(half),
                b: DVector::zeros(half),
            },
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, kind: ForcingKind, half: usize, scale: f64) -> Self {
        let mut spec = Self::zeros(kind, half);
        for (_, values) in spec.tensors_mut() {
            for x in values {
                *x = scale * (2.0 * rng.random::<f64>() - 1.0);
            }
        }
        spec
    }

    fn check(&self, half: usize) -> Result<()> {
        let ok = match self {
            ForcingSpec::Mlp4Sin { layers } => {
                layers.len() == 4
                    && layers.iter().enumerate().all(|(k, l)| {
                        let out = if k == 3 { half } else { half + 1 };
                        l.w.shape() == (out, half + 1) && l.b.len() == out
                    })
            }
            ForcingSpec::DgnTanh { w, v, c, b } => {
                w.shape() == (half, half) && v.shape() == (half, half) && c.len() == half && b.len() == half
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension(format!("{} forcing: layer shapes do not match d/2 = {half}", self.kind())))
        }
    }

    pub fn eval(&self, graph: &Graph, q: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
        self.forward(graph, q, t).0
    }

    pub fn eval_node(&self, graph: &Graph, q: &DMatrix<f64>, t: f64, u: usize) -> DVector<f64> {
        self.eval(graph, q, t).column(u).into_owned()
    }

    pub fn forward(&self, graph: &Graph, q: &DMatrix<f64>, t: f64) -> (DMatrix<f64>, NetCache) {
        match self {
            ForcingSpec::Mlp4Sin { layers } => {
                let h = q.nrows();
                let x = DMatrix::from_fn(h + 1, q.ncols(), |i, j| if i < h { q[(i, j)] } else { t });
                mlp_forward(layers, Nonlinearity::Sin, Nonlinearity::Identity, &x)
            }
            ForcingSpec::DgnTanh { w, v, c, b } => dgn_forward(
                graph,
                &DgnParams { w, v, c: Some(c), b },
                Nonlinearity::Tanh,
                q,
                t,
            ),
        }
    }

    /// `∂F_u/∂q_u` with every other node held fixed.
    pub fn own_jacobian(&self, graph: &Graph, q: &DMatrix<f64>, t: f64, u: usize) -> DMatrix<f64> {
        let (out, cache) = self.forward(graph, q, t);
        own_jacobian_rows(&out, q.nrows(), u, |bar| {
            let mut g = ForcingSpec::zeros(self.kind(), q.nrows());
            self.backward(graph, q, t, &cache, bar, &mut g)
        })
    }

    pub fn backward(
        &self,
        graph: &Graph,
        q: &DMatrix<f64>,
        t: f64,
        cache: &NetCache,
        out_bar: &DMatrix<f64>,
        grads: &mut ForcingSpec,
    ) -> DMatrix<f64> {
        match (self, grads) {
            (ForcingSpec::Mlp4Sin { layers }, ForcingSpec::Mlp4Sin { layers: gl }) => {
                let x_bar = mlp_backward(layers, Nonlinearity::Sin, Nonlinearity::Identity, cache, out_bar, gl);
                x_bar.rows(0, q.nrows()).into_owned()
            }
            (ForcingSpec::DgnTanh { w, v, c, b }, ForcingSpec::DgnTanh { w: gw, v: gv, c: gc, b: gb }) => dgn_backward(
                graph,
                &DgnParams { w, v, c: Some(c), b },
                Nonlinearity::Tanh,
                cache,
                t,
                out_bar,
                DgnGrads {
                    w: gw,
                    v: gv,
                    c: Some(gc),
                    b: gb,
                },
            ),
            _ => panic!("forcing gradient buffer has a different kind"),
        }
    }

    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        match self {
            ForcingSpec::Mlp4Sin { layers } => layer_tensors(layers),
            ForcingSpec::DgnTanh { w, v, c, b } => vec![
                ("w".into(), vec![w.nrows(), w.ncols()], w.as_slice()),
                ("v".into(), vec![v.nrows(), v.ncols()], v.as_slice()),
                ("c".into(), vec![c.len()], c.as_slice()),
                ("b".into(), vec![b.len()], b.as_slice()),
            ],
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        match self {
            ForcingSpec::Mlp4Sin { layers } => layer_tensors_mut(layers),
            ForcingSpec::DgnTanh { w, v, c, b } => vec![
                ("w".into(), w.as_mut_slice()),
                ("v".into(), v.as_mut_slice()),
                ("c".into(), c.as_mut_slice()),
                ("b".into(), b.as_mut_slice()),
            ],
        }
    }

    /// `(sup |F|, sup |∂F/∂q|)`, the latter entrywise.
    ///
    /// For the sine network both are closed-form worst cases over all inputs
    /// (`|sin|, |cos| <= 1`), so they dominate any sampled estimate.
    pub fn bound(&self) -> (f64, f64) {
        match self {
            ForcingSpec::DgnTanh { w, v, .. } => (1.0, max_abs(w).max(max_abs(v))),
            ForcingSpec::Mlp4Sin { layers } => {
                let last = &layers[3];
                let value = (0..last.w.nrows())
                    .map(|i| last.w.row(i).abs().sum() + last.b[i].abs())
                    .fold(0.0, f64::max);
                let h = last.w.nrows();
                let mut chain = layers[0].w.columns(0, h).abs();
                for l in &layers[1..] {
                    chain = l.w.abs() * chain;
                }
                (value, max_abs(&chain))
            }
        }
    }
}

/// Where the force terms of the momentum update are evaluated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortEvaluation {
    /// Gradients and forces at `(p^(ℓ), q^(ℓ))`; `p` is updated first.
    #[default]
    Current,
    /// `q` is updated first; forces and `∇_q H` at `q^(ℓ+1)`, `∇_p H` at `p^(ℓ)`.
    Updated,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortForces {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dampening: Option<DampeningSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forcing: Option<ForcingSpec>,
    #[serde(default)]
    pub evaluate_at: PortEvaluation,
}

impl PortForces {
    pub fn new(dampening: Option<DampeningSpec>, forcing: Option<ForcingSpec>) -> Self {
        Self {
            dampening,
            forcing,
            evaluate_at: PortEvaluation::Current,
        }
    }

    pub fn is_conservative(&self) -> bool {
        self.dampening.is_none() && self.forcing.is_none()
    }

    pub fn check(&self, half: usize) -> Result<()> {
        if let Some(d) = &self.dampening {
            d.check(half)?;
        }
        if let Some(f) = &self.forcing {
            f.check(half)?;
        }
        Ok(())
    }

    /// `B_d`: common bound on the force terms and their `q`-derivatives.
    pub fn bound_constant(&self) -> Result<f64> {
        let mut b: f64 = 0.0;
        if let Some(d) = &self.dampening {
            let (v, dv) = d.bound()?;
            b = b.max(v).max(dv);
        }
        if let Some(f) = &self.forcing {
            let (v, dv) = f.bound();
            b = b.max(v).max(dv);
        }
        Ok(b)
    }

    /// Momentum forcing `-∇_q H - D ⊙ ∇_p H + F` given the two gradients.
    fn momentum_force(&self, graph: &Graph, q: &DMatrix<f64>, gp: &DMatrix<f64>, gq: DMatrix<f64>, t: f64) -> DMatrix<f64> {
        let mut force = -gq;
        if let Some(d) = &self.dampening {
            force -= d.eval(graph, q).component_mul(gp);
        }
        if let Some(f) = &self.forcing {
            force += f.eval(graph, q, t);
        }
        force
    }

    /// `dH/dt = -Σ_u ∇_{p_u}Hᵀ D_u ∇_{p_u}H + Σ_u ∇_{p_u}Hᵀ F_u`.
    pub fn energy_rate(&self, h: &Hamiltonian<'_>, state: &SystemState, t: f64) -> Result<f64> {
        let g = h.gradient(state)?;
        let mut rate = 0.0;
        if let Some(d) = &self.dampening {
            let dv = d.eval(h.graph, &state.q);
            rate -= dv.component_mul(&g.p).component_mul(&g.p).sum();
        }
        if let Some(f) = &self.forcing {
            rate += f.eval(h.graph, &state.q, t).component_mul(&g.p).sum();
        }
        Ok(rate)
    }
}

/// One semi-implicit port-Hamiltonian layer at time `t`.
pub fn step_port_symplectic(
    h: &Hamiltonian<'_>,
    forces: &PortForces,
    t: f64,
    state: &SystemState,
    eps: f64,
) -> Result<SystemState> {
    if forces.is_conservative() {
        return step_symplectic_euler(h, state, eps);
    }
    h.check_state(state)?;
    let (mom, pos) = (h.weights.momentum(), h.weights.position());
    match forces.evaluate_at {
        PortEvaluation::Current => {
            let gq = h.half_gradient(pos, &state.q);
            let gp = if forces.dampening.is_some() {
                h.half_gradient(mom, &state.p)
            } else {
                DMatrix::zeros(0, 0)
            };
            let force = forces.momentum_force(h.graph, &state.q, &gp, gq, t);
            let p = &state.p + force * eps;
            let q = &state.q + h.half_gradient(mom, &p) * eps;
            Ok(SystemState { p, q })
        }
        PortEvaluation::Updated => {
            let gp = h.half_gradient(mom, &state.p);
            let q = &state.q + &gp * eps;
            let gq = h.half_gradient(pos, &q);
            let force = forces.momentum_force(h.graph, &q, &gp, gq, t);
            let p = &state.p + force * eps;
            Ok(SystemState { p, q })
        }
    }
}

/// Port-Hamiltonian rollout; layer `ℓ` runs at `t = ℓ ε`.
pub fn rollout_port(
    h: &Hamiltonian<'_>,
    forces: &PortForces,
    config: &RolloutConfig,
    initial: &SystemState,
) -> Result<Trajectory> {
    if config.scheme != Scheme::SymplecticEuler {
        return Err(Error::Unsupported(format!(
            "port-Hamiltonian layers use symplectic Euler, not {}",
            config.scheme.name()
        )));
    }
    forces.check(h.weights.half_dim())?;
    let eps = config.eps;
    drive(h, config, initial, |s, l| step_port_symplectic(h, forces, l as f64 * eps, s, eps))
}
