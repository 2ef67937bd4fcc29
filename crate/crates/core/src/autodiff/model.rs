use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forces::{Affine, DampeningKind, DampeningSpec, ForcingKind, ForcingSpec, NetCache, PortForces};
use crate::graph::Graph;
use crate::hamiltonian::{glorot_limit, Activation, Aggregation, CouplingWeights, HalfWeights};

/// Which half of the state the encoder writes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderTarget {
    #[default]
    Both,
    P,
    Q,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReadoutInput {
    #[serde(rename = "p")]
    P,
    #[default]
    #[serde(rename = "q")]
    Q,
    #[serde(rename = "pq")]
    Pq,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    #[default]
    Node,
    /// Mean pooling over each graph.
    Graph,
}

/// Encoder, `L` weight-shared (port-)Hamiltonian layers and an affine readout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input_dim: usize,
    /// Node-state dimension `d` (even).
    pub dim: usize,
    pub layers: usize,
    pub eps: f64,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub aggregation: Aggregation,
    #[serde(default)]
    pub encoder: EncoderTarget,
    #[serde(default)]
    pub readout: ReadoutInput,
    #[serde(default)]
    pub head: Head,
    #[serde(default = "one")]
    pub output_dim: usize,
    #[serde(default)]
    pub dampening: Option<DampeningKind>,
    #[serde(default)]
    pub forcing: Option<ForcingKind>,
}

fn one() -> usize {
    1
}

impl ModelConfig {
    pub fn conservative(input_dim: usize, dim: usize, layers: usize, eps: f64) -> Self {
        Self {
            input_dim,
            dim,
            layers,
            eps,
            activation: Activation::Tanh,
            aggregation: Aggregation::SumV,
            encoder: EncoderTarget::Both,
            readout: ReadoutInput::Q,
            head: Head::Node,
            output_dim: 1,
            dampening: None,
            forcing: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim % 2 != 0 {
            return Err(Error::Config(format!("state dimension {} must be even and positive", self.dim)));
        }
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config("input and output dimensions must be positive".into()));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!("step size must be positive, got {}", self.eps)));
        }
        Ok(())
    }

    fn encoder_rows(&self) -> usize {
        match self.encoder {
            EncoderTarget::Both => self.dim,
            _ => self.dim / 2,
        }
    }

    fn readout_cols(&self) -> usize {
        match self.readout {
            ReadoutInput::Pq => self.dim,
            _ => self.dim / 2,
        }
    }
}

/// All trainable tensors of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub encoder: Affine,
    pub coupling: CouplingWeights,
    pub forces: PortForces,
    pub readout: Affine,
}

/// One entry of the flat parameter layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Self {
        let h = config.dim / 2;
        Self {
            encoder: Affine::zeros(config.encoder_rows(), config.input_dim),
            coupling: CouplingWeights::zeros(config.dim, config.aggregation),
            forces: PortForces::new(
                config.dampening.map(|k| DampeningSpec::zeros(k, h)),
                config.forcing.map(|k| ForcingSpec::zeros(k, h)),
            ),
            readout: Affine::zeros(config.output_dim, config.readout_cols()),
        }
    }

    /// Glorot-uniform weights, zero biases; force parameters uniform on
    /// `[-a, a]` with the Glorot limit of their layer width.
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Self {
        let mut params = Self::zeros(config);
        let glorot = |rng: &mut R, m: &mut DMatrix<f64>| {
            let a = glorot_limit(m.ncols(), m.nrows());
            for x in m.iter_mut() {
                *x = rng.random_range(-a..a);
            }
        };
        glorot(rng, &mut params.encoder.w);
        params.coupling = CouplingWeights::glorot(rng, config.dim, config.aggregation);
        glorot(rng, &mut params.readout.w);
        let h = config.dim / 2;
        if let Some(k) = config.dampening {
            params.forces.dampening = Some(DampeningSpec::random(rng, k, h, glorot_limit(h, h)));
        }
        if let Some(k) = config.forcing {
            params.forces.forcing = Some(ForcingSpec::random(rng, k, h, glorot_limit(h, h)));
        }
        params
    }

    /// Named tensors in the fixed flattening order (column-major data).
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        fn m<'a>(name: &str, x: &'a DMatrix<f64>) -> (String, Vec<usize>, &'a [f64]) {
            (name.to_string(), vec![x.nrows(), x.ncols()], x.as_slice())
        }
        fn v<'a>(name: &str, x: &'a DVector<f64>) -> (String, Vec<usize>, &'a [f64]) {
            (name.to_string(), vec![x.len()], x.as_slice())
        }
        let c = &self.coupling;
        let mut out = vec![
            m("encoder.w", &self.encoder.w),
            v("encoder.b", &self.encoder.b),
            m("Wp", &c.wp),
            m("Wq", &c.wq),
            m("Vp", &c.vp),
            m("Vq", &c.vq),
            v("bp", &c.bp),
            v("bq", &c.bq),
        ];
        if let Some(d) = &self.forces.dampening {
            out.extend(d.tensors().into_iter().map(|(n, s, x)| (format!("dampening.{n}"), s, x)));
        }
        if let Some(f) = &self.forces.forcing {
            out.extend(f.tensors().into_iter().map(|(n, s, x)| (format!("forcing.{n}"), s, x)));
        }
        out.push(m("readout.w", &self.readout.w));
        out.push(v("readout.b", &self.readout.b));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let c = &mut self.coupling;
        let mut out: Vec<&mut [f64]> = vec![
            self.encoder.w.as_mut_slice(),
            self.encoder.b.as_mut_slice(),
            c.wp.as_mut_slice(),
            c.wq.as_mut_slice(),
            c.vp.as_mut_slice(),
            c.vq.as_mut_slice(),
            c.bp.as_mut_slice(),
            c.bq.as_mut_slice(),
        ];
        if let Some(d) = &mut self.forces.dampening {
            out.extend(d.tensors_mut().into_iter().map(|(_, x)| x));
        }
        if let Some(f) = &mut self.forces.forcing {
            out.extend(f.tensors_mut().into_iter().map(|(_, x)| x));
        }
        out.push(self.readout.w.as_mut_slice());
        out.push(self.readout.b.as_mut_slice());
        out
    }

    pub fn index(&self) -> Vec<IndexEntry> {
        let mut offset = 0;
        self.tensors()
            .into_iter()
            .map(|(name, shape, x)| {
                let e = IndexEntry {
                    name,
                    shape,
                    offset,
                    len: x.len(),
                };
                offset += x.len();
                e
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.2.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for (_, _, x) in self.tensors() {
            out.extend_from_slice(x);
        }
        out
    }

    pub fn unflatten(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.len() {
            return Err(Error::Dimension(format!(
                "flat parameter vector of length {}, model has {}",
                flat.len(),
                self.len()
            )));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }
}

/// Intermediates of one half-gradient `G = Wᵀσ(Z) + Vᵀσ(Z)Â`.
#[derive(Debug, Clone, PartialEq)]
struct HalfRecord {
    x: DMatrix<f64>,
    xa: DMatrix<f64>,
    z: DMatrix<f64>,
    s: DMatrix<f64>,
    sa: DMatrix<f64>,
}

fn half_forward(graph: &Graph, agg: Aggregation, act: Activation, half: HalfWeights<'_>, x: &DMatrix<f64>) -> (DMatrix<f64>, HalfRecord) {
    let xa = agg.apply(graph, x);
    let mut z = half.w * x + half.v * &xa;
    for mut col in z.column_iter_mut() {
        col += half.b;
    }
    let s = z.map(|v| act.value(v));
    let sa = agg.apply(graph, &s);
    let g = half.w.transpose() * &s + half.v.transpose() * &sa;
    (
        g,
        HalfRecord {
            x: x.clone(),
            xa,
            z,
            s,
            sa,
        },
    )
}

struct HalfGrads<'a> {
    w: &'a mut DMatrix<f64>,
    v: &'a mut DMatrix<f64>,
    b: &'a mut DVector<f64>,
}

fn half_backward(
    graph: &Graph,
    agg: Aggregation,
    act: Activation,
    half: HalfWeights<'_>,
    rec: &HalfRecord,
    g_bar: &DMatrix<f64>,
    grads: HalfGrads<'_>,
) -> DMatrix<f64> {
    *grads.w += &rec.s * g_bar.transpose();
    *grads.v += &rec.sa * g_bar.transpose();
    let s_bar = half.w * g_bar + agg.apply(graph, &(half.v * g_bar));
    let z_bar = s_bar.zip_map(&rec.z, |sb, z| sb * act.derivative(z));
    *grads.w += &z_bar * rec.x.transpose();
    *grads.v += &z_bar * rec.xa.transpose();
    for (i, r) in z_bar.row_iter().enumerate() {
        grads.b[i] += r.sum();
    }
    half.w.transpose() * &z_bar + agg.apply(graph, &(half.v.transpose() * &z_bar))
}

#[derive(Debug, Clone, PartialEq)]
struct LayerRecord {
    t: f64,
    q_grad: HalfRecord,
    p_grad: Option<(DMatrix<f64>, HalfRecord)>,
    dampening: Option<(DMatrix<f64>, NetCache)>,
    forcing: Option<NetCache>,
    p_next_grad: HalfRecord,
}

/// Primal intermediates of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Tape {
    node_count: usize,
    segments: Vec<usize>,
    features: DMatrix<f64>,
    /// `(p, q)` after the encoder and after every layer.
    states: Vec<(DMatrix<f64>, DMatrix<f64>)>,
    layers: Vec<LayerRecord>,
    readout_input: DMatrix<f64>,
    pub prediction: DMatrix<f64>,
}

impl Tape {
    pub fn final_state(&self) -> &(DMatrix<f64>, DMatrix<f64>) {
        self.states.last().expect("tape holds the encoded state")
    }

    /// `(p, q)` after `layer` layers; 0 is the encoded input.
    pub fn states_at(&self, layer: usize) -> &(DMatrix<f64>, DMatrix<f64>) {
        &self.states[layer]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Model {
    pub fn new(config: ModelConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        let want = ModelParams::zeros(&config);
        let shapes = |p: &ModelParams| p.index().into_iter().map(|e| (e.name, e.shape)).collect::<Vec<_>>();
        if shapes(&want) != shapes(&params) {
            return Err(Error::Dimension("parameters do not match the model configuration".into()));
        }
        Ok(Self { config, params })
    }

    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let params = ModelParams::init(&config, rng);
        Ok(Self { config, params })
    }

    /// `segments` lists the first node of each graph in a disjoint union (it
    /// must start with 0); only the graph head uses it.
    pub fn forward_with_tape(&self, graph: &Graph, features: &DMatrix<f64>, segments: &[usize]) -> Result<Tape> {
        let cfg = &self.config;
        let n = graph.node_count();
        if features.shape() != (cfg.input_dim, n) {
            return Err(Error::Dimension(format!(
                "features are {:?}, expected ({}, {n})",
                features.shape(),
                cfg.input_dim
            )));
        }
        if segments.first() != Some(&0) || segments.windows(2).any(|w| w[0] >= w[1]) || segments.iter().any(|&s| s >= n) {
            return Err(Error::Dimension(format!("bad graph segments {segments:?} for {n} nodes")));
        }
        let h = cfg.dim / 2;
        let (act, agg) = (cfg.activation, self.params.coupling.agg);
        let weights = &self.params.coupling;
        let forces = &self.params.forces;
        let eps = cfg.eps;

        let mut encoded = &self.params.encoder.w * features;
        for mut col in encoded.column_iter_mut() {
            col += &self.params.encoder.b;
        }
        let (mut p, mut q) = match cfg.encoder {
            EncoderTarget::Both => (encoded.rows(0, h).into_owned(), encoded.rows(h, h).into_owned()),
            EncoderTarget::P => (encoded, DMatrix::zeros(h, n)),
            EncoderTarget::Q => (DMatrix::zeros(h, n), encoded),
        };
        let mut states = Vec::with_capacity(cfg.layers + 1);
        states.push((p.clone(), q.clone()));
        let mut records = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let t = l as f64 * eps;
            let (gq, q_grad) = half_forward(graph, agg, act, weights.position(), &q);
            let mut force = -gq;
            let mut p_grad = None;
            let mut damp = None;
            let mut forc = None;
            if let Some(d) = &forces.dampening {
                let (gp, rec) = half_forward(graph, agg, act, weights.momentum(), &p);
                let (dv, cache) = d.forward(graph, &q);
                force -= dv.component_mul(&gp);
                p_grad = Some((gp, rec));
                damp = Some((dv, cache));
            }
            if let Some(f) = &forces.forcing {
                let (fv, cache) = f.forward(graph, &q, t);
                force += fv;
                forc = Some(cache);
            }
            p += force * eps;
            let (gp_next, p_next_grad) = half_forward(graph, agg, act, weights.momentum(), &p);
            q += gp_next * eps;
            if p.iter().chain(q.iter()).any(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    step: l + 1,
                    what: "layer state".into(),
                });
            }
            states.push((p.clone(), q.clone()));
            records.push(LayerRecord {
                t,
                q_grad,
                p_grad,
                dampening: damp,
                forcing: forc,
                p_next_grad,
            });
        }

        let readout_input = match cfg.readout {
            ReadoutInput::P => p,
            ReadoutInput::Q => q,
            ReadoutInput::Pq => {
                let mut r = DMatrix::zeros(2 * h, n);
                r.rows_mut(0, h).copy_from(&p);
                r.rows_mut(h, h).copy_from(&q);
                r
            }
        };
        let mut out = &self.params.readout.w * &readout_input;
        for mut col in out.column_iter_mut() {
            col += &self.params.readout.b;
        }
        let prediction = match cfg.head {
            Head::Node => out,
            Head::Graph => pool_mean(&out, segments, n),
        };
        if prediction.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                step: cfg.layers,
                what: "prediction".into(),
            });
        }
        Ok(Tape {
            node_count: n,
            segments: segments.to_vec(),
            features: features.clone(),
            states,
            layers: records,
            readout_input,
            prediction,
        })
    }

    pub fn predict(&self, graph: &Graph, features: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.forward_with_tape(graph, features, &[0])?.prediction)
    }

    /// Reverse pass: gradient of a scalar loss whose derivative with respect
    /// to the prediction is `pred_bar`.
    pub fn backward(&self, graph: &Graph, tape: &Tape, pred_bar: &DMatrix<f64>) -> Result<ModelParams> {
        let cfg = &self.config;
        if tape.node_count != graph.node_count() || tape.layers.len() != cfg.layers {
            return Err(Error::Dimension("tape was recorded on a different graph or model".into()));
        }
        if pred_bar.shape() != tape.prediction.shape() {
            return Err(Error::Dimension(format!(
                "loss gradient {:?} vs prediction {:?}",
                pred_bar.shape(),
                tape.prediction.shape()
            )));
        }
        let n = tape.node_count;
        let h = cfg.dim / 2;
        let (act, agg) = (cfg.activation, self.params.coupling.agg);
        let weights = &self.params.coupling;
        let forces = &self.params.forces;
        let eps = cfg.eps;
        let mut grads = self.params.zeros_like();

        let out_bar = match cfg.head {
            Head::Node => pred_bar.clone(),
            Head::Graph => unpool_mean(pred_bar, &tape.segments, n),
        };
        grads.readout.w += &out_bar * tape.readout_input.transpose();
        for (i, r) in out_bar.row_iter().enumerate() {
            grads.readout.b[i] += r.sum();
        }
        let r_bar = self.params.readout.w.transpose() * &out_bar;
        let (mut p_bar, mut q_bar) = match cfg.readout {
            ReadoutInput::P => (r_bar, DMatrix::zeros(h, n)),
            ReadoutInput::Q => (DMatrix::zeros(h, n), r_bar),
            ReadoutInput::Pq => (r_bar.rows(0, h).into_owned(), r_bar.rows(h, h).into_owned()),
        };

        for (l, rec) in tape.layers.iter().enumerate().rev() {
            let q_prev = &tape.states[l].1;
            let mom = weights.momentum();
            let pos = weights.position();
            // q' = q + ε G_p(p')
            let gp_next_bar = &q_bar * eps;
            {
                let c = &mut grads.coupling;
                p_bar += half_backward(graph, agg, act, mom, &rec.p_next_grad, &gp_next_bar, HalfGrads {
                    w: &mut c.wp,
                    v: &mut c.vp,
                    b: &mut c.bp,
                });
            }
            // p' = p + ε (-G_q(q) - D(q) ⊙ G_p(p) + F(q, t))
            let force_bar = &p_bar * eps;
            {
                let c = &mut grads.coupling;
                q_bar += half_backward(graph, agg, act, pos, &rec.q_grad, &(-&force_bar), HalfGrads {
                    w: &mut c.wq,
                    v: &mut c.vq,
                    b: &mut c.bq,
                });
            }
            if let (Some(d), Some((dv, cache)), Some((gp, p_rec))) = (&forces.dampening, &rec.dampening, &rec.p_grad) {
                let dv_bar = -force_bar.component_mul(gp);
                let gp_bar = -force_bar.component_mul(dv);
                let c = &mut grads.coupling;
                p_bar += half_backward(graph, agg, act, mom, p_rec, &gp_bar, HalfGrads {
                    w: &mut c.wp,
                    v: &mut c.vp,
                    b: &mut c.bp,
                });
                let gd = grads.forces.dampening.as_mut().expect("gradient mirrors parameters");
                q_bar += d.backward(graph, q_prev, cache, &dv_bar, gd);
            }
            if let (Some(f), Some(cache)) = (&forces.forcing, &rec.forcing) {
                let gf = grads.forces.forcing.as_mut().expect("gradient mirrors parameters");
                q_bar += f.backward(graph, q_prev, rec.t, cache, &force_bar, gf);
            }
        }

        let enc_bar = match cfg.encoder {
            EncoderTarget::Both => {
                let mut e = DMatrix::zeros(2 * h, n);
                e.rows_mut(0, h).copy_from(&p_bar);
                e.rows_mut(h, h).copy_from(&q_bar);
                e
            }
            EncoderTarget::P => p_bar,
            EncoderTarget::Q => q_bar,
        };
        grads.encoder.w += &enc_bar * tape.features.transpose();
        for (i, r) in enc_bar.row_iter().enumerate() {
            grads.encoder.b[i] += r.sum();
        }
        Ok(grads)
    }
}

fn segment_bounds(segments: &[usize], n: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
    segments
        .iter()
        .enumerate()
        .map(move |(i, &s)| (s, segments.get(i + 1).copied().unwrap_or(n)))
}

fn pool_mean(out: &DMatrix<f64>, segments: &[usize], n: usize) -> DMatrix<f64> {
    let mut pooled = DMatrix::zeros(out.nrows(), segments.len());
    for (g, (a, b)) in segment_bounds(segments, n).enumerate() {
        let cols = out.columns(a, b - a);
        for i in 0..out.nrows() {
            pooled[(i, g)] = cols.row(i).sum() / (b - a) as f64;
        }
    }
    pooled
}

fn unpool_mean(bar: &DMatrix<f64>, segments: &[usize], n: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(bar.nrows(), n);
    for (g, (a, b)) in segment_bounds(segments, n).enumerate() {
        let scale = 1.0 / (b - a) as f64;
        for j in a..b {
            for i in 0..bar.nrows() {
                out[(i, j)] = bar[(i, g)] * scale;
            }
        }
    }
    out
}
