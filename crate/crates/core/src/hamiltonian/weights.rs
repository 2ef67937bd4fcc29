use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forces::PortForces;
use crate::graph::Graph;

/// Neighborhood aggregation `Φ_G`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    SumV,
    Gcn,
}

impl Aggregation {
    /// Coefficient of neighbor `v` in the aggregate of `u`.
    #[inline]
    pub fn coefficient(self, graph: &Graph, u: usize, v: usize) -> f64 {
        match self {
            Aggregation::SumV => 1.0,
            Aggregation::Gcn => 1.0 / ((graph.degree(u) * graph.degree(v)) as f64).sqrt(),
        }
    }

    /// Column-wise `Σ_{v ∈ N_u} c_uv x_v` for every node `u`. The coefficient
    /// matrix is symmetric, so this doubles as its own adjoint.
    pub fn apply(self, graph: &Graph, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        for u in 0..graph.node_count() {
            let mut col = out.column_mut(u);
            for &v in graph.neighbors(u) {
                let c = self.coefficient(graph, u, v);
                col.axpy(c, &x.column(v), 1.0);
            }
        }
        out
    }
}

/// Block-diagonal coupling weights `W = diag(W_p, W_q)`, `V = diag(V_p, V_q)`
/// and biases `b = (b_p, b_q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingWeights {
    pub wp: DMatrix<f64>,
    pub wq: DMatrix<f64>,
    pub vp: DMatrix<f64>,
    pub vq: DMatrix<f64>,
    pub bp: DVector<f64>,
    pub bq: DVector<f64>,
    pub agg: Aggregation,
}

/// One half (momentum or position) of the weights.
#[derive(Debug, Clone, Copy)]
pub struct HalfWeights<'a> {
    pub w: &'a DMatrix<f64>,
    pub v: &'a DMatrix<f64>,
    pub b: &'a DVector<f64>,
}

impl CouplingWeights {
    pub fn new(
        wp: DMatrix<f64>,
        wq: DMatrix<f64>,
        vp: DMatrix<f64>,
        vq: DMatrix<f64>,
        bp: DVector<f64>,
        bq: DVector<f64>,
        agg: Aggregation,
    ) -> Result<Self> {
        let w = Self {
            wp,
            wq,
            vp,
            vq,
            bp,
            bq,
            agg,
        };
        w.check()?;
        Ok(w)
    }

    pub fn zeros(dim: usize, agg: Aggregation) -> Self {
        let h = dim / 2;
        Self {
            wp: DMatrix::zeros(h, h),
            wq: DMatrix::zeros(h, h),
            vp: DMatrix::zeros(h, h),
            vq: DMatrix::zeros(h, h),
            bp: DVector::zeros(h),
            bq: DVector::zeros(h),
            agg,
        }
    }

    /// `W = I`, `V = I`, zero bias.
    pub fn identity(dim: usize, agg: Aggregation) -> Self {
        let h = dim / 2;
        Self {
            wp: DMatrix::identity(h, h),
            wq: DMatrix::identity(h, h),
            vp: DMatrix::identity(h, h),
            vq: DMatrix::identity(h, h),
            ..Self::zeros(dim, agg)
        }
    }

    /// Glorot-uniform matrices on `[-a, a]`, `a = sqrt(6 / (d/2 + d/2))`, zero
    /// biases.
    pub fn glorot<R: Rng + ?Sized>(rng: &mut R, dim: usize, agg: Aggregation) -> Self {
        let h = dim / 2;
        let a = glorot_limit(h, h);
        let mut draw = || DMatrix::from_fn(h, h, |_, _| rng.random_range(-a..a));
        Self {
            wp: draw(),
            wq: draw(),
            vp: draw(),
            vq: draw(),
            bp: DVector::zeros(h),
            bq: DVector::zeros(h),
            agg,
        }
    }

    /// Every entry, including biases, uniform on `[-scale, scale)`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, dim: usize, agg: Aggregation, scale: f64) -> Self {
        let h = dim / 2;
        let mut m = || DMatrix::from_fn(h, h, |_, _| scale * (2.0 * rng.random::<f64>() - 1.0));
        let (wp, wq, vp, vq) = (m(), m(), m(), m());
        let mut v = || DVector::from_fn(h, |_, _| scale * (2.0 * rng.random::<f64>() - 1.0));
        let (bp, bq) = (v(), v());
        Self {
            wp,
            wq,
            vp,
            vq,
            bp,
            bq,
            agg,
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.wp.nrows()
    }

    pub fn half_dim(&self) -> usize {
        self.wp.nrows()
    }

    pub fn momentum(&self) -> HalfWeights<'_> {
        HalfWeights {
            w: &self.wp,
            v: &self.vp,
            b: &self.bp,
        }
    }

    pub fn position(&self) -> HalfWeights<'_> {
        HalfWeights {
            w: &self.wq,
            v: &self.vq,
            b: &self.bq,
        }
    }

    /// Full `d x d` block-diagonal `W`.
    pub fn full_w(&self) -> DMatrix<f64> {
        crate::linalg::block_diag(&self.wp, &self.wq)
    }

    pub fn full_v(&self) -> DMatrix<f64> {
        crate::linalg::block_diag(&self.vp, &self.vq)
    }

    pub fn check(&self) -> Result<()> {
        let h = self.wp.nrows();
        for (name, m) in [("Wp", &self.wp), ("Wq", &self.wq), ("Vp", &self.vp), ("Vq", &self.vq)] {
            if m.shape() != (h, h) {
                return Err(Error::Dimension(format!("{name} is {:?}, expected ({h}, {h})", m.shape())));
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    step: 0,
                    what: name.into(),
                });
            }
        }
        for (name, b) in [("bp", &self.bp), ("bq", &self.bq)] {
            if b.len() != h {
                return Err(Error::Dimension(format!("{name} has length {}, expected {h}", b.len())));
            }
            if b.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    step: 0,
                    what: name.into(),
                });
            }
        }
        Ok(())
    }
}

pub(crate) fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out).max(1) as f64).sqrt()
}

/// The on-disk weights document: coupling weights plus optional port forces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WeightsFile", into = "WeightsFile")]
pub struct WeightsDocument {
    pub weights: CouplingWeights,
    pub forces: Option<PortForces>,
}

impl WeightsDocument {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsFile {
    d: usize,
    #[serde(rename = "Wp", with = "crate::linalg::rows")]
    wp: DMatrix<f64>,
    #[serde(rename = "Wq", with = "crate::linalg::rows")]
    wq: DMatrix<f64>,
    #[serde(rename = "Vp", with = "crate::linalg::rows")]
    vp: DMatrix<f64>,
    #[serde(rename = "Vq", with = "crate::linalg::rows")]
    vq: DMatrix<f64>,
    #[serde(with = "crate::linalg::column")]
    bp: DVector<f64>,
    #[serde(with = "crate::linalg::column")]
    bq: DVector<f64>,
    agg: Aggregation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    forces: Option<PortForces>,
}

impl TryFrom<WeightsFile> for WeightsDocument {
    type Error = Error;

    fn try_from(f: WeightsFile) -> Result<Self> {
        if f.d % 2 != 0 || f.d == 0 {
            return Err(Error::Dimension(format!("state dimension {} must be even and positive", f.d)));
        }
        let weights = CouplingWeights::new(f.wp, f.wq, f.vp, f.vq, f.bp, f.bq, f.agg)?;
        if weights.dim() != f.d {
            return Err(Error::Dimension(format!(
                "declared d = {} but blocks imply d = {}",
                f.d,
                weights.dim()
            )));
        }
        if let Some(forces) = &f.forces {
            forces.check(weights.half_dim())?;
        }
        Ok(Self {
            weights,
            forces: f.forces,
        })
    }
}

impl From<WeightsDocument> for WeightsFile {
    fn from(doc: WeightsDocument) -> Self {
        let w = doc.weights;
        Self {
            d: w.dim(),
            wp: w.wp,
            wq: w.wq,
            vp: w.vp,
            vq: w.vq,
            bp: w.bp,
            bq: w.bq,
            agg: w.agg,
            forces: doc.forces,
        }
    }
}
