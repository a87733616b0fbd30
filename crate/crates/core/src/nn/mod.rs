//! Two-layer GCN and GATv2 node classifiers with hand-written backward passes.
//!
//! Both models map node features `X (m×n)` to logits `(m×t)`:
//!
//! * GCN: `Â · ReLU(Â X W0) · W1`
//! * GATv2: two attention layers with a ReLU in between. For the edge
//!   `j → i` the score is `aᵀ LeakyReLU(W x_i + W x_j [+ We f_ij])` and the
//!   weights are softmax-normalized over the in-edges of `i` (self-loop
//!   included).
//!
//! [`ModelInput`] binds a graph to a [`ModelConfig`] once (normalized
//! adjacency, edge features) so the training loop can call
//! [`ModelInput::forward`] / [`ModelInput::backward`] per epoch.

pub mod checkpoint;
mod gat;
mod gcn;
pub mod gradcheck;
mod loss;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::congraph::{normalize_adjacency, normalize_adjacency_unweighted, ConvGraph, EdgeAttr, NormAdj};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use checkpoint::Checkpoint;
pub use gat::{gatv2_backward, gatv2_forward, GatLayerTape, GatTape};
pub use gcn::{gcn_backward, gcn_forward, GcnTape};
pub use loss::masked_softmax_cross_entropy;

pub const DEFAULT_HIDDEN_DIM: usize = 64;
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gcn,
    Gat,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Gcn => "gcn",
            ModelKind::Gat => "gat",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcn" => Ok(ModelKind::Gcn),
            "gat" => Ok(ModelKind::Gat),
            other => Err(Error::InvalidArgument(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub hidden_dim: usize,
    pub n_classes: usize,
    pub seed: u64,
    /// Negative slope of the LeakyReLU inside GATv2 scores.
    pub leaky_slope: f64,
    /// GCN: use the graph's edge weights. GAT: project the graph's edge features.
    pub use_edge_attr: bool,
}

impl ModelConfig {
    pub fn gcn(hidden_dim: usize, n_classes: usize, seed: u64) -> Self {
        Self {
            kind: ModelKind::Gcn,
            hidden_dim,
            n_classes,
            seed,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            use_edge_attr: false,
        }
    }

    pub fn gat(hidden_dim: usize, n_classes: usize, seed: u64) -> Self {
        Self {
            kind: ModelKind::Gat,
            ..Self::gcn(hidden_dim, n_classes, seed)
        }
    }

    pub fn with_edge_attr(mut self, on: bool) -> Self {
        self.use_edge_attr = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim < 1 {
            return Err(Error::InvalidArgument("hidden_dim must be >= 1".into()));
        }
        if self.n_classes < 2 {
            return Err(Error::InvalidArgument("n_classes must be >= 2".into()));
        }
        if !self.leaky_slope.is_finite() {
            return Err(Error::InvalidArgument("leaky_slope must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    pub w0: Matrix,
    pub w1: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatLayer {
    pub w: Matrix,
    /// Attention vector stored as a `1 × out_dim` row.
    pub a: Matrix,
    /// Edge-feature projection `d_e × out_dim`.
    pub we: Option<Matrix>,
}

impl GatLayer {
    pub fn in_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.w.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatParams {
    pub layers: [GatLayer; 2],
    pub leaky_slope: f64,
}

/// Parameters of either model. Gradients use the same shape.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    Gcn(GcnParams),
    Gat(GatParams),
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::Gcn(_) => ModelKind::Gcn,
            ModelParams::Gat(_) => ModelKind::Gat,
        }
    }

    /// Named tensors in a fixed order (the checkpoint and optimizer order).
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        match self {
            ModelParams::Gcn(p) => vec![("gcn.w0".into(), &p.w0), ("gcn.w1".into(), &p.w1)],
            ModelParams::Gat(p) => {
                let mut out = Vec::new();
                for (l, layer) in p.layers.iter().enumerate() {
                    out.push((format!("gat.{l}.w"), &layer.w));
                    out.push((format!("gat.{l}.a"), &layer.a));
                    if let Some(we) = &layer.we {
                        out.push((format!("gat.{l}.we"), we));
                    }
                }
                out
            }
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            ModelParams::Gcn(p) => vec![&mut p.w0, &mut p.w1],
            ModelParams::Gat(p) => {
                let mut out = Vec::new();
                for layer in p.layers.iter_mut() {
                    out.push(&mut layer.w);
                    out.push(&mut layer.a);
                    if let Some(we) = &mut layer.we {
                        out.push(we);
                    }
                }
                out
            }
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            t.fill(0.0);
        }
        out
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.rows() * t.cols()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.is_finite())
    }

    pub fn input_dim(&self) -> usize {
        match self {
            ModelParams::Gcn(p) => p.w0.rows(),
            ModelParams::Gat(p) => p.layers[0].in_dim(),
        }
    }

    pub fn edge_dim(&self) -> Option<usize> {
        match self {
            ModelParams::Gcn(_) => None,
            ModelParams::Gat(p) => p.layers[0].we.as_ref().map(Matrix::rows),
        }
    }
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Matrix {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    Matrix::from_vec(fan_in, fan_out, data)
}

fn uniform_row(rng: &mut ChaCha8Rng, len: usize) -> Matrix {
    let bound = 1.0 / (len as f64).sqrt();
    let data = (0..len).map(|_| rng.random_range(-bound..=bound)).collect();
    Matrix::from_vec(1, len, data)
}

/// Seeded initialization: Glorot-uniform weight matrices, attention vectors
/// uniform in `±1/√out_dim`. `edge_dim` sizes the GAT edge projections and is
/// ignored for GCN.
pub fn init_params(config: &ModelConfig, in_dim: usize, edge_dim: Option<usize>) -> Result<ModelParams> {
    config.validate()?;
    if in_dim == 0 {
        return Err(Error::InvalidArgument("input dimension must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (k, t) = (config.hidden_dim, config.n_classes);
    Ok(match config.kind {
        ModelKind::Gcn => ModelParams::Gcn(GcnParams {
            w0: glorot(&mut rng, in_dim, k),
            w1: glorot(&mut rng, k, t),
        }),
        ModelKind::Gat => {
            let mut layer = |fan_in: usize, fan_out: usize| GatLayer {
                w: glorot(&mut rng, fan_in, fan_out),
                a: uniform_row(&mut rng, fan_out),
                we: edge_dim.map(|d| glorot(&mut rng, d, fan_out)),
            };
            let l0 = layer(in_dim, k);
            let l1 = layer(k, t);
            ModelParams::Gat(GatParams {
                layers: [l0, l1],
                leaky_slope: config.leaky_slope,
            })
        }
    })
}

/// Cached forward state, consumed by [`ModelInput::backward`].
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum ForwardTape {
    Gcn(GcnTape),
    Gat(GatTape),
}

impl ForwardTape {
    /// Per-edge attention weights of each GAT layer (aligned with the graph's
    /// edges); `None` for GCN.
    pub fn attention(&self) -> Option<[&[f64]; 2]> {
        match self {
            ForwardTape::Gcn(_) => None,
            ForwardTape::Gat(t) => Some([&t.layers[0].alpha, &t.layers[1].alpha]),
        }
    }

    /// Which side of zero every ReLU / LeakyReLU argument fell on. Two
    /// forward passes with equal patterns lie on the same linear piece.
    pub fn activation_pattern(&self) -> Vec<bool> {
        let positive = |m: &Matrix| m.as_slice().iter().map(|&v| v > 0.0).collect::<Vec<_>>();
        match self {
            ForwardTape::Gcn(t) => positive(&t.pre),
            ForwardTape::Gat(t) => {
                let mut p = positive(&t.layers[0].pre);
                p.extend(positive(&t.layers[0].out));
                p.extend(positive(&t.layers[1].pre));
                p
            }
        }
    }
}

/// A graph bound to a model configuration.
pub struct ModelInput<'g> {
    graph: &'g ConvGraph,
    kind: ModelKind,
    adj: Option<NormAdj>,
    edge_features: Option<&'g Matrix>,
}

impl<'g> ModelInput<'g> {
    pub fn new(graph: &'g ConvGraph, config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let (adj, edge_features) = match config.kind {
            ModelKind::Gcn => {
                let adj = if config.use_edge_attr {
                    if !matches!(graph.attr(), EdgeAttr::Weights(_)) {
                        return Err(Error::EdgeAttr(
                            "GCN with edge attributes needs a graph with edge weights".into(),
                        ));
                    }
                    normalize_adjacency(graph)?
                } else {
                    normalize_adjacency_unweighted(graph)?
                };
                (Some(adj), None)
            }
            ModelKind::Gat => {
                let ef = if config.use_edge_attr {
                    Some(graph.edge_features().ok_or_else(|| {
                        Error::EdgeAttr("GAT with edge attributes needs a graph with edge features".into())
                    })?)
                } else {
                    None
                };
                (None, ef)
            }
        };
        Ok(Self {
            graph,
            kind: config.kind,
            adj,
            edge_features,
        })
    }

    pub fn graph(&self) -> &'g ConvGraph {
        self.graph
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn norm_adj(&self) -> Option<&NormAdj> {
        self.adj.as_ref()
    }

    pub fn edge_features(&self) -> Option<&'g Matrix> {
        self.edge_features
    }

    pub fn edge_dim(&self) -> Option<usize> {
        self.edge_features.map(Matrix::cols)
    }

    /// Fresh parameters sized for this graph.
    pub fn init_params(&self, config: &ModelConfig) -> Result<ModelParams> {
        init_params(config, self.graph.feature_dim(), self.edge_dim())
    }

    pub fn forward(&self, params: &ModelParams) -> Result<(Matrix, ForwardTape)> {
        self.forward_with(self.graph.features(), params)
    }

    /// Forward pass on a substitute feature matrix (same node count).
    pub fn forward_with(&self, x: &Matrix, params: &ModelParams) -> Result<(Matrix, ForwardTape)> {
        match (params, &self.adj) {
            (ModelParams::Gcn(p), Some(adj)) => {
                let (logits, tape) = gcn_forward(adj, x, p)?;
                Ok((logits, ForwardTape::Gcn(tape)))
            }
            (ModelParams::Gat(p), None) => {
                let (logits, tape) = gatv2_forward(self.graph, self.edge_features, x, p)?;
                Ok((logits, ForwardTape::Gat(tape)))
            }
            _ => Err(Error::InvalidArgument(format!(
                "{} parameters bound to a {} input",
                params.kind(),
                self.kind
            ))),
        }
    }

    pub fn logits(&self, params: &ModelParams) -> Result<Matrix> {
        self.forward(params).map(|(l, _)| l)
    }

    pub fn backward(&self, params: &ModelParams, tape: &ForwardTape, dlogits: &Matrix) -> Result<ModelParams> {
        match (params, tape, &self.adj) {
            (ModelParams::Gcn(p), ForwardTape::Gcn(t), Some(adj)) => {
                Ok(ModelParams::Gcn(gcn_backward(t, adj, p, dlogits)?))
            }
            (ModelParams::Gat(p), ForwardTape::Gat(t), None) => Ok(ModelParams::Gat(gatv2_backward(
                t,
                self.graph,
                self.edge_features,
                p,
                dlogits,
            )?)),
            _ => Err(Error::InvalidArgument("tape does not match parameters".into())),
        }
    }
}
