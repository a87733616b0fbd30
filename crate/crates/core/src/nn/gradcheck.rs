//! Central finite-difference verification of the analytic gradients.
//!
//! The checked objective is `CE(logits) + Σ R ⊙ logits` with a fixed random
//! `R`, so both the loss gradient and an arbitrary upstream gradient flow
//! through the backward pass. Only forward evaluations are used for the
//! numerical side.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::congraph::{build_graph, ConvGraph, EdgeAttrKind, ShiftWeights, Topology};
use crate::corpus::{Conversation, Corpus, Split, Utterance, N_SENTIMENTS};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::{masked_softmax_cross_entropy, ModelConfig, ModelInput, ModelKind, ModelParams};

pub const DEFAULT_STEP: f64 = 1e-4;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;

/// A random small problem for gradient checking.
#[derive(Debug, Clone, Serialize)]
pub struct GradCheckSpec {
    pub kind: ModelKind,
    pub nodes: usize,
    pub in_dim: usize,
    pub hidden_dim: usize,
    pub n_classes: usize,
    pub edge_attr: EdgeAttrKind,
    pub seed: u64,
}

impl GradCheckSpec {
    pub fn new(kind: ModelKind, nodes: usize, dims: (usize, usize, usize), seed: u64) -> Self {
        Self {
            kind,
            nodes,
            in_dim: dims.0,
            hidden_dim: dims.1,
            n_classes: dims.2,
            edge_attr: EdgeAttrKind::None,
            seed,
        }
    }

    pub fn with_edge_attr(mut self, edge_attr: EdgeAttrKind) -> Self {
        self.edge_attr = edge_attr;
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TensorError {
    pub name: String,
    /// `max |g_analytic − g_fd| / max(1, |g_fd|)` over the tensor's entries.
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorError>,
    pub max_rel_error: f64,
    /// Entries whose step had to shrink to stay off an activation kink.
    pub kink_steps: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// Fixed labels, mask and projection defining the checked objective.
pub struct Objective {
    pub labels: Vec<usize>,
    pub mask: Vec<bool>,
    pub projection: Matrix,
}

impl Objective {
    pub fn value_and_grad(&self, logits: &Matrix) -> Result<(f64, Matrix)> {
        let (ce, mut grad) = masked_softmax_cross_entropy(logits, &self.labels, &self.mask)?;
        let lin: f64 = logits
            .as_slice()
            .iter()
            .zip(self.projection.as_slice())
            .map(|(a, b)| a * b)
            .sum();
        grad.add_assign(&self.projection);
        Ok((ce + lin, grad))
    }
}

/// Random line graph over `spec.nodes` utterances split into conversations of
/// 1–4 utterances, with standard-normal features and random labels and
/// sentiments. Returns the graph and a matching model configuration.
pub fn random_problem(spec: &GradCheckSpec) -> Result<(ConvGraph, ModelConfig)> {
    if spec.nodes == 0 || spec.in_dim == 0 {
        return Err(Error::InvalidArgument("gradcheck needs at least one node and input dim".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut conversations = Vec::new();
    let mut k = 0;
    while k < spec.nodes {
        let len = rng.random_range(1..=4).min(spec.nodes - k);
        let ci = conversations.len();
        let utterances = (0..len)
            .map(|ui| Utterance {
                utt_id: format!("c{ci}_u{ui}"),
                text: None,
                speaker: None,
                emotion: rng.random_range(0..spec.n_classes),
                sentiment: rng.random_range(0..N_SENTIMENTS),
                split: Split::Train,
            })
            .collect();
        conversations.push(Conversation {
            conv_id: format!("c{ci}"),
            utterances,
        });
        k += len;
    }
    let features: Vec<f64> = (0..spec.nodes * spec.in_dim)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let corpus = Corpus {
        conversations,
        emotion_vocab: (0..spec.n_classes).map(|c| format!("class_{c}")).collect(),
        features: Arc::new(Matrix::from_vec(spec.nodes, spec.in_dim, features)),
    };
    let graph = build_graph(&corpus, Topology::Line)?;
    let graph = spec.edge_attr.apply(&graph, ShiftWeights::MELD)?;
    let config = ModelConfig {
        kind: spec.kind,
        hidden_dim: spec.hidden_dim,
        n_classes: spec.n_classes,
        seed: spec.seed,
        leaky_slope: super::DEFAULT_LEAKY_SLOPE,
        use_edge_attr: spec.edge_attr != EdgeAttrKind::None,
    };
    if config.use_edge_attr {
        let fits = matches!(
            (spec.kind, spec.edge_attr),
            (ModelKind::Gcn, EdgeAttrKind::SsWeight) | (ModelKind::Gat, EdgeAttrKind::SsFeature)
        );
        if !fits {
            return Err(Error::InvalidArgument(format!(
                "{} does not consume {} edge attributes",
                spec.kind, spec.edge_attr
            )));
        }
    }
    Ok((graph, config))
}

/// Smaller steps tried when `θ ± h` straddles a ReLU / LeakyReLU kink.
const KINK_RETRIES: usize = 4;

/// Compares `input.backward` against central differences of step `h` for
/// every parameter entry.
///
/// Central differences are only meaningful when `θ − h` and `θ + h` lie on
/// the same linear piece as `θ`. When a probe flips any activation sign the
/// step is divided by 10 (up to four times) for that entry; such entries are
/// counted in `kink_steps`.
pub fn check_gradients(
    input: &ModelInput<'_>,
    params: &ModelParams,
    objective: &Objective,
    h: f64,
) -> Result<GradCheckReport> {
    let (logits, tape) = input.forward(params)?;
    let (_, dlogits) = objective.value_and_grad(&logits)?;
    let analytic = input.backward(params, &tape, &dlogits)?;
    let pattern = tape.activation_pattern();

    let eval = |p: &ModelParams| -> Result<(f64, bool)> {
        let (logits, tape) = input.forward(p)?;
        let same_piece = tape.activation_pattern() == pattern;
        Ok((objective.value_and_grad(&logits)?.0, same_piece))
    };

    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    let grads: Vec<Matrix> = analytic.tensors().into_iter().map(|(_, t)| t.clone()).collect();
    let mut probe = params.clone();
    let mut tensors = Vec::with_capacity(names.len());
    let mut kink_steps = 0;
    for (ti, name) in names.iter().enumerate() {
        let len = grads[ti].as_slice().len();
        let mut worst = 0.0f64;
        for idx in 0..len {
            let orig = probe.tensors_mut()[ti].as_slice()[idx];
            let mut step = h;
            let mut fd;
            let mut retries = 0;
            loop {
                probe.tensors_mut()[ti].as_mut_slice()[idx] = orig + step;
                let (up, up_same) = eval(&probe)?;
                probe.tensors_mut()[ti].as_mut_slice()[idx] = orig - step;
                let (down, down_same) = eval(&probe)?;
                fd = (up - down) / (2.0 * step);
                if (up_same && down_same) || retries == KINK_RETRIES {
                    break;
                }
                retries += 1;
                step /= 10.0;
            }
            probe.tensors_mut()[ti].as_mut_slice()[idx] = orig;
            if retries > 0 {
                kink_steps += 1;
            }
            let err = (grads[ti].as_slice()[idx] - fd).abs() / fd.abs().max(1.0);
            worst = worst.max(err);
        }
        tensors.push(TensorError {
            name: name.clone(),
            max_rel_error: worst,
        });
    }
    let max_rel_error = tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        tensors,
        max_rel_error,
        kink_steps,
    })
}

/// Builds the random problem for `spec` and checks every parameter tensor.
pub fn run(spec: &GradCheckSpec, h: f64) -> Result<GradCheckReport> {
    let (graph, config) = random_problem(spec)?;
    let input = ModelInput::new(&graph, &config)?;
    let params = input.init_params(&config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(1));
    let projection = Matrix::from_vec(
        graph.n_nodes(),
        spec.n_classes,
        (0..graph.n_nodes() * spec.n_classes)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect(),
    );
    let objective = Objective {
        labels: graph.labels().to_vec(),
        mask: vec![true; graph.n_nodes()],
        projection,
    };
    check_gradients(&input, &params, &objective, h)
}
