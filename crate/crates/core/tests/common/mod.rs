//! Independent dense reference implementations and random problem builders
//! shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use linecon_core::congraph::{build_graph, ConvGraph, EdgeAttr, Topology};
use linecon_core::corpus::{Conversation, Corpus, Split, Utterance};
use linecon_core::nn::{GatLayer, GatParams, GcnParams};
use linecon_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Corpus with the given conversation lengths, random emotions, sentiments,
/// splits and features in [-1, 1].
pub fn random_corpus(rng: &mut ChaCha8Rng, lens: &[usize], n_classes: usize, dim: usize) -> Corpus {
    let mut conversations = Vec::new();
    for (ci, &len) in lens.iter().enumerate() {
        let utterances = (0..len)
            .map(|ui| Utterance {
                utt_id: format!("c{ci}_u{ui}"),
                text: None,
                speaker: Some(if ui % 2 == 0 { "A" } else { "B" }.to_string()),
                emotion: rng.random_range(0..n_classes),
                sentiment: rng.random_range(0..3),
                split: Split::ALL[rng.random_range(0..3)],
            })
            .collect();
        conversations.push(Conversation {
            conv_id: format!("c{ci}"),
            utterances,
        });
    }
    let n: usize = lens.iter().sum();
    let features = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    Corpus {
        conversations,
        emotion_vocab: (0..n_classes).map(|c| format!("e{c}")).collect(),
        features: Arc::new(Matrix::from_vec(n, dim, features)),
    }
}

/// Random conversation lengths summing to exactly `total` nodes.
pub fn random_lens(rng: &mut ChaCha8Rng, total: usize, max_len: usize) -> Vec<usize> {
    let mut lens = Vec::new();
    let mut left = total;
    while left > 0 {
        let l = rng.random_range(1..=max_len.min(left));
        lens.push(l);
        left -= l;
    }
    lens
}

pub fn random_graph(rng: &mut ChaCha8Rng, nodes: usize, n_classes: usize, dim: usize, topology: Topology) -> ConvGraph {
    let lens = random_lens(rng, nodes, 6);
    build_graph(&random_corpus(rng, &lens, n_classes, dim), topology).unwrap()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect(),
    )
}

pub fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols(), b.rows());
    let mut out = Matrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut s = 0.0;
            for k in 0..a.cols() {
                s += a[(i, k)] * b[(k, j)];
            }
            out.as_mut_slice()[i * b.cols() + j] = s;
        }
    }
    out
}

fn relu(m: &Matrix) -> Matrix {
    m.map(|v| v.max(0.0))
}

/// Dense adjacency `A[dst][src]`, using edge weights when present.
pub fn dense_adjacency(graph: &ConvGraph, use_weights: bool) -> Vec<Vec<f64>> {
    let n = graph.n_nodes();
    let mut a = vec![vec![0.0; n]; n];
    let weights = match (graph.attr(), use_weights) {
        (EdgeAttr::Weights(w), true) => Some(w.clone()),
        _ => None,
    };
    for (e, &(src, dst)) in graph.edges().iter().enumerate() {
        a[dst][src] = weights.as_ref().map_or(1.0, |w| w[e]);
    }
    a
}

/// `D^{-1/2} A D^{-1/2}` with `d_i = Σ_j |A_ij|`.
pub fn dense_normalized(a: &[Vec<f64>]) -> Matrix {
    let n = a.len();
    let d: Vec<f64> = a.iter().map(|row| row.iter().map(|w| w.abs()).sum()).collect();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out.as_mut_slice()[i * n + j] = a[i][j] / (d[i].sqrt() * d[j].sqrt());
        }
    }
    out
}

pub fn dense_gcn(adj: &Matrix, x: &Matrix, p: &GcnParams) -> Matrix {
    let h = relu(&naive_matmul(&naive_matmul(adj, x), &p.w0));
    naive_matmul(&naive_matmul(adj, &h), &p.w1)
}

fn leaky(v: f64, slope: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        slope * v
    }
}

/// One dense GATv2 layer. Non-edges get score −∞ before a row softmax.
/// Returns the output and the dense attention matrix `alpha[dst][src]`.
pub fn dense_gat_layer(
    graph: &ConvGraph,
    edge_features: Option<&Matrix>,
    x: &Matrix,
    layer: &GatLayer,
    slope: f64,
) -> (Matrix, Vec<Vec<f64>>) {
    let n = graph.n_nodes();
    let z = naive_matmul(x, &layer.w);
    let o = z.cols();
    let mut score = vec![vec![f64::NEG_INFINITY; n]; n];
    for (e, &(src, dst)) in graph.edges().iter().enumerate() {
        let proj = match (edge_features, &layer.we) {
            (Some(f), Some(we)) => {
                let fe = Matrix::from_vec(1, f.cols(), f.row(e).to_vec());
                naive_matmul(&fe, we).into_vec()
            }
            _ => vec![0.0; o],
        };
        let mut s = 0.0;
        for k in 0..o {
            s += layer.a[(0, k)] * leaky(z[(dst, k)] + z[(src, k)] + proj[k], slope);
        }
        score[dst][src] = s;
    }
    let mut alpha = vec![vec![0.0; n]; n];
    let mut out = Matrix::zeros(n, o);
    for i in 0..n {
        let m = score[i].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = score[i].iter().map(|&s| (s - m).exp()).collect();
        let total: f64 = exps.iter().sum();
        for j in 0..n {
            alpha[i][j] = exps[j] / total;
            for k in 0..o {
                out.as_mut_slice()[i * o + k] += alpha[i][j] * z[(j, k)];
            }
        }
    }
    (out, alpha)
}

pub fn dense_gat(graph: &ConvGraph, edge_features: Option<&Matrix>, x: &Matrix, p: &GatParams) -> Matrix {
    let (h, _) = dense_gat_layer(graph, edge_features, x, &p.layers[0], p.leaky_slope);
    let (out, _) = dense_gat_layer(graph, edge_features, &relu(&h), &p.layers[1], p.leaky_slope);
    out
}

/// Support-weighted F1 written from the definitions, without a confusion
/// matrix.
pub fn scratch_weighted_f1(labels: &[usize], preds: &[usize], n_classes: usize) -> f64 {
    let n = labels.len() as f64;
    let mut total = 0.0;
    for c in 0..n_classes {
        let tp = labels.iter().zip(preds).filter(|(&y, &p)| y == c && p == c).count() as f64;
        let fp = labels.iter().zip(preds).filter(|(&y, &p)| y != c && p == c).count() as f64;
        let fnn = labels.iter().zip(preds).filter(|(&y, &p)| y == c && p != c).count() as f64;
        let support = tp + fnn;
        let f1 = if 2.0 * tp + fp + fnn > 0.0 {
            2.0 * tp / (2.0 * tp + fp + fnn)
        } else {
            0.0
        };
        total += support / n * f1;
    }
    total
}

/// Hop distances from `start` along the graph's edges (`usize::MAX` when
/// unreachable).
pub fn hop_distances(graph: &ConvGraph, start: usize) -> Vec<usize> {
    let n = graph.n_nodes();
    let mut dist = vec![usize::MAX; n];
    dist[start] = 0;
    let mut frontier = vec![start];
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for &u in &frontier {
            for &(src, dst) in graph.edges() {
                if src == u && dist[dst] == usize::MAX {
                    dist[dst] = dist[u] + 1;
                    next.push(dst);
                }
            }
        }
        frontier = next;
    }
    dist
}
