//! Conversation graphs over utterance nodes.
//!
//! Edges are directed and stored with both directions materialized, sorted by
//! `(dst, src)`. Row `i` of the normalized adjacency therefore lists the
//! in-edges of node `i`, which is also the neighbourhood GAT attends over.
//! Every node carries exactly one self-loop and no edge leaves its
//! conversation.

use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio::{len_u32, Reader, Writer};
use crate::corpus::{validate_corpus, Corpus, Split};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const GRAPH_MAGIC: &[u8; 7] = b"LCGRF01";

/// Width of the sentiment edge feature `[s_src, s_dst]`.
pub const SENTIMENT_FEATURE_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    /// Predecessor, successor and self.
    Line,
    /// Every utterance pair of a conversation, plus self.
    Full,
}

impl Topology {
    fn code(self) -> u8 {
        match self {
            Topology::Line => 0,
            Topology::Full => 1,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Topology::Line),
            1 => Some(Topology::Full),
            _ => None,
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Topology::Line => "line",
            Topology::Full => "full",
        })
    }
}

/// Per-edge attributes. A graph carries at most one kind.
#[derive(Debug, Clone, PartialEq)]
pub enum EdgeAttr {
    None,
    /// One scalar per edge, aligned with `edges`.
    Weights(Vec<f64>),
    /// Row `e` is the feature vector of edge `e`.
    Features(Matrix),
}

/// Edge values for the sentiment-shift weighting scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftWeights {
    /// Linked utterances with different sentiment.
    pub shift: f64,
    /// Linked utterances with the same sentiment.
    pub noshift: f64,
    pub selfloop: f64,
}

impl ShiftWeights {
    /// Change = −1, no change = 1.
    pub const MELD: ShiftWeights = ShiftWeights {
        shift: -1.0,
        noshift: 1.0,
        selfloop: 1.0,
    };
    /// Change = 2, no change = 1.
    pub const IEMOCAP: ShiftWeights = ShiftWeights {
        shift: 2.0,
        noshift: 1.0,
        selfloop: 1.0,
    };
}

/// Which edge attribute to attach when building a graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeAttrKind {
    None,
    /// Sentiment-shift scalar weights (GCN).
    SsWeight,
    /// `[s_src, s_dst]` sentiment features (GATv2).
    SsFeature,
}

impl EdgeAttrKind {
    pub fn apply(self, graph: &ConvGraph, scheme: ShiftWeights) -> Result<ConvGraph> {
        match self {
            EdgeAttrKind::None => Ok(graph.without_attr()),
            EdgeAttrKind::SsWeight => attach_sentiment_weights(graph, scheme),
            EdgeAttrKind::SsFeature => attach_sentiment_edge_features(graph),
        }
    }
}

impl fmt::Display for EdgeAttrKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeAttrKind::None => "none",
            EdgeAttrKind::SsWeight => "ss-weight",
            EdgeAttrKind::SsFeature => "ss-feature",
        })
    }
}

impl std::str::FromStr for EdgeAttrKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(EdgeAttrKind::None),
            "ss-weight" => Ok(EdgeAttrKind::SsWeight),
            "ss-feature" => Ok(EdgeAttrKind::SsFeature),
            other => Err(Error::InvalidArgument(format!("unknown edge attribute {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Masks {
    pub train: Vec<bool>,
    pub dev: Vec<bool>,
    pub test: Vec<bool>,
}

impl Masks {
    fn from_splits(splits: &[Split]) -> Self {
        let of = |s: Split| splits.iter().map(|&x| x == s).collect();
        Masks {
            train: of(Split::Train),
            dev: of(Split::Dev),
            test: of(Split::Test),
        }
    }

    pub fn get(&self, split: Split) -> &[bool] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }
}

/// Directed sparse graph over the utterances of a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGraph {
    topology: Topology,
    edges: Vec<(usize, usize)>,
    /// `in_offsets[i]..in_offsets[i + 1]` indexes the edges whose dst is `i`.
    in_offsets: Vec<usize>,
    attr: EdgeAttr,
    conv_of: Vec<usize>,
    labels: Vec<usize>,
    sentiments: Vec<u8>,
    masks: Masks,
    utt_ids: Vec<String>,
    class_names: Vec<String>,
    features: Arc<Matrix>,
}

/// Node-level arrays needed to assemble a graph by hand.
#[derive(Debug, Clone)]
pub struct NodeTable {
    pub conv_of: Vec<usize>,
    pub labels: Vec<usize>,
    pub sentiments: Vec<u8>,
    pub splits: Vec<Split>,
    pub utt_ids: Vec<String>,
}

impl ConvGraph {
    /// Assembles a graph from raw parts, sorting edges into `(dst, src)` order
    /// and checking every structural invariant.
    pub fn from_parts(
        topology: Topology,
        nodes: NodeTable,
        class_names: Vec<String>,
        features: Arc<Matrix>,
        edges: Vec<(usize, usize)>,
        attr: EdgeAttr,
    ) -> Result<Self> {
        let n = nodes.conv_of.len();
        let bad = |msg: String| Err(Error::InvalidGraph(msg));
        if nodes.labels.len() != n
            || nodes.sentiments.len() != n
            || nodes.splits.len() != n
            || nodes.utt_ids.len() != n
        {
            return bad("node arrays have different lengths".into());
        }
        if features.rows() != n {
            return bad(format!("{} feature rows for {n} nodes", features.rows()));
        }
        let t = class_names.len();
        if let Some(i) = nodes.labels.iter().position(|&l| l >= t) {
            return bad(format!("node {i} label {} outside {t} classes", nodes.labels[i]));
        }

        let mut order: Vec<usize> = (0..edges.len()).collect();
        order.sort_by_key(|&e| (edges[e].1, edges[e].0));
        let sorted: Vec<(usize, usize)> = order.iter().map(|&e| edges[e]).collect();
        let attr = match attr {
            EdgeAttr::None => EdgeAttr::None,
            EdgeAttr::Weights(w) => {
                if w.len() != edges.len() {
                    return bad(format!("{} weights for {} edges", w.len(), edges.len()));
                }
                EdgeAttr::Weights(order.iter().map(|&e| w[e]).collect())
            }
            EdgeAttr::Features(f) => {
                if f.rows() != edges.len() {
                    return bad(format!("{} edge features for {} edges", f.rows(), edges.len()));
                }
                let mut out = Matrix::zeros(f.rows(), f.cols());
                for (k, &e) in order.iter().enumerate() {
                    out.row_mut(k).copy_from_slice(f.row(e));
                }
                EdgeAttr::Features(out)
            }
        };

        let mut in_offsets = vec![0usize; n + 1];
        let mut self_loops = vec![0usize; n];
        for (k, &(src, dst)) in sorted.iter().enumerate() {
            if src >= n || dst >= n {
                return bad(format!("edge {k} ({src}->{dst}) out of range for {n} nodes"));
            }
            if k > 0 && sorted[k - 1] == (src, dst) {
                return bad(format!("duplicate edge {src}->{dst}"));
            }
            if nodes.conv_of[src] != nodes.conv_of[dst] {
                return bad(format!("edge {src}->{dst} crosses conversations"));
            }
            if src == dst {
                self_loops[src] += 1;
            }
            in_offsets[dst + 1] += 1;
        }
        for i in 0..n {
            in_offsets[i + 1] += in_offsets[i];
        }
        if let Some(i) = self_loops.iter().position(|&c| c != 1) {
            return bad(format!("node {i} has {} self-loops", self_loops[i]));
        }

        let graph = ConvGraph {
            topology,
            edges: sorted,
            in_offsets,
            attr,
            conv_of: nodes.conv_of,
            labels: nodes.labels,
            sentiments: nodes.sentiments,
            masks: Masks::from_splits(&nodes.splits),
            utt_ids: nodes.utt_ids,
            class_names,
            features,
        };
        // Symmetry: each (src, dst) needs its reverse, with an equal weight.
        for (k, &(src, dst)) in graph.edges.iter().enumerate() {
            let Some(rev) = graph.find_edge(dst, src) else {
                return bad(format!("edge {src}->{dst} has no reverse"));
            };
            if let EdgeAttr::Weights(w) = &graph.attr {
                if w[k] != w[rev] {
                    return bad(format!("edge {src}<->{dst} has asymmetric weights"));
                }
            }
        }
        Ok(graph)
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn n_nodes(&self) -> usize {
        self.conv_of.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn n_conversations(&self) -> usize {
        self.conv_of.last().map_or(0, |&c| c + 1)
    }

    /// `(src, dst)` pairs sorted by `(dst, src)`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Edge index range of the in-edges of `node`.
    pub fn in_edges(&self, node: usize) -> std::ops::Range<usize> {
        self.in_offsets[node]..self.in_offsets[node + 1]
    }

    pub fn find_edge(&self, src: usize, dst: usize) -> Option<usize> {
        let range = self.in_edges(dst);
        self.edges[range.clone()]
            .binary_search_by_key(&src, |&(s, _)| s)
            .ok()
            .map(|k| range.start + k)
    }

    /// Number of neighbours of `node` counting its self-loop.
    pub fn degree(&self, node: usize) -> usize {
        self.in_edges(node).len()
    }

    pub fn attr(&self) -> &EdgeAttr {
        &self.attr
    }

    pub fn edge_weights(&self) -> Option<&[f64]> {
        match &self.attr {
            EdgeAttr::Weights(w) => Some(w),
            _ => None,
        }
    }

    pub fn edge_features(&self) -> Option<&Matrix> {
        match &self.attr {
            EdgeAttr::Features(f) => Some(f),
            _ => None,
        }
    }

    pub fn conv_of(&self) -> &[usize] {
        &self.conv_of
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sentiments(&self) -> &[u8] {
        &self.sentiments
    }

    pub fn masks(&self) -> &Masks {
        &self.masks
    }

    pub fn mask(&self, split: Split) -> &[bool] {
        self.masks.get(split)
    }

    pub fn utt_ids(&self) -> &[String] {
        &self.utt_ids
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn features(&self) -> &Arc<Matrix> {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Same graph with a different node-feature matrix.
    pub fn with_features(&self, features: Arc<Matrix>) -> Result<Self> {
        if features.rows() != self.n_nodes() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows for {} nodes",
                features.rows(),
                self.n_nodes()
            )));
        }
        let mut g = self.clone();
        g.features = features;
        Ok(g)
    }

    /// Drops any edge attributes.
    pub fn without_attr(&self) -> Self {
        let mut g = self.clone();
        g.attr = EdgeAttr::None;
        g
    }

    fn splits(&self) -> Vec<Split> {
        (0..self.n_nodes())
            .map(|i| {
                if self.masks.train[i] {
                    Split::Train
                } else if self.masks.dev[i] {
                    Split::Dev
                } else {
                    Split::Test
                }
            })
            .collect()
    }
}

/// Builds the line or fully-connected conversation graph of `corpus`.
pub fn build_graph(corpus: &Corpus, topology: Topology) -> Result<ConvGraph> {
    let report = validate_corpus(corpus);
    if !report.is_ok() {
        return Err(Error::InvalidCorpus(report.errors.len()));
    }
    let n = corpus.n_utterances();
    let mut nodes = NodeTable {
        conv_of: Vec::with_capacity(n),
        labels: Vec::with_capacity(n),
        sentiments: Vec::with_capacity(n),
        splits: Vec::with_capacity(n),
        utt_ids: Vec::with_capacity(n),
    };
    let mut edges = Vec::new();
    let mut base = 0;
    for (ci, conv) in corpus.conversations.iter().enumerate() {
        let len = conv.utterances.len();
        for u in &conv.utterances {
            nodes.conv_of.push(ci);
            nodes.labels.push(u.emotion);
            nodes.sentiments.push(u.sentiment);
            nodes.splits.push(u.split);
            nodes.utt_ids.push(u.utt_id.clone());
        }
        for i in 0..len {
            match topology {
                Topology::Line => {
                    let lo = i.saturating_sub(1);
                    let hi = (i + 1).min(len - 1);
                    for j in lo..=hi {
                        edges.push((base + j, base + i));
                    }
                }
                Topology::Full => {
                    for j in 0..len {
                        edges.push((base + j, base + i));
                    }
                }
            }
        }
        base += len;
    }
    ConvGraph::from_parts(
        topology,
        nodes,
        corpus.emotion_vocab.clone(),
        Arc::clone(&corpus.features),
        edges,
        EdgeAttr::None,
    )
}

/// Sets every edge weight from the sentiment of its endpoints. Existing
/// weights are replaced.
pub fn attach_sentiment_weights(graph: &ConvGraph, scheme: ShiftWeights) -> Result<ConvGraph> {
    if matches!(graph.attr, EdgeAttr::Features(_)) {
        return Err(Error::EdgeAttr(
            "graph already carries edge features; cannot add edge weights".into(),
        ));
    }
    let s = &graph.sentiments;
    let weights = graph
        .edges
        .iter()
        .map(|&(src, dst)| {
            if src == dst {
                scheme.selfloop
            } else if s[src] != s[dst] {
                scheme.shift
            } else {
                scheme.noshift
            }
        })
        .collect();
    let mut g = graph.clone();
    g.attr = EdgeAttr::Weights(weights);
    Ok(g)
}

/// Gives every edge the feature `[sentiment(src), sentiment(dst)]`.
pub fn attach_sentiment_edge_features(graph: &ConvGraph) -> Result<ConvGraph> {
    if matches!(graph.attr, EdgeAttr::Weights(_)) {
        return Err(Error::EdgeAttr(
            "graph already carries edge weights; cannot add edge features".into(),
        ));
    }
    let s = &graph.sentiments;
    let mut feats = Matrix::zeros(graph.n_edges(), SENTIMENT_FEATURE_DIM);
    for (k, &(src, dst)) in graph.edges.iter().enumerate() {
        feats[(k, 0)] = f64::from(s[src]);
        feats[(k, 1)] = f64::from(s[dst]);
    }
    let mut g = graph.clone();
    g.attr = EdgeAttr::Features(feats);
    Ok(g)
}

// ---------------------------------------------------------------------------
// Normalized adjacency

/// `D^{-1/2} A D^{-1/2}` in compressed-row form, column indices sorted per row.
#[derive(Debug, Clone, PartialEq)]
pub struct NormAdj {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl NormAdj {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        (&self.col_indices[r.clone()], &self.values[r])
    }

    /// Entry `(i, j)`, zero when absent.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn to_dense(&self) -> Matrix {
        let mut out = Matrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                out[(i, j)] = v;
            }
        }
        out
    }

    /// `Â · x`. Each output row accumulates its columns in ascending order,
    /// so the result is independent of the worker count.
    pub fn spmm(&self, x: &Matrix) -> Matrix {
        assert_eq!(x.rows(), self.n, "spmm: {} rows for {}x{} operator", x.rows(), self.n, self.n);
        let k = x.cols();
        let mut out = Matrix::zeros(self.n, k);
        if k == 0 {
            return out;
        }
        let kernel = |(i, orow): (usize, &mut [f64])| {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                for (o, &b) in orow.iter_mut().zip(x.row(j)) {
                    *o += v * b;
                }
            }
        };
        if self.n >= 256 {
            out.as_mut_slice().par_chunks_mut(k).enumerate().for_each(kernel);
        } else {
            out.as_mut_slice().chunks_mut(k).enumerate().for_each(kernel);
        }
        out
    }

    /// `Âᵀ · x`, scattering rows in ascending order.
    pub fn spmm_t(&self, x: &Matrix) -> Matrix {
        assert_eq!(x.rows(), self.n, "spmm_t: {} rows for {}x{} operator", x.rows(), self.n, self.n);
        let mut out = Matrix::zeros(self.n, x.cols());
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let xi = x.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                for (o, &b) in out.row_mut(j).iter_mut().zip(xi) {
                    *o += v * b;
                }
            }
        }
        out
    }
}

/// Symmetric-normalized adjacency using the graph's edge weights (unit
/// weights when it has none). Degrees sum absolute weights so that negative
/// shift weights still give a positive degree.
pub fn normalize_adjacency(graph: &ConvGraph) -> Result<NormAdj> {
    normalize_with(graph, graph.edge_weights())
}

/// As [`normalize_adjacency`] but ignoring any edge weights.
pub fn normalize_adjacency_unweighted(graph: &ConvGraph) -> Result<NormAdj> {
    normalize_with(graph, None)
}

fn normalize_with(graph: &ConvGraph, weights: Option<&[f64]>) -> Result<NormAdj> {
    let n = graph.n_nodes();
    let w = |k: usize| weights.map_or(1.0, |w| w[k]);
    let mut inv_sqrt = vec![0.0; n];
    for (i, d) in inv_sqrt.iter_mut().enumerate() {
        let deg: f64 = graph.in_edges(i).map(|k| w(k).abs()).sum();
        if deg == 0.0 || !deg.is_finite() {
            return Err(Error::ZeroDegree(i));
        }
        *d = 1.0 / deg.sqrt();
    }
    let mut col_indices = Vec::with_capacity(graph.n_edges());
    let mut values = Vec::with_capacity(graph.n_edges());
    for (k, &(src, dst)) in graph.edges.iter().enumerate() {
        col_indices.push(src);
        values.push(w(k) * inv_sqrt[dst] * inv_sqrt[src]);
    }
    Ok(NormAdj {
        n,
        row_offsets: graph.in_offsets.clone(),
        col_indices,
        values,
    })
}

// ---------------------------------------------------------------------------
// Graph file
//
// Layout, all integers little-endian:
//   magic "LCGRF01" | topology:u8 | n_nodes:u32 | n_edges:u32 | n_classes:u32
//   class names: n_classes × (len:u32, utf-8)
//   nodes: n_nodes × (conv:u32, label:u32, sentiment:u8, split:u8, utt_id len:u32 + utf-8)
//   edges: n_edges × (src:u32, dst:u32)
//   attr tag:u8 (0 none, 1 weights, 2 features)
//     1: n_edges × f64
//     2: dim:u32, n_edges × dim × f64
//   features: rows:u32, cols:u32, rows × cols × f64 row-major

pub fn encode_graph(graph: &ConvGraph) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(GRAPH_MAGIC);
    w.u8(graph.topology.code());
    w.u32(len_u32(graph.n_nodes()));
    w.u32(len_u32(graph.n_edges()));
    w.u32(len_u32(graph.n_classes()));
    for name in &graph.class_names {
        w.str(name);
    }
    let splits = graph.splits();
    for (i, split) in splits.iter().enumerate() {
        w.u32(len_u32(graph.conv_of[i]));
        w.u32(len_u32(graph.labels[i]));
        w.u8(graph.sentiments[i]);
        w.u8(split.code());
        w.str(&graph.utt_ids[i]);
    }
    for &(src, dst) in &graph.edges {
        w.u32(len_u32(src));
        w.u32(len_u32(dst));
    }
    match &graph.attr {
        EdgeAttr::None => w.u8(0),
        EdgeAttr::Weights(ws) => {
            w.u8(1);
            ws.iter().for_each(|&x| w.f64(x));
        }
        EdgeAttr::Features(f) => {
            w.u8(2);
            w.u32(len_u32(f.cols()));
            f.as_slice().iter().for_each(|&x| w.f64(x));
        }
    }
    w.u32(len_u32(graph.features.rows()));
    w.u32(len_u32(graph.features.cols()));
    graph.features.as_slice().iter().for_each(|&x| w.f64(x));
    w.into_inner()
}

pub fn decode_graph(bytes: &[u8]) -> Result<ConvGraph> {
    let mut r = Reader::new(bytes);
    r.expect_magic(GRAPH_MAGIC)?;
    let topology = Topology::from_code(r.u8()?)
        .ok_or_else(|| Error::Format("unknown topology code".into()))?;
    let n = r.u32()? as usize;
    let n_edges = r.u32()? as usize;
    let n_classes = r.u32()? as usize;
    let class_names = (0..n_classes).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    let mut nodes = NodeTable {
        conv_of: Vec::with_capacity(n),
        labels: Vec::with_capacity(n),
        sentiments: Vec::with_capacity(n),
        splits: Vec::with_capacity(n),
        utt_ids: Vec::with_capacity(n),
    };
    for _ in 0..n {
        nodes.conv_of.push(r.u32()? as usize);
        nodes.labels.push(r.u32()? as usize);
        nodes.sentiments.push(r.u8()?);
        nodes
            .splits
            .push(Split::from_code(r.u8()?).ok_or_else(|| Error::Format("unknown split code".into()))?);
        nodes.utt_ids.push(r.str()?);
    }
    let mut edges = Vec::with_capacity(n_edges);
    for _ in 0..n_edges {
        edges.push((r.u32()? as usize, r.u32()? as usize));
    }
    let attr = match r.u8()? {
        0 => EdgeAttr::None,
        1 => EdgeAttr::Weights((0..n_edges).map(|_| r.f64()).collect::<Result<_>>()?),
        2 => {
            let dim = r.u32()? as usize;
            let data = (0..n_edges * dim).map(|_| r.f64()).collect::<Result<_>>()?;
            EdgeAttr::Features(Matrix::from_vec(n_edges, dim, data))
        }
        t => return Err(Error::Format(format!("unknown edge attribute tag {t}"))),
    };
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let data = (0..rows * cols).map(|_| r.f64()).collect::<Result<_>>()?;
    r.finish()?;
    ConvGraph::from_parts(
        topology,
        nodes,
        class_names,
        Arc::new(Matrix::from_vec(rows, cols, data)),
        edges,
        attr,
    )
}

pub fn save_graph(graph: &ConvGraph, path: &Path) -> Result<()> {
    fs::write(path, encode_graph(graph)).map_err(|e| Error::io(path, e))
}

pub fn load_graph(path: &Path) -> Result<ConvGraph> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_graph(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Conversation, Utterance};

    /// Conversations of the given lengths with the given sentiments.
    fn corpus_with(sizes: &[usize], sentiments: &[u8]) -> Corpus {
        let mut k = 0;
        let conversations = sizes
            .iter()
            .enumerate()
            .map(|(ci, &len)| Conversation {
                conv_id: format!("C{}", ci + 1),
                utterances: (0..len)
                    .map(|_| {
                        k += 1;
                        Utterance {
                            utt_id: format!("u{k}"),
                            text: None,
                            speaker: None,
                            emotion: 0,
                            sentiment: sentiments[k - 1],
                            split: Split::Train,
                        }
                    })
                    .collect(),
            })
            .collect();
        let n: usize = sizes.iter().sum();
        Corpus {
            conversations,
            emotion_vocab: vec!["neutral".into(), "joy".into()],
            features: Arc::new(Matrix::zeros(n, 2)),
        }
    }

    #[test]
    fn three_conversation_line_graph() {
        let c = corpus_with(&[3, 4, 2], &[1; 9]);
        let g = build_graph(&c, Topology::Line).unwrap();
        assert_eq!(g.n_nodes(), 9);
        assert_eq!(g.n_edges(), 21);
        let non_self = g.edges().iter().filter(|(s, d)| s != d).count();
        assert_eq!(non_self, 12);
        // u4 (index 3) starts C2: neighbours u5 and itself only.
        let mut nb: Vec<usize> = g.in_edges(3).map(|k| g.edges()[k].0).collect();
        nb.sort();
        assert_eq!(nb, vec![3, 4]);
        let degrees: Vec<usize> = (0..9).map(|i| g.degree(i)).collect();
        assert_eq!(degrees, vec![2, 3, 2, 2, 3, 3, 2, 2, 2]);
    }

    #[test]
    fn singleton_conversation_has_only_self_loop() {
        let c = corpus_with(&[1, 2], &[1; 3]);
        let g = build_graph(&c, Topology::Line).unwrap();
        assert_eq!(g.in_edges(0).len(), 1);
        assert_eq!(g.edges()[g.in_edges(0).start], (0, 0));
    }

    #[test]
    fn full_topology_counts() {
        let c = corpus_with(&[4], &[1; 4]);
        let g = build_graph(&c, Topology::Full).unwrap();
        assert_eq!(g.n_edges(), 16);
    }

    #[test]
    fn sentiment_weights_meld_and_iemocap() {
        // neutral, negative, positive, positive
        let c = corpus_with(&[4], &[1, 0, 2, 2]);
        let g = build_graph(&c, Topology::Line).unwrap();
        let meld = attach_sentiment_weights(&g, ShiftWeights::MELD).unwrap();
        let w = |g: &ConvGraph, s, d| g.edge_weights().unwrap()[g.find_edge(s, d).unwrap()];
        assert_eq!(w(&meld, 0, 1), -1.0);
        assert_eq!(w(&meld, 2, 3), 1.0);
        assert_eq!(w(&meld, 1, 1), 1.0);
        let iemo = attach_sentiment_weights(&g, ShiftWeights::IEMOCAP).unwrap();
        assert_eq!(w(&iemo, 0, 1), 2.0);
        assert_eq!(w(&iemo, 1, 0), 2.0);
        assert_eq!(w(&iemo, 3, 2), 1.0);
        assert_eq!(meld.edges(), g.edges());
    }

    #[test]
    fn sentiment_edge_features_follow_src_dst() {
        // C3 of the running example: u8 neutral, u9 negative.
        let c = corpus_with(&[2, 1], &[1, 0, 2]);
        let g = attach_sentiment_edge_features(&build_graph(&c, Topology::Line).unwrap()).unwrap();
        let f = |s, d| g.edge_features().unwrap().row(g.find_edge(s, d).unwrap()).to_vec();
        assert_eq!(f(0, 1), vec![1.0, 0.0]);
        assert_eq!(f(1, 0), vec![0.0, 1.0]);
        assert_eq!(f(2, 2), vec![2.0, 2.0]);
    }

    #[test]
    fn attributes_are_exclusive() {
        let c = corpus_with(&[2], &[1, 0]);
        let g = build_graph(&c, Topology::Line).unwrap();
        let gw = attach_sentiment_weights(&g, ShiftWeights::MELD).unwrap();
        assert!(matches!(attach_sentiment_edge_features(&gw), Err(Error::EdgeAttr(_))));
        let gf = attach_sentiment_edge_features(&g).unwrap();
        assert!(matches!(
            attach_sentiment_weights(&gf, ShiftWeights::MELD),
            Err(Error::EdgeAttr(_))
        ));
    }

    #[test]
    fn normalized_worked_examples() {
        let c = corpus_with(&[3], &[1; 3]);
        let a = normalize_adjacency(&build_graph(&c, Topology::Line).unwrap()).unwrap();
        assert!((a.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((a.get(0, 1) - 1.0 / 6f64.sqrt()).abs() < 1e-15);
        assert!((a.get(1, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(a.get(0, 2), 0.0);

        let c = corpus_with(&[1], &[1]);
        let a = normalize_adjacency(&build_graph(&c, Topology::Line).unwrap()).unwrap();
        assert_eq!(a.to_dense(), Matrix::from_rows(&[vec![1.0]]));

        let c = corpus_with(&[2], &[1, 0]);
        let g = attach_sentiment_weights(&build_graph(&c, Topology::Line).unwrap(), ShiftWeights::MELD)
            .unwrap();
        let a = normalize_adjacency(&g).unwrap();
        let want = Matrix::from_rows(&[vec![0.5, -0.5], vec![-0.5, 0.5]]);
        assert!(a.to_dense().max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn zero_degree_is_an_error() {
        let c = corpus_with(&[2], &[1, 0]);
        let g = build_graph(&c, Topology::Line).unwrap();
        let g = attach_sentiment_weights(
            &g,
            ShiftWeights {
                shift: 0.0,
                noshift: 0.0,
                selfloop: 0.0,
            },
        )
        .unwrap();
        assert!(matches!(normalize_adjacency(&g), Err(Error::ZeroDegree(0))));
    }

    #[test]
    fn from_parts_rejects_broken_structure() {
        let c = corpus_with(&[2, 1], &[1; 3]);
        let g = build_graph(&c, Topology::Line).unwrap();
        let nodes = NodeTable {
            conv_of: g.conv_of().to_vec(),
            labels: g.labels().to_vec(),
            sentiments: g.sentiments().to_vec(),
            splits: vec![Split::Train; 3],
            utt_ids: g.utt_ids().to_vec(),
        };
        let build = |edges: Vec<(usize, usize)>| {
            ConvGraph::from_parts(
                Topology::Line,
                nodes.clone(),
                g.class_names().to_vec(),
                Arc::clone(g.features()),
                edges,
                EdgeAttr::None,
            )
        };
        // missing self-loop on node 2
        assert!(build(vec![(0, 0), (1, 1), (0, 1), (1, 0)]).is_err());
        // cross-conversation edge
        assert!(build(vec![(0, 0), (1, 1), (2, 2), (1, 2), (2, 1)]).is_err());
        // missing reverse
        assert!(build(vec![(0, 0), (1, 1), (2, 2), (0, 1)]).is_err());
        // unsorted but valid input is accepted and sorted
        let ok = build(vec![(1, 0), (2, 2), (0, 1), (1, 1), (0, 0)]).unwrap();
        assert_eq!(ok.edges(), g.edges());
    }

    #[test]
    fn graph_file_roundtrip() {
        let c = corpus_with(&[3, 4, 2], &[1, 0, 2, 2, 1, 1, 0, 1, 0]);
        let g = build_graph(&c, Topology::Line).unwrap();
        for g in [
            g.clone(),
            attach_sentiment_weights(&g, ShiftWeights::MELD).unwrap(),
            attach_sentiment_edge_features(&g).unwrap(),
        ] {
            let bytes = encode_graph(&g);
            assert_eq!(&bytes[..7], GRAPH_MAGIC);
            let back = decode_graph(&bytes).unwrap();
            assert_eq!(back, g);
            assert_eq!(encode_graph(&back), bytes);
        }
    }
}
