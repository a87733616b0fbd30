//! Line conversation graphs for emotion recognition in conversations.
//!
//! A corpus of conversations becomes one disjoint graph whose nodes are
//! utterances. Each utterance links to its predecessor, its successor and
//! itself (the *line* topology), or to every utterance of its conversation
//! (the *full* baseline). Sentiment changes between linked utterances can be
//! attached as scalar edge weights (for GCN) or as `[s_src, s_dst]` edge
//! features (for GATv2).
//!
//! Two-layer GCN and GATv2 node classifiers are trained full-batch with
//! AdamW. Forward and backward passes are written by hand in `f64` and
//! checked against finite differences (see [`nn::gradcheck`]).
//!
//! ```no_run
//! use linecon_core::{congraph, corpus, nn, train};
//!
//! let corpus = corpus::synth_corpus(&corpus::SynthSpec::default()).unwrap();
//! let graph = congraph::build_graph(&corpus, congraph::Topology::Line).unwrap();
//! let config = train::TrainConfig::new(nn::ModelConfig::gcn(64, corpus.n_classes(), 7));
//! let (ckpt, history) = train::train(&graph, &config).unwrap();
//! let metrics = train::evaluate(&ckpt, &graph, corpus::Split::Test).unwrap();
//! println!("best epoch {} test wF1 {:.4}", history.best_epoch, metrics.weighted_f1);
//! ```

pub mod binio;
pub mod congraph;
pub mod corpus;
pub mod error;
pub mod matrix;
pub mod nn;
pub mod optim;
pub mod train;

pub use error::{Error, Result};
pub use matrix::Matrix;
