//! Full-batch training, model selection on dev weighted F1, and evaluation.

mod metrics;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::congraph::ConvGraph;
use crate::corpus::Split;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{masked_softmax_cross_entropy, Checkpoint, ModelConfig, ModelInput};
use crate::optim::{AdamWConfig, AdamWState};

pub use metrics::{compute_metrics, confusion_csv, ClassMetrics, Metrics};

pub const DEFAULT_MAX_EPOCHS: usize = 300;
pub const DEFAULT_PATIENCE: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// Epochs without a dev weighted-F1 improvement before stopping.
    pub patience: usize,
    pub model: ModelConfig,
    pub optimizer: AdamWConfig,
}

impl TrainConfig {
    pub fn new(model: ModelConfig) -> Self {
        Self {
            max_epochs: DEFAULT_MAX_EPOCHS,
            patience: DEFAULT_PATIENCE,
            model,
            optimizer: AdamWConfig::default(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.model.seed
    }

    pub fn validate(&self) -> Result<()> {
        if self.patience > self.max_epochs {
            return Err(Error::InvalidArgument(format!(
                "patience ({}) exceeds max_epochs ({})",
                self.patience, self.max_epochs
            )));
        }
        self.model.validate()?;
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Train loss of the parameters after `epoch` updates.
    pub train_loss: f64,
    /// Dev weighted F1 of the same parameters; absent without a dev split.
    pub dev_weighted_f1: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Epoch 0 is the initialization.
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Seconds spent per epoch; excluded from serialized histories so they
    /// stay reproducible.
    #[serde(skip)]
    pub epoch_seconds: Vec<f64>,
}

impl PartialEq for TrainHistory {
    fn eq(&self, other: &Self) -> bool {
        self.epochs == other.epochs && self.best_epoch == other.best_epoch
    }
}

fn check_graph_fits(config: &ModelConfig, graph: &ConvGraph) -> Result<()> {
    if config.n_classes != graph.n_classes() {
        return Err(Error::DimensionMismatch(format!(
            "model has {} classes, graph has {}",
            config.n_classes,
            graph.n_classes()
        )));
    }
    Ok(())
}

fn predictions(logits: &Matrix) -> Vec<usize> {
    (0..logits.rows()).map(|i| logits.row_argmax(i)).collect()
}

fn masked(mask: &[bool], xs: &[usize]) -> Vec<usize> {
    xs.iter().zip(mask).filter(|(_, &m)| m).map(|(&x, _)| x).collect()
}

fn split_metrics(logits: &Matrix, graph: &ConvGraph, split: Split) -> Result<Metrics> {
    let mask = graph.mask(split);
    if !mask.iter().any(|&b| b) {
        return Err(Error::EmptyMask(split.as_str()));
    }
    let preds = predictions(logits);
    compute_metrics(&masked(mask, graph.labels()), &masked(mask, &preds), graph.n_classes())
}

/// Trains one model full-batch: one AdamW step per epoch over all parameters.
///
/// Each epoch runs a single forward pass whose logits give both the train
/// loss and the dev weighted F1. The returned checkpoint holds the
/// parameters (and optimizer state) of the best dev epoch, earliest on ties.
/// Without dev nodes there is no early stopping and the last epoch is kept.
pub fn train(graph: &ConvGraph, config: &TrainConfig) -> Result<(Checkpoint, TrainHistory)> {
    config.validate()?;
    check_graph_fits(&config.model, graph)?;
    let train_mask = graph.mask(Split::Train);
    if !train_mask.iter().any(|&b| b) {
        return Err(Error::EmptyMask("train"));
    }
    let has_dev = graph.mask(Split::Dev).iter().any(|&b| b);

    let input = ModelInput::new(graph, &config.model)?;
    let mut params = input.init_params(&config.model)?;
    let mut opt = AdamWState::new(config.optimizer, &params);

    let mut history = TrainHistory {
        epochs: Vec::with_capacity(config.max_epochs + 1),
        best_epoch: 0,
        epoch_seconds: Vec::with_capacity(config.max_epochs + 1),
    };
    let mut best: Option<(f64, Checkpoint)> = None;

    for epoch in 0..=config.max_epochs {
        let started = Instant::now();
        let (logits, tape) = input.forward(&params)?;
        let (loss, dlogits) = masked_softmax_cross_entropy(&logits, graph.labels(), train_mask)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("train loss {loss} at epoch {epoch}")));
        }
        let dev_f1 = if has_dev {
            Some(split_metrics(&logits, graph, Split::Dev)?.weighted_f1)
        } else {
            None
        };
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss,
            dev_weighted_f1: dev_f1,
        });

        let improved = match (dev_f1, &best) {
            (Some(f1), Some((best_f1, _))) => f1 > *best_f1,
            (Some(_), None) => true,
            (None, _) => epoch == config.max_epochs,
        };
        if improved {
            history.best_epoch = epoch;
            best = Some((
                dev_f1.unwrap_or(f64::NAN),
                Checkpoint {
                    config: config.model.clone(),
                    params: params.clone(),
                    optimizer: Some(opt.clone()),
                },
            ));
        }
        let stop = epoch == config.max_epochs
            || (has_dev && epoch - history.best_epoch >= config.patience && !improved);
        if !stop {
            let grads = input.backward(&params, &tape, &dlogits)?;
            opt.step(&mut params, &grads)?;
        }
        history.epoch_seconds.push(started.elapsed().as_secs_f64());
        if stop {
            break;
        }
    }
    let (_, ckpt) = best.expect("epoch 0 always records a candidate");
    Ok((ckpt, history))
}

fn checkpoint_logits(ckpt: &Checkpoint, graph: &ConvGraph) -> Result<Matrix> {
    check_graph_fits(&ckpt.config, graph)?;
    if ckpt.in_dim() != graph.feature_dim() {
        return Err(Error::DimensionMismatch(format!(
            "checkpoint expects {}-dim features, graph has {}",
            ckpt.in_dim(),
            graph.feature_dim()
        )));
    }
    let input = ModelInput::new(graph, &ckpt.config)?;
    input.logits(&ckpt.params)
}

/// Metrics of the checkpoint's argmax predictions on the nodes of `split`.
pub fn evaluate(ckpt: &Checkpoint, graph: &ConvGraph, split: Split) -> Result<Metrics> {
    if !graph.mask(split).iter().any(|&b| b) {
        return Err(Error::EmptyMask(split.as_str()));
    }
    let logits = checkpoint_logits(ckpt, graph)?;
    split_metrics(&logits, graph, split)
}

/// Predicted emotion index for every node (argmax, lowest index on ties).
pub fn predict(ckpt: &Checkpoint, graph: &ConvGraph) -> Result<Vec<usize>> {
    Ok(predictions(&checkpoint_logits(ckpt, graph)?))
}

/// Self-describing evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub split: Split,
    pub n_nodes: usize,
    pub class_names: Vec<String>,
    pub metrics: Metrics,
}

impl MetricsReport {
    pub fn new(split: Split, class_names: &[String], metrics: Metrics) -> Self {
        Self {
            split,
            n_nodes: metrics.confusion.iter().flatten().sum::<u64>() as usize,
            class_names: class_names.to_vec(),
            metrics,
        }
    }
}
