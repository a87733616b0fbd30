//! Conversation corpora: manifest + feature-matrix loading, validation, and a
//! seeded synthetic generator for desk-scale experiments.
//!
//! Every downstream array (labels, masks, feature rows) is indexed by the
//! *global node index*: conversations in manifest order, utterances in
//! temporal order within each conversation.
//!
//! # Manifest format
//!
//! UTF-8 JSON lines. Line 1 is a header, every following non-blank line is a
//! conversation:
//!
//! ```text
//! {"format":"linecon-manifest","version":1,"emotions":["anger","joy","neutral"]}
//! {"conv_id":"d0","utterances":[{"utt_id":"d0_u0","text":"hi","speaker":"A","emotion":"joy","sentiment":2,"split":"train"}]}
//! ```
//!
//! The header may carry `"feature_dim": n`, which is then checked against the
//! feature file.
//!
//! # Feature file format
//!
//! `b"LCFEAT01"`, `rows: u32 LE`, `cols: u32 LE`, then `rows * cols` IEEE-754
//! `f32` little-endian values in row-major order. Values are widened to `f64`
//! on load.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio::{len_u32, Reader, Writer};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const FEATURE_MAGIC: &[u8; 8] = b"LCFEAT01";
pub const MANIFEST_FORMAT: &str = "linecon-manifest";
pub const MANIFEST_VERSION: u32 = 1;

/// Sentiment codes: 0 = negative, 1 = neutral, 2 = positive.
pub const SENTIMENT_NEGATIVE: u8 = 0;
pub const SENTIMENT_NEUTRAL: u8 = 1;
pub const SENTIMENT_POSITIVE: u8 = 2;
pub const N_SENTIMENTS: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Dev => 1,
            Split::Test => 2,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Split> {
        match c {
            0 => Some(Split::Train),
            1 => Some(Split::Dev),
            2 => Some(Split::Test),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub utt_id: String,
    pub text: Option<String>,
    /// Kept so manifests round-trip; no model path reads it.
    pub speaker: Option<String>,
    pub emotion: usize,
    pub sentiment: u8,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conversation {
    pub conv_id: String,
    pub utterances: Vec<Utterance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub conversations: Vec<Conversation>,
    pub emotion_vocab: Vec<String>,
    /// Row `i` is the feature of global utterance `i`.
    pub features: Arc<Matrix>,
}

impl Corpus {
    pub fn n_utterances(&self) -> usize {
        self.conversations.iter().map(|c| c.utterances.len()).sum()
    }

    pub fn n_classes(&self) -> usize {
        self.emotion_vocab.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Utterances in global node order.
    pub fn utterances(&self) -> impl Iterator<Item = &Utterance> {
        self.conversations.iter().flat_map(|c| c.utterances.iter())
    }

    pub fn split_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for u in self.utterances() {
            counts[u.split.code() as usize] += 1;
        }
        counts
    }
}

// ---------------------------------------------------------------------------
// Manifest records

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestHeader {
    format: String,
    version: u32,
    emotions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature_dim: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConversationRecord {
    conv_id: String,
    utterances: Vec<UtteranceRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UtteranceRecord {
    utt_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    speaker: Option<String>,
    emotion: String,
    sentiment: u8,
    split: Split,
}

/// Loads a manifest and its aligned feature matrix.
///
/// Structural problems (malformed lines, unknown emotion names, feature
/// misalignment) are errors. Semantic invariants such as unique ids or the
/// sentiment range are left to [`validate_corpus`].
pub fn load_corpus(manifest_path: &Path, features_path: &Path) -> Result<Corpus> {
    let text =
        fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let (emotion_vocab, declared_dim, conversations) = parse_manifest(&text)?;
    let features = read_features(features_path)?;

    let n_utts: usize = conversations.iter().map(|c| c.utterances.len()).sum();
    if features.rows() != n_utts {
        return Err(Error::FeatureRowMismatch {
            utterances: n_utts,
            rows: features.rows(),
        });
    }
    if let Some(dim) = declared_dim {
        if dim != features.cols() {
            return Err(Error::FeatureDimMismatch {
                declared: dim,
                found: features.cols(),
            });
        }
    }
    Ok(Corpus {
        conversations,
        emotion_vocab,
        features: Arc::new(features),
    })
}

type ParsedManifest = (Vec<String>, Option<usize>, Vec<Conversation>);

fn parse_manifest(text: &str) -> Result<ParsedManifest> {
    let mut lines = text.lines().enumerate();
    let (_, header_line) = lines.next().ok_or(Error::Manifest {
        line: 1,
        message: "empty manifest (missing header)".into(),
    })?;
    let header: ManifestHeader =
        serde_json::from_str(header_line).map_err(|e| Error::Manifest {
            line: 1,
            message: format!("bad header: {e}"),
        })?;
    if header.format != MANIFEST_FORMAT {
        return Err(Error::Manifest {
            line: 1,
            message: format!("format {:?}, expected {MANIFEST_FORMAT:?}", header.format),
        });
    }
    if header.version != MANIFEST_VERSION {
        return Err(Error::Manifest {
            line: 1,
            message: format!("unsupported version {}", header.version),
        });
    }
    let vocab_index: HashMap<&str, usize> = header
        .emotions
        .iter()
        .enumerate()
        .map(|(i, e)| (e.as_str(), i))
        .collect();

    let body: Vec<(usize, &str)> = lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l))
        .collect();

    let conversations = body
        .par_iter()
        .map(|&(line, raw)| {
            let rec: ConversationRecord =
                serde_json::from_str(raw).map_err(|e| Error::Manifest {
                    line,
                    message: e.to_string(),
                })?;
            let utterances = rec
                .utterances
                .into_iter()
                .map(|u| {
                    let emotion = *vocab_index.get(u.emotion.as_str()).ok_or_else(|| {
                        Error::UnknownEmotion {
                            line,
                            name: u.emotion.clone(),
                        }
                    })?;
                    Ok(Utterance {
                        utt_id: u.utt_id,
                        text: u.text,
                        speaker: u.speaker,
                        emotion,
                        sentiment: u.sentiment,
                        split: u.split,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Conversation {
                conv_id: rec.conv_id,
                utterances,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok((header.emotions, header.feature_dim, conversations))
}

/// Writes `corpus` as a manifest plus feature file. Features are narrowed to
/// `f32`, so the round trip is exact for any corpus whose features are
/// `f32`-representable (every loaded or synthesized corpus is).
pub fn write_corpus(corpus: &Corpus, manifest_path: &Path, features_path: &Path) -> Result<()> {
    let mut out = String::new();
    let header = ManifestHeader {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        emotions: corpus.emotion_vocab.clone(),
        feature_dim: Some(corpus.feature_dim()),
    };
    out.push_str(&serde_json::to_string(&header).expect("header serializes"));
    out.push('\n');
    for conv in &corpus.conversations {
        let rec = ConversationRecord {
            conv_id: conv.conv_id.clone(),
            utterances: conv
                .utterances
                .iter()
                .map(|u| -> Result<UtteranceRecord> {
                    let emotion = corpus.emotion_vocab.get(u.emotion).ok_or_else(|| {
                        Error::InvalidArgument(format!(
                            "utterance {} has emotion index {} outside the vocabulary",
                            u.utt_id, u.emotion
                        ))
                    })?;
                    Ok(UtteranceRecord {
                        utt_id: u.utt_id.clone(),
                        text: u.text.clone(),
                        speaker: u.speaker.clone(),
                        emotion: emotion.clone(),
                        sentiment: u.sentiment,
                        split: u.split,
                    })
                })
                .collect::<Result<_>>()?,
        };
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    fs::write(manifest_path, out).map_err(|e| Error::io(manifest_path, e))?;
    write_features(&corpus.features, features_path)
}

pub fn encode_features(features: &Matrix) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(FEATURE_MAGIC);
    w.u32(len_u32(features.rows()));
    w.u32(len_u32(features.cols()));
    for &x in features.as_slice() {
        w.f32(x as f32);
    }
    w.into_inner()
}

pub fn decode_features(bytes: &[u8]) -> Result<Matrix> {
    let mut r = Reader::new(bytes);
    r.expect_magic(FEATURE_MAGIC)?;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("feature matrix too large".into()))?;
    if r.remaining() != expected {
        return Err(Error::Format(format!(
            "feature payload is {} bytes, header implies {rows}x{cols} f32 = {expected}",
            r.remaining()
        )));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(f64::from(r.f32()?));
    }
    Ok(Matrix::from_vec(rows, cols, data))
}

pub fn read_features(path: &Path) -> Result<Matrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes)
}

pub fn write_features(features: &Matrix, path: &Path) -> Result<()> {
    fs::write(path, encode_features(features)).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Issue {
    pub location: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    fn error(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.errors.push(Issue {
            location: location.into(),
            message: message.into(),
        });
    }

    fn warn(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.warnings.push(Issue {
            location: location.into(),
            message: message.into(),
        });
    }
}

fn utt_location(ci: usize, conv: &Conversation, ui: usize, utt: &Utterance) -> String {
    format!(
        "conversation {ci} ({:?}) utterance {ui} ({:?})",
        conv.conv_id, utt.utt_id
    )
}

pub fn validate_corpus(corpus: &Corpus) -> ValidationReport {
    let mut report = ValidationReport::default();
    let t = corpus.emotion_vocab.len();

    if t < 2 {
        report.error("header", format!("emotion vocabulary has {t} label(s), need at least 2"));
    }
    let mut seen_emotions: HashMap<&str, usize> = HashMap::new();
    for (i, name) in corpus.emotion_vocab.iter().enumerate() {
        if let Some(prev) = seen_emotions.insert(name, i) {
            report.error(
                "header",
                format!("duplicate emotion name {name:?} at positions {prev} and {i}"),
            );
        }
    }

    if corpus.conversations.is_empty() {
        report.warn("corpus", "no conversations");
    }

    let mut seen_utts: HashMap<&str, String> = HashMap::new();
    let mut seen_convs: HashMap<&str, usize> = HashMap::new();
    for (ci, conv) in corpus.conversations.iter().enumerate() {
        if let Some(prev) = seen_convs.insert(&conv.conv_id, ci) {
            report.warn(
                format!("conversation {ci}"),
                format!("conv_id {:?} also used by conversation {prev}", conv.conv_id),
            );
        }
        if conv.utterances.is_empty() {
            report.error(
                format!("conversation {ci} ({:?})", conv.conv_id),
                "empty conversation",
            );
        }
        for (ui, utt) in conv.utterances.iter().enumerate() {
            let loc = utt_location(ci, conv, ui, utt);
            if utt.emotion >= t {
                report.error(
                    loc.clone(),
                    format!("emotion index {} out of range (vocabulary size {t})", utt.emotion),
                );
            }
            if utt.sentiment >= N_SENTIMENTS {
                report.error(
                    loc.clone(),
                    format!("sentiment out of range: {} (expected 0, 1 or 2)", utt.sentiment),
                );
            }
            if let Some(prev) = seen_utts.get(utt.utt_id.as_str()) {
                report.error(
                    loc.clone(),
                    format!("duplicate utt_id {:?}, first seen at {prev}", utt.utt_id),
                );
            } else {
                seen_utts.insert(&utt.utt_id, loc);
            }
        }
    }

    let n = corpus.n_utterances();
    if corpus.features.rows() != n {
        report.error(
            "features",
            format!(
                "feature-row count mismatch: {n} utterances but {} rows",
                corpus.features.rows()
            ),
        );
    }
    if corpus.features.cols() == 0 {
        report.error("features", "feature dimension is zero");
    }
    if !corpus.features.is_finite() {
        report.error("features", "feature matrix contains non-finite values");
    }

    let counts = corpus.split_counts();
    for split in Split::ALL {
        if counts[split.code() as usize] == 0 {
            report.warn("splits", format!("no {split} utterances"));
        }
    }
    report
}

// ---------------------------------------------------------------------------
// Synthetic corpora

/// Parameters for [`synth_corpus`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_convs: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub n_classes: usize,
    pub dim: usize,
    pub noise: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            n_convs: 200,
            min_len: 3,
            max_len: 8,
            n_classes: 4,
            dim: 16,
            noise: 0.3,
        }
    }
}

/// Shortest stretch of one emotion inside a synthetic conversation.
pub const SYNTH_MIN_RUN: usize = 3;
/// Longest stretch before the emotion is forced to change (unless the
/// conversation ends first).
pub const SYNTH_MAX_RUN: usize = 6;

/// Fixed emotion → sentiment map used by synthetic corpora.
pub fn synth_sentiment(emotion: usize) -> u8 {
    (emotion % N_SENTIMENTS as usize) as u8
}

/// Generates a seeded corpus whose class `k` features are `e_k + N(0, noise²)`.
///
/// Emotions inside a conversation come in runs of at least
/// [`SYNTH_MIN_RUN`] utterances, each run switching to a different class.
/// Splits are 70/10/20 by conversation. Feature values are rounded to `f32`
/// so the corpus survives a write/load round trip unchanged.
pub fn synth_corpus(spec: &SynthSpec) -> Result<Corpus> {
    if spec.n_classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "n_classes must be >= 2, got {}",
            spec.n_classes
        )));
    }
    if spec.dim < spec.n_classes {
        return Err(Error::InvalidArgument(format!(
            "dim ({}) must be >= n_classes ({})",
            spec.dim, spec.n_classes
        )));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise must be >= 0, got {}", spec.noise)));
    }
    if spec.min_len == 0 || spec.min_len > spec.max_len {
        return Err(Error::InvalidArgument(format!(
            "invalid length range {}..{}",
            spec.min_len, spec.max_len
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, spec.noise).expect("noise validated above");
    let k = spec.n_classes;

    let mut order: Vec<usize> = (0..spec.n_convs).collect();
    order.shuffle(&mut rng);
    let n_train = (spec.n_convs as f64 * 0.7).round() as usize;
    let n_dev = (spec.n_convs as f64 * 0.1).round() as usize;
    let mut split_of = vec![Split::Test; spec.n_convs];
    for (rank, &ci) in order.iter().enumerate() {
        split_of[ci] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_dev {
            Split::Dev
        } else {
            Split::Test
        };
    }

    let mut conversations = Vec::with_capacity(spec.n_convs);
    let mut data = Vec::new();
    for (ci, &split) in split_of.iter().enumerate() {
        let len = rng.random_range(spec.min_len..=spec.max_len);
        let emotions = synth_emotion_runs(&mut rng, len, k);
        let mut utterances = Vec::with_capacity(len);
        for (ui, &emotion) in emotions.iter().enumerate() {
            for d in 0..spec.dim {
                let mean = if d == emotion { 1.0 } else { 0.0 };
                let x = if spec.noise > 0.0 {
                    mean + normal.sample(&mut rng)
                } else {
                    mean
                };
                data.push(f64::from(x as f32));
            }
            utterances.push(Utterance {
                utt_id: format!("c{ci}_u{ui}"),
                text: None,
                speaker: Some(if ui % 2 == 0 { "A" } else { "B" }.to_string()),
                emotion,
                sentiment: synth_sentiment(emotion),
                split,
            });
        }
        conversations.push(Conversation {
            conv_id: format!("c{ci}"),
            utterances,
        });
    }
    let n_rows = data.len() / spec.dim;
    Ok(Corpus {
        conversations,
        emotion_vocab: (0..k).map(|c| format!("class_{c}")).collect(),
        features: Arc::new(Matrix::from_vec(n_rows, spec.dim, data)),
    })
}

fn synth_emotion_runs(rng: &mut ChaCha8Rng, len: usize, k: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(len);
    let mut emotion = rng.random_range(0..k);
    while out.len() < len {
        let rem = len - out.len();
        let run = if rem < 2 * SYNTH_MIN_RUN {
            rem
        } else {
            rng.random_range(SYNTH_MIN_RUN..=rem - SYNTH_MIN_RUN)
                .min(SYNTH_MAX_RUN)
        };
        out.extend(std::iter::repeat_n(emotion, run));
        emotion = (emotion + rng.random_range(1..k)) % k;
    }
    out
}
