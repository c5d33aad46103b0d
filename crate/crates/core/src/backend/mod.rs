//! The model-evaluation contract used by Score-CAM and by the AI/AD
//! harness, with a replay implementation over recorded scores and a live
//! implementation over the built-in toy CNN.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cam::{FeatureMap, SaliencyMap, SaliencyMode};
use crate::error::{Error, Result};
use crate::input::InputImage;
use crate::tensor::Matrix;

mod live;
pub mod toy;

pub use live::{live_backend, LiveBackend};
pub use toy::{toy_forward, ForwardOutput, Layer, ToyCnnSpec};

/// Which model output a score refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreSpace {
    /// Post-softmax class probabilities.
    #[default]
    Softmax,
    /// Pre-softmax logits.
    Logit,
}

impl ScoreSpace {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreSpace::Softmax => "softmax",
            ScoreSpace::Logit => "logit",
        }
    }
}

impl fmt::Display for ScoreSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreSpace {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(ScoreSpace::Softmax),
            "logit" => Ok(ScoreSpace::Logit),
            _ => Err(Error::InvalidArgument(format!("unknown score space {s:?}"))),
        }
    }
}

/// Answers forward-pass queries about one input image.
///
/// Implementations are read-only after construction, so queries may be
/// issued from several threads.
pub trait ModelBackend: Send + Sync {
    fn num_classes(&self) -> usize;

    /// Channel count `K` of the tapped feature map.
    fn num_channels(&self) -> usize;

    fn score_space(&self) -> ScoreSpace;

    /// Scores of the unmodified input, `f(X)`.
    fn base_scores(&self) -> Result<Vec<f64>>;

    /// Scores of the input masked by the rescaled channel `k`,
    /// `f(X ∘ Ψ(F_k))`.
    fn masked_scores(&self, channel: usize) -> Result<Vec<f64>>;

    /// Scores of the input masked by a saliency map produced in `mode`.
    /// Fails with [`Error::MissingCapability`] when the backend cannot
    /// answer.
    fn explanation_scores(&self, mode: SaliencyMode, saliency: &SaliencyMap) -> Result<Vec<f64>>;
}

/// Pointer from a record to the toy model that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveModelRef {
    /// Path of the model JSON, relative to the record directory.
    pub spec: PathBuf,
    /// Index of the tapped layer.
    pub tap: usize,
}

/// Everything needed to explain one prediction without running the model.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceRecord {
    pub image: InputImage,
    pub features: FeatureMap,
    pub layer: String,
    pub class_index: usize,
    pub score_space: ScoreSpace,
    pub base_scores: Vec<f64>,
    /// `K × num_classes`; row `k` holds the scores of the input masked by
    /// channel `k`.
    pub masked_scores: Matrix,
    /// `∂Y_c/∂F`, same shape as the feature matrix.
    pub gradients: Option<Matrix>,
    /// Connection weights of the first dense layer.
    pub fc_weights: Option<Matrix>,
    /// Channel weights computed by an external CAM variant.
    pub ingested_weights: Option<Vec<f64>>,
    /// Scores of the input masked by the saliency map of each mode.
    pub explanation_scores: BTreeMap<SaliencyMode, Vec<f64>>,
    /// Scores of an all-black input.
    pub black_scores: Option<Vec<f64>>,
    pub live_model: Option<LiveModelRef>,
}

impl EvidenceRecord {
    pub fn num_classes(&self) -> usize {
        self.base_scores.len()
    }

    pub fn validate(&self) -> Result<()> {
        let classes = self.num_classes();
        let bad = |msg: String| Err(Error::Record(msg));
        if classes == 0 {
            return bad("record has no base scores".into());
        }
        if self.class_index >= classes {
            return bad(format!(
                "class index {} out of range for {classes} classes",
                self.class_index
            ));
        }
        let k = self.features.channels();
        if self.masked_scores.shape() != (k, classes) {
            return bad(format!(
                "masked scores are {}x{}, expected {k}x{classes}",
                self.masked_scores.rows(),
                self.masked_scores.cols()
            ));
        }
        if let Some(g) = &self.gradients {
            if g.shape() != self.features.matrix().shape() {
                return bad("gradient shape differs from feature map".into());
            }
        }
        if let Some(w) = &self.ingested_weights {
            if w.len() != k {
                return bad(format!("{} ingested weights for {k} channels", w.len()));
            }
        }
        for (mode, row) in &self.explanation_scores {
            if row.len() != classes {
                return bad(format!("explanation scores for {mode} have wrong length"));
            }
        }
        if self.black_scores.as_ref().is_some_and(|b| b.len() != classes) {
            return bad("black-input scores have wrong length".into());
        }
        let (h, w) = self.features.spatial();
        if h > self.image.height() || w > self.image.width() {
            return bad("feature grid is larger than the input image".into());
        }
        Ok(())
    }
}

/// Replays the scores stored in a record verbatim.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    record: EvidenceRecord,
}

/// Wraps a validated record in a [`ModelBackend`].
pub fn replay_backend(record: EvidenceRecord) -> Result<ReplayBackend> {
    record.validate()?;
    Ok(ReplayBackend { record })
}

impl ReplayBackend {
    pub fn record(&self) -> &EvidenceRecord {
        &self.record
    }
}

impl ModelBackend for ReplayBackend {
    fn num_classes(&self) -> usize {
        self.record.num_classes()
    }

    fn num_channels(&self) -> usize {
        self.record.features.channels()
    }

    fn score_space(&self) -> ScoreSpace {
        self.record.score_space
    }

    fn base_scores(&self) -> Result<Vec<f64>> {
        Ok(self.record.base_scores.clone())
    }

    fn masked_scores(&self, channel: usize) -> Result<Vec<f64>> {
        let channels = self.num_channels();
        if channel >= channels {
            return Err(Error::ChannelOutOfRange {
                index: channel,
                channels,
            });
        }
        Ok(self.record.masked_scores.row(channel).to_vec())
    }

    fn explanation_scores(&self, mode: SaliencyMode, saliency: &SaliencyMap) -> Result<Vec<f64>> {
        if saliency.is_all_zero() {
            if let Some(black) = &self.record.black_scores {
                return Ok(black.clone());
            }
        }
        self.record
            .explanation_scores
            .get(&mode)
            .cloned()
            .ok_or_else(|| {
                Error::MissingCapability(format!("record has no explanation scores for {mode}"))
            })
    }
}
