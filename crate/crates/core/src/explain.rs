//! End-to-end explanation of one prediction: pick the channel weights,
//! optionally tanh-normalize the features, and produce the saliency map.

use serde::{Deserialize, Serialize};

use crate::backend::{EvidenceRecord, LiveBackend, ModelBackend, ScoreSpace};
use crate::cam::{
    cam_weights, gradcam_weights_for, saliency, scorecam_weights, tanh_normalize, ChannelWeights,
    ConceptorCam, FeatureMap, SaliencyMap, SaliencyMode, WeightScheme,
};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Default aperture.
pub const DEFAULT_ALPHA: f64 = 1.0;

/// Largest aperture accepted from the command line.
pub const MAX_ALPHA: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplainConfig {
    pub mode: SaliencyMode,
    #[serde(rename = "weights")]
    pub scheme: WeightScheme,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// `None` picks the scheme default: off for Score-CAM, on otherwise.
    #[serde(default)]
    pub tanh: Option<bool>,
    #[serde(default)]
    pub score_space: ScoreSpace,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            mode: SaliencyMode::Comprehensive,
            scheme: WeightScheme::Score,
            alpha: DEFAULT_ALPHA,
            tanh: None,
            score_space: ScoreSpace::Softmax,
        }
    }
}

impl ExplainConfig {
    pub fn new(mode: SaliencyMode, scheme: WeightScheme) -> Self {
        ExplainConfig {
            mode,
            scheme,
            ..ExplainConfig::default()
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_tanh(mut self, on: bool) -> Self {
        self.tanh = Some(on);
        self
    }

    pub fn tanh_enabled(&self) -> bool {
        self.tanh.unwrap_or(self.scheme != WeightScheme::Score)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=MAX_ALPHA).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!(
                "alpha must lie in [0, {MAX_ALPHA}], got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// The inputs of one explanation, borrowed from a record or a live backend.
#[derive(Debug, Clone, Copy)]
pub struct ExplainInputs<'a> {
    pub features: &'a FeatureMap,
    /// Input-image resolution `(H, W)`.
    pub target: (usize, usize),
    pub class_index: usize,
    pub gradients: Option<&'a Matrix>,
    pub fc_weights: Option<&'a Matrix>,
    pub ingested_weights: Option<&'a [f64]>,
}

impl EvidenceRecord {
    pub fn inputs(&self) -> ExplainInputs<'_> {
        ExplainInputs {
            features: &self.features,
            target: self.image.dims(),
            class_index: self.class_index,
            gradients: self.gradients.as_ref(),
            fc_weights: self.fc_weights.as_ref(),
            ingested_weights: self.ingested_weights.as_deref(),
        }
    }
}

impl LiveBackend {
    pub fn inputs(&self, class_index: usize) -> ExplainInputs<'_> {
        ExplainInputs {
            features: self.features(),
            target: self.image().dims(),
            class_index,
            gradients: None,
            fc_weights: None,
            ingested_weights: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Explanation {
    pub config: ExplainConfig,
    /// Raw (unnormalized) channel weights.
    pub weights: ChannelWeights,
    /// Feature map after optional tanh normalization.
    pub features: FeatureMap,
    pub saliency: SaliencyMap,
    /// Conceptor intermediates; absent in baseline mode.
    pub conceptors: Option<ConceptorCam>,
}

/// Computes the channel weights for `scheme`.
///
/// Score-CAM masks are answered by the backend from the raw features;
/// tanh normalization only affects evidence construction and fusion.
pub fn channel_weights(
    inputs: &ExplainInputs<'_>,
    backend: &dyn ModelBackend,
    scheme: WeightScheme,
) -> Result<ChannelWeights> {
    let missing = |what: &str| Error::MissingCapability(format!("{scheme} weights need {what}"));
    let weights = match scheme {
        WeightScheme::Score => scorecam_weights(inputs.features, backend, inputs.class_index)?,
        WeightScheme::Grad => {
            gradcam_weights_for(inputs.features, inputs.gradients.ok_or_else(|| missing("gradients"))?)?
        }
        WeightScheme::Cam => cam_weights(inputs.fc_weights.ok_or_else(|| missing("fc weights"))?)?,
        WeightScheme::Ingested => ChannelWeights::ingested(
            inputs
                .ingested_weights
                .ok_or_else(|| missing("an ingested weight vector"))?
                .to_vec(),
        )?,
    };
    if weights.len() != inputs.features.channels() {
        return Err(Error::dims(format!(
            "{scheme} produced {} weights for {} channels",
            weights.len(),
            inputs.features.channels()
        )));
    }
    Ok(weights)
}

/// Explains one prediction.
pub fn explain(
    inputs: &ExplainInputs<'_>,
    backend: &dyn ModelBackend,
    config: &ExplainConfig,
) -> Result<Explanation> {
    config.validate()?;
    if backend.score_space() != config.score_space {
        return Err(Error::MissingCapability(format!(
            "backend answers in {} space, {} requested",
            backend.score_space(),
            config.score_space
        )));
    }
    let weights = channel_weights(inputs, backend, config.scheme)?;
    let features = if config.tanh_enabled() {
        tanh_normalize(inputs.features)
    } else {
        inputs.features.clone()
    };
    let (saliency, conceptors) = saliency(&features, &weights, config.mode, config.alpha, inputs.target)?;
    Ok(Explanation {
        config: *config,
        weights,
        features,
        saliency,
        conceptors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::replay_backend;
    use crate::input::InputImage;
    use std::collections::BTreeMap;

    fn record() -> EvidenceRecord {
        let features = FeatureMap::new(
            Matrix::from_rows(&[[1.0, 0.2], [0.5, 0.9], [0.0, 0.4], [0.3, 0.1]]).unwrap(),
            (2, 2),
        )
        .unwrap();
        EvidenceRecord {
            image: InputImage::black(4, 4),
            features,
            layer: "l".into(),
            class_index: 1,
            score_space: ScoreSpace::Softmax,
            base_scores: vec![0.4, 0.6],
            masked_scores: Matrix::from_rows(&[[0.3, 0.7], [0.5, 0.5]]).unwrap(),
            gradients: Some(Matrix::from_rows(&[[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]).unwrap()),
            fc_weights: None,
            ingested_weights: Some(vec![2.0, -1.0]),
            explanation_scores: BTreeMap::new(),
            black_scores: None,
            live_model: None,
        }
    }

    #[test]
    fn tanh_defaults_follow_scheme() {
        assert!(!ExplainConfig::new(SaliencyMode::Baseline, WeightScheme::Score).tanh_enabled());
        assert!(ExplainConfig::new(SaliencyMode::Baseline, WeightScheme::Grad).tanh_enabled());
        assert!(ExplainConfig::new(SaliencyMode::Baseline, WeightScheme::Cam).tanh_enabled());
        assert!(!ExplainConfig::new(SaliencyMode::Baseline, WeightScheme::Grad)
            .with_tanh(false)
            .tanh_enabled());
    }

    #[test]
    fn score_weights_come_from_backend() {
        let rec = record();
        let backend = replay_backend(rec.clone()).unwrap();
        let cfg = ExplainConfig::new(SaliencyMode::Baseline, WeightScheme::Score);
        let e = explain(&rec.inputs(), &backend, &cfg).unwrap();
        let expected = [0.7 - 0.6, 0.5 - 0.6];
        for (w, x) in e.weights.values().iter().zip(expected) {
            assert!((w - x).abs() < 1e-15);
        }
        assert!(e.conceptors.is_none());
        assert_eq!((e.saliency.height(), e.saliency.width()), (4, 4));
    }

    #[test]
    fn missing_sources_are_reported() {
        let rec = record();
        let backend = replay_backend(rec.clone()).unwrap();
        let cfg = ExplainConfig::new(SaliencyMode::Positive, WeightScheme::Cam);
        assert!(matches!(
            explain(&rec.inputs(), &backend, &cfg),
            Err(Error::MissingCapability(_))
        ));
    }

    #[test]
    fn score_space_mismatch_is_rejected() {
        let rec = record();
        let backend = replay_backend(rec.clone()).unwrap();
        let cfg = ExplainConfig {
            score_space: ScoreSpace::Logit,
            ..ExplainConfig::default()
        };
        assert!(explain(&rec.inputs(), &backend, &cfg).is_err());
    }

    #[test]
    fn alpha_range_is_enforced() {
        let rec = record();
        let backend = replay_backend(rec.clone()).unwrap();
        for alpha in [-0.5, 100.5] {
            let cfg = ExplainConfig::default().with_alpha(alpha);
            assert!(explain(&rec.inputs(), &backend, &cfg).is_err());
        }
        let cfg = ExplainConfig::default().with_alpha(0.0);
        assert!(explain(&rec.inputs(), &backend, &cfg).is_ok());
    }

    #[test]
    fn grad_and_ingested_schemes_run_in_all_modes() {
        let rec = record();
        let backend = replay_backend(rec.clone()).unwrap();
        for scheme in [WeightScheme::Grad, WeightScheme::Ingested] {
            for mode in SaliencyMode::ALL {
                let e = explain(&rec.inputs(), &backend, &ExplainConfig::new(mode, scheme)).unwrap();
                assert_eq!(e.weights.scheme(), scheme);
                assert!(e.saliency.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
