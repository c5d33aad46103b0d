use std::collections::BTreeMap;
use std::sync::Arc;

use super::toy::{forward_with_tap, ForwardOutput, ToyCnnSpec};
use super::{EvidenceRecord, ModelBackend, ScoreSpace};
use crate::cam::{rescale_psi, FeatureMap, SaliencyMap, SaliencyMode};
use crate::error::{Error, Result};
use crate::input::InputImage;
use crate::tensor::Matrix;

/// Runs the toy network on demand for one input image.
///
/// Scores are reported at 32-bit precision (rounded through `f32`), the
/// precision of the interchange format, so a record exported from this
/// backend replays to identical numbers.
#[derive(Debug, Clone)]
pub struct LiveBackend {
    spec: Arc<ToyCnnSpec>,
    image: InputImage,
    tap: usize,
    score_space: ScoreSpace,
    base: ForwardOutput,
    features: FeatureMap,
}

/// Builds a live backend tapping layer `tap_layer`.
pub fn live_backend(spec: Arc<ToyCnnSpec>, image: InputImage, tap_layer: usize) -> Result<LiveBackend> {
    let spec = if spec.tap() == Some(tap_layer) {
        spec
    } else {
        Arc::new(spec.with_tap(tap_layer)?)
    };
    let base = forward_with_tap(&spec, &image, Some(tap_layer))?;
    let features = base
        .tap
        .clone()
        .ok_or_else(|| Error::ModelSpec(format!("layer {tap_layer} produced no feature map")))?;
    let (h, w) = features.spatial();
    if h > image.height() || w > image.width() {
        return Err(Error::ModelSpec("tap grid is larger than the input".into()));
    }
    Ok(LiveBackend {
        spec,
        image,
        tap: tap_layer,
        score_space: ScoreSpace::Softmax,
        base,
        features,
    })
}

fn to_interchange(values: &[f64]) -> Vec<f64> {
    values.iter().map(|&v| f64::from(v as f32)).collect()
}

impl LiveBackend {
    pub fn with_score_space(mut self, space: ScoreSpace) -> Self {
        self.score_space = space;
        self
    }

    pub fn spec(&self) -> &ToyCnnSpec {
        &self.spec
    }

    pub fn image(&self) -> &InputImage {
        &self.image
    }

    pub fn tap(&self) -> usize {
        self.tap
    }

    /// Tap-layer activation of the unmodified image.
    pub fn features(&self) -> &FeatureMap {
        &self.features
    }

    /// Index of the highest-probability class.
    pub fn top_class(&self) -> usize {
        self.base
            .probabilities
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Class scores for an arbitrary input in this backend's score space.
    pub fn scores_for(&self, image: &InputImage) -> Result<Vec<f64>> {
        let out = forward_with_tap(&self.spec, image, None)?;
        Ok(self.select(&out))
    }

    fn select(&self, out: &ForwardOutput) -> Vec<f64> {
        match self.score_space {
            ScoreSpace::Softmax => to_interchange(&out.probabilities),
            ScoreSpace::Logit => to_interchange(&out.logits),
        }
    }

    /// The mask `Ψ(F_k)` used for channel `k`.
    pub fn channel_mask(&self, channel: usize) -> Result<SaliencyMap> {
        rescale_psi(&self.features.channel_grid(channel)?, self.image.dims())
    }

    /// Exports every answer this backend can give without knowing the
    /// saliency maps: base, per-channel masked and black-input scores.
    /// Explanation scores can be added afterwards per mode.
    pub fn to_record(&self, class_index: usize, layer: impl Into<String>) -> Result<EvidenceRecord> {
        let k = self.features.channels();
        let classes = self.num_classes();
        let mut masked = Vec::with_capacity(k * classes);
        for channel in 0..k {
            masked.extend(self.masked_scores(channel)?);
        }
        let black = InputImage::black(self.image.height(), self.image.width());
        let record = EvidenceRecord {
            image: self.image.clone(),
            features: self.features.clone(),
            layer: layer.into(),
            class_index,
            score_space: self.score_space,
            base_scores: self.base_scores()?,
            masked_scores: Matrix::new(k, classes, masked)?,
            gradients: None,
            fc_weights: None,
            ingested_weights: None,
            explanation_scores: BTreeMap::new(),
            black_scores: Some(self.scores_for(&black)?),
            live_model: None,
        };
        record.validate()?;
        Ok(record)
    }
}

impl ModelBackend for LiveBackend {
    fn num_classes(&self) -> usize {
        self.base.probabilities.len()
    }

    fn num_channels(&self) -> usize {
        self.features.channels()
    }

    fn score_space(&self) -> ScoreSpace {
        self.score_space
    }

    fn base_scores(&self) -> Result<Vec<f64>> {
        Ok(self.select(&self.base))
    }

    fn masked_scores(&self, channel: usize) -> Result<Vec<f64>> {
        let mask = self.channel_mask(channel)?;
        self.scores_for(&self.image.masked(&mask)?)
    }

    fn explanation_scores(&self, _mode: SaliencyMode, saliency: &SaliencyMap) -> Result<Vec<f64>> {
        self.scores_for(&self.image.masked(saliency)?)
    }
}

#[cfg(test)]
mod tests {
    use super::super::toy::Layer;
    use super::*;
    use crate::cam::scorecam_weights;

    fn spec() -> Arc<ToyCnnSpec> {
        let weights: Vec<f64> = (0..2 * 3 * 9).map(|i| ((i * 29) % 13) as f64 / 6.0 - 1.0).collect();
        Arc::new(
            ToyCnnSpec::new(
                vec![
                    Layer::Conv3x3 {
                        in_channels: 3,
                        out_channels: 2,
                        weights,
                        bias: vec![0.1, -0.2],
                    },
                    Layer::Relu,
                    Layer::GlobalAvgPool,
                    Layer::Dense {
                        weights: Matrix::from_rows(&[[1.0, -1.0], [-0.5, 2.0]]).unwrap(),
                        bias: vec![0.0, 0.1],
                    },
                    Layer::Softmax,
                ],
                Some(1),
            )
            .unwrap(),
        )
    }

    fn image() -> InputImage {
        InputImage::from_fn(4, 4, |y, x, c| ((y + 2 * x + c) % 5) as f64 / 4.0).unwrap()
    }

    #[test]
    fn base_scores_are_stable_probabilities() {
        let b = live_backend(spec(), image(), 1).unwrap();
        let s = b.base_scores().unwrap();
        assert_eq!(s, b.base_scores().unwrap());
        assert!(s.iter().all(|&v| v >= 0.0));
        assert!((s.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn zero_channel_masks_to_black() {
        // All-zero weights and bias make every tapped channel zero.
        let mut layers = spec().layers().to_vec();
        layers[0] = Layer::Conv3x3 {
            in_channels: 3,
            out_channels: 2,
            weights: vec![0.0; 54],
            bias: vec![0.0; 2],
        };
        let spec = Arc::new(ToyCnnSpec::new(layers, Some(1)).unwrap());
        let b = live_backend(spec, image(), 1).unwrap();
        let black = b.scores_for(&InputImage::black(4, 4)).unwrap();
        assert_eq!(b.masked_scores(0).unwrap(), black);
    }

    #[test]
    fn exported_record_replays_identically() {
        let live = live_backend(spec(), image(), 1).unwrap();
        let record = live.to_record(live.top_class(), "relu1").unwrap();
        let replay = super::super::replay_backend(record.clone()).unwrap();
        let a = scorecam_weights(live.features(), &live, record.class_index).unwrap();
        let b = scorecam_weights(&record.features, &replay, record.class_index).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn logit_space_reports_logits() {
        let b = live_backend(spec(), image(), 1).unwrap().with_score_space(ScoreSpace::Logit);
        let logits = b.base_scores().unwrap();
        let p = super::super::toy::softmax(&logits);
        let probs = live_backend(spec(), image(), 1).unwrap().base_scores().unwrap();
        for (x, y) in p.iter().zip(&probs) {
            assert!((x - y).abs() < 1e-6);
        }
    }
}
