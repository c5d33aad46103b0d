//! Channel weighting schemes, the Ψ rescale, evidence construction and the
//! saliency generators (plain weighted fusion, conceptor-synchronized, and
//! the comprehensive positive + complementary fusion).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::ModelBackend;
use crate::conceptor::{learn_conceptor, negate, Conceptor, EvidenceMatrix};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// A layer activation reshaped so that every channel is one column of an
/// `M×K` matrix, `M = h·w` (row-major over the spatial grid).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    matrix: Matrix,
    spatial: (usize, usize),
}

impl FeatureMap {
    pub fn new(matrix: Matrix, spatial: (usize, usize)) -> Result<Self> {
        if spatial.0 * spatial.1 != matrix.rows() {
            return Err(Error::dims(format!(
                "feature map has {} rows but spatial grid is {}x{}",
                matrix.rows(),
                spatial.0,
                spatial.1
            )));
        }
        if matrix.cols() == 0 || matrix.rows() == 0 {
            return Err(Error::dims("feature map needs at least one channel and position"));
        }
        Ok(FeatureMap { matrix, spatial })
    }

    /// Builds a feature map from channel-major planes (`K` planes of `h·w`
    /// values each).
    pub fn from_planes(planes: &[Vec<f64>], spatial: (usize, usize)) -> Result<Self> {
        let m = spatial.0 * spatial.1;
        if let Some(bad) = planes.iter().position(|p| p.len() != m) {
            return Err(Error::dims(format!("plane {bad} does not have {m} values")));
        }
        let k = planes.len();
        let data = (0..m)
            .flat_map(|i| planes.iter().map(move |p| p[i]))
            .collect();
        FeatureMap::new(Matrix::new(m, k, data)?, spatial)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn spatial(&self) -> (usize, usize) {
        self.spatial
    }

    pub fn channels(&self) -> usize {
        self.matrix.cols()
    }

    pub fn positions(&self) -> usize {
        self.matrix.rows()
    }

    /// Channel `k` as an `h×w` grid.
    pub fn channel_grid(&self, k: usize) -> Result<Matrix> {
        if k >= self.channels() {
            return Err(Error::ChannelOutOfRange {
                index: k,
                channels: self.channels(),
            });
        }
        let (h, w) = self.spatial;
        Ok(Matrix::from_fn(h, w, |i, j| self.matrix.get(i * w + j, k)))
    }
}

/// Elementwise hyperbolic tangent of every feature value.
pub fn tanh_normalize(f: &FeatureMap) -> FeatureMap {
    FeatureMap {
        matrix: f.matrix.map(f64::tanh),
        spatial: f.spatial,
    }
}

/// Where a weight vector came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightScheme {
    Score,
    Grad,
    Cam,
    Ingested,
}

impl WeightScheme {
    pub const ALL: [WeightScheme; 4] = [
        WeightScheme::Score,
        WeightScheme::Grad,
        WeightScheme::Cam,
        WeightScheme::Ingested,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            WeightScheme::Score => "score",
            WeightScheme::Grad => "grad",
            WeightScheme::Cam => "cam",
            WeightScheme::Ingested => "ingested",
        }
    }
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WeightScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        WeightScheme::ALL
            .into_iter()
            .find(|w| w.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown weight scheme {s:?}")))
    }
}

/// Per-channel contribution weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelWeights {
    values: Vec<f64>,
    scheme: WeightScheme,
}

impl ChannelWeights {
    pub fn new(values: Vec<f64>, scheme: WeightScheme) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(ChannelWeights { values, scheme })
    }

    /// Externally computed weights (any CAM variant).
    pub fn ingested(values: Vec<f64>) -> Result<Self> {
        ChannelWeights::new(values, WeightScheme::Ingested)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scheme(&self) -> WeightScheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check_against(&self, f: &FeatureMap) -> Result<()> {
        if self.len() != f.channels() {
            return Err(Error::dims(format!(
                "{} weights for a feature map with {} channels",
                self.len(),
                f.channels()
            )));
        }
        Ok(())
    }

    /// Min-max normalization to `[0, 1]`; a constant vector maps to 0.5.
    pub fn normalized(&self) -> Vec<f64> {
        let (lo, hi) = min_max(&self.values);
        if !(hi > lo) {
            return vec![0.5; self.values.len()];
        }
        let span = hi - lo;
        self.values.iter().map(|v| (v - lo) / span).collect()
    }
}

/// Score-CAM weights: `w_k = f_c(X ∘ H_k) − f_c(X)`, with the masked scores
/// supplied by the backend.
pub fn scorecam_weights(
    f: &FeatureMap,
    backend: &dyn ModelBackend,
    class_index: usize,
) -> Result<ChannelWeights> {
    if backend.num_channels() != f.channels() {
        return Err(Error::dims(format!(
            "backend has {} channels, feature map has {}",
            backend.num_channels(),
            f.channels()
        )));
    }
    let base = class_score(&backend.base_scores()?, class_index)?;
    let values = (0..f.channels())
        .map(|k| Ok(class_score(&backend.masked_scores(k)?, class_index)? - base))
        .collect::<Result<Vec<_>>>()?;
    ChannelWeights::new(values, WeightScheme::Score)
}

fn class_score(scores: &[f64], class_index: usize) -> Result<f64> {
    scores.get(class_index).copied().ok_or_else(|| {
        Error::InvalidArgument(format!(
            "class {class_index} out of range for {} scores",
            scores.len()
        ))
    })
}

/// Grad-CAM weights `(1/(K·M))·Gᵀ1` from the gradient of the class score
/// with respect to the `M×K` feature map.
pub fn gradcam_weights(gradients: &Matrix) -> Result<ChannelWeights> {
    let (m, k) = gradients.shape();
    if m == 0 || k == 0 {
        return Err(Error::dims("empty gradient matrix"));
    }
    let scale = 1.0 / (k * m) as f64;
    let values = gradients.column_sums().into_iter().map(|s| s * scale).collect();
    ChannelWeights::new(values, WeightScheme::Grad)
}

/// CAM weights `(1/(N₁·N₂))·Wᵀ1` from the `N₂×N₁` connection weights
/// between the last convolution layer and the first dense layer.
pub fn cam_weights(fc_weights: &Matrix) -> Result<ChannelWeights> {
    let (n2, n1) = fc_weights.shape();
    if n1 == 0 || n2 == 0 {
        return Err(Error::dims("empty connection-weight matrix"));
    }
    let scale = 1.0 / (n1 * n2) as f64;
    let values = fc_weights.column_sums().into_iter().map(|s| s * scale).collect();
    ChannelWeights::new(values, WeightScheme::Cam)
}

/// Checks gradient dimensions against the feature map before computing
/// Grad-CAM weights.
pub fn gradcam_weights_for(f: &FeatureMap, gradients: &Matrix) -> Result<ChannelWeights> {
    if gradients.shape() != f.matrix().shape() {
        return Err(Error::dims(format!(
            "gradients are {}x{}, feature map is {}x{}",
            gradients.rows(),
            gradients.cols(),
            f.positions(),
            f.channels()
        )));
    }
    gradcam_weights(gradients)
}

/// Scales every channel by its normalized weight `w_k`, or by `1 − w_k`
/// for the pseudo-negative evidence.
pub fn build_evidence(f: &FeatureMap, w: &ChannelWeights, reversed: bool) -> Result<EvidenceMatrix> {
    w.check_against(f)?;
    let mut factors = w.normalized();
    if reversed {
        for v in &mut factors {
            *v = 1.0 - *v;
        }
    }
    EvidenceMatrix::new(f.matrix().scale_columns(&factors)?, f.spatial())
}

/// A saliency grid at input resolution with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    grid: Matrix,
}

impl SaliencyMap {
    pub fn new(grid: Matrix) -> Result<Self> {
        if let Some(index) = grid.as_slice().iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument(format!(
                "saliency value at index {index} is outside [0, 1]"
            )));
        }
        Ok(SaliencyMap { grid })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        SaliencyMap {
            grid: Matrix::zeros(height, width),
        }
    }

    pub fn grid(&self) -> &Matrix {
        &self.grid
    }

    pub fn height(&self) -> usize {
        self.grid.rows()
    }

    pub fn width(&self) -> usize {
        self.grid.cols()
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.grid.get(y, x)
    }

    pub fn as_slice(&self) -> &[f64] {
        self.grid.as_slice()
    }

    pub fn is_all_zero(&self) -> bool {
        self.as_slice().iter().all(|&v| v == 0.0)
    }
}

/// Bilinear upsampling with aligned corners: output pixel `(y, x)` samples
/// the source at `(y·(h−1)/(H−1), x·(w−1)/(W−1))`.
pub fn upsample_bilinear(src: &Matrix, target: (usize, usize)) -> Result<Matrix> {
    let (h, w) = src.shape();
    let (th, tw) = target;
    if th < h || tw < w || h == 0 || w == 0 {
        return Err(Error::InvalidArgument(format!(
            "cannot upsample {h}x{w} to {th}x{tw}"
        )));
    }
    let ys: Vec<(usize, usize, f64)> = (0..th).map(|y| sample_coord(y, h, th)).collect();
    let xs: Vec<(usize, usize, f64)> = (0..tw).map(|x| sample_coord(x, w, tw)).collect();
    Ok(Matrix::from_fn(th, tw, |y, x| {
        let (y0, y1, fy) = ys[y];
        let (x0, x1, fx) = xs[x];
        let top = (1.0 - fx) * src.get(y0, x0) + fx * src.get(y0, x1);
        let bottom = (1.0 - fx) * src.get(y1, x0) + fx * src.get(y1, x1);
        (1.0 - fy) * top + fy * bottom
    }))
}

fn sample_coord(out: usize, src_len: usize, out_len: usize) -> (usize, usize, f64) {
    if out_len <= 1 || src_len <= 1 {
        return (0, 0, 0.0);
    }
    let pos = (out * (src_len - 1)) as f64 / (out_len - 1) as f64;
    let i0 = (pos.floor() as usize).min(src_len - 1);
    let i1 = (i0 + 1).min(src_len - 1);
    (i0, i1, pos - i0 as f64)
}

/// Ψ: ReLU, corner-aligned bilinear upsampling to `target`, then min-max
/// normalization. A map that is constant after these steps becomes all
/// zeros.
pub fn rescale_psi(map: &Matrix, target: (usize, usize)) -> Result<SaliencyMap> {
    let relu = map.map(|v| v.max(0.0));
    let up = upsample_bilinear(&relu, target)?;
    let (lo, hi) = min_max(up.as_slice());
    if !(hi > lo) {
        return Ok(SaliencyMap::zeros(target.0, target.1));
    }
    let span = hi - lo;
    // Clamp guards the last-bit rounding of (v - lo) / span.
    Ok(SaliencyMap {
        grid: up.map(|v| ((v - lo) / span).clamp(0.0, 1.0)),
    })
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

/// Reshapes a length-`M` fused vector onto the `h×w` grid and applies Ψ.
fn psi_of_vector(values: &[f64], spatial: (usize, usize), target: (usize, usize)) -> Result<SaliencyMap> {
    let grid = Matrix::new(spatial.0, spatial.1, values.to_vec())?;
    rescale_psi(&grid, target)
}

/// Plain weighted fusion `Ψ(F·w)`.
pub fn baseline_saliency(f: &FeatureMap, w: &ChannelWeights, target: (usize, usize)) -> Result<SaliencyMap> {
    w.check_against(f)?;
    let fused = f.matrix().matvec(w.values())?;
    psi_of_vector(&fused, f.spatial(), target)
}

/// `Ψ(S·Z·1)`: synchronize the weighted channels with `sync`, then fuse.
pub fn synchronized_saliency(
    sync: &Matrix,
    z: &EvidenceMatrix,
    target: (usize, usize),
) -> Result<SaliencyMap> {
    let m = z.positions();
    if sync.shape() != (m, m) {
        return Err(Error::dims(format!(
            "synchronization matrix is {}x{}, evidence has {m} positions",
            sync.rows(),
            sync.cols()
        )));
    }
    let fused = sync.matvec(&z.matrix().row_sums())?;
    psi_of_vector(&fused, z.spatial(), target)
}

/// Which saliency map to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SaliencyMode {
    /// Weighted channel fusion without synchronization.
    Baseline,
    /// Synchronized by the conceptor of the positive evidence.
    Positive,
    /// Synchronized by the NOT of the pseudo-negative conceptor.
    Complementary,
    /// Synchronized by the mean of the positive and complementary conceptors.
    Comprehensive,
}

impl SaliencyMode {
    pub const ALL: [SaliencyMode; 4] = [
        SaliencyMode::Baseline,
        SaliencyMode::Positive,
        SaliencyMode::Complementary,
        SaliencyMode::Comprehensive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SaliencyMode::Baseline => "baseline",
            SaliencyMode::Positive => "positive",
            SaliencyMode::Complementary => "complementary",
            SaliencyMode::Comprehensive => "comprehensive",
        }
    }
}

impl fmt::Display for SaliencyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SaliencyMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SaliencyMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown saliency mode {s:?}")))
    }
}

/// Every intermediate of the comprehensive conceptor pipeline.
#[derive(Debug, Clone)]
pub struct ConceptorCam {
    /// Positive evidence `F·diag(w)`.
    pub evidence: EvidenceMatrix,
    /// Pseudo-negative evidence `F·diag(1 − w)`.
    pub negative_evidence: EvidenceMatrix,
    pub correlation: Matrix,
    pub negative_correlation: Matrix,
    /// Conceptor `C` of the positive evidence.
    pub positive: Conceptor,
    /// Conceptor `C̄` of the pseudo-negative evidence.
    pub negative: Conceptor,
    /// Complementary conceptor `C* = ¬C̄`.
    pub complementary: Conceptor,
    /// `½(C + C*)`.
    pub fused: Matrix,
    pub positive_map: SaliencyMap,
    pub complementary_map: SaliencyMap,
    pub comprehensive_map: SaliencyMap,
}

impl ConceptorCam {
    pub fn map(&self, mode: SaliencyMode) -> Option<&SaliencyMap> {
        match mode {
            SaliencyMode::Baseline => None,
            SaliencyMode::Positive => Some(&self.positive_map),
            SaliencyMode::Complementary => Some(&self.complementary_map),
            SaliencyMode::Comprehensive => Some(&self.comprehensive_map),
        }
    }
}

/// Runs the full conceptor pipeline: positive and pseudo-negative evidence,
/// their conceptors, the complementary conceptor, and all three
/// synchronized maps.
pub fn conceptor_cam(
    f: &FeatureMap,
    w: &ChannelWeights,
    alpha: f64,
    target: (usize, usize),
) -> Result<ConceptorCam> {
    let evidence = build_evidence(f, w, false)?;
    let negative_evidence = build_evidence(f, w, true)?;
    let positive = learn_conceptor(&evidence, alpha)?;
    let negative = learn_conceptor(&negative_evidence, alpha)?;
    let complementary = negate(&negative);
    let fused = (positive.matrix() + complementary.matrix()).scale(0.5);

    let positive_map = synchronized_saliency(positive.matrix(), &evidence, target)?;
    let complementary_map = synchronized_saliency(complementary.matrix(), &evidence, target)?;
    let comprehensive_map = synchronized_saliency(&fused, &evidence, target)?;

    Ok(ConceptorCam {
        correlation: evidence.correlation(),
        negative_correlation: negative_evidence.correlation(),
        evidence,
        negative_evidence,
        positive,
        negative,
        complementary,
        fused,
        positive_map,
        complementary_map,
        comprehensive_map,
    })
}

/// `Ψ(½(C + C*)·Z·1)`.
pub fn comprehensive_saliency(
    f: &FeatureMap,
    w: &ChannelWeights,
    alpha: f64,
    target: (usize, usize),
) -> Result<SaliencyMap> {
    Ok(conceptor_cam(f, w, alpha, target)?.comprehensive_map)
}

/// Produces the saliency map for `mode`; the conceptor intermediates are
/// returned for every mode except the baseline.
pub fn saliency(
    f: &FeatureMap,
    w: &ChannelWeights,
    mode: SaliencyMode,
    alpha: f64,
    target: (usize, usize),
) -> Result<(SaliencyMap, Option<ConceptorCam>)> {
    match mode {
        SaliencyMode::Baseline => Ok((baseline_saliency(f, w, target)?, None)),
        _ => {
            let cam = conceptor_cam(f, w, alpha, target)?;
            let map = cam.map(mode).expect("non-baseline mode").clone();
            Ok((map, Some(cam)))
        }
    }
}
