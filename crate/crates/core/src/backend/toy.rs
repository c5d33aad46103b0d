//! A deliberately small CNN evaluator: 3×3 same-padded convolutions, ReLU,
//! 2×2 max pooling, global average pooling, dense layers and softmax.

use crate::cam::FeatureMap;
use crate::error::{Error, Result};
use crate::input::InputImage;
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// Weights are `[out][in][3][3]` flattened row-major.
    Conv3x3 {
        in_channels: usize,
        out_channels: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    Relu,
    MaxPool2x2,
    GlobalAvgPool,
    /// `out × in` weight matrix.
    Dense { weights: Matrix, bias: Vec<f64> },
    Softmax,
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv3x3 { .. } => "conv3x3",
            Layer::Relu => "relu",
            Layer::MaxPool2x2 => "maxpool2x2",
            Layer::GlobalAvgPool => "global_avg_pool",
            Layer::Dense { .. } => "dense",
            Layer::Softmax => "softmax",
        }
    }
}

/// Shape of an intermediate activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Map(usize),
    Vector(usize),
}

/// A validated toy network over 3-channel inputs. `tap` names the layer
/// whose output is exposed as the feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyCnnSpec {
    layers: Vec<Layer>,
    tap: Option<usize>,
}

impl ToyCnnSpec {
    pub fn new(layers: Vec<Layer>, tap: Option<usize>) -> Result<Self> {
        let bad = |msg: String| Err(Error::ModelSpec(msg));
        let mut shape = Shape::Map(InputImage::CHANNELS);
        let mut seen_softmax = false;
        for (i, layer) in layers.iter().enumerate() {
            if seen_softmax {
                return bad(format!("layer {i} follows the softmax"));
            }
            shape = match (layer, shape) {
                (
                    Layer::Conv3x3 {
                        in_channels,
                        out_channels,
                        weights,
                        bias,
                    },
                    Shape::Map(c),
                ) => {
                    if *in_channels != c {
                        return bad(format!("layer {i}: conv expects {in_channels} channels, gets {c}"));
                    }
                    if weights.len() != out_channels * in_channels * 9 || bias.len() != *out_channels {
                        return bad(format!("layer {i}: conv parameter sizes are wrong"));
                    }
                    Shape::Map(*out_channels)
                }
                (Layer::Relu, s) => s,
                (Layer::MaxPool2x2, Shape::Map(c)) => Shape::Map(c),
                (Layer::GlobalAvgPool, Shape::Map(c)) => Shape::Vector(c),
                (Layer::Dense { weights, bias }, Shape::Vector(n)) => {
                    if weights.cols() != n || bias.len() != weights.rows() {
                        return bad(format!(
                            "layer {i}: dense is {}x{} with {} biases, input has {n} values",
                            weights.rows(),
                            weights.cols(),
                            bias.len()
                        ));
                    }
                    Shape::Vector(weights.rows())
                }
                (Layer::Softmax, Shape::Vector(n)) => {
                    if n < 2 {
                        return bad("softmax needs at least two classes".into());
                    }
                    seen_softmax = true;
                    Shape::Vector(n)
                }
                (layer, s) => {
                    return bad(format!("layer {i}: {} cannot follow shape {s:?}", layer.kind()))
                }
            };
            if tap == Some(i) && !matches!(shape, Shape::Map(_)) {
                return bad(format!("tap layer {i} does not produce a feature map"));
            }
        }
        if !seen_softmax {
            return bad("network must end with a softmax".into());
        }
        if let Some(t) = tap {
            if t >= layers.len() {
                return bad(format!("tap layer {t} does not exist"));
            }
        }
        Ok(ToyCnnSpec { layers, tap })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn tap(&self) -> Option<usize> {
        self.tap
    }

    pub fn num_classes(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|l| match l {
                Layer::Dense { weights, .. } => Some(weights.rows()),
                _ => None,
            })
            .unwrap_or(0)
    }

    /// Same network with a different tap layer.
    pub fn with_tap(&self, tap: usize) -> Result<Self> {
        ToyCnnSpec::new(self.layers.clone(), Some(tap))
    }
}

/// Activation tensor: channel-major planes or a flat vector.
#[derive(Debug, Clone)]
enum Activation {
    Map {
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<f64>,
    },
    Vector(Vec<f64>),
}

/// Result of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
    /// Output of the tap layer, if one was requested.
    pub tap: Option<FeatureMap>,
}

/// Runs the network on `image`, capturing the activation at the spec's tap
/// layer.
pub fn toy_forward(spec: &ToyCnnSpec, image: &InputImage) -> Result<ForwardOutput> {
    forward_with_tap(spec, image, spec.tap)
}

pub(crate) fn forward_with_tap(
    spec: &ToyCnnSpec,
    image: &InputImage,
    tap: Option<usize>,
) -> Result<ForwardOutput> {
    let (height, width) = image.dims();
    let mut planes = vec![0.0; InputImage::CHANNELS * height * width];
    for y in 0..height {
        for x in 0..width {
            for c in 0..InputImage::CHANNELS {
                planes[(c * height + y) * width + x] = image.get(y, x, c);
            }
        }
    }
    let mut act = Activation::Map {
        channels: InputImage::CHANNELS,
        height,
        width,
        data: planes,
    };
    let mut logits = None;
    let mut tapped = None;
    for (i, layer) in spec.layers.iter().enumerate() {
        if matches!(layer, Layer::Softmax) {
            if let Activation::Vector(v) = &act {
                logits = Some(v.clone());
            }
        }
        act = apply(layer, act)?;
        if tap == Some(i) {
            tapped = Some(to_feature_map(&act)?);
        }
    }
    let probabilities = match act {
        Activation::Vector(v) => v,
        Activation::Map { .. } => unreachable!("validated spec ends in softmax"),
    };
    Ok(ForwardOutput {
        logits: logits.expect("validated spec has a softmax"),
        probabilities,
        tap: tapped,
    })
}

fn to_feature_map(act: &Activation) -> Result<FeatureMap> {
    match act {
        Activation::Map {
            channels,
            height,
            width,
            data,
        } => {
            let m = height * width;
            let planes: Vec<Vec<f64>> = data.chunks_exact(m).map(<[f64]>::to_vec).collect();
            debug_assert_eq!(planes.len(), *channels);
            FeatureMap::from_planes(&planes, (*height, *width))
        }
        Activation::Vector(_) => Err(Error::ModelSpec("tap layer produced a vector".into())),
    }
}

fn apply(layer: &Layer, act: Activation) -> Result<Activation> {
    match (layer, act) {
        (
            Layer::Conv3x3 {
                in_channels,
                out_channels,
                weights,
                bias,
            },
            Activation::Map {
                height, width, data, ..
            },
        ) => Ok(Activation::Map {
            channels: *out_channels,
            height,
            width,
            data: conv3x3(&data, *in_channels, *out_channels, height, width, weights, bias),
        }),
        (Layer::Relu, Activation::Map { channels, height, width, data }) => Ok(Activation::Map {
            channels,
            height,
            width,
            data: data.into_iter().map(|v| v.max(0.0)).collect(),
        }),
        (Layer::Relu, Activation::Vector(v)) => {
            Ok(Activation::Vector(v.into_iter().map(|x| x.max(0.0)).collect()))
        }
        (Layer::MaxPool2x2, Activation::Map { channels, height, width, data }) => {
            if height < 2 || width < 2 {
                return Err(Error::ModelSpec(format!(
                    "cannot max-pool a {height}x{width} map"
                )));
            }
            let (oh, ow) = (height / 2, width / 2);
            let mut out = Vec::with_capacity(channels * oh * ow);
            for c in 0..channels {
                let plane = &data[c * height * width..(c + 1) * height * width];
                for y in 0..oh {
                    for x in 0..ow {
                        let at = |dy: usize, dx: usize| plane[(2 * y + dy) * width + 2 * x + dx];
                        out.push(at(0, 0).max(at(0, 1)).max(at(1, 0)).max(at(1, 1)));
                    }
                }
            }
            Ok(Activation::Map {
                channels,
                height: oh,
                width: ow,
                data: out,
            })
        }
        (Layer::GlobalAvgPool, Activation::Map { height, width, data, .. }) => {
            let m = height * width;
            Ok(Activation::Vector(
                data.chunks_exact(m)
                    .map(|p| p.iter().sum::<f64>() / m as f64)
                    .collect(),
            ))
        }
        (Layer::Dense { weights, bias }, Activation::Vector(v)) => {
            let mut out = weights.matvec(&v)?;
            for (o, b) in out.iter_mut().zip(bias) {
                *o += b;
            }
            Ok(Activation::Vector(out))
        }
        (Layer::Softmax, Activation::Vector(v)) => Ok(Activation::Vector(softmax(&v))),
        (layer, _) => Err(Error::ModelSpec(format!(
            "{} applied to an incompatible activation",
            layer.kind()
        ))),
    }
}

/// Same-padded (zero fill), stride-1 3×3 convolution over channel-major
/// planes.
fn conv3x3(
    input: &[f64],
    in_channels: usize,
    out_channels: usize,
    height: usize,
    width: usize,
    weights: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let hw = height * width;
    let mut out = vec![0.0; out_channels * hw];
    for o in 0..out_channels {
        let plane = &mut out[o * hw..(o + 1) * hw];
        for y in 0..height {
            for x in 0..width {
                let mut acc = bias[o];
                for i in 0..in_channels {
                    let kernel = &weights[(o * in_channels + i) * 9..(o * in_channels + i + 1) * 9];
                    let src = &input[i * hw..(i + 1) * hw];
                    for ky in 0..3 {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= height as isize {
                            continue;
                        }
                        for kx in 0..3 {
                            let sx = x as isize + kx as isize - 1;
                            if sx < 0 || sx >= width as isize {
                                continue;
                            }
                            acc += kernel[ky * 3 + kx] * src[sy as usize * width + sx as usize];
                        }
                    }
                }
                plane[y * width + x] = acc;
            }
        }
    }
    out
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(out: usize, inp: usize, value: f64) -> Layer {
        Layer::Dense {
            weights: Matrix::from_fn(out, inp, |_, _| value),
            bias: vec![0.0; out],
        }
    }

    fn identity_conv() -> Layer {
        let mut weights = vec![0.0; 3 * 3 * 9];
        for c in 0..3 {
            weights[(c * 3 + c) * 9 + 4] = 1.0;
        }
        Layer::Conv3x3 {
            in_channels: 3,
            out_channels: 3,
            weights,
            bias: vec![0.0; 3],
        }
    }

    fn ramp(h: usize, w: usize) -> InputImage {
        InputImage::from_fn(h, w, |y, x, c| ((y * w + x) * 3 + c) as f64 / (h * w * 3) as f64).unwrap()
    }

    #[test]
    fn zero_dense_gives_uniform_softmax() {
        let spec = ToyCnnSpec::new(vec![Layer::GlobalAvgPool, dense(2, 3, 0.0), Layer::Softmax], None).unwrap();
        let out = toy_forward(&spec, &ramp(4, 4)).unwrap();
        assert_eq!(out.probabilities, vec![0.5, 0.5]);
        assert_eq!(out.logits, vec![0.0, 0.0]);
    }

    #[test]
    fn center_one_kernel_is_identity() {
        let spec = ToyCnnSpec::new(
            vec![identity_conv(), Layer::GlobalAvgPool, dense(2, 3, 1.0), Layer::Softmax],
            Some(0),
        )
        .unwrap();
        let img = ramp(3, 4);
        let out = toy_forward(&spec, &img).unwrap();
        let tap = out.tap.unwrap();
        assert_eq!(tap.spatial(), (3, 4));
        for y in 0..3 {
            for x in 0..4 {
                for c in 0..3 {
                    assert_eq!(tap.matrix().get(y * 4 + x, c), img.get(y, x, c));
                }
            }
        }
    }

    #[test]
    fn maxpool_picks_maximum() {
        let act = Activation::Map {
            channels: 1,
            height: 2,
            width: 2,
            data: vec![1.0, 2.0, 3.0, 4.0],
        };
        match apply(&Layer::MaxPool2x2, act).unwrap() {
            Activation::Map { height, width, data, .. } => {
                assert_eq!((height, width), (1, 1));
                assert_eq!(data, vec![4.0]);
            }
            Activation::Vector(_) => panic!("expected a map"),
        }
    }

    #[test]
    fn conv_is_linear() {
        let weights: Vec<f64> = (0..2 * 3 * 9).map(|i| ((i * 37) % 11) as f64 / 7.0 - 0.6).collect();
        let img = ramp(5, 4);
        let planes: Vec<f64> = {
            let mut p = vec![0.0; 3 * 20];
            for y in 0..5 {
                for x in 0..4 {
                    for c in 0..3 {
                        p[(c * 5 + y) * 4 + x] = img.get(y, x, c);
                    }
                }
            }
            p
        };
        let zero_bias = vec![0.0; 2];
        let a = conv3x3(&planes, 3, 2, 5, 4, &weights, &zero_bias);
        let scaled: Vec<f64> = planes.iter().map(|v| v * 2.5).collect();
        let b = conv3x3(&scaled, 3, 2, 5, 4, &weights, &zero_bias);
        for (x, y) in a.iter().zip(&b) {
            assert!((2.5 * x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1.0, -3.0, 2.5, 700.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        // Missing softmax.
        assert!(ToyCnnSpec::new(vec![Layer::GlobalAvgPool, dense(2, 3, 0.0)], None).is_err());
        // Dense straight on a map.
        assert!(ToyCnnSpec::new(vec![dense(2, 3, 0.0), Layer::Softmax], None).is_err());
        // Wrong dense width.
        assert!(ToyCnnSpec::new(vec![Layer::GlobalAvgPool, dense(2, 4, 0.0), Layer::Softmax], None).is_err());
        // Single class.
        assert!(ToyCnnSpec::new(vec![Layer::GlobalAvgPool, dense(1, 3, 0.0), Layer::Softmax], None).is_err());
        // Tap on a vector.
        assert!(ToyCnnSpec::new(vec![Layer::GlobalAvgPool, dense(2, 3, 0.0), Layer::Softmax], Some(0)).is_err());
        // Tap out of range.
        assert!(ToyCnnSpec::new(vec![Layer::GlobalAvgPool, dense(2, 3, 0.0), Layer::Softmax], Some(9)).is_err());
    }

    #[test]
    fn maxpool_of_single_pixel_fails() {
        let spec = ToyCnnSpec::new(
            vec![Layer::MaxPool2x2, Layer::GlobalAvgPool, dense(2, 3, 0.0), Layer::Softmax],
            None,
        )
        .unwrap();
        assert!(toy_forward(&spec, &ramp(1, 1)).is_err());
    }
}
