//! JSON description of a toy network whose parameters live in `CCT1`
//! tensors next to it.
//!
//! ```json
//! { "tap": 2,
//!   "layers": [
//!     { "type": "conv3x3", "weights": "conv1_w.cct", "bias": "conv1_b.cct" },
//!     { "type": "relu" }, { "type": "maxpool2x2" }, { "type": "global_avg_pool" },
//!     { "type": "dense", "weights": "fc_w.cct", "bias": "fc_b.cct" },
//!     { "type": "softmax" } ] }
//! ```
//!
//! Convolution weights are `[out, in, 3, 3]`, dense weights `[out, in]`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::record::{read_json, write_json};
use super::tensor_file::{load_tensor, save_tensor, Tensor};
use crate::backend::{Layer, ToyCnnSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerDoc {
    Conv3x3 { weights: String, bias: String },
    Relu,
    #[serde(rename = "maxpool2x2")]
    MaxPool2x2,
    GlobalAvgPool,
    Dense { weights: String, bias: String },
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tap: Option<usize>,
    pub layers: Vec<LayerDoc>,
}

pub fn load_model_spec(path: impl AsRef<Path>) -> Result<ToyCnnSpec> {
    let path = path.as_ref();
    let doc: ModelDoc = read_json(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut layers = Vec::with_capacity(doc.layers.len());
    for (i, l) in doc.layers.iter().enumerate() {
        let spec_err = |msg: String| Error::ModelSpec(format!("layer {i}: {msg}"));
        layers.push(match l {
            LayerDoc::Conv3x3 { weights, bias } => {
                let w = load_tensor(dir.join(weights))?;
                let b = load_tensor(dir.join(bias))?.into_vector().map_err(|e| spec_err(e.to_string()))?;
                let (out_channels, in_channels) = match w.dims() {
                    &[o, i, 3, 3] => (o, i),
                    d => return Err(spec_err(format!("conv weights have shape {d:?}"))),
                };
                Layer::Conv3x3 {
                    in_channels,
                    out_channels,
                    weights: w.into_data(),
                    bias: b,
                }
            }
            LayerDoc::Relu => Layer::Relu,
            LayerDoc::MaxPool2x2 => Layer::MaxPool2x2,
            LayerDoc::GlobalAvgPool => Layer::GlobalAvgPool,
            LayerDoc::Dense { weights, bias } => Layer::Dense {
                weights: load_tensor(dir.join(weights))?
                    .into_matrix()
                    .map_err(|e| spec_err(e.to_string()))?,
                bias: load_tensor(dir.join(bias))?
                    .into_vector()
                    .map_err(|e| spec_err(e.to_string()))?,
            },
            LayerDoc::Softmax => Layer::Softmax,
        });
    }
    ToyCnnSpec::new(layers, doc.tap)
}

/// Writes `spec` as `dir/<name>.json` with its tensors alongside.
pub fn save_model_spec(dir: impl AsRef<Path>, name: &str, spec: &ToyCnnSpec) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut layers = Vec::new();
    for (i, layer) in spec.layers().iter().enumerate() {
        layers.push(match layer {
            Layer::Conv3x3 {
                in_channels,
                out_channels,
                weights,
                bias,
            } => {
                let w = format!("{name}_l{i}_w.cct");
                let b = format!("{name}_l{i}_b.cct");
                save_tensor(
                    dir.join(&w),
                    &Tensor::new(vec![*out_channels, *in_channels, 3, 3], weights.clone())?,
                )?;
                save_tensor(dir.join(&b), &Tensor::vector(bias))?;
                LayerDoc::Conv3x3 { weights: w, bias: b }
            }
            Layer::Relu => LayerDoc::Relu,
            Layer::MaxPool2x2 => LayerDoc::MaxPool2x2,
            Layer::GlobalAvgPool => LayerDoc::GlobalAvgPool,
            Layer::Dense { weights, bias } => {
                let w = format!("{name}_l{i}_w.cct");
                let b = format!("{name}_l{i}_b.cct");
                save_tensor(dir.join(&w), &Tensor::from(weights))?;
                save_tensor(dir.join(&b), &Tensor::vector(bias))?;
                LayerDoc::Dense { weights: w, bias: b }
            }
            Layer::Softmax => LayerDoc::Softmax,
        });
    }
    write_json(
        &dir.join(format!("{name}.json")),
        &ModelDoc {
            tap: spec.tap(),
            layers,
        },
    )
}
