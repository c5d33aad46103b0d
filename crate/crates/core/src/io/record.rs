//! Evidence records on disk: a directory holding `record.json` plus the
//! `CCT1` tensors it names.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::tensor_file::{load_tensor, save_tensor, Tensor};
use crate::backend::{EvidenceRecord, LiveModelRef, ScoreSpace};
use crate::cam::{FeatureMap, SaliencyMode};
use crate::error::{Error, Result};

pub const RECORD_FILE: &str = "record.json";

/// The JSON document describing a record directory. Tensor paths are
/// relative to the directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordManifest {
    pub layer: String,
    pub class_index: usize,
    /// Feature-map grid `[h, w]`.
    pub spatial: [usize; 2],
    #[serde(default)]
    pub score_space: ScoreSpace,
    pub input: String,
    pub features: String,
    pub base_scores: String,
    pub masked_scores: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradients: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fc_weights: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ingested_weights: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub explanation_scores: BTreeMap<SaliencyMode, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub black_scores: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub live_model: Option<LiveModelRef>,
    /// Free-form description of the input preprocessing used by the
    /// exporter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preprocessing: Option<serde_json::Value>,
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads a record directory. The live-model path, if any, is resolved
/// against the directory.
pub fn load_record(dir: impl AsRef<Path>) -> Result<EvidenceRecord> {
    let dir = dir.as_ref();
    let manifest: RecordManifest = read_json(&dir.join(RECORD_FILE))?;
    let tensor = |name: &str| -> Result<Tensor> { load_tensor(dir.join(name)) };
    let ctx = |what: &'static str| move |e: Error| match e {
        Error::DimensionMismatch(msg) | Error::InvalidArgument(msg) => {
            Error::Record(format!("{what}: {msg}"))
        }
        Error::NonFinite { index } => Error::Record(format!("{what}: non-finite value at {index}")),
        other => other,
    };

    let image = tensor(&manifest.input)?.into_image().map_err(ctx("input"))?;
    let features = FeatureMap::new(
        tensor(&manifest.features)?.into_matrix().map_err(ctx("features"))?,
        (manifest.spatial[0], manifest.spatial[1]),
    )
    .map_err(ctx("features"))?;
    let base_scores = tensor(&manifest.base_scores)?
        .into_vector()
        .map_err(ctx("base_scores"))?;
    let masked_scores = tensor(&manifest.masked_scores)?
        .into_matrix()
        .map_err(ctx("masked_scores"))?;
    let gradients = manifest
        .gradients
        .as_deref()
        .map(|p| tensor(p)?.into_matrix().map_err(ctx("gradients")))
        .transpose()?;
    let fc_weights = manifest
        .fc_weights
        .as_deref()
        .map(|p| tensor(p)?.into_matrix().map_err(ctx("fc_weights")))
        .transpose()?;
    let ingested_weights = manifest
        .ingested_weights
        .as_deref()
        .map(|p| tensor(p)?.into_vector().map_err(ctx("ingested_weights")))
        .transpose()?;
    let black_scores = manifest
        .black_scores
        .as_deref()
        .map(|p| tensor(p)?.into_vector().map_err(ctx("black_scores")))
        .transpose()?;
    let explanation_scores = manifest
        .explanation_scores
        .iter()
        .map(|(mode, p)| Ok((*mode, tensor(p)?.into_vector().map_err(ctx("explanation_scores"))?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let live_model = manifest.live_model.map(|m| LiveModelRef {
        spec: dir.join(m.spec),
        tap: m.tap,
    });

    let record = EvidenceRecord {
        image,
        features,
        layer: manifest.layer,
        class_index: manifest.class_index,
        score_space: manifest.score_space,
        base_scores,
        masked_scores,
        gradients,
        fc_weights,
        ingested_weights,
        explanation_scores,
        black_scores,
        live_model,
    };
    record.validate()?;
    Ok(record)
}

/// Writes `record` into `dir` (created if needed) under fixed file names.
pub fn save_record(dir: impl AsRef<Path>, record: &EvidenceRecord) -> Result<()> {
    let dir = dir.as_ref();
    record.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let put = |name: &str, t: &Tensor| -> Result<String> {
        save_tensor(dir.join(name), t)?;
        Ok(name.to_string())
    };
    let manifest = RecordManifest {
        layer: record.layer.clone(),
        class_index: record.class_index,
        spatial: [record.features.spatial().0, record.features.spatial().1],
        score_space: record.score_space,
        input: put("input.cct", &Tensor::from(&record.image))?,
        features: put("features.cct", &Tensor::from(record.features.matrix()))?,
        base_scores: put("base_scores.cct", &Tensor::vector(&record.base_scores))?,
        masked_scores: put("masked_scores.cct", &Tensor::from(&record.masked_scores))?,
        gradients: record
            .gradients
            .as_ref()
            .map(|g| put("gradients.cct", &Tensor::from(g)))
            .transpose()?,
        fc_weights: record
            .fc_weights
            .as_ref()
            .map(|w| put("fc_weights.cct", &Tensor::from(w)))
            .transpose()?,
        ingested_weights: record
            .ingested_weights
            .as_ref()
            .map(|w| put("ingested_weights.cct", &Tensor::vector(w)))
            .transpose()?,
        explanation_scores: record
            .explanation_scores
            .iter()
            .map(|(mode, row)| Ok((*mode, put(&format!("explanation_{mode}.cct"), &Tensor::vector(row))?)))
            .collect::<Result<_>>()?,
        black_scores: record
            .black_scores
            .as_ref()
            .map(|b| put("black_scores.cct", &Tensor::vector(b)))
            .transpose()?,
        live_model: record.live_model.as_ref().map(|m| LiveModelRef {
            spec: relative_to(&m.spec, dir),
            tap: m.tap,
        }),
        preprocessing: None,
    };
    write_json(&dir.join(RECORD_FILE), &manifest)
}

/// Best-effort relative path from `base` to `target`; absolute paths that
/// share no prefix with `base` are kept as-is.
fn relative_to(target: &Path, base: &Path) -> PathBuf {
    if target.is_relative() {
        return target.to_path_buf();
    }
    let (Ok(target), Ok(base)) = (target.canonicalize(), base.canonicalize()) else {
        return target.to_path_buf();
    };
    let common = target
        .components()
        .zip(base.components())
        .take_while(|(a, b)| a == b)
        .count();
    if common == 0 {
        return target;
    }
    let mut out = PathBuf::new();
    for _ in base.components().skip(common) {
        out.push("..");
    }
    for c in target.components().skip(common) {
        out.push(c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::input::InputImage;
    use crate::tensor::Matrix;

    fn record() -> EvidenceRecord {
        EvidenceRecord {
            image: InputImage::from_fn(2, 2, |y, x, c| (y + x + c) as f64 / 4.0).unwrap(),
            features: FeatureMap::new(Matrix::from_rows(&[[1.0, 0.5], [0.25, 2.0]]).unwrap(), (1, 2))
                .unwrap(),
            layer: "conv2".into(),
            class_index: 1,
            score_space: ScoreSpace::Softmax,
            base_scores: vec![0.25, 0.75],
            masked_scores: Matrix::from_rows(&[[0.5, 0.5], [0.125, 0.875]]).unwrap(),
            gradients: Some(Matrix::from_rows(&[[0.5, -0.5], [1.0, 0.0]]).unwrap()),
            fc_weights: Some(Matrix::from_rows(&[[1.0, 2.0]]).unwrap()),
            ingested_weights: Some(vec![0.5, 1.5]),
            explanation_scores: [(SaliencyMode::Comprehensive, vec![0.125, 0.875])].into(),
            black_scores: Some(vec![0.5, 0.5]),
            live_model: None,
        }
    }

    #[test]
    fn record_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let rec = record();
        save_record(dir.path(), &rec).unwrap();
        assert_eq!(load_record(dir.path()).unwrap(), rec);
    }

    #[test]
    fn live_model_path_resolves_against_record_dir() {
        let dir = tempfile::tempdir().unwrap();
        let mut rec = record();
        rec.live_model = Some(LiveModelRef {
            spec: "../model/model.json".into(),
            tap: 2,
        });
        let rdir = dir.path().join("rec");
        save_record(&rdir, &rec).unwrap();
        let back = load_record(&rdir).unwrap();
        assert_eq!(back.live_model.unwrap().spec, rdir.join("../model/model.json"));
    }

    #[test]
    fn missing_tensor_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        save_record(dir.path(), &record()).unwrap();
        fs::remove_file(dir.path().join("features.cct")).unwrap();
        let err = load_record(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }), "{err}");
        assert!(err.is_io());
    }

    #[test]
    fn inconsistent_spatial_dims_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_record(dir.path(), &record()).unwrap();
        let path = dir.path().join(RECORD_FILE);
        let text = fs::read_to_string(&path).unwrap().replace("\"spatial\": [\n    1,\n    2\n  ]", "\"spatial\": [3, 3]");
        fs::write(&path, text).unwrap();
        assert!(matches!(load_record(dir.path()), Err(Error::Record(_))));
    }
}
