//! Evaluation manifests: a JSON list of records with the explanation
//! settings to evaluate each one under.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::model::load_model_spec;
use super::record::{load_record, read_json};
use crate::backend::{live_backend, replay_backend, ModelBackend};
use crate::explain::ExplainConfig;
use crate::metrics::EvalItem;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Record directory, relative to the manifest file.
    pub record: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(flatten)]
    pub config: ExplainConfig,
}

/// Loads the manifest and every record it names.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<EvalItem>> {
    let path = path.as_ref();
    let entries: Vec<ManifestEntry> = read_json(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    entries
        .into_iter()
        .map(|e| {
            let dir = base.join(&e.record);
            Ok(EvalItem {
                label: e.label.unwrap_or_else(|| e.record.display().to_string()),
                record: Arc::new(load_record(&dir)?),
                config: e.config,
            })
        })
        .collect()
}

/// Live toy-model backend when the record names one, replay otherwise.
pub fn default_backend(item: &EvalItem) -> Result<Box<dyn ModelBackend>> {
    let record = &item.record;
    match &record.live_model {
        Some(model) => {
            let spec = Arc::new(load_model_spec(&model.spec)?);
            let live = live_backend(spec, record.image.clone(), model.tap)?
                .with_score_space(item.config.score_space);
            Ok(Box::new(live))
        }
        None => Ok(Box::new(replay_backend((**record).clone())?)),
    }
}
