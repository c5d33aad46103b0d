//! Average Increase / Average Drop and batch evaluation.
//!
//! For every item the model is queried twice: on the original input (base
//! score `Y`) and on the input masked by the saliency map (explanation
//! score `S`). AI counts strict increases `Y < S`; AD averages the clipped
//! relative drop `max(0, Y − S) / Y`. Both are percentages.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{EvidenceRecord, ModelBackend};
use crate::error::{Error, Result};
use crate::explain::{explain, ExplainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPair {
    pub base_score: f64,
    pub explanation_score: f64,
}

impl EvalPair {
    pub fn new(base_score: f64, explanation_score: f64) -> Result<Self> {
        if !base_score.is_finite() || !explanation_score.is_finite() {
            return Err(Error::InvalidArgument("scores must be finite".into()));
        }
        Ok(EvalPair {
            base_score,
            explanation_score,
        })
    }

    pub fn increased(&self) -> bool {
        self.base_score < self.explanation_score
    }
}

/// Decimal places kept in reported percentages. Recorded scores carry
/// 32-bit precision, so finer digits are representation noise.
pub const REPORT_DECIMALS: i32 = 4;

/// Rounds a percentage to [`REPORT_DECIMALS`] places.
pub fn round_percent(v: f64) -> f64 {
    let scale = 10f64.powi(REPORT_DECIMALS);
    (v * scale).round() / scale
}

/// Percentage of items whose explanation score strictly exceeds the base
/// score.
pub fn average_increase(pairs: &[EvalPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no items to evaluate".into()));
    }
    let hits = pairs.iter().filter(|p| p.increased()).count();
    Ok(hits as f64 / pairs.len() as f64 * 100.0)
}

/// Mean clipped relative drop, as a percentage.
pub fn average_drop(pairs: &[EvalPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no items to evaluate".into()));
    }
    let mut total = 0.0;
    for (index, p) in pairs.iter().enumerate() {
        total += relative_drop(p).ok_or(Error::ZeroBaseScore { index })?;
    }
    Ok(total / pairs.len() as f64 * 100.0)
}

fn relative_drop(p: &EvalPair) -> Option<f64> {
    (p.base_score != 0.0).then(|| (p.base_score - p.explanation_score).max(0.0) / p.base_score)
}

/// One item of an evaluation run.
#[derive(Debug, Clone)]
pub struct EvalItem {
    pub label: String,
    pub record: Arc<EvidenceRecord>,
    pub config: ExplainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub index: usize,
    pub label: String,
    pub base_score: f64,
    pub explanation_score: f64,
    pub increased: bool,
    /// `max(0, Y − S) / Y`.
    pub relative_drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedItem {
    pub index: usize,
    pub label: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Number of evaluated (not skipped) items.
    pub n: usize,
    /// Percentages, rounded to [`REPORT_DECIMALS`] places.
    pub average_increase: f64,
    pub average_drop: f64,
    pub rows: Vec<EvalRow>,
    pub skipped: Vec<SkippedItem>,
}

impl EvalReport {
    /// Aligned plain-text rendering.
    pub fn to_table(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.label.len())
            .chain(self.skipped.iter().map(|s| s.label.len()))
            .chain(std::iter::once(5))
            .max()
            .unwrap_or(5);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>5}  {:<width$}  {:>10}  {:>10}  {:>8}  {:>8}",
            "index", "label", "base", "explained", "increase", "drop"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>5}  {:<width$}  {:>10.6}  {:>10.6}  {:>8}  {:>8.4}",
                r.index,
                r.label,
                r.base_score,
                r.explanation_score,
                if r.increased { "yes" } else { "no" },
                r.relative_drop
            );
        }
        for s in &self.skipped {
            let _ = writeln!(out, "{:>5}  {:<width$}  skipped: {}", s.index, s.label, s.reason);
        }
        let _ = writeln!(
            out,
            "N = {}  skipped = {}  AI = {:.2}  AD = {:.2}",
            self.n,
            self.skipped.len(),
            self.average_increase,
            self.average_drop
        );
        out
    }
}

/// Builds the backend that answers queries for one item.
pub type BackendFactory<'a> =
    dyn Fn(&EvalItem) -> Result<Box<dyn ModelBackend>> + Send + Sync + 'a;

enum Outcome {
    Row(EvalRow),
    Skipped(SkippedItem),
}

fn evaluate_item(index: usize, item: &EvalItem, factory: &BackendFactory<'_>) -> Result<Outcome> {
    let backend = factory(item)?;
    let record = &item.record;
    let class = record.class_index;
    let explanation = explain(&record.inputs(), backend.as_ref(), &item.config)?;
    let explained = match backend.explanation_scores(item.config.mode, &explanation.saliency) {
        Ok(scores) => scores,
        Err(Error::MissingCapability(reason)) => {
            return Ok(Outcome::Skipped(SkippedItem {
                index,
                label: item.label.clone(),
                reason,
            }))
        }
        Err(e) => return Err(e),
    };
    let base = backend.base_scores()?;
    let pick = |scores: &[f64]| {
        scores.get(class).copied().ok_or_else(|| {
            Error::Record(format!("item {index}: class {class} missing from scores"))
        })
    };
    let pair = EvalPair::new(pick(&base)?, pick(&explained)?)?;
    let relative_drop = relative_drop(&pair).ok_or(Error::ZeroBaseScore { index })?;
    Ok(Outcome::Row(EvalRow {
        index,
        label: item.label.clone(),
        base_score: pair.base_score,
        explanation_score: pair.explanation_score,
        increased: pair.increased(),
        relative_drop,
    }))
}

/// Evaluates every item, on up to `jobs` worker threads. Rows come back in
/// item order whatever the scheduling; items whose backend cannot score
/// the explanation are listed as skipped and excluded from `N`.
pub fn evaluate_manifest(items: &[EvalItem], factory: &BackendFactory<'_>, jobs: usize) -> Result<EvalReport> {
    if items.is_empty() {
        return Err(Error::InvalidArgument("empty manifest".into()));
    }
    let run = || -> Vec<Result<Outcome>> {
        items
            .par_iter()
            .enumerate()
            .map(|(i, item)| evaluate_item(i, item, factory))
            .collect()
    };
    let outcomes = if jobs <= 1 {
        items
            .iter()
            .enumerate()
            .map(|(i, item)| evaluate_item(i, item, factory))
            .collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?
            .install(run)
    };

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for outcome in outcomes {
        match outcome? {
            Outcome::Row(r) => rows.push(r),
            Outcome::Skipped(s) => skipped.push(s),
        }
    }
    if rows.is_empty() {
        return Err(Error::MissingCapability(format!(
            "all {} items were skipped",
            skipped.len()
        )));
    }
    let pairs: Vec<EvalPair> = rows
        .iter()
        .map(|r| EvalPair {
            base_score: r.base_score,
            explanation_score: r.explanation_score,
        })
        .collect();
    Ok(EvalReport {
        n: rows.len(),
        average_increase: round_percent(average_increase(&pairs)?),
        average_drop: round_percent(average_drop(&pairs)?),
        rows,
        skipped,
    })
}
