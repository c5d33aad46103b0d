//! The `ccam` command line: `explain`, `eval` and `verify`.
//!
//! Exit status is 0 on success, 1 when `verify` finds a failing check,
//! 2 on argument errors and 3 on I/O, format or runtime failures.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::backend::{live_backend, replay_backend, EvidenceRecord, ModelBackend, ScoreSpace};
use crate::cam::{SaliencyMode, WeightScheme};
use crate::error::{Error, Result};
use crate::explain::{explain, ExplainConfig, Explanation, DEFAULT_ALPHA, MAX_ALPHA};
use crate::io::{
    default_backend, load_manifest, load_model_spec, load_record, overlay_checksum, render_overlay, save_png,
    save_tensor, tensor_checksum, Tensor,
};
use crate::metrics::evaluate_manifest;
use crate::verify::{run_all, DEFAULT_SEED};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Environment variable that overrides `verify --seed`.
pub const SEED_ENV: &str = "CCAM_SEED";

#[derive(Debug, Parser)]
#[command(name = "ccam", version, about = "Conceptor-synchronized class activation maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Explain the recorded prediction and write saliency, overlay and checksums.
    Explain(ExplainArgs),
    /// Compute Average Increase / Average Drop over a manifest of records.
    Eval(EvalArgs),
    /// Run the randomized analytic checks of the conceptor algebra.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, clap::Args)]
pub struct ExplainArgs {
    /// Record directory containing record.json.
    #[arg(long)]
    pub record: PathBuf,
    #[arg(long, default_value = "comprehensive")]
    pub mode: SaliencyMode,
    #[arg(long, default_value = "score")]
    pub weights: WeightScheme,
    #[arg(long, default_value_t = DEFAULT_ALPHA, value_parser = parse_alpha)]
    pub alpha: f64,
    /// Tanh feature normalization; defaults to off for score weights, on otherwise.
    #[arg(long)]
    pub tanh: Option<Switch>,
    /// Defaults to the record's score space.
    #[arg(long)]
    pub score_space: Option<ScoreSpace>,
    /// Output prefix for `.saliency.cct`, `.overlay.png` and `.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub jobs: u32,
    /// JSON report path; a plain-text table is written next to it with a `.txt` extension.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

fn parse_alpha(s: &str) -> std::result::Result<f64, String> {
    let alpha: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=MAX_ALPHA).contains(&alpha) {
        Ok(alpha)
    } else {
        Err(format!("alpha must lie in [0, {MAX_ALPHA}]"))
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let mut text = e.render().to_string();
            if code == EXIT_USAGE && !text.contains("Usage:") {
                use clap::CommandFactory;
                text.push('\n');
                text.push_str(&Cli::command().render_usage().to_string());
                text.push('\n');
            }
            let _ = if code == EXIT_OK {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Explain(a) => run_explain(&a, stdout),
        Command::Eval(a) => run_eval(&a, stdout),
        Command::Verify(a) => run_verify(&a, stdout, stderr),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_RUNTIME
        }
    }
}

/// Replay when the record answers in the requested space, otherwise the
/// live model the record points at.
fn explain_backend(record: &EvidenceRecord, space: ScoreSpace) -> Result<Box<dyn ModelBackend>> {
    if record.score_space == space {
        return Ok(Box::new(replay_backend(record.clone())?));
    }
    match &record.live_model {
        Some(live) => {
            let spec = Arc::new(load_model_spec(&live.spec)?);
            Ok(Box::new(
                live_backend(spec, record.image.clone(), live.tap)?.with_score_space(space),
            ))
        }
        None => Err(Error::MissingCapability(format!(
            "record holds {} scores and names no live model to produce {space} scores",
            record.score_space
        ))),
    }
}

#[derive(Debug, Serialize)]
struct Sidecar {
    record: String,
    layer: String,
    class_index: usize,
    config: ExplainConfig,
    tanh_enabled: bool,
    spatial: [usize; 2],
    target: [usize; 2],
    /// SHA-256 of each intermediate encoded as a `CCT1` tensor.
    checksums: BTreeMap<&'static str, String>,
    weights: Vec<f64>,
    normalized_weights: Vec<f64>,
    overlay_rgb_sha256: String,
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn intermediates(e: &Explanation) -> BTreeMap<&'static str, String> {
    let sum = |t: Tensor| tensor_checksum(&t);
    let mut out = BTreeMap::new();
    out.insert("weights", sum(Tensor::vector(e.weights.values())));
    out.insert("normalized_weights", sum(Tensor::vector(&e.weights.normalized())));
    out.insert("features", sum(Tensor::from(e.features.matrix())));
    out.insert("saliency", sum(Tensor::from(&e.saliency)));
    if let Some(c) = &e.conceptors {
        out.insert("evidence", sum(Tensor::from(c.evidence.matrix())));
        out.insert("negative_evidence", sum(Tensor::from(c.negative_evidence.matrix())));
        out.insert("correlation", sum(Tensor::from(&c.correlation)));
        out.insert("negative_correlation", sum(Tensor::from(&c.negative_correlation)));
        out.insert("conceptor", sum(Tensor::from(c.positive.matrix())));
        out.insert("negative_conceptor", sum(Tensor::from(c.negative.matrix())));
        out.insert("complementary_conceptor", sum(Tensor::from(c.complementary.matrix())));
        out.insert("fused_conceptor", sum(Tensor::from(&c.fused)));
    }
    out
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run_explain(args: &ExplainArgs, stdout: &mut dyn Write) -> Result<i32> {
    let record = load_record(&args.record)?;
    let config = ExplainConfig {
        mode: args.mode,
        scheme: args.weights,
        alpha: args.alpha,
        tanh: args.tanh.map(|s| s == Switch::On),
        score_space: args.score_space.unwrap_or(record.score_space),
    };
    let backend = explain_backend(&record, config.score_space)?;
    let explanation = explain(&record.inputs(), backend.as_ref(), &config)?;
    let overlay = render_overlay(&record.image, &explanation.saliency)?;

    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let saliency_path = with_suffix(&args.out, ".saliency.cct");
    let overlay_path = with_suffix(&args.out, ".overlay.png");
    let sidecar_path = with_suffix(&args.out, ".json");
    save_tensor(&saliency_path, &Tensor::from(&explanation.saliency))?;
    save_png(&overlay_path, &overlay)?;

    let (h, w) = record.features.spatial();
    let sidecar = Sidecar {
        record: args.record.display().to_string(),
        layer: record.layer.clone(),
        class_index: record.class_index,
        config,
        tanh_enabled: config.tanh_enabled(),
        spatial: [h, w],
        target: [record.image.height(), record.image.width()],
        checksums: intermediates(&explanation),
        weights: explanation.weights.values().to_vec(),
        normalized_weights: explanation.weights.normalized(),
        overlay_rgb_sha256: overlay_checksum(&overlay),
    };
    write_json(&sidecar_path, &sidecar)?;
    let _ = writeln!(
        stdout,
        "wrote {}, {}, {}",
        saliency_path.display(),
        overlay_path.display(),
        sidecar_path.display()
    );
    Ok(EXIT_OK)
}

fn run_eval(args: &EvalArgs, stdout: &mut dyn Write) -> Result<i32> {
    let items = load_manifest(&args.manifest)?;
    let report = evaluate_manifest(&items, &default_backend, args.jobs as usize)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_json(&args.out, &report)?;
    let table = report.to_table();
    let table_path = args.out.with_extension("txt");
    fs::write(&table_path, &table).map_err(|e| Error::io(&table_path, e))?;
    let _ = stdout.write_all(table.as_bytes());
    Ok(EXIT_OK)
}

/// `CCAM_SEED` wins over `--seed` when set.
pub fn resolve_seed(flag: u64, env: Option<&str>) -> Result<u64> {
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        None => Ok(flag),
    }
}

fn run_verify(args: &VerifyArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let env = std::env::var(SEED_ENV).ok();
    let seed = match resolve_seed(args.seed, env.as_deref()) {
        Ok(seed) => seed,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return Ok(EXIT_USAGE);
        }
    };
    let report = run_all(seed);
    let _ = writeln!(stdout, "seed {seed}");
    for check in &report.checks {
        let _ = writeln!(stdout, "{check}");
    }
    if report.passed() {
        Ok(EXIT_OK)
    } else {
        let failed = report.checks.iter().filter(|c| !c.passed).count();
        let _ = writeln!(stderr, "{failed} check(s) failed");
        Ok(EXIT_VERIFY_FAILED)
    }
}
