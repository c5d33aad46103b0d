//! Explains a stored evidence record with no model present, then writes the
//! saliency as a tensor file.

use std::path::Path;

use conceptor_cam::backend::replay_backend;
use conceptor_cam::cam::{SaliencyMode, WeightScheme};
use conceptor_cam::explain::{explain, ExplainConfig};
use conceptor_cam::io::{load_record, save_tensor, tensor_checksum, Tensor};

fn main() -> conceptor_cam::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/record");
    let record = load_record(&dir)?;
    println!(
        "record: layer {} class {} features {}x{} on {:?}",
        record.layer,
        record.class_index,
        record.features.positions(),
        record.features.channels(),
        record.features.spatial()
    );
    let backend = replay_backend(record.clone())?;
    let config = ExplainConfig::new(SaliencyMode::Comprehensive, WeightScheme::Score).with_alpha(1.0);
    let e = explain(&record.inputs(), &backend, &config)?;
    println!("score-cam weights {:?}", e.weights.values());

    let (h, w) = (e.saliency.height(), e.saliency.width());
    let tensor = Tensor::new(vec![h, w], e.saliency.as_slice().to_vec())?;
    let out = std::env::temp_dir().join("ccam-replay.saliency.cct");
    save_tensor(&out, &tensor)?;
    println!("wrote {} sha256 {}", out.display(), tensor_checksum(&tensor));
    Ok(())
}
