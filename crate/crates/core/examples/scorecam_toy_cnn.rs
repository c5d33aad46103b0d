//! Runs the bundled toy CNN live and renders a Score-CAM driven
//! Conceptor-CAM overlay in every mode.

use std::path::Path;
use std::sync::Arc;

use conceptor_cam::backend::live_backend;
use conceptor_cam::cam::{SaliencyMode, WeightScheme};
use conceptor_cam::explain::{explain, ExplainConfig};
use conceptor_cam::io::{load_model_spec, load_tensor, overlay_checksum, render_overlay, save_png};

fn main() -> conceptor_cam::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let spec = Arc::new(load_model_spec(fixtures.join("model/toy_cnn.json"))?);
    let image = load_tensor(fixtures.join("image.cct"))?.into_image()?;
    let backend = live_backend(spec, image.clone(), 2)?;
    let class = backend.top_class();
    println!("predicted class {class}");

    let out = std::env::temp_dir();
    for mode in SaliencyMode::ALL {
        let e = explain(&backend.inputs(class), &backend, &ExplainConfig::new(mode, WeightScheme::Score))?;
        let overlay = render_overlay(&image, &e.saliency)?;
        let path = out.join(format!("ccam-scorecam-{mode}.png"));
        save_png(&path, &overlay)?;
        println!("{:>14}: {} ({})", mode.as_str(), path.display(), &overlay_checksum(&overlay)[..12]);
    }
    Ok(())
}
