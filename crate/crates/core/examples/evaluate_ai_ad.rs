//! Average Increase and Average Drop, first from score pairs and then over
//! the bundled manifest.

use std::path::Path;

use conceptor_cam::io::{default_backend, load_manifest};
use conceptor_cam::metrics::{average_drop, average_increase, evaluate_manifest, EvalPair};

fn main() -> conceptor_cam::Result<()> {
    let pairs = [EvalPair::new(0.5, 0.6)?, EvalPair::new(0.8, 0.7)?, EvalPair::new(0.9, 0.9)?];
    println!("AI {:.2}  AD {:.2}", average_increase(&pairs)?, average_drop(&pairs)?);

    let manifest = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/eval/manifest.json");
    let items = load_manifest(&manifest)?;
    let report = evaluate_manifest(&items, &default_backend, 2)?;
    print!("{}", report.to_table());
    Ok(())
}
