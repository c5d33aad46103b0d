//! Runs the numerical self-checks used by `ccam verify`.

use conceptor_cam::verify::{run_all, DEFAULT_SEED};

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(DEFAULT_SEED);
    let report = run_all(seed);
    println!("seed {seed}");
    for check in &report.checks {
        println!("{check}");
    }
    if !report.passed() {
        std::process::exit(1);
    }
}
