//! Compares backprop gradients with central finite differences on the five
//! standard architectures.
//!
//! ```text
//! cargo run --release --example gradient_check -- [seed]
//! ```

use aeface::nn::gradcheck::{run_suite, suite_cases, SUITE_TOLERANCE};
use aeface::nn::Activation;

fn main() -> anyhow::Result<()> {
    let seed: u64 = match std::env::args().nth(1) {
        Some(s) => s.parse()?,
        None => 1,
    };
    let results = run_suite(seed, Activation::backprop)?;
    for (case, r) in suite_cases().iter().zip(&results) {
        println!(
            "{:<26} dims={:?} params={:<4} max relative error {:.2e}",
            r.name, case.dims, r.params, r.max_relative_error
        );
    }
    let worst = results.iter().map(|r| r.max_relative_error).fold(0.0, f64::max);
    anyhow::ensure!(
        results.iter().all(|r| r.passed()),
        "worst error {worst:.2e} exceeds {SUITE_TOLERANCE:e}"
    );
    println!("all {} checks below {SUITE_TOLERANCE:e}", results.len());
    Ok(())
}
