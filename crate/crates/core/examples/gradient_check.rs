//! Verify the clipped policy objective: a hand-computed fixture and the
//! finite-difference gradient check.
//!
//! Run with: cargo run --example gradient_check

use veriseek::grpo::{self, clipped_term, GrpoConfig};

fn main() {
    let cfg = GrpoConfig::toy();

    // min(ratio·A, clip(ratio)·A) with the default clip widths (0.2, 0.3).
    println!("clipped surrogate terms:");
    for (ratio, advantage) in [(1.0, 0.5), (1.5, 1.0), (0.5, -1.0), (0.7, 0.25)] {
        println!(
            "  ratio {ratio:4}, advantage {advantage:5} -> {:+.4}",
            clipped_term(ratio, advantage, &cfg)
        );
    }

    println!("\ncentral-difference gradient verification (h = 1e-6):");
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let report = grpo::self_check(seed).expect("self check runs");
        println!(
            "  seed {seed}: max relative error {:.3e} over {} coordinates",
            report.max_rel_error, report.coords_checked
        );
        worst = worst.max(report.max_rel_error);
    }
    println!("worst: {worst:.3e} (threshold 1e-5)");
    assert!(worst <= 1e-5);
}
