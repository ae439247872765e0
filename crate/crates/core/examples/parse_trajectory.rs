//! Parse, validate, and render a verifier trajectory.
//!
//! Run with: cargo run --example parse_trajectory

use veriseek::protocol::{extract_judgment, parse, render, validate_format};
use veriseek::samples;

fn main() {
    let transcript = samples::clinical_transcript();
    let trajectory = parse(transcript);

    println!("segments:");
    for segment in &trajectory.segments {
        let preview: String = segment.text.trim().chars().take(60).collect();
        println!("  {:?}: {preview}...", segment.kind);
    }
    println!("terminal: {}", trajectory.terminal);

    let verdict = validate_format(&trajectory);
    println!(
        "well_formed: {}, answer pairs: {}",
        verdict.well_formed, verdict.answer_pair_count
    );
    println!("judgment: {:?}", extract_judgment(&trajectory));

    let rendered = render(&trajectory).expect("transcript has no tag-in-payload issues");
    println!("round-trip byte-exact: {}", rendered == transcript);

    // Lenient parsing never fails; violations are recorded instead.
    let broken = parse("sure thing! <think>reasoning<answer>1</answer>");
    let verdict = validate_format(&broken);
    println!("\nmalformed input -> well_formed: {}", verdict.well_formed);
    for violation in &verdict.violations {
        println!("  violation: {violation}");
    }
}
