//! Structured rewards: correctness × format over a few trajectories.
//!
//! Run with: cargo run --example score_rewards

use veriseek::protocol::{parse, Segment, Trajectory};
use veriseek::reward::total_reward;

fn main() {
    let gold = 0u8;

    let clean = parse("<think>the trace misattributes the drug</think><answer>0</answer>");
    let wrong = parse("<think>looks fine to me</think><answer>1</answer>");
    let unparseable = parse("<think>oops<answer>0</answer>");
    let hedge = parse("<think>unsure</think><answer>maybe</answer>");

    let mut overflow_segments = vec![Segment::think("flip-flopping")];
    for i in 0..11 {
        overflow_segments.push(Segment::answer(if i % 2 == 0 { "0" } else { "1" }));
    }
    let overflow = Trajectory::from_segments(overflow_segments);

    for (name, trajectory) in [
        ("correct judgment, clean format", &clean),
        ("wrong judgment, clean format", &wrong),
        ("unclosed think tag", &unparseable),
        ("non-canonical answer payload", &hedge),
        ("correct judgment, 11 answer pairs", &overflow),
    ] {
        let r = total_reward(trajectory, gold);
        println!(
            "{name:38} -> correctness {:.2}, format {:.2}, total {:.2}",
            r.correctness, r.format, r.total
        );
    }
}
