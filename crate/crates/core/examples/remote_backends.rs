//! Verification against remote backends, using the bundled stubs.
//!
//! Spins up an OpenAI-compatible chat-completions stub and a remote search
//! stub on localhost, then runs a full one-search verification episode
//! through both: generation over HTTP, retrieval over HTTP.
//!
//! Run with: cargo run --example remote_backends

use veriseek::policy::remote::RemoteChatPolicy;
use veriseek::retrieval::{build_index, RemoteSearchConfig, RetrievalBackend};
use veriseek::rollout::{run_verification, RolloutOptions};
use veriseek::samples;
use veriseek::stub::{serve_search_index, ChatScript};

fn main() {
    let chat = ChatScript::new(vec![
        "<think>confirm which agent causes the hearing loss</think>\n\
         <search>cisplatin ototoxicity</search>"
            .to_string(),
        "<think>cisplatin confirmed as the cause; it cross-links DNA</think>\n\
         <answer>0</answer>"
            .to_string(),
    ])
    .serve()
    .expect("chat stub binds");

    let index = build_index(samples::mini_corpus()).expect("valid corpus");
    let search = serve_search_index(index).expect("search stub binds");

    println!("chat stub:   {}", chat.url("/v1/chat/completions"));
    println!("search stub: {}", search.url("/search"));

    let policy = RemoteChatPolicy {
        endpoint: chat.url("/v1/chat/completions"),
        model: "stub-verifier".into(),
        api_key: None,
        timeout_secs: 10,
    };
    let retriever = RetrievalBackend::Remote(RemoteSearchConfig {
        endpoint: search.url("/search"),
        timeout_secs: 10,
    });

    let rollout = run_verification(
        &policy,
        &retriever,
        &samples::clinical_instance(),
        &RolloutOptions::default(),
        0,
    );

    println!("\ntrajectory:\n{}", rollout.trajectory.raw_text);
    println!("\nterminal: {}", rollout.trajectory.terminal);
    println!("retrieval calls: {}", rollout.retrieval_calls);
    println!("events: {:?}", rollout.events);
}
