//! Shared HTTP agent construction for the remote backends.

use std::time::Duration;

/// Blocking agent with a global timeout. Both the remote search backend and
/// the chat-completion policy backend go through here.
pub fn agent(timeout_secs: u64) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(timeout_secs)))
        .build()
        .new_agent()
}
