//! In-process stub servers for the remote backends.
//!
//! A tiny blocking HTTP/1.1 server backs two stubs used by tests and
//! examples: an OpenAI-compatible chat-completions endpoint replaying
//! scripted turns (stripping stop sequences the way real APIs do), and a
//! search endpoint speaking the retrieval stub protocol. Both bind an
//! ephemeral localhost port.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde_json::json;

use crate::retrieval::{search, SearchIndex};

#[derive(Debug, Clone)]
pub struct StubRequest {
    pub method: String,
    pub path: String,
    pub body: String,
}

#[derive(Debug, Clone)]
pub struct StubResponse {
    pub status: u16,
    pub body: String,
}

impl StubResponse {
    pub fn json(body: serde_json::Value) -> Self {
        StubResponse {
            status: 200,
            body: body.to_string(),
        }
    }

    pub fn error(status: u16, message: &str) -> Self {
        StubResponse {
            status,
            body: json!({ "error": message }).to_string(),
        }
    }
}

/// A handler-backed HTTP server on an ephemeral port. Connections are
/// served sequentially; the server stops when dropped.
pub struct StubServer {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn spawn<H>(handler: H) -> std::io::Result<StubServer>
    where
        H: Fn(&StubRequest) -> StubResponse + Send + Sync + 'static,
    {
        let listener = TcpListener::bind(("127.0.0.1", 0))?;
        let addr = listener.local_addr()?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&shutdown);
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let _ = serve_connection(stream, &handler);
            }
        });
        Ok(StubServer {
            addr,
            shutdown,
            handle: Some(handle),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // Wake the accept loop.
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn serve_connection<H>(stream: TcpStream, handler: &H) -> std::io::Result<()>
where
    H: Fn(&StubRequest) -> StubResponse,
{
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let mut parts = request_line.split_whitespace();
    let method = parts.next().unwrap_or("").to_string();
    let path = parts.next().unwrap_or("").to_string();

    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some(value) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            content_length = value.trim().parse().unwrap_or(0);
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;
    let request = StubRequest {
        method,
        path,
        body: String::from_utf8_lossy(&body).into_owned(),
    };

    let response = handler(&request);
    let reason = if response.status == 200 {
        "OK"
    } else {
        "Error"
    };
    let payload = format!(
        "HTTP/1.1 {} {}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
        response.status,
        reason,
        response.body.len(),
        response.body
    );
    let mut stream = stream;
    stream.write_all(payload.as_bytes())?;
    stream.flush()
}

/// Scripted chat-completions endpoint. Replies turn by turn from the
/// script; like the real API, the matched stop sequence is stripped from
/// the returned content. Requests past the script get a 500.
pub struct ChatScript {
    pub turns: Vec<String>,
    /// Logprobs served for one-token judgment probes, as (z1, z0).
    pub judgment_logprobs: Option<(f64, f64)>,
}

impl ChatScript {
    pub fn new(turns: Vec<String>) -> Self {
        ChatScript {
            turns,
            judgment_logprobs: None,
        }
    }

    /// Spawns the stub server for this script.
    pub fn serve(self) -> std::io::Result<StubServer> {
        let counter = AtomicUsize::new(0);
        let script = Mutex::new(self);
        StubServer::spawn(move |request| {
            let script = script.lock().expect("script lock");
            let body: serde_json::Value = match serde_json::from_str(&request.body) {
                Ok(v) => v,
                Err(e) => return StubResponse::error(400, &format!("bad json: {e}")),
            };

            // One-token logprob probe for judgment confidence.
            let wants_logprobs = body["logprobs"].as_bool().unwrap_or(false);
            let max_tokens = body["max_tokens"].as_u64().unwrap_or(0);
            if wants_logprobs && max_tokens == 1 {
                let Some((z1, z0)) = script.judgment_logprobs else {
                    return StubResponse::error(400, "no logprobs configured");
                };
                return StubResponse::json(json!({
                    "choices": [{
                        "message": {"role": "assistant", "content": if z1 >= z0 { "1" } else { "0" }},
                        "finish_reason": "stop",
                        "logprobs": {"content": [{
                            "token": if z1 >= z0 { "1" } else { "0" },
                            "logprob": z1.max(z0),
                            "top_logprobs": [
                                {"token": "1", "logprob": z1},
                                {"token": "0", "logprob": z0}
                            ]
                        }]}
                    }]
                }));
            }

            let ix = counter.fetch_add(1, Ordering::SeqCst);
            let Some(turn) = script.turns.get(ix) else {
                return StubResponse::error(500, "script exhausted");
            };
            let mut content = turn.clone();
            let mut finish = "stop";
            if let Some(stops) = body["stop"].as_array() {
                let mut matched = false;
                for stop in stops {
                    if let Some(stop) = stop.as_str() {
                        if let Some(stripped) = content.strip_suffix(stop) {
                            content = stripped.to_string();
                            matched = true;
                            break;
                        }
                    }
                }
                if !matched {
                    finish = "length";
                }
            }
            StubResponse::json(json!({
                "choices": [{
                    "message": {"role": "assistant", "content": content},
                    "finish_reason": finish
                }]
            }))
        })
    }
}

/// Search endpoint backed by a real lexical index: POST `{"query","k"}`
/// returns `{"hits": [{"id","title","text","score"}]}`.
pub fn serve_search_index(index: SearchIndex) -> std::io::Result<StubServer> {
    StubServer::spawn(move |request| {
        let body: serde_json::Value = match serde_json::from_str(&request.body) {
            Ok(v) => v,
            Err(e) => return StubResponse::error(400, &format!("bad json: {e}")),
        };
        let query = body["query"].as_str().unwrap_or("");
        let k = body["k"].as_u64().unwrap_or(3) as usize;
        let hits: Vec<serde_json::Value> = search(&index, query, k.max(1))
            .into_iter()
            .map(|hit| {
                json!({
                    "id": hit.doc.id,
                    "title": hit.doc.title,
                    "text": hit.doc.text,
                    "score": hit.score,
                })
            })
            .collect();
        StubResponse::json(json!({ "hits": hits }))
    })
}

/// Search endpoint replaying a fixed hit list regardless of the query.
pub fn serve_fixed_hits(hits: Vec<(String, String, String, f64)>) -> std::io::Result<StubServer> {
    StubServer::spawn(move |request| {
        let body: serde_json::Value = match serde_json::from_str(&request.body) {
            Ok(v) => v,
            Err(e) => return StubResponse::error(400, &format!("bad json: {e}")),
        };
        let k = body["k"].as_u64().unwrap_or(3) as usize;
        let hits: Vec<serde_json::Value> = hits
            .iter()
            .take(k.max(1))
            .map(|(id, title, text, score)| {
                json!({"id": id, "title": title, "text": text, "score": score})
            })
            .collect();
        StubResponse::json(json!({ "hits": hits }))
    })
}
