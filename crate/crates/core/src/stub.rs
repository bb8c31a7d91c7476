//! Local stand-in for a chat-completion endpoint, used by tests, examples
//! and offline demo runs.
//!
//! ```no_run
//! use coq_forge::stub::{StubBehavior, StubServer};
//!
//! let stub = StubServer::start(StubBehavior::Echo).unwrap();
//! println!("{}", stub.endpoint());
//! ```

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tiny_http::{Header, Response, Server};

use crate::error::{Error, Result};

/// How the stub answers.
#[derive(Debug, Clone, PartialEq)]
pub enum StubBehavior {
    /// Returns the last message's content unchanged.
    Echo,
    /// Returns the prefix followed by 16 hex digits of the prompt's SHA-256.
    Digest(String),
    /// Returns the text after the last occurrence of the marker in the
    /// prompt (the whole prompt if absent). With a template ending in
    /// `<marker>{answer}` this hands every answer back unchanged.
    AfterMarker(String),
    /// Returns an empty completion.
    Empty,
    /// Always answers with this HTTP status and no completion.
    Status(u16),
    /// Behaves as `first` for the first `after` requests, then as `then`.
    Switch {
        after: usize,
        first: Box<StubBehavior>,
        then: Box<StubBehavior>,
    },
}

/// One request as the stub received it.
#[derive(Debug, Clone)]
pub struct RecordedRequest {
    pub body: Value,
    pub received_at: Instant,
}

impl RecordedRequest {
    /// Content of the last message.
    pub fn prompt(&self) -> Option<&str> {
        self.body
            .get("messages")?
            .as_array()?
            .last()?
            .get("content")?
            .as_str()
    }
}

struct Shared {
    behavior: StubBehavior,
    delay: Duration,
    requests: Mutex<Vec<RecordedRequest>>,
    served: AtomicUsize,
}

pub struct StubServer {
    addr: String,
    shared: Arc<Shared>,
    server: Arc<Server>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn start(behavior: StubBehavior) -> Result<Self> {
        StubServer::start_with_delay(behavior, Duration::ZERO)
    }

    /// Like [`StubServer::start`], but every response waits `delay` first.
    pub fn start_with_delay(behavior: StubBehavior, delay: Duration) -> Result<Self> {
        let server = Server::http("127.0.0.1:0")
            .map_err(|e| Error::Config(format!("cannot start stub server: {e}")))?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| Error::Config("stub server has no IP address".into()))?
            .to_string();
        let server = Arc::new(server);
        let shared = Arc::new(Shared {
            behavior,
            delay,
            requests: Mutex::new(Vec::new()),
            served: AtomicUsize::new(0),
        });
        let stop = Arc::new(AtomicBool::new(false));
        let handle = {
            let (server, shared, stop) = (server.clone(), shared.clone(), stop.clone());
            thread::spawn(move || accept_loop(&server, &shared, &stop))
        };
        Ok(StubServer {
            addr,
            shared,
            server,
            stop,
            handle: Some(handle),
        })
    }

    /// `http://127.0.0.1:<port>`
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Full chat-completions URL.
    pub fn endpoint(&self) -> String {
        format!("{}/v1/chat/completions", self.url())
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.shared.requests.lock().unwrap().clone()
    }

    pub fn request_count(&self) -> usize {
        self.shared.requests.lock().unwrap().len()
    }

    pub fn prompts(&self) -> Vec<String> {
        self.requests()
            .iter()
            .filter_map(|r| r.prompt().map(str::to_string))
            .collect()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn accept_loop(server: &Server, shared: &Arc<Shared>, stop: &AtomicBool) {
    let mut workers = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        let mut request = match server.recv_timeout(Duration::from_millis(50)) {
            Ok(Some(r)) => r,
            Ok(None) => continue,
            Err(_) => break,
        };
        let received_at = Instant::now();
        let mut body = String::new();
        let _ = request.as_reader().read_to_string(&mut body);
        let shared = shared.clone();
        workers.push(thread::spawn(move || {
            let body: Value = serde_json::from_str(&body).unwrap_or(Value::Null);
            let recorded = RecordedRequest { body, received_at };
            let prompt = recorded.prompt().unwrap_or_default().to_string();
            shared.requests.lock().unwrap().push(recorded);
            let nth = shared.served.fetch_add(1, Ordering::SeqCst);
            if !shared.delay.is_zero() {
                thread::sleep(shared.delay);
            }
            let (status, payload) = answer(&shared.behavior, nth, &prompt);
            let content_type =
                Header::from_bytes("Content-Type", "application/json").expect("static header");
            let _ = request.respond(
                Response::from_string(payload)
                    .with_status_code(status)
                    .with_header(content_type),
            );
        }));
        workers.retain(|h| !h.is_finished());
    }
    for h in workers {
        let _ = h.join();
    }
}

fn answer(behavior: &StubBehavior, nth: usize, prompt: &str) -> (u16, String) {
    let completion = |text: String| {
        json!({
            "id": format!("stub-{nth}"),
            "object": "chat.completion",
            "choices": [{
                "index": 0,
                "message": {"role": "assistant", "content": text},
                "finish_reason": "stop"
            }]
        })
        .to_string()
    };
    match behavior {
        StubBehavior::Echo => (200, completion(prompt.to_string())),
        StubBehavior::Digest(prefix) => {
            let digest = hex::encode(Sha256::digest(prompt.as_bytes()));
            (200, completion(format!("{prefix}{}", &digest[..16])))
        }
        StubBehavior::AfterMarker(marker) => {
            let text = prompt.rsplit_once(marker.as_str()).map_or(prompt, |(_, t)| t);
            (200, completion(text.to_string()))
        }
        StubBehavior::Empty => (200, completion(String::new())),
        StubBehavior::Status(code) => (*code, json!({"error": "stub failure"}).to_string()),
        StubBehavior::Switch { after, first, then } => {
            if nth < *after {
                answer(first, nth, prompt)
            } else {
                answer(then, nth - after, prompt)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polisher::{ChatClient, LlmClientConfig, PolishError};

    fn client(stub: &StubServer) -> ChatClient {
        ChatClient::with_api_key(
            LlmClientConfig {
                endpoint: stub.endpoint(),
                requests_per_minute: 0.0,
                retry_backoff_ms: 1,
                timeout_secs: 5.0,
                ..Default::default()
            },
            "test",
        )
    }

    #[test]
    fn echo_roundtrip() {
        let stub = StubServer::start(StubBehavior::Echo).unwrap();
        let c = client(&stub);
        let out = c.complete("病人：咳嗽\n医生：", &c.default_sampling()).unwrap();
        assert_eq!(out, "病人：咳嗽\n医生：");
        assert_eq!(stub.prompts(), ["病人：咳嗽\n医生："]);
    }

    #[test]
    fn transient_then_success() {
        let stub = StubServer::start(StubBehavior::Switch {
            after: 2,
            first: Box::new(StubBehavior::Status(503)),
            then: Box::new(StubBehavior::Digest("ok:".into())),
        })
        .unwrap();
        let c = client(&stub);
        let out = c.complete("x", &c.default_sampling()).unwrap();
        assert!(out.starts_with("ok:"));
        assert_eq!(stub.request_count(), 3);
    }

    #[test]
    fn client_error_is_fatal_without_retry() {
        let stub = StubServer::start(StubBehavior::Status(401)).unwrap();
        let c = client(&stub);
        let err = c.complete("x", &c.default_sampling()).unwrap_err();
        assert!(err.is_fatal());
        assert_eq!(stub.request_count(), 1);
    }

    #[test]
    fn empty_completion() {
        let stub = StubServer::start(StubBehavior::Empty).unwrap();
        let c = client(&stub);
        assert_eq!(c.complete("x", &c.default_sampling()), Err(PolishError::Empty));
    }
}
