//! In-process chat-completions server for tests and offline demos.
//!
//! Replies are scripted by a closure that sees each request and its
//! zero-based arrival index. Every request body is recorded.

use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde_json::{json, Value};
use tiny_http::{Header, Response, Server};

/// A recorded request.
#[derive(Debug, Clone, PartialEq)]
pub struct MockRequest {
    pub body: Value,
    pub authorization: Option<String>,
}

impl MockRequest {
    /// Content of the first message, if the body has the expected shape.
    pub fn prompt(&self) -> Option<&str> {
        self.body
            .pointer("/messages/0/content")
            .and_then(Value::as_str)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MockReply {
    /// 200 with a chat-completion body carrying this content.
    Content(String),
    /// Any status with a raw body.
    Status {
        code: u16,
        body: String,
        retry_after: Option<u64>,
    },
}

impl MockReply {
    pub fn content(s: impl Into<String>) -> Self {
        MockReply::Content(s.into())
    }

    pub fn error(code: u16) -> Self {
        MockReply::Status {
            code,
            body: json!({"error": {"message": "mock failure"}}).to_string(),
            retry_after: None,
        }
    }

    pub fn rate_limited(retry_after_secs: u64) -> Self {
        MockReply::Status {
            code: 429,
            body: json!({"error": {"message": "rate limited"}}).to_string(),
            retry_after: Some(retry_after_secs),
        }
    }
}

/// Chat-completion response body wrapping `content`.
pub fn completion_body(content: &str) -> Value {
    json!({
        "id": "mock-completion",
        "object": "chat.completion",
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": content},
            "finish_reason": "stop"
        }]
    })
}

type Responder = dyn Fn(&MockRequest, usize) -> MockReply + Send + Sync;

pub struct MockChatServer {
    url: String,
    server: Arc<Server>,
    requests: Arc<Mutex<Vec<MockRequest>>>,
    handle: Option<JoinHandle<()>>,
}

impl MockChatServer {
    pub fn start<F>(responder: F) -> std::io::Result<Self>
    where
        F: Fn(&MockRequest, usize) -> MockReply + Send + Sync + 'static,
    {
        let server = Server::http("127.0.0.1:0").map_err(std::io::Error::other)?;
        let port = server
            .server_addr()
            .to_ip()
            .map(|a| a.port())
            .ok_or_else(|| std::io::Error::other("mock server has no IP address"))?;
        let server = Arc::new(server);
        let requests = Arc::new(Mutex::new(Vec::new()));
        let responder: Arc<Responder> = Arc::new(responder);

        let handle = {
            let server = Arc::clone(&server);
            let requests = Arc::clone(&requests);
            std::thread::spawn(move || {
                for mut req in server.incoming_requests() {
                    let mut raw = String::new();
                    let _ = req.as_reader().read_to_string(&mut raw);
                    let authorization = req
                        .headers()
                        .iter()
                        .find(|h| h.field.equiv("Authorization"))
                        .map(|h| h.value.as_str().to_string());
                    let recorded = MockRequest {
                        body: serde_json::from_str(&raw).unwrap_or(Value::String(raw)),
                        authorization,
                    };
                    let index = {
                        let mut log = requests.lock().unwrap();
                        log.push(recorded.clone());
                        log.len() - 1
                    };
                    let json_header =
                        Header::from_bytes("Content-Type", "application/json").expect("static");
                    let response = match responder(&recorded, index) {
                        MockReply::Content(c) => {
                            Response::from_string(completion_body(&c).to_string())
                                .with_header(json_header)
                        }
                        MockReply::Status {
                            code,
                            body,
                            retry_after,
                        } => {
                            let mut r = Response::from_string(body)
                                .with_status_code(code)
                                .with_header(json_header);
                            if let Some(s) = retry_after {
                                r = r.with_header(
                                    Header::from_bytes("Retry-After", s.to_string())
                                        .expect("digits are a valid header"),
                                );
                            }
                            r
                        }
                    };
                    let _ = req.respond(response);
                }
            })
        };

        Ok(MockChatServer {
            url: format!("http://127.0.0.1:{port}/v1/chat/completions"),
            server,
            requests,
            handle: Some(handle),
        })
    }

    /// Always replies with `content`.
    pub fn always(content: impl Into<String>) -> std::io::Result<Self> {
        let content = content.into();
        Self::start(move |_, _| MockReply::Content(content.clone()))
    }

    /// Plays `script` in arrival order, then repeats `then` forever.
    pub fn sequence(script: Vec<MockReply>, then: MockReply) -> std::io::Result<Self> {
        Self::start(move |_, i| script.get(i).cloned().unwrap_or_else(|| then.clone()))
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn requests(&self) -> Vec<MockRequest> {
        self.requests.lock().unwrap().clone()
    }

    pub fn request_count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}

impl Drop for MockChatServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
