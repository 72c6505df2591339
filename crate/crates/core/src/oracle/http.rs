use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;

use super::{Backend, BackendError};
use crate::composer::PromptParagraph;

pub const API_URL_ENV: &str = "AUTOMLGPT_API_URL";
pub const API_KEY_ENV: &str = "AUTOMLGPT_API_KEY";

pub const MAX_ATTEMPTS: u32 = 3;

/// Client for an external completion endpoint. The prompt text is POSTed
/// as `text/plain`; the response body is the raw completion.
pub struct HttpBackend {
    url: String,
    api_key: Option<String>,
    client: Client,
    backoff_base: Duration,
    budget: Option<u64>,
    used: AtomicU64,
}

impl HttpBackend {
    pub fn new(url: impl Into<String>, api_key: Option<String>) -> Result<Self, BackendError> {
        let client = Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| BackendError::EndpointUnreachable(e.to_string()))?;
        Ok(HttpBackend {
            url: url.into(),
            api_key,
            client,
            backoff_base: Duration::from_secs(1),
            budget: None,
            used: AtomicU64::new(0),
        })
    }

    pub fn from_env() -> Result<Self, BackendError> {
        let url =
            std::env::var(API_URL_ENV).map_err(|_| BackendError::NotConfigured(format!("{API_URL_ENV} is not set")))?;
        HttpBackend::new(url, std::env::var(API_KEY_ENV).ok())
    }

    /// Maximum number of `complete` calls this client will serve.
    pub fn with_budget(mut self, max_requests: u64) -> Self {
        self.budget = Some(max_requests);
        self
    }

    pub fn with_backoff_base(mut self, base: Duration) -> Self {
        self.backoff_base = base;
        self
    }

    pub fn requests_used(&self) -> u64 {
        self.used.load(Ordering::SeqCst)
    }

    fn reserve(&self) -> Result<(), BackendError> {
        let Some(budget) = self.budget else {
            self.used.fetch_add(1, Ordering::SeqCst);
            return Ok(());
        };
        self.used
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| (n < budget).then_some(n + 1))
            .map(|_| ())
            .map_err(|_| BackendError::BudgetExceeded { budget })
    }

    fn attempt(&self, body: &str) -> Result<String, Attempt> {
        let mut req = self
            .client
            .post(&self.url)
            .header(reqwest::header::CONTENT_TYPE, "text/plain; charset=utf-8")
            .body(body.to_string());
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| Attempt::Retry(BackendError::EndpointUnreachable(e.to_string())))?;
        let status = resp.status();
        if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
            return Err(Attempt::Fatal(BackendError::AuthFailure(status.as_u16())));
        }
        if status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS {
            return Err(Attempt::Retry(BackendError::Status(status.as_u16())));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(BackendError::Status(status.as_u16())));
        }
        resp.text()
            .map_err(|e| Attempt::Retry(BackendError::EndpointUnreachable(e.to_string())))
    }
}

enum Attempt {
    Retry(BackendError),
    Fatal(BackendError),
}

impl Backend for HttpBackend {
    fn id(&self) -> &str {
        &self.url
    }

    fn complete(&self, prompt: &PromptParagraph) -> Result<String, BackendError> {
        self.reserve()?;
        let mut delay = self.backoff_base;
        let mut attempt = 1;
        loop {
            match self.attempt(&prompt.text) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) if attempt >= MAX_ATTEMPTS => return Err(e),
                Err(Attempt::Retry(_)) => {
                    thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::AtomicUsize;
    use std::sync::Arc;

    /// Serves `status` with `body` to every connection; counts connections.
    fn serve(status: &'static str, body: &'static str) -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut s) = stream else { break };
                counter.fetch_add(1, Ordering::SeqCst);
                let mut buf = [0u8; 8192];
                let mut req = Vec::new();
                // read until the end of headers plus the declared body
                loop {
                    let n = s.read(&mut buf).unwrap_or(0);
                    if n == 0 {
                        break;
                    }
                    req.extend_from_slice(&buf[..n]);
                    let text = String::from_utf8_lossy(&req);
                    if let Some(end) = text.find("\r\n\r\n") {
                        let len = text
                            .lines()
                            .find_map(|l| {
                                l.to_ascii_lowercase()
                                    .strip_prefix("content-length: ")
                                    .and_then(|v| v.trim().parse::<usize>().ok())
                            })
                            .unwrap_or(0);
                        if req.len() >= end + 4 + len {
                            break;
                        }
                    }
                }
                let resp = format!(
                    "HTTP/1.1 {status}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = s.write_all(resp.as_bytes());
            }
        });
        (format!("http://{addr}/complete"), hits)
    }

    fn prompt() -> PromptParagraph {
        PromptParagraph {
            text: "TASK: x\n".into(),
            spans: vec![],
        }
    }

    fn fast(b: HttpBackend) -> HttpBackend {
        b.with_backoff_base(Duration::from_millis(1))
    }

    #[test]
    fn success_returns_body() {
        let (url, hits) = serve("200 OK", "## Data Processing\n");
        let b = fast(HttpBackend::new(url, Some("k".into())).unwrap());
        assert_eq!(b.complete(&prompt()).unwrap(), "## Data Processing\n");
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn unauthorized_is_not_retried() {
        let (url, hits) = serve("401 Unauthorized", "");
        let b = fast(HttpBackend::new(url, None).unwrap());
        assert!(matches!(b.complete(&prompt()), Err(BackendError::AuthFailure(401))));
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn server_errors_retry_three_times() {
        let (url, hits) = serve("503 Service Unavailable", "");
        let b = fast(HttpBackend::new(url, None).unwrap());
        assert!(matches!(b.complete(&prompt()), Err(BackendError::Status(503))));
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn unreachable_after_attempts() {
        // bind then drop so the port is closed
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let b = fast(HttpBackend::new(format!("http://127.0.0.1:{port}/"), None).unwrap());
        assert!(matches!(
            b.complete(&prompt()),
            Err(BackendError::EndpointUnreachable(_))
        ));
    }

    #[test]
    fn budget_is_enforced() {
        let (url, _) = serve("200 OK", "ok");
        let b = fast(HttpBackend::new(url, None).unwrap()).with_budget(3);
        for _ in 0..3 {
            b.complete(&prompt()).unwrap();
        }
        assert!(matches!(
            b.complete(&prompt()),
            Err(BackendError::BudgetExceeded { budget: 3 })
        ));
        assert_eq!(b.requests_used(), 3);
    }
}
