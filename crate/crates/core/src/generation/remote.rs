//! HTTP generator client.
//!
//! Request: `POST <endpoint>` with JSON `{"prompt", "max_tokens",
//! "temperature"}` and `Authorization: Bearer <key>`, the key read from the
//! environment variable named by [`RemoteConfig::api_key_env`] at call time.
//! Response: JSON `{"text": "..."}`. Any non-2xx status is a
//! [`GenerationError::BackendError`].

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{GenerationError, Generator};

pub const DEFAULT_API_KEY_ENV: &str = "GENERATOR_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_temperature")]
    pub temperature: f32,
}

fn default_key_env() -> String {
    DEFAULT_API_KEY_ENV.to_string()
}

fn default_max_tokens() -> u32 {
    256
}

fn default_temperature() -> f32 {
    0.9
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key_env: default_key_env(),
            max_tokens: default_max_tokens(),
            temperature: default_temperature(),
        }
    }
}

#[derive(Debug, Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
    max_tokens: u32,
    temperature: f32,
}

#[derive(Debug, Deserialize)]
struct CompletionResponse {
    text: String,
}

#[derive(Debug, Clone)]
pub struct RemoteGenerator {
    config: RemoteConfig,
}

impl RemoteGenerator {
    pub fn new(config: RemoteConfig) -> Self {
        Self { config }
    }
}

impl Generator for RemoteGenerator {
    fn generate(&self, prompt: &str, timeout: Duration) -> Result<String, GenerationError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        let mut request = agent.post(&self.config.endpoint);
        if let Ok(key) = std::env::var(&self.config.api_key_env) {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let body = CompletionRequest {
            prompt,
            max_tokens: self.config.max_tokens,
            temperature: self.config.temperature,
        };
        let mut response = request.send_json(&body).map_err(|e| map_err(e, timeout))?;
        let parsed: CompletionResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| map_err(e, timeout))?;
        Ok(parsed.text)
    }
}

fn map_err(err: ureq::Error, timeout: Duration) -> GenerationError {
    match err {
        ureq::Error::Timeout(_) => GenerationError::BackendTimeout(timeout),
        ureq::Error::StatusCode(code) => GenerationError::BackendError(format!("status {code}")),
        other => GenerationError::BackendError(other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;
    use std::thread;

    fn serve_once(status: &'static str, body: &'static str) -> (String, thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = vec![0u8; 8192];
            let mut req = Vec::new();
            loop {
                let n = stream.read(&mut buf).unwrap();
                req.extend_from_slice(&buf[..n]);
                let text = String::from_utf8_lossy(&req);
                if let Some(head_end) = text.find("\r\n\r\n") {
                    let len = text[..head_end]
                        .lines()
                        .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap()))
                        .unwrap_or(0);
                    if req.len() >= head_end + 4 + len {
                        break;
                    }
                }
            }
            let reply = format!(
                "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
            String::from_utf8_lossy(&req).into_owned()
        });
        (format!("http://{addr}/v1/complete"), handle)
    }

    #[test]
    fn posts_prompt_and_reads_text() {
        let (url, server) = serve_once("200 OK", r#"{"text":" and then it rained."}"#);
        let gen = RemoteGenerator::new(RemoteConfig::new(url));
        let out = gen.generate("It was cloudy", Duration::from_secs(5)).unwrap();
        assert_eq!(out, " and then it rained.");
        let req = server.join().unwrap();
        assert!(req.starts_with("POST /v1/complete"));
        let body: serde_json::Value =
            serde_json::from_str(&req[req.find("\r\n\r\n").unwrap() + 4..]).unwrap();
        assert_eq!(
            body,
            serde_json::json!({"prompt": "It was cloudy", "max_tokens": 256, "temperature": 0.9})
        );
    }

    #[test]
    fn non_success_status_is_backend_error() {
        let (url, server) = serve_once("503 Service Unavailable", r#"{"error":"busy"}"#);
        let gen = RemoteGenerator::new(RemoteConfig::new(url));
        assert_eq!(
            gen.generate("x", Duration::from_secs(5)),
            Err(GenerationError::BackendError("status 503".into()))
        );
        server.join().unwrap();
    }

    #[test]
    fn unreachable_endpoint_is_backend_error() {
        // bind then drop to get a port nobody listens on
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let gen = RemoteGenerator::new(RemoteConfig::new(format!("http://127.0.0.1:{port}/")));
        assert!(matches!(
            gen.generate("x", Duration::from_secs(2)),
            Err(GenerationError::BackendError(_))
        ));
    }

    #[test]
    fn silent_server_times_out() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hold = thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            thread::sleep(Duration::from_millis(800));
            drop(stream);
        });
        let gen = RemoteGenerator::new(RemoteConfig::new(format!("http://{addr}/")));
        assert!(matches!(
            gen.generate("x", Duration::from_millis(200)),
            Err(GenerationError::BackendTimeout(_))
        ));
        hold.join().unwrap();
    }
}
