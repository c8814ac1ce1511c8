//! Generic JSON chat backend.
//!
//! Request body:
//!
//! ```json
//! {"model": "...",
//!  "messages": [{"role": "user", "content": [
//!     {"image": "<base64 png>", "mime": "image/png"}, ...,
//!     {"text": "<prompt>"}]}],
//!  "temperature": 0.0, "max_tokens": 256}
//! ```
//!
//! The answer text is read from `text`, `choices[0].message.content`, or the
//! concatenated `candidates[0].content.parts[*].text`, whichever is present.

use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Backend, BackendError, ModelRequest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    pub endpoint_url: String,
    pub model_name: String,
    #[serde(skip)]
    pub api_key: Option<String>,
    /// Header carrying the key. `Authorization` gets a `Bearer ` prefix.
    pub auth_header: String,
    pub timeout_s: u64,
}

impl HttpConfig {
    pub fn new(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            endpoint_url: endpoint_url.into(),
            model_name: model_name.into(),
            api_key: None,
            auth_header: "Authorization".into(),
            timeout_s: 120,
        }
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    id: String,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_s))
            .build()
            .map_err(|e| BackendError::InvalidRequest(format!("building HTTP client: {e}")))?;
        Ok(Self {
            id: format!("http:{}", config.model_name),
            config,
            client,
        })
    }

    pub fn request_body(&self, req: &ModelRequest) -> Value {
        let b64 = base64::engine::general_purpose::STANDARD;
        let mut content: Vec<Value> = req
            .images
            .iter()
            .map(|png| json!({"image": b64.encode(png), "mime": "image/png"}))
            .collect();
        content.push(json!({"text": req.prompt_text}));
        json!({
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": content}],
            "temperature": req.params.temperature,
            "max_tokens": req.params.max_output_tokens,
        })
    }
}

/// Pulls the answer text out of a response body.
pub(crate) fn extract_text(body: &Value) -> Option<String> {
    if let Some(t) = body.get("text").and_then(Value::as_str) {
        return Some(t.to_string());
    }
    if let Some(t) = body.pointer("/choices/0/message/content").and_then(Value::as_str) {
        return Some(t.to_string());
    }
    let parts = body.pointer("/candidates/0/content/parts")?.as_array()?;
    let texts: Vec<&str> = parts.iter().filter_map(|p| p.get("text")?.as_str()).collect();
    (!texts.is_empty() || parts.is_empty()).then(|| texts.concat())
}

impl Backend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, req: &ModelRequest) -> Result<String, BackendError> {
        let mut builder = self.client.post(&self.config.endpoint_url).json(&self.request_body(req));
        if let Some(key) = &self.config.api_key {
            let value = if self.config.auth_header.eq_ignore_ascii_case("authorization") {
                format!("Bearer {key}")
            } else {
                key.clone()
            };
            builder = builder.header(self.config.auth_header.as_str(), value);
        }
        let resp = builder
            .send()
            .map_err(|e| BackendError::transient(format!("transport: {e}")))?;
        let status = resp.status();
        let body = resp
            .text()
            .map_err(|e| BackendError::transient(format!("reading body: {e}")))?;
        match status.as_u16() {
            200..=299 => {}
            401 | 403 => return Err(BackendError::Auth(format!("HTTP {status}"))),
            408 | 429 | 500..=599 => return Err(BackendError::transient(format!("HTTP {status}"))),
            _ => {
                return Err(BackendError::Protocol(format!(
                    "HTTP {status}: {}",
                    body.chars().take(200).collect::<String>()
                )))
            }
        }
        let value: Value = serde_json::from_str(&body)
            .map_err(|e| BackendError::Protocol(format!("response is not JSON: {e}")))?;
        extract_text(&value).ok_or_else(|| BackendError::Protocol("response has no answer text".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_known_shapes() {
        assert_eq!(extract_text(&json!({"text": "(1)"})).as_deref(), Some("(1)"));
        assert_eq!(
            extract_text(&json!({"choices": [{"message": {"content": "(2)"}}]})).as_deref(),
            Some("(2)")
        );
        assert_eq!(
            extract_text(&json!({"candidates": [{"content": {"parts": [{"text": "(3),"}, {"text": "(4)"}]}}]}))
                .as_deref(),
            Some("(3),(4)")
        );
        assert_eq!(extract_text(&json!({"text": ""})).as_deref(), Some(""));
        assert!(extract_text(&json!({"answer": "(1)"})).is_none());
        assert!(extract_text(&json!({"text": 5})).is_none());
    }

    #[test]
    fn body_puts_images_before_text() {
        let backend = HttpBackend::new(HttpConfig::new("http://localhost:1/", "m")).unwrap();
        let req = ModelRequest::new("hello", vec![vec![1, 2], vec![3]]);
        let body = backend.request_body(&req);
        let content = body.pointer("/messages/0/content").unwrap().as_array().unwrap();
        assert_eq!(content.len(), 3);
        assert_eq!(content[0]["image"], "AQI=");
        assert_eq!(content[0]["mime"], "image/png");
        assert_eq!(content[2]["text"], "hello");
        assert_eq!(body["max_tokens"], 256);
        assert_eq!(body["model"], "m");
        assert_eq!(body["messages"][0]["role"], "user");
    }
}
