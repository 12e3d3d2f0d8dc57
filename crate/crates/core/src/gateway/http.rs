//! HTTP transport speaking the common chat-completions JSON shape:
//! `POST {base_url}/chat/completions` with a message list, reply text read
//! from `choices[0].message.content`.

use std::time::Duration;

use serde_json::{json, Value};

use super::{ModelEndpoint, PromptSpec, Transport, TransportError};

pub struct HttpTransport {
    client: reqwest::blocking::Client,
    token: Option<String>,
}

impl HttpTransport {
    /// Reads the auth token from the endpoint's `auth_env` variable.
    pub fn for_endpoint(endpoint: &ModelEndpoint) -> Result<Self, TransportError> {
        let token = match &endpoint.auth_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                TransportError::Auth(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(endpoint.timeout_ms))
            .build()
            .map_err(|e| TransportError::Network(e.to_string()))?;
        Ok(HttpTransport { client, token })
    }
}

pub(crate) fn request_body(endpoint: &ModelEndpoint, prompt: &PromptSpec) -> Value {
    let user = match &prompt.image_uri {
        Some(uri) => json!([
            { "type": "text", "text": prompt.user },
            { "type": "image_url", "image_url": { "url": uri } }
        ]),
        None => Value::String(prompt.user.clone()),
    };
    json!({
        "model": endpoint.model,
        "temperature": 0,
        "messages": [
            { "role": "system", "content": prompt.system },
            { "role": "user", "content": user }
        ]
    })
}

pub(crate) fn extract_text(body: &str) -> Result<String, TransportError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| TransportError::BadResponse(e.to_string()))?;
    let content = &value["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Ok(s.clone()),
        // some servers return content parts
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join("")),
        _ => Err(TransportError::BadResponse(
            "missing choices[0].message.content".into(),
        )),
    }
}

fn classify(status: u16, body: String) -> TransportError {
    match status {
        401 | 403 => TransportError::Auth(format!("status {status}")),
        408 => TransportError::Timeout,
        429 => TransportError::RateLimited,
        500..=599 => TransportError::Server(status),
        _ => TransportError::Client {
            status,
            message: body.chars().take(200).collect(),
        },
    }
}

impl Transport for HttpTransport {
    fn send(&self, endpoint: &ModelEndpoint, prompt: &PromptSpec) -> Result<String, TransportError> {
        let url = format!("{}/chat/completions", endpoint.base_url.trim_end_matches('/'));
        let mut req = self.client.post(url).json(&request_body(endpoint, prompt));
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Network(e.to_string())
            }
        })?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Network(e.to_string())
            }
        })?;
        if status != 200 {
            return Err(classify(status, body));
        }
        extract_text(&body)
    }
}
