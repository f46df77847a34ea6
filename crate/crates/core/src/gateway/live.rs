//! Chat-completion HTTP backend.
//!
//! Sends `POST {base_url}/chat/completions` with a bearer credential and a
//! single user message, and returns `choices[0].message.content`.

use async_trait::async_trait;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use super::{Backend, BackendError};
use crate::prompt::PromptText;

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    #[serde(skip_serializing_if = "Option::is_none")]
    temperature: Option<f32>,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

#[derive(Debug, Clone)]
pub struct LiveBackend {
    client: reqwest::Client,
    endpoint: String,
    model_name: String,
    api_key_env: String,
    api_key: Option<String>,
    temperature: Option<f32>,
}

impl LiveBackend {
    /// Reads the credential from `api_key_env` once, at construction.
    pub fn new(
        base_url: &str,
        model_name: &str,
        api_key_env: &str,
        temperature: Option<f32>,
    ) -> Result<Self, BackendError> {
        let api_key = std::env::var(api_key_env)
            .ok()
            .filter(|k| !k.trim().is_empty());
        Self::with_key(base_url, model_name, api_key_env, api_key, temperature)
    }

    pub fn with_key(
        base_url: &str,
        model_name: &str,
        api_key_env: &str,
        api_key: Option<String>,
        temperature: Option<f32>,
    ) -> Result<Self, BackendError> {
        let client = reqwest::Client::builder()
            .build()
            .map_err(|e| BackendError::Fatal {
                status: None,
                message: format!("building HTTP client: {e}"),
            })?;
        Ok(Self {
            client,
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            model_name: model_name.to_string(),
            api_key_env: api_key_env.to_string(),
            api_key,
            temperature,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

fn is_transient(status: StatusCode) -> bool {
    status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error()
}

fn snippet(body: &str) -> String {
    let mut s: String = body.chars().take(200).collect();
    if body.chars().count() > 200 {
        s.push('…');
    }
    s
}

#[async_trait]
impl Backend for LiveBackend {
    async fn send(&self, prompt: &PromptText) -> Result<String, BackendError> {
        let Some(api_key) = &self.api_key else {
            return Err(BackendError::CredentialMissing {
                variable: self.api_key_env.clone(),
            });
        };
        let request = ChatRequest {
            model: &self.model_name,
            messages: [ChatMessage {
                role: "user",
                content: &prompt.text,
            }],
            temperature: self.temperature,
        };
        let response = self
            .client
            .post(&self.endpoint)
            .bearer_auth(api_key)
            .json(&request)
            .send()
            .await
            .map_err(|e| {
                if e.is_timeout() {
                    BackendError::Timeout
                } else {
                    BackendError::Transient {
                        status: None,
                        message: e.to_string(),
                    }
                }
            })?;

        let status = response.status();
        let body = response.text().await.map_err(|e| BackendError::Transient {
            status: Some(status.as_u16()),
            message: format!("reading response body: {e}"),
        })?;
        if !status.is_success() {
            let message = snippet(&body);
            return Err(if is_transient(status) {
                BackendError::Transient {
                    status: Some(status.as_u16()),
                    message,
                }
            } else {
                BackendError::Fatal {
                    status: Some(status.as_u16()),
                    message,
                }
            });
        }

        let parsed: ChatResponse =
            serde_json::from_str(&body).map_err(|e| BackendError::Fatal {
                status: Some(status.as_u16()),
                message: format!("malformed completion response: {e}"),
            })?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Fatal {
                status: Some(status.as_u16()),
                message: "completion response has no message content".into(),
            })
    }

    fn is_ready(&self) -> bool {
        self.api_key.is_some()
    }
}
