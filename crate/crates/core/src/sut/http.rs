//! Chat-completions adapter for OpenAI-compatible HTTP endpoints.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::adapter::{ChatMessage, ChatRequest, SutAdapter, SutError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpAdapterConfig {
    pub name: String,
    pub url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credential_env: Option<String>,
    /// Requested sampling temperature; `None` omits the field for backends
    /// that reject it.
    #[serde(default = "zero_temperature")]
    pub temperature: Option<f64>,
    #[serde(default = "yes")]
    pub system_command: bool,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn zero_temperature() -> Option<f64> {
    Some(0.0)
}

fn yes() -> bool {
    true
}

fn default_timeout() -> u64 {
    120
}

pub struct HttpChatAdapter {
    config: HttpAdapterConfig,
    http: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    #[serde(default)]
    content: Option<String>,
}

impl HttpChatAdapter {
    pub fn new(config: HttpAdapterConfig) -> Result<Self, SutError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| SutError::Config(e.to_string()))?;
        Ok(Self { config, http })
    }

    /// Fails early when the configured credential is absent.
    pub fn check_credentials(&self) -> Result<(), SutError> {
        self.token().map(|_| ())
    }

    fn token(&self) -> Result<Option<String>, SutError> {
        match &self.config.credential_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .ok()
                .filter(|v| !v.is_empty())
                .map(Some)
                .ok_or_else(|| SutError::CredentialMissing(var.clone())),
        }
    }

    pub fn request_body(&self, messages: &[ChatMessage]) -> serde_json::Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": messages,
        });
        if let Some(t) = self.config.temperature {
            body["temperature"] = json!(t);
        }
        body
    }
}

impl SutAdapter for HttpChatAdapter {
    fn name(&self) -> &str {
        &self.config.name
    }

    fn supports_system_command(&self) -> bool {
        self.config.system_command
    }

    fn complete(&self, request: &ChatRequest<'_>) -> Result<String, SutError> {
        let token = self.token()?;
        let mut req = self
            .http
            .post(&self.config.url)
            .json(&self.request_body(request.messages));
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                SutError::Timeout
            } else {
                SutError::Transport(e.to_string())
            }
        })?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(SutError::Transport(format!(
                "HTTP {status}: {}",
                body.chars().take(200).collect::<String>()
            )));
        }
        let completion: Completion = resp
            .json()
            .map_err(|e| SutError::Transport(format!("bad completion body: {e}")))?;
        Ok(completion
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sut::adapter::Role;

    fn config() -> HttpAdapterConfig {
        serde_json::from_str(r#"{"name":"m","url":"http://127.0.0.1:1/v1/chat/completions","model":"gpt-3.5-turbo"}"#)
            .unwrap()
    }

    #[test]
    fn defaults_request_zero_temperature() {
        let c = config();
        assert_eq!(c.temperature, Some(0.0));
        assert!(c.system_command);
        let a = HttpChatAdapter::new(c).unwrap();
        let body = a.request_body(&[ChatMessage::new(Role::User, "Is there a Kinawley in Ireland?")]);
        assert_eq!(body["temperature"], json!(0.0));
        assert_eq!(body["messages"][0]["role"], json!("user"));
    }

    #[test]
    fn omitted_temperature() {
        let mut c = config();
        c.temperature = None;
        let a = HttpChatAdapter::new(c).unwrap();
        assert!(a.request_body(&[]).get("temperature").is_none());
    }

    #[test]
    fn missing_credential() {
        let mut c = config();
        c.credential_env = Some("KGPROBE_TEST_SURELY_UNSET_VAR".into());
        let a = HttpChatAdapter::new(c).unwrap();
        assert_eq!(
            a.check_credentials(),
            Err(SutError::CredentialMissing("KGPROBE_TEST_SURELY_UNSET_VAR".into()))
        );
    }
}
