use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::testgen::{ConversationKind, Query};

/// Instruction given to every model before a conversation starts.
pub const SYSTEM_COMMAND: &str = "Be concise as possible. Answer with a yes or no response,";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

/// One turn's request. `messages` is the whole session so far, ending
/// with the user message for `query`. `conversation` and `query` are
/// harness metadata; network adapters only send `messages`.
#[derive(Debug, Clone, Copy)]
pub struct ChatRequest<'a> {
    pub conversation: ConversationKind,
    pub turn: usize,
    pub messages: &'a [ChatMessage],
    pub query: &'a Query,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SutError {
    #[error("credential environment variable `{0}` is not set")]
    CredentialMissing(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("offline mode: no cached response for `{0}`")]
    OfflineMiss(String),
    #[error("adapter misconfigured: {0}")]
    Config(String),
}

impl SutError {
    /// Transport-level failures that may succeed on retry.
    pub fn is_transient(&self) -> bool {
        matches!(self, Self::Transport(_) | Self::Timeout)
    }
}

/// A subject model that answers chat requests.
pub trait SutAdapter: Send + Sync {
    fn name(&self) -> &str;

    /// Whether the backend accepts a system-role message. When it does not,
    /// the system command is prepended to the first query instead.
    fn supports_system_command(&self) -> bool;

    fn complete(&self, request: &ChatRequest<'_>) -> Result<String, SutError>;
}
