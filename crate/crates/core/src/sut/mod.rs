//! Conversation execution against subject models.

pub mod adapter;
pub mod cache;
pub mod http;
pub mod normalize;
pub mod runner;
pub mod scripted;
pub mod store;

pub use adapter::{ChatMessage, ChatRequest, Role, SutAdapter, SutError, SYSTEM_COMMAND};
pub use cache::{CacheKey, ResponseCache};
pub use http::{HttpAdapterConfig, HttpChatAdapter};
pub use normalize::{normalize_response, ResponseClass};
pub use runner::{run_conversation, RateLimiter, RunError, RunStats, Runner, RunnerOptions};
pub use scripted::{scripted_sut, FaultAction, FaultContext, FaultRule, FaultSpec, ScriptedAnswer, ScriptedSut};
pub use store::{load_transcript, RunStore, StoreError, Transcript, Turn, TRANSCRIPT_VERSION};
