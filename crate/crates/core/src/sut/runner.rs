//! Executes scripted conversations against one adapter.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use super::adapter::{ChatMessage, ChatRequest, Role, SutAdapter, SutError, SYSTEM_COMMAND};
use super::cache::{CacheKey, ResponseCache};
use super::normalize::{normalize_response, ResponseClass};
use super::store::{RunStore, StoreError, Transcript, Turn};
use crate::retry::RetryPolicy;
use crate::testgen::Conversation;

#[derive(Debug, Error)]
pub enum RunError {
    /// A failure that invalidates the whole run, not just one turn.
    #[error("{sut}: {source}")]
    Aborted {
        sut: String,
        #[source]
        source: SutError,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cache write failed: {0}")]
    Cache(#[from] std::io::Error),
}

/// Spaces requests so that at most `rpm` start per minute.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn per_minute(rpm: Option<u32>) -> Self {
        let interval = match rpm {
            Some(n) if n > 0 => Duration::from_secs_f64(60.0 / f64::from(n)),
            _ => Duration::ZERO,
        };
        Self {
            interval,
            next: Mutex::new(None),
        }
    }

    pub fn interval(&self) -> Duration {
        self.interval
    }

    /// Blocks until the caller may send its request.
    pub fn acquire(&self) {
        if self.interval.is_zero() {
            return;
        }
        let wait = {
            let mut next = self.next.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + self.interval);
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunnerOptions {
    pub retry: RetryPolicy,
    pub requests_per_minute: Option<u32>,
    /// Serve only from the cache; a miss aborts the run.
    pub offline: bool,
    /// Maximum conversations in flight.
    pub parallelism: usize,
}

impl Default for RunnerOptions {
    fn default() -> Self {
        Self {
            retry: RetryPolicy::default(),
            requests_per_minute: None,
            offline: false,
            parallelism: 4,
        }
    }
}

/// Totals for one [`Runner::run_all`] call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunStats {
    pub conversations: usize,
    pub turns: usize,
    pub cache_hits: usize,
    pub resumed: usize,
    /// Turns that got no reply after all retries.
    pub exhausted: usize,
}

pub struct Runner<'a> {
    adapter: &'a dyn SutAdapter,
    cache: Option<ResponseCache>,
    limiter: RateLimiter,
    options: RunnerOptions,
}

impl<'a> Runner<'a> {
    pub fn new(adapter: &'a dyn SutAdapter, cache: Option<ResponseCache>, options: RunnerOptions) -> Self {
        Self {
            adapter,
            cache,
            limiter: RateLimiter::per_minute(options.requests_per_minute),
            options,
        }
    }

    pub fn sut(&self) -> &str {
        self.adapter.name()
    }

    /// Runs one conversation in a single session, turn by turn.
    pub fn run_conversation(&self, conversation: &Conversation) -> Result<Transcript, RunError> {
        let sut = self.adapter.name().to_owned();
        let abort = |source| RunError::Aborted {
            sut: sut.clone(),
            source,
        };
        let mut messages = Vec::new();
        if self.adapter.supports_system_command() {
            messages.push(ChatMessage::new(Role::System, SYSTEM_COMMAND));
        }
        let mut turns = Vec::with_capacity(conversation.queries.len());
        for (i, query) in conversation.queries.iter().enumerate() {
            let sent = if i == 0 && !self.adapter.supports_system_command() {
                format!("{SYSTEM_COMMAND} {}", query.text)
            } else {
                query.text.clone()
            };
            let key = CacheKey {
                sut: sut.clone(),
                conversation: conversation.kind,
                prefix: messages.clone(),
                query: sent.clone(),
            };
            messages.push(ChatMessage::new(Role::User, sent.clone()));
            let started = Instant::now();
            let cached = self.cache.as_ref().and_then(|c| c.get(&key));
            let was_cached = cached.is_some();
            let reply = match cached {
                Some(raw) => Ok(raw),
                None if self.options.offline => {
                    return Err(abort(SutError::OfflineMiss(sent)));
                }
                None => {
                    let request = ChatRequest {
                        conversation: conversation.kind,
                        turn: i,
                        messages: &messages,
                        query,
                    };
                    let result = self.options.retry.run(|attempt| {
                        self.limiter.acquire();
                        match self.adapter.complete(&request) {
                            Err(e) if e.is_transient() => {
                                log::debug!("{sut}: attempt {attempt} failed: {e}");
                                Err(e)
                            }
                            // Not retried: surfaces as an abort below.
                            Err(e) => Ok(Err(e)),
                            Ok(raw) => Ok(Ok(raw)),
                        }
                    });
                    match result {
                        Ok(Ok(raw)) => {
                            if let Some(c) = &self.cache {
                                c.put(&key, &raw)?;
                            }
                            Ok(raw)
                        }
                        Ok(Err(fatal)) => return Err(abort(fatal)),
                        Err((e, attempts)) => Err(format!("no response after {attempts} attempts: {e}")),
                    }
                }
            };
            let elapsed_ms = if was_cached {
                0
            } else {
                started.elapsed().as_millis() as u64
            };
            let turn = match reply {
                Ok(raw) => {
                    messages.push(ChatMessage::new(Role::Assistant, raw.clone()));
                    Turn {
                        query: query.clone(),
                        sent,
                        class: normalize_response(&raw),
                        raw,
                        no_response: false,
                        note: None,
                        cached: was_cached,
                        elapsed_ms,
                    }
                }
                Err(note) => {
                    log::warn!("{sut}: {note}");
                    Turn {
                        query: query.clone(),
                        sent,
                        raw: String::new(),
                        class: ResponseClass::Invalid,
                        no_response: true,
                        note: Some(note),
                        cached: false,
                        elapsed_ms,
                    }
                }
            };
            turns.push(turn);
        }
        Ok(Transcript {
            sut,
            conversation_id: conversation.id(),
            kind: conversation.kind,
            turns,
            truncated: None,
        })
    }

    /// Runs every conversation, concurrently up to the parallelism cap, and
    /// stores each transcript. Stored transcripts without failed turns are
    /// reused instead of re-run.
    pub fn run_all(&self, conversations: &[Conversation], store: &RunStore) -> Result<RunStats, RunError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.options.parallelism.max(1))
            .build()
            .expect("thread pool");
        let per: Vec<(usize, usize, bool, usize)> = pool.install(|| {
            conversations
                .par_iter()
                .map(|conv| {
                    if let Some(t) = store.load(self.sut(), &conv.id()).ok().flatten() {
                        if !t.had_failures() && t.turns.len() == conv.queries.len() {
                            return Ok((t.turns.len(), 0, true, 0));
                        }
                    }
                    let t = self.run_conversation(conv)?;
                    store.save(&t)?;
                    let hits = t.turns.iter().filter(|x| x.cached).count();
                    let exhausted = t.turns.iter().filter(|x| x.no_response).count();
                    Ok((t.turns.len(), hits, false, exhausted))
                })
                .collect::<Result<_, RunError>>()
        })?;
        Ok(per.into_iter().fold(
            RunStats {
                conversations: conversations.len(),
                ..RunStats::default()
            },
            |mut s, (turns, hits, resumed, exhausted)| {
                s.turns += turns;
                s.cache_hits += hits;
                s.resumed += usize::from(resumed);
                s.exhausted += exhausted;
                s
            },
        ))
    }
}

/// Runs one conversation with default options and no cache.
pub fn run_conversation(adapter: &dyn SutAdapter, conversation: &Conversation) -> Result<Transcript, RunError> {
    Runner::new(adapter, None, RunnerOptions::default()).run_conversation(conversation)
}
