//! Content-addressed response cache on disk.
//!
//! Keys digest the SUT name, conversation kind, every prior message and the
//! query text, so the same query asked after a different prefix is a
//! different entry. Entries are written once and never overwritten.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::adapter::{ChatMessage, Role};
use crate::testgen::ConversationKind;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheKey {
    pub sut: String,
    pub conversation: ConversationKind,
    pub prefix: Vec<ChatMessage>,
    pub query: String,
}

impl CacheKey {
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        let mut field = |s: &str| {
            h.update((s.len() as u64).to_le_bytes());
            h.update(s.as_bytes());
        };
        field(&self.sut);
        field(self.conversation.tag());
        for m in &self.prefix {
            field(match m.role {
                Role::System => "s",
                Role::User => "u",
                Role::Assistant => "a",
            });
            field(&m.content);
        }
        field(&self.query);
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    digest: String,
    sut: String,
    query: String,
    raw: String,
}

/// Maps a SUT name onto a safe directory name.
pub(crate) fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn entry_path(&self, key: &CacheKey, digest: &str) -> PathBuf {
        self.dir.join(sanitize(&key.sut)).join(format!("{digest}.json"))
    }

    /// Cached raw text for `key`. Unreadable or mismatching entries count
    /// as misses.
    pub fn get(&self, key: &CacheKey) -> Option<String> {
        let digest = key.digest();
        let path = self.entry_path(key, &digest);
        let bytes = fs::read(&path).ok()?;
        match serde_json::from_slice::<Entry>(&bytes) {
            Ok(e) if e.digest == digest && e.sut == key.sut && e.query == key.query => Some(e.raw),
            Ok(_) => {
                log::warn!("cache entry {} does not match its key; ignoring", path.display());
                None
            }
            Err(err) => {
                log::warn!("corrupt cache entry {}: {err}", path.display());
                None
            }
        }
    }

    /// Stores `raw` under `key` unless a valid entry already exists.
    /// Returns whether a new entry was written.
    pub fn put(&self, key: &CacheKey, raw: &str) -> io::Result<bool> {
        if self.get(key).is_some() {
            return Ok(false);
        }
        let digest = key.digest();
        let path = self.entry_path(key, &digest);
        let dir = path.parent().expect("entry path has a parent");
        fs::create_dir_all(dir)?;
        let entry = Entry {
            digest: digest.clone(),
            sut: key.sut.clone(),
            query: key.query.clone(),
            raw: raw.to_owned(),
        };
        let mut tmp = tempfile_in(dir, &digest)?;
        tmp.1
            .write_all(&serde_json::to_vec(&entry).map_err(io::Error::other)?)?;
        tmp.1.sync_all()?;
        drop(tmp.1);
        fs::rename(&tmp.0, &path)?;
        Ok(true)
    }
}

fn tempfile_in(dir: &Path, digest: &str) -> io::Result<(PathBuf, fs::File)> {
    use std::sync::atomic::{AtomicU64, Ordering};
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    let path = dir.join(format!(".{digest}.{}.{n}.tmp", std::process::id()));
    let file = fs::OpenOptions::new().write(true).create_new(true).open(&path)?;
    Ok((path, file))
}
