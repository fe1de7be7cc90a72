//! Transcripts and their on-disk run store: one line-delimited JSON file
//! per conversation, a header line followed by one line per turn.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::cache::sanitize;
use super::normalize::ResponseClass;
use crate::testgen::{ConversationKind, Query};

pub const TRANSCRIPT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub query: Query,
    /// Text actually sent (the query, possibly with the system command
    /// prepended).
    pub sent: String,
    pub raw: String,
    pub class: ResponseClass,
    /// Set when the adapter never produced a reply.
    #[serde(default)]
    pub no_response: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default)]
    pub cached: bool,
    #[serde(default)]
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub sut: String,
    pub conversation_id: String,
    pub kind: ConversationKind,
    pub turns: Vec<Turn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncated: Option<String>,
}

impl Transcript {
    pub fn class_at(&self, i: usize) -> ResponseClass {
        self.turns.get(i).map_or(ResponseClass::Invalid, |t| t.class)
    }

    pub fn had_failures(&self) -> bool {
        self.truncated.is_some() || self.turns.iter().any(|t| t.no_response)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    sut: String,
    conversation_id: String,
    kind: ConversationKind,
    turns: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truncated: Option<String>,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad transcript {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, sut: &str, conversation_id: &str) -> PathBuf {
        self.root.join(sanitize(sut)).join(format!("{conversation_id}.jsonl"))
    }

    pub fn save(&self, t: &Transcript) -> Result<(), StoreError> {
        let path = self.path_for(&t.sut, &t.conversation_id);
        let io = |source| StoreError::Io {
            path: path.clone(),
            source,
        };
        fs::create_dir_all(path.parent().expect("has parent")).map_err(io)?;
        let header = Header {
            format_version: TRANSCRIPT_VERSION,
            sut: t.sut.clone(),
            conversation_id: t.conversation_id.clone(),
            kind: t.kind,
            turns: t.turns.len(),
            truncated: t.truncated.clone(),
        };
        let mut buf = serde_json::to_string(&header).expect("serializable");
        buf.push('\n');
        for turn in &t.turns {
            buf.push_str(&serde_json::to_string(turn).expect("serializable"));
            buf.push('\n');
        }
        let tmp = path.with_extension("jsonl.tmp");
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(buf.as_bytes()).map_err(io)?;
        drop(f);
        fs::rename(&tmp, &path).map_err(io)
    }

    pub fn load(&self, sut: &str, conversation_id: &str) -> Result<Option<Transcript>, StoreError> {
        let path = self.path_for(sut, conversation_id);
        if !path.exists() {
            return Ok(None);
        }
        load_transcript(&path).map(Some)
    }

    /// Every stored transcript for `sut`, keyed by conversation id.
    pub fn load_all(&self, sut: &str) -> Result<BTreeMap<String, Transcript>, StoreError> {
        let dir = self.root.join(sanitize(sut));
        let mut out = BTreeMap::new();
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
            Err(source) => return Err(StoreError::Io { path: dir, source }),
        };
        for entry in entries {
            let path = entry
                .map_err(|source| StoreError::Io {
                    path: dir.clone(),
                    source,
                })?
                .path();
            if path.extension().and_then(|e| e.to_str()) != Some("jsonl") {
                continue;
            }
            let t = load_transcript(&path)?;
            out.insert(t.conversation_id.clone(), t);
        }
        Ok(out)
    }
}

pub fn load_transcript(path: &Path) -> Result<Transcript, StoreError> {
    let corrupt = |reason: String| StoreError::Corrupt {
        path: path.to_owned(),
        reason,
    };
    let file = fs::File::open(path).map_err(|source| StoreError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut lines = BufReader::new(file).lines();
    let header: Header = match lines.next() {
        Some(Ok(l)) => serde_json::from_str(&l).map_err(|e| corrupt(format!("header: {e}")))?,
        _ => return Err(corrupt("missing header".into())),
    };
    if header.format_version != TRANSCRIPT_VERSION {
        return Err(corrupt(format!("unsupported format version {}", header.format_version)));
    }
    let mut turns = Vec::with_capacity(header.turns);
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| corrupt(e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        turns.push(serde_json::from_str(&line).map_err(|e| corrupt(format!("turn {}: {e}", i + 1)))?);
    }
    if turns.len() != header.turns {
        return Err(corrupt(format!(
            "header says {} turns, found {}",
            header.turns,
            turns.len()
        )));
    }
    Ok(Transcript {
        sut: header.sut,
        conversation_id: header.conversation_id,
        kind: header.kind,
        turns,
        truncated: header.truncated,
    })
}
