//! SPARQL-over-HTTP fetcher consuming the standard JSON results format.
//!
//! Relation queries must project `?item` (an IRI or literal id) and
//! `?itemLabel`. Pages are requested with `LIMIT`/`OFFSET` appended to the
//! rendered query.

use std::thread;
use std::time::Duration;

use serde::Deserialize;

use super::{FetchedRow, Fetcher, IngestError, RelationSpec};
use crate::kg::EntityId;
use crate::retry::RetryPolicy;

pub const PAGE_SIZE: usize = 500;

/// Environment variable consulted for the endpoint when the config leaves
/// it unset.
pub const ENDPOINT_ENV: &str = "KGPROBE_SPARQL_ENDPOINT";
pub const DEFAULT_ENDPOINT: &str = "https://query.wikidata.org/sparql";

#[derive(Debug, Clone)]
pub struct SparqlConfig {
    pub endpoint: String,
    pub page_size: usize,
    pub politeness: Duration,
    pub retry: RetryPolicy,
    pub timeout: Duration,
    pub user_agent: String,
}

impl SparqlConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            page_size: PAGE_SIZE,
            politeness: Duration::from_millis(250),
            retry: RetryPolicy::default(),
            timeout: Duration::from_secs(60),
            user_agent: concat!("kgprobe/", env!("CARGO_PKG_VERSION")).to_owned(),
        }
    }

    /// Endpoint from `explicit`, else `$KGPROBE_SPARQL_ENDPOINT`, else Wikidata.
    pub fn resolve(explicit: Option<&str>) -> Self {
        let endpoint = explicit
            .map(str::to_owned)
            .or_else(|| std::env::var(ENDPOINT_ENV).ok())
            .unwrap_or_else(|| DEFAULT_ENDPOINT.to_owned());
        Self::new(endpoint)
    }
}

pub struct SparqlClient {
    config: SparqlConfig,
    http: reqwest::blocking::Client,
}

#[derive(Debug, Deserialize)]
struct ResultsDoc {
    results: Bindings,
}

#[derive(Debug, Deserialize)]
struct Bindings {
    bindings: Vec<serde_json::Map<String, serde_json::Value>>,
}

impl SparqlClient {
    pub fn new(config: SparqlConfig) -> Result<Self, IngestError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .user_agent(config.user_agent.clone())
            .build()
            .map_err(|e| IngestError::InvalidSpec(format!("http client: {e}")))?;
        Ok(Self { config, http })
    }

    pub fn endpoint(&self) -> &str {
        &self.config.endpoint
    }

    fn page(&self, query: &str) -> Result<String, IngestError> {
        self.config
            .retry
            .run(|_| {
                let resp = self
                    .http
                    .get(&self.config.endpoint)
                    .query(&[("query", query), ("format", "json")])
                    .header("Accept", "application/sparql-results+json")
                    .send()
                    .map_err(|e| e.to_string())?;
                let status = resp.status();
                if !status.is_success() {
                    return Err(format!("HTTP {status}"));
                }
                resp.text().map_err(|e| e.to_string())
            })
            .map_err(|(last, attempts)| IngestError::Unreachable {
                endpoint: self.config.endpoint.clone(),
                attempts,
                last,
            })
    }
}

/// Strips an IRI down to its last path segment (`.../entity/Q31` -> `Q31`).
fn local_id(value: &str) -> &str {
    value.rsplit(['/', '#']).next().unwrap_or(value)
}

/// Parses one page of `application/sparql-results+json`. Rows without a
/// usable `item` binding are skipped with a warning.
pub(crate) fn parse_results(body: &str) -> Result<Vec<FetchedRow>, IngestError> {
    let doc: ResultsDoc = serde_json::from_str(body).map_err(|e| IngestError::Corrupt {
        line: e.line(),
        reason: format!("sparql results: {e}"),
    })?;
    let mut rows = Vec::with_capacity(doc.results.bindings.len());
    for (i, b) in doc.results.bindings.iter().enumerate() {
        let value = |var: &str| b.get(var).and_then(|v| v.get("value")).and_then(|v| v.as_str());
        let Some(item) = value("item").map(local_id).filter(|s| !s.is_empty()) else {
            log::warn!("skipping malformed result row {i}: no `item` binding");
            continue;
        };
        let label = value("itemLabel").unwrap_or_default();
        rows.push(FetchedRow {
            id: item.to_owned(),
            label: label.to_owned(),
        });
    }
    Ok(rows)
}

impl Fetcher for SparqlClient {
    fn fetch(&self, spec: &RelationSpec, entity: &EntityId) -> Result<Vec<FetchedRow>, IngestError> {
        let base = spec.render(entity);
        let mut out = Vec::new();
        let mut offset = 0;
        loop {
            let query = format!("{base}\nLIMIT {} OFFSET {offset}", self.config.page_size);
            let rows = parse_results(&self.page(&query)?)?;
            let n = rows.len();
            out.extend(rows);
            if n < self.config.page_size {
                break;
            }
            offset += n;
            if !self.config.politeness.is_zero() {
                thread::sleep(self.config.politeness);
            }
        }
        Ok(out)
    }
}
