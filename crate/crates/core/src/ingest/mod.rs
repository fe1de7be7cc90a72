//! Populating a [`KnowledgeGraph`] from a SPARQL endpoint or a local
//! snapshot file.

mod snapshot;
mod sparql;

pub use snapshot::{load_snapshot, save_snapshot, Provenance, Snapshot, SNAPSHOT_VERSION};
pub use sparql::{SparqlClient, SparqlConfig, PAGE_SIZE};

use std::collections::BTreeSet;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{Entity, EntityId, KgError, KnowledgeGraph, RelationKind};

/// Placeholder substituted with the entity id in relation query templates.
pub const ENTITY_PLACEHOLDER: &str = "{entity}";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("endpoint {endpoint} unreachable after {attempts} attempts: {last}")]
    Unreachable {
        endpoint: String,
        attempts: u32,
        last: String,
    },
    #[error("invalid relation spec: {0}")]
    InvalidSpec(String),
    #[error("no seed entities given")]
    NoSeeds,
    #[error("snapshot format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: String, expected: u32 },
    #[error("corrupt snapshot at line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Graph(#[from] KgError),
}

/// Whether a relation query returns the children or the parents of the
/// entity substituted into it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Children,
    Parents,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSpec {
    pub kind: String,
    #[serde(default = "default_transitive")]
    pub transitive: bool,
    pub query: String,
    pub direction: Direction,
}

fn default_transitive() -> bool {
    true
}

impl RelationSpec {
    pub fn new(kind: impl Into<String>, query: impl Into<String>, direction: Direction) -> Result<Self, IngestError> {
        let spec = Self {
            kind: kind.into(),
            transitive: true,
            query: query.into(),
            direction,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let n = self.query.matches(ENTITY_PLACEHOLDER).count();
        if n != 1 {
            return Err(IngestError::InvalidSpec(format!(
                "query for `{}` must contain {ENTITY_PLACEHOLDER} exactly once (found {n})",
                self.kind
            )));
        }
        if self.kind.trim().is_empty() {
            return Err(IngestError::InvalidSpec("empty relation kind".into()));
        }
        Ok(())
    }

    pub fn render(&self, entity: &EntityId) -> String {
        self.query.replace(ENTITY_PLACEHOLDER, entity.as_str())
    }

    /// Wikidata "located in the administrative territorial entity" (P131).
    pub fn wikidata_places() -> Self {
        Self {
            kind: "located_in".into(),
            transitive: true,
            query: "SELECT ?item ?itemLabel WHERE { ?item wdt:P131 wd:{entity} . \
                    SERVICE wikibase:label { bd:serviceParam wikibase:language \"en\". } } ORDER BY ?item"
                .into(),
            direction: Direction::Children,
        }
    }

    /// Wikidata "part of" (P361), e.g. songs and singles of an album.
    pub fn wikidata_part_of() -> Self {
        Self {
            kind: "part_of".into(),
            transitive: true,
            query: "SELECT ?item ?itemLabel WHERE { ?item wdt:P361 wd:{entity} . \
                    SERVICE wikibase:label { bd:serviceParam wikibase:language \"en\". } } ORDER BY ?item"
                .into(),
            direction: Direction::Children,
        }
    }

    /// Wikidata "performer" (P175): albums performed by an act.
    pub fn wikidata_performer() -> Self {
        Self {
            kind: "performer".into(),
            transitive: false,
            query: "SELECT ?item ?itemLabel WHERE { ?item wdt:P175 wd:{entity} ; wdt:P31 wd:Q482994 . \
                    SERVICE wikibase:label { bd:serviceParam wikibase:language \"en\". } } ORDER BY ?item"
                .into(),
            direction: Direction::Children,
        }
    }
}

/// One related entity returned by a fetch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchedRow {
    pub id: String,
    pub label: String,
}

/// Source of relation rows, e.g. a SPARQL endpoint or an in-memory fake.
pub trait Fetcher: Sync {
    fn fetch(&self, spec: &RelationSpec, entity: &EntityId) -> Result<Vec<FetchedRow>, IngestError>;
}

/// Breadth-first expansion from `seeds`, `depth` levels deep. Fetches for
/// one level run on up to `parallelism` threads; assembly happens in
/// frontier order so the result does not depend on scheduling.
pub fn build_graph(
    seeds: &[Entity],
    spec: &RelationSpec,
    depth: u32,
    fetcher: &dyn Fetcher,
    parallelism: usize,
) -> Result<KnowledgeGraph, IngestError> {
    spec.validate()?;
    if seeds.is_empty() {
        return Err(IngestError::NoSeeds);
    }
    if depth == 0 {
        return Err(IngestError::InvalidSpec("depth must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| IngestError::InvalidSpec(format!("thread pool: {e}")))?;

    let mut graph = KnowledgeGraph::new(depth);
    graph.add_kind(RelationKind::new(spec.kind.clone(), spec.transitive))?;
    let mut seen = BTreeSet::new();
    let mut frontier = Vec::new();
    for seed in seeds {
        graph.add_entity(seed.clone())?;
        if seen.insert(seed.id.clone()) {
            frontier.push(seed.clone());
        }
    }

    for level in 0..depth {
        if frontier.is_empty() {
            break;
        }
        let fetched: Vec<Result<Vec<FetchedRow>, IngestError>> =
            pool.install(|| frontier.par_iter().map(|e| fetcher.fetch(spec, &e.id)).collect());
        let mut next = Vec::new();
        for (source, rows) in frontier.iter().zip(fetched) {
            for row in rows? {
                if row.label.trim().is_empty() {
                    log::warn!("dropping `{}` (empty label) under `{}`", row.id, source.id);
                    continue;
                }
                let entity = Entity::new(row.id.clone(), row.label, source.domain.clone());
                let id = entity.id.clone();
                if let Err(e) = graph.add_entity(entity) {
                    log::warn!("keeping first record for `{id}`: {e}");
                }
                let (child, parent) = match spec.direction {
                    Direction::Children => (&id, &source.id),
                    Direction::Parents => (&source.id, &id),
                };
                if let Err(e) = graph.add_edge(child, parent, &spec.kind) {
                    log::warn!("skipping edge at level {}: {e}", level + 1);
                    continue;
                }
                if seen.insert(id.clone()) {
                    next.push(graph.entity(&id).cloned().expect("just inserted"));
                }
            }
        }
        frontier = next;
    }
    Ok(graph)
}

/// Builds one graph per relation spec over the same seeds and merges them.
pub fn build_multi(
    seeds: &[Entity],
    specs: &[RelationSpec],
    depth: u32,
    fetcher: &dyn Fetcher,
    parallelism: usize,
) -> Result<KnowledgeGraph, IngestError> {
    let mut merged = KnowledgeGraph::new(depth);
    for spec in specs {
        let g = build_graph(seeds, spec, depth, fetcher, parallelism)?;
        merge_into(&mut merged, &g)?;
    }
    Ok(merged)
}

pub(crate) fn merge_into(dst: &mut KnowledgeGraph, src: &KnowledgeGraph) -> Result<(), IngestError> {
    for k in src.kinds() {
        dst.add_kind(k.clone())?;
    }
    for e in src.entities() {
        if let Err(err) = dst.add_entity(e.clone()) {
            log::warn!("merge: {err}");
        }
    }
    for e in src.edges() {
        dst.add_edge(&e.child, &e.parent, &e.kind)?;
    }
    Ok(())
}
