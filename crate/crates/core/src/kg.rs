//! Ground-truth knowledge graph: entities, typed directed relations,
//! leaf-to-root path extraction and seeded leaf sampling.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Construction depth used when a domain does not set one.
pub const DEFAULT_DEPTH: u32 = 3;

/// Opaque, stable entity identifier (for example a Wikidata item id).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub String);

impl EntityId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for EntityId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    pub label: String,
    pub domain: String,
}

impl Entity {
    pub fn new(id: impl Into<String>, label: impl Into<String>, domain: impl Into<String>) -> Self {
        Self {
            id: EntityId(id.into()),
            label: label.into(),
            domain: domain.into(),
        }
    }
}

/// A named relation kind. Every kind is directed, child to parent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationKind {
    pub name: String,
    pub transitive: bool,
}

impl RelationKind {
    pub fn new(name: impl Into<String>, transitive: bool) -> Self {
        Self {
            name: name.into(),
            transitive,
        }
    }

    pub fn directed(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub child: EntityId,
    pub parent: EntityId,
    pub kind: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KgError {
    #[error("entity `{0}` not found")]
    EntityNotFound(EntityId),
    #[error("duplicate entity id `{0}` with a different label or domain")]
    DuplicateEntity(EntityId),
    #[error("entity `{0}` has an empty label")]
    EmptyLabel(EntityId),
    #[error("relation kind `{0}` is not registered")]
    UnknownKind(String),
    #[error("relation kind `{0}` registered twice with different flags")]
    DuplicateKind(String),
    #[error("self edge on `{0}`")]
    SelfEdge(EntityId),
    #[error("edge {child} -> {parent} ({kind}) would close a cycle")]
    Cycle {
        child: EntityId,
        parent: EntityId,
        kind: String,
    },
    #[error("leaf `{0}` has no parent of kind `{1}`")]
    NoParent(EntityId, String),
    #[error("branching ancestry at `{node}`: {count} parents of kind `{kind}`")]
    BranchingAncestry { node: EntityId, kind: String, count: usize },
    #[error("requested {requested} leaves but the graph has only {available}")]
    InsufficientLeaves { requested: usize, available: usize },
    #[error("invalid path: {0}")]
    InvalidPath(String),
}

/// Directed ground-truth graph. Edges run from child to parent and are
/// acyclic within each relation kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeGraph {
    entities: BTreeMap<EntityId, Entity>,
    kinds: BTreeMap<String, RelationKind>,
    edges: BTreeSet<Edge>,
    // kind -> child -> parents
    parents: BTreeMap<String, BTreeMap<EntityId, BTreeSet<EntityId>>>,
    children: BTreeMap<String, BTreeMap<EntityId, BTreeSet<EntityId>>>,
    depth: u32,
}

impl Default for KnowledgeGraph {
    fn default() -> Self {
        Self::new(DEFAULT_DEPTH)
    }
}

impl KnowledgeGraph {
    pub fn new(depth: u32) -> Self {
        Self {
            entities: BTreeMap::new(),
            kinds: BTreeMap::new(),
            edges: BTreeSet::new(),
            parents: BTreeMap::new(),
            children: BTreeMap::new(),
            depth: depth.max(1),
        }
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn set_depth(&mut self, depth: u32) {
        self.depth = depth.max(1);
    }

    /// Adds an entity. Re-adding an identical entity is a no-op.
    pub fn add_entity(&mut self, entity: Entity) -> Result<(), KgError> {
        if entity.label.trim().is_empty() {
            return Err(KgError::EmptyLabel(entity.id));
        }
        match self.entities.get(&entity.id) {
            Some(existing) if *existing == entity => Ok(()),
            Some(_) => Err(KgError::DuplicateEntity(entity.id)),
            None => {
                self.entities.insert(entity.id.clone(), entity);
                Ok(())
            }
        }
    }

    pub fn add_kind(&mut self, kind: RelationKind) -> Result<(), KgError> {
        match self.kinds.get(&kind.name) {
            Some(existing) if *existing == kind => Ok(()),
            Some(_) => Err(KgError::DuplicateKind(kind.name)),
            None => {
                self.kinds.insert(kind.name.clone(), kind);
                Ok(())
            }
        }
    }

    /// Adds a child -> parent edge. Returns `Ok(false)` if the edge was
    /// already present.
    pub fn add_edge(&mut self, child: &EntityId, parent: &EntityId, kind: &str) -> Result<bool, KgError> {
        if !self.kinds.contains_key(kind) {
            return Err(KgError::UnknownKind(kind.to_owned()));
        }
        for id in [child, parent] {
            if !self.entities.contains_key(id) {
                return Err(KgError::EntityNotFound(id.clone()));
            }
        }
        if child == parent {
            return Err(KgError::SelfEdge(child.clone()));
        }
        let edge = Edge {
            child: child.clone(),
            parent: parent.clone(),
            kind: kind.to_owned(),
        };
        if self.edges.contains(&edge) {
            return Ok(false);
        }
        if self.reaches(parent, child, kind) {
            return Err(KgError::Cycle {
                child: child.clone(),
                parent: parent.clone(),
                kind: kind.to_owned(),
            });
        }
        self.parents
            .entry(kind.to_owned())
            .or_default()
            .entry(child.clone())
            .or_default()
            .insert(parent.clone());
        self.children
            .entry(kind.to_owned())
            .or_default()
            .entry(parent.clone())
            .or_default()
            .insert(child.clone());
        self.edges.insert(edge);
        Ok(true)
    }

    pub fn entity(&self, id: &EntityId) -> Option<&Entity> {
        self.entities.get(id)
    }

    pub fn label(&self, id: &EntityId) -> Option<&str> {
        self.entities.get(id).map(|e| e.label.as_str())
    }

    pub fn contains(&self, id: &EntityId) -> bool {
        self.entities.contains_key(id)
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn kinds(&self) -> impl Iterator<Item = &RelationKind> {
        self.kinds.values()
    }

    pub fn kind(&self, name: &str) -> Option<&RelationKind> {
        self.kinds.get(name)
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, child: &EntityId, parent: &EntityId, kind: &str) -> bool {
        self.parents_of(child, kind).any(|p| p == parent)
    }

    pub fn parents_of<'a>(&'a self, child: &EntityId, kind: &str) -> impl Iterator<Item = &'a EntityId> + 'a {
        self.parents.get(kind).and_then(|m| m.get(child)).into_iter().flatten()
    }

    pub fn children_of<'a>(&'a self, parent: &EntityId, kind: &str) -> impl Iterator<Item = &'a EntityId> + 'a {
        self.children
            .get(kind)
            .and_then(|m| m.get(parent))
            .into_iter()
            .flatten()
    }

    /// Whether `to` is reachable from `from` by following one or more
    /// child -> parent edges of `kind`.
    pub fn reaches(&self, from: &EntityId, to: &EntityId, kind: &str) -> bool {
        let mut stack: Vec<&EntityId> = self.parents_of(from, kind).collect();
        let mut seen = BTreeSet::new();
        while let Some(node) = stack.pop() {
            if node == to {
                return true;
            }
            if seen.insert(node) {
                stack.extend(self.parents_of(node, kind));
            }
        }
        false
    }

    /// Leaves of `kind`: entities with at least one parent and no children
    /// under that kind.
    pub fn leaves_of_kind(&self, kind: &str) -> Vec<EntityId> {
        let Some(parents) = self.parents.get(kind) else {
            return Vec::new();
        };
        let children = self.children.get(kind);
        parents
            .keys()
            .filter(|id| children.is_none_or(|c| !c.contains_key(*id)))
            .cloned()
            .collect()
    }

    /// Leaves across all kinds, paired with the kind they are a leaf of,
    /// in deterministic (kind, id) order.
    pub fn leaves(&self) -> Vec<(EntityId, String)> {
        self.kinds
            .keys()
            .flat_map(|k| self.leaves_of_kind(k).into_iter().map(move |id| (id, k.clone())))
            .collect()
    }

    /// Follows the unique parent chain of `kind` from `leaf` to a root.
    pub fn extract_path(&self, leaf: &EntityId, kind: &str) -> Result<KnowledgePath, KgError> {
        if !self.contains(leaf) {
            return Err(KgError::EntityNotFound(leaf.clone()));
        }
        if !self.kinds.contains_key(kind) {
            return Err(KgError::UnknownKind(kind.to_owned()));
        }
        let mut nodes = vec![leaf.clone()];
        let mut current = leaf.clone();
        loop {
            let parents: Vec<&EntityId> = self.parents_of(&current, kind).collect();
            match parents.len() {
                0 => break,
                1 => {
                    current = parents[0].clone();
                    nodes.push(current.clone());
                }
                count => {
                    return Err(KgError::BranchingAncestry {
                        node: current,
                        kind: kind.to_owned(),
                        count,
                    })
                }
            }
        }
        if nodes.len() < 2 {
            return Err(KgError::NoParent(leaf.clone(), kind.to_owned()));
        }
        Ok(KnowledgePath {
            nodes,
            kind: kind.to_owned(),
        })
    }

    /// Draws `n` distinct leaves (with their kinds) reproducibly from `seed`.
    pub fn select_leaves(&self, n: usize, seed: u64) -> Result<Vec<(EntityId, String)>, KgError> {
        let leaves = self.leaves();
        if n > leaves.len() {
            return Err(KgError::InsufficientLeaves {
                requested: n,
                available: leaves.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked: Vec<usize> = sample(&mut rng, leaves.len(), n).into_vec();
        picked.sort_unstable();
        Ok(picked.into_iter().map(|i| leaves[i].clone()).collect())
    }
}

/// Leaf-to-root chain under a single relation kind.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KnowledgePath {
    nodes: Vec<EntityId>,
    kind: String,
}

impl KnowledgePath {
    /// Builds a path from raw parts, checking length and node uniqueness.
    /// Edge membership is checked separately by [`KnowledgePath::validate`].
    pub fn new(nodes: Vec<EntityId>, kind: impl Into<String>) -> Result<Self, KgError> {
        if nodes.len() < 2 {
            return Err(KgError::InvalidPath("fewer than two nodes".into()));
        }
        let distinct: BTreeSet<_> = nodes.iter().collect();
        if distinct.len() != nodes.len() {
            return Err(KgError::InvalidPath("repeated node".into()));
        }
        Ok(Self {
            nodes,
            kind: kind.into(),
        })
    }

    pub fn validate(&self, graph: &KnowledgeGraph) -> Result<(), KgError> {
        for w in self.nodes.windows(2) {
            if !graph.has_edge(&w[0], &w[1], &self.kind) {
                return Err(KgError::InvalidPath(format!(
                    "no `{}` edge {} -> {}",
                    self.kind, w[0], w[1]
                )));
            }
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[EntityId] {
        &self.nodes
    }

    pub fn kind(&self) -> &str {
        &self.kind
    }

    pub fn leaf(&self) -> &EntityId {
        &self.nodes[0]
    }

    pub fn root(&self) -> &EntityId {
        self.nodes.last().expect("path has at least two nodes")
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Every (descendant, ancestor) pair, descendant strictly earlier in
    /// the path. Ordered by descendant then ancestor position.
    pub fn all_ancestor_pairs(&self) -> Vec<(EntityId, EntityId)> {
        let n = self.nodes.len();
        let mut out = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                out.push((self.nodes[i].clone(), self.nodes[j].clone()));
            }
        }
        out
    }

    /// Number of hops between two nodes on the path, if `ancestor` is above
    /// `descendant`.
    pub fn distance(&self, descendant: &EntityId, ancestor: &EntityId) -> Option<usize> {
        let i = self.nodes.iter().position(|n| n == descendant)?;
        let j = self.nodes.iter().position(|n| n == ancestor)?;
        (j > i).then_some(j - i)
    }
}
