//! Closure checks on the graph of relations a SUT affirmed.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{CheckOutcome, ErrorRecord, ErrorType, Evidence, OracleError, ResponseTable};
use crate::kg::{EntityId, KnowledgePath};
use crate::sut::ResponseClass;
use crate::testgen::{Relation, TemplateId};

/// Directed graph of the relations one SUT answered Yes to under one
/// template.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SutKnowledgeGraph {
    pub template: Option<TemplateId>,
    nodes: BTreeSet<EntityId>,
    edges: BTreeSet<(EntityId, EntityId)>,
}

impl SutKnowledgeGraph {
    pub fn nodes(&self) -> &BTreeSet<EntityId> {
        &self.nodes
    }

    pub fn edges(&self) -> &BTreeSet<(EntityId, EntityId)> {
        &self.edges
    }

    pub fn has_edge(&self, from: &EntityId, to: &EntityId) -> bool {
        self.edges.contains(&(from.clone(), to.clone()))
    }

    pub fn add_node(&mut self, n: EntityId) {
        self.nodes.insert(n);
    }

    /// Adds `from -> to`, materializing both endpoints.
    pub fn add_edge(&mut self, from: EntityId, to: EntityId) {
        self.nodes.insert(from.clone());
        self.nodes.insert(to.clone());
        self.edges.insert((from, to));
    }
}

/// Both endpoints of every response become nodes; an edge child -> parent
/// is added only for Yes.
pub fn graph_build<'a>(
    template: Option<TemplateId>,
    responses: impl IntoIterator<Item = (&'a Relation, ResponseClass)>,
) -> SutKnowledgeGraph {
    let mut g = SutKnowledgeGraph {
        template,
        ..SutKnowledgeGraph::default()
    };
    for (r, class) in responses {
        g.add_node(r.child.clone());
        g.add_node(r.parent.clone());
        if class == ResponseClass::Yes {
            g.add_edge(r.child.clone(), r.parent.clone());
        }
    }
    g
}

/// A pair reachable only through intermediate nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndirectPair {
    pub from: EntityId,
    pub to: EntityId,
    /// Shortest witnessing path, endpoints included.
    pub witness: Vec<EntityId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GraphCheck {
    pub indirect: Vec<IndirectPair>,
    pub coverage_count: usize,
}

impl GraphCheck {
    pub fn err_count(&self) -> usize {
        self.indirect.len()
    }
}

/// Classifies every ordered pair of distinct nodes: a direct edge counts
/// towards coverage, otherwise any directed path counts as an error.
pub fn graph_check(g: &SutKnowledgeGraph) -> GraphCheck {
    let index: BTreeMap<&EntityId, usize> = g.nodes.iter().enumerate().map(|(i, n)| (n, i)).collect();
    let nodes: Vec<&EntityId> = g.nodes.iter().collect();
    let mut adj = vec![Vec::new(); nodes.len()];
    for (a, b) in &g.edges {
        adj[index[a]].push(index[b]);
    }
    let mut out = GraphCheck::default();
    // Buffers are reset only where a search touched them, keeping sparse graphs near-linear.
    let mut prev = vec![usize::MAX; nodes.len()];
    let mut seen = vec![false; nodes.len()];
    for s in 0..nodes.len() {
        // BFS parents give shortest witnesses.
        let mut reached = vec![s];
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    prev[v] = u;
                    reached.push(v);
                    queue.push_back(v);
                }
            }
        }
        reached.sort_unstable();
        for &t in &reached {
            if t == s {
                continue;
            }
            if adj[s].contains(&t) {
                out.coverage_count += 1;
            } else {
                let mut witness = vec![t];
                let mut cur = t;
                while cur != s {
                    cur = prev[cur];
                    witness.push(cur);
                }
                witness.reverse();
                out.indirect.push(IndirectPair {
                    from: nodes[s].clone(),
                    to: nodes[t].clone(),
                    witness: witness.into_iter().map(|i| nodes[i].clone()).collect(),
                });
            }
        }
        for &t in &reached {
            seen[t] = false;
            prev[t] = usize::MAX;
        }
    }
    out
}

/// `(err_count, coverage_count)` for a SUT graph.
pub fn graph_checker(g: &SutKnowledgeGraph) -> (usize, usize) {
    let c = graph_check(g);
    (c.err_count(), c.coverage_count)
}

/// Ontological result for one path under one template.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PathCheck {
    pub errors: Vec<ErrorRecord>,
    /// Non-Invalid responses among the path's pairs.
    pub valid: usize,
    pub coverage_count: usize,
}

/// Builds the SUT graph for `path` from its direct-query answers under
/// `template` and flags every pair implied by the graph but not affirmed.
/// Pairs answered Invalid are never flagged.
pub fn ontological_check(
    sut: &str,
    path: &KnowledgePath,
    template: TemplateId,
    table: &ResponseTable,
) -> Result<PathCheck, OracleError> {
    let mut responses = Vec::new();
    for (c, p) in path.all_ancestor_pairs() {
        let r = Relation::new(c, p, path.kind());
        let class = table.get(&r, template).ok_or_else(|| OracleError::MissingResponse {
            relation: r.clone(),
            template,
        })?;
        responses.push((r, class));
    }
    let classes: BTreeMap<(&EntityId, &EntityId), ResponseClass> =
        responses.iter().map(|(r, c)| ((&r.child, &r.parent), *c)).collect();
    let g = graph_build(Some(template), responses.iter().map(|(r, c)| (r, *c)));
    let check = graph_check(&g);
    let errors = check
        .indirect
        .into_iter()
        .filter(|p| classes.get(&(&p.from, &p.to)).is_none_or(|c| c.is_valid()))
        .map(|p| ErrorRecord {
            sut: sut.to_owned(),
            error_type: ErrorType::Ontological,
            relation: Relation::new(p.from, p.to, path.kind()),
            template: Some(template),
            evidence: Evidence::Witness { path: p.witness },
        })
        .collect();
    Ok(PathCheck {
        errors,
        valid: responses.iter().filter(|(_, c)| c.is_valid()).count(),
        coverage_count: check.coverage_count,
    })
}

/// Ontological errors over many paths and templates.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OntologicalSummary {
    /// One record per (template, pair); pairs shared by paths count once.
    pub errors: Vec<ErrorRecord>,
    pub outcome: CheckOutcome,
    /// Paths with at least one error, per template.
    pub paths_with_errors: BTreeMap<TemplateId, usize>,
    pub paths: usize,
}

pub fn ontological_summary(
    sut: &str,
    paths: &[KnowledgePath],
    templates: &[TemplateId],
    table: &ResponseTable,
) -> Result<OntologicalSummary, OracleError> {
    let mut out = OntologicalSummary {
        paths: paths.len(),
        ..OntologicalSummary::default()
    };
    let mut seen_errors = BTreeSet::new();
    let mut seen_pairs = BTreeSet::new();
    let mut covered = BTreeSet::new();
    for &t in templates {
        let flagged = out.paths_with_errors.entry(t).or_insert(0);
        for path in paths {
            let check = ontological_check(sut, path, t, table)?;
            if !check.errors.is_empty() {
                *flagged += 1;
            }
            for e in check.errors {
                if seen_errors.insert((t, e.relation.clone())) {
                    out.errors.push(e);
                }
            }
            for (c, p) in path.all_ancestor_pairs() {
                let r = Relation::new(c, p, path.kind());
                let class = table.get(&r, t).expect("checked by ontological_check");
                if seen_pairs.insert((t, r.clone())) && class.is_valid() {
                    out.outcome.ontological.valid += 1;
                }
                if class == ResponseClass::Yes {
                    covered.insert((t, r));
                }
            }
        }
    }
    out.outcome.ontological.errors = out.errors.len();
    out.outcome.err_count = out.errors.len();
    out.outcome.coverage_count = covered.len();
    Ok(out)
}
