//! Query generation over knowledge paths and conversation planning.
//!
//! For every (descendant, ancestor) pair on a path one original query
//! (template 1) and one mutated query (template 2) are rendered. Each pair
//! becomes a [`TestPlan`] with four conversations: the two queries asked on
//! their own, and both queries asked in one session in each order.

mod template;

pub use template::{QueryTemplate, TemplateId, TemplateRegistry, CHILD, PARENT};

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{EntityId, KnowledgeGraph, KnowledgePath, RelationKind};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TestGenError {
    #[error("no template {id} registered for relation kind `{kind}`")]
    MissingTemplate { kind: String, id: TemplateId },
    #[error("bad template: {0}")]
    BadTemplate(String),
    #[error("queries relate different pairs: {} vs {}", .0 .0, .0 .1)]
    MismatchedRelation(Box<(Relation, Relation)>),
    #[error("query template {0} cannot be used in slot for template {1}")]
    WrongTemplate(TemplateId, TemplateId),
    #[error("entity `{0}` is not in the graph")]
    UnknownEntity(EntityId),
}

/// A (descendant, ancestor) pair under one relation kind.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Relation {
    pub child: EntityId,
    pub parent: EntityId,
    pub kind: String,
}

impl Relation {
    pub fn new(child: impl Into<EntityId>, parent: impl Into<EntityId>, kind: impl Into<String>) -> Self {
        Self {
            child: child.into(),
            parent: parent.into(),
            kind: kind.into(),
        }
    }
}

impl From<String> for EntityId {
    fn from(s: String) -> Self {
        EntityId(s)
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -{}-> {}", self.child, self.kind, self.parent)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub text: String,
    pub relation: Relation,
    pub template: TemplateId,
}

impl Query {
    pub fn render(graph: &KnowledgeGraph, relation: Relation, template: &QueryTemplate) -> Result<Self, TestGenError> {
        let label = |id: &EntityId| graph.label(id).ok_or_else(|| TestGenError::UnknownEntity(id.clone()));
        let text = template.render(label(&relation.child)?, label(&relation.parent)?);
        Ok(Self {
            text,
            relation,
            template: template.id,
        })
    }
}

/// Finds the relation kind under which `ancestor` is reachable from
/// `descendant`. `None` when the nodes coincide or are unrelated.
pub fn find_relation<'g>(
    graph: &'g KnowledgeGraph,
    descendant: &EntityId,
    ancestor: &EntityId,
) -> Option<&'g RelationKind> {
    if descendant == ancestor {
        return None;
    }
    graph.kinds().find(|k| graph.reaches(descendant, ancestor, &k.name))
}

/// Renders one original and one mutated query per related node pair of
/// `path`. Both lists have length L(L-1)/2 and share ordering.
pub fn gen_test(
    graph: &KnowledgeGraph,
    path: &KnowledgePath,
    registry: &TemplateRegistry,
) -> Result<(Vec<Query>, Vec<Query>), TestGenError> {
    let original = registry.get(path.kind(), TemplateId::ORIGINAL)?;
    let mutated = registry.get(path.kind(), TemplateId::MUTATED)?;
    let mut queries = Vec::new();
    let mut mutants = Vec::new();
    for node1 in path.nodes() {
        for node2 in path.nodes() {
            if node1 == node2 || !graph.reaches(node1, node2, path.kind()) {
                continue;
            }
            let relation = Relation::new(node1.clone(), node2.clone(), path.kind());
            queries.push(Query::render(graph, relation.clone(), original)?);
            mutants.push(Query::render(graph, relation, mutated)?);
        }
    }
    Ok((queries, mutants))
}

/// Renders template-3 queries for every pair on `path`; used only for
/// unseen-template evaluation of the ensemble.
pub fn gen_unseen(
    graph: &KnowledgeGraph,
    path: &KnowledgePath,
    registry: &TemplateRegistry,
) -> Result<Vec<Query>, TestGenError> {
    let unseen = registry.get(path.kind(), TemplateId::UNSEEN)?;
    path.all_ancestor_pairs()
        .into_iter()
        .map(|(c, p)| Query::render(graph, Relation::new(c, p, path.kind()), unseen))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConversationKind {
    /// Original query alone (Q1).
    AtomicOriginal,
    /// Mutated query alone (Q2).
    AtomicMutated,
    /// Original then mutated in one session.
    SequentialOriginalFirst,
    /// Mutated then original in one session.
    SequentialMutatedFirst,
    /// Template-3 query alone; mitigation evaluation only.
    AtomicUnseen,
}

impl ConversationKind {
    pub const PLANNED: [ConversationKind; 4] = [
        ConversationKind::AtomicOriginal,
        ConversationKind::AtomicMutated,
        ConversationKind::SequentialOriginalFirst,
        ConversationKind::SequentialMutatedFirst,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Self::AtomicOriginal => "a1",
            Self::AtomicMutated => "a2",
            Self::SequentialOriginalFirst => "s12",
            Self::SequentialMutatedFirst => "s21",
            Self::AtomicUnseen => "a3",
        }
    }

    pub fn is_atomic(self) -> bool {
        matches!(self, Self::AtomicOriginal | Self::AtomicMutated | Self::AtomicUnseen)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub kind: ConversationKind,
    pub queries: Vec<Query>,
}

impl Conversation {
    /// Stable identifier derived from the relation and conversation kind.
    pub fn id(&self) -> String {
        conversation_id(&self.queries[0].relation, self.kind)
    }
}

pub fn conversation_id(relation: &Relation, kind: ConversationKind) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for part in [
        relation.child.as_str(),
        relation.parent.as_str(),
        relation.kind.as_str(),
    ] {
        h.update(part.as_bytes());
        h.update([0]);
    }
    format!("{}-{}", &hex::encode(h.finalize())[..16], kind.tag())
}

/// Whether a tested pair is a direct edge or a transitive ancestor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairRole {
    Direct,
    Transitive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestPlan {
    pub relation: Relation,
    pub original: Query,
    pub mutated: Query,
    pub conversations: Vec<Conversation>,
    pub role: PairRole,
    /// Child and parent share a label, so the rendered queries are
    /// ambiguous. Set by [`generate_suite`], which has the labels.
    pub degenerate: bool,
}

impl TestPlan {
    pub fn conversation(&self, kind: ConversationKind) -> Option<&Conversation> {
        self.conversations.iter().find(|c| c.kind == kind)
    }

    pub fn query_slots(&self) -> usize {
        self.conversations.iter().map(|c| c.queries.len()).sum()
    }
}

/// Scripts the four conversations for one original/mutated query pair.
pub fn plan_conversations(original: Query, mutated: Query, role: PairRole) -> Result<TestPlan, TestGenError> {
    if original.relation != mutated.relation {
        return Err(TestGenError::MismatchedRelation(Box::new((
            original.relation,
            mutated.relation,
        ))));
    }
    if original.template != TemplateId::ORIGINAL {
        return Err(TestGenError::WrongTemplate(original.template, TemplateId::ORIGINAL));
    }
    if mutated.template != TemplateId::MUTATED {
        return Err(TestGenError::WrongTemplate(mutated.template, TemplateId::MUTATED));
    }
    let conv = |kind, queries: Vec<&Query>| Conversation {
        kind,
        queries: queries.into_iter().cloned().collect(),
    };
    let conversations = vec![
        conv(ConversationKind::AtomicOriginal, vec![&original]),
        conv(ConversationKind::AtomicMutated, vec![&mutated]),
        conv(ConversationKind::SequentialOriginalFirst, vec![&original, &mutated]),
        conv(ConversationKind::SequentialMutatedFirst, vec![&mutated, &original]),
    ];
    Ok(TestPlan {
        relation: original.relation.clone(),
        original,
        mutated,
        conversations,
        role,
        degenerate: false,
    })
}

/// The full generated suite for a set of paths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSuite {
    pub plans: Vec<TestPlan>,
    #[serde(default)]
    pub unseen: Vec<Query>,
}

/// Counts of oracle checks implied by a suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CheckCounts {
    pub relations: usize,
    pub atomic: usize,
    pub sequential_intra: usize,
    pub sequential_inter: usize,
    pub query_slots: usize,
}

impl TestSuite {
    pub fn counts(&self) -> CheckCounts {
        let n = self.plans.len();
        CheckCounts {
            relations: n,
            atomic: n,
            sequential_intra: 2 * n,
            sequential_inter: 2 * n,
            query_slots: self.plans.iter().map(TestPlan::query_slots).sum(),
        }
    }

    pub fn relations(&self) -> impl Iterator<Item = &Relation> {
        self.plans.iter().map(|p| &p.relation)
    }
}

/// Runs [`gen_test`] and [`plan_conversations`] over `paths`. Pairs shared
/// by several paths are planned once, at first occurrence.
pub fn generate_suite(
    graph: &KnowledgeGraph,
    paths: &[KnowledgePath],
    registry: &TemplateRegistry,
    include_unseen: bool,
) -> Result<TestSuite, TestGenError> {
    let mut seen = BTreeSet::new();
    let mut plans = Vec::new();
    let mut unseen = Vec::new();
    let mut unseen_seen = BTreeSet::new();
    for path in paths {
        let (queries, mutants) = gen_test(graph, path, registry)?;
        for (q, m) in queries.into_iter().zip(mutants) {
            if !seen.insert(q.relation.clone()) {
                continue;
            }
            let role = match path.distance(&q.relation.child, &q.relation.parent) {
                Some(1) => PairRole::Direct,
                _ => PairRole::Transitive,
            };
            let mut plan = plan_conversations(q, m, role)?;
            plan.degenerate = same_label(graph, &plan.relation);
            if plan.degenerate {
                log::warn!("degenerate pair {}: child and parent share a label", plan.relation);
            }
            plans.push(plan);
        }
        if include_unseen {
            for q in gen_unseen(graph, path, registry)? {
                if unseen_seen.insert(q.relation.clone()) {
                    unseen.push(q);
                }
            }
        }
    }
    Ok(TestSuite { plans, unseen })
}

fn same_label(graph: &KnowledgeGraph, r: &Relation) -> bool {
    matches!((graph.label(&r.child), graph.label(&r.parent)), (Some(a), Some(b)) if a == b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{Entity, KnowledgeGraph, RelationKind};

    fn kinawley() -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new(3);
        g.add_kind(RelationKind::new("located_in", true)).unwrap();
        for (id, label) in [("Q1", "Kinawley"), ("Q2", "Ulster"), ("Q3", "Ireland")] {
            g.add_entity(Entity::new(id, label, "places")).unwrap();
        }
        g.add_edge(&"Q1".into(), &"Q2".into(), "located_in").unwrap();
        g.add_edge(&"Q2".into(), &"Q3".into(), "located_in").unwrap();
        g
    }

    #[test]
    fn kinawley_queries() {
        let g = kinawley();
        let path = g.extract_path(&"Q1".into(), "located_in").unwrap();
        let (q, m) = gen_test(&g, &path, &TemplateRegistry::builtin()).unwrap();
        assert_eq!(q.len(), 3);
        assert_eq!(m.len(), 3);
        let texts: Vec<_> = q.iter().map(|q| q.text.as_str()).collect();
        assert_eq!(
            texts,
            [
                "Is there a Kinawley in Ulster?",
                "Is there a Kinawley in Ireland?",
                "Is there a Ulster in Ireland?"
            ]
        );
        assert_eq!(m[1].text, "Does Ireland contain Kinawley?");
        for (a, b) in q.iter().zip(&m) {
            assert_eq!(a.relation, b.relation);
        }
    }

    #[test]
    fn find_relation_cases() {
        let g = kinawley();
        assert_eq!(
            find_relation(&g, &"Q1".into(), &"Q3".into()).unwrap().name,
            "located_in"
        );
        assert!(find_relation(&g, &"Q1".into(), &"Q1".into()).is_none());
        assert!(find_relation(&g, &"Q3".into(), &"Q1".into()).is_none());
    }

    #[test]
    fn two_node_path_and_missing_template() {
        let g = kinawley();
        let path = g.extract_path(&"Q2".into(), "located_in").unwrap();
        let (q, m) = gen_test(&g, &path, &TemplateRegistry::builtin()).unwrap();
        assert_eq!((q.len(), m.len()), (1, 1));
        let err = gen_test(&g, &path, &TemplateRegistry::new()).unwrap_err();
        assert!(matches!(err, TestGenError::MissingTemplate { .. }));
    }

    #[test]
    fn four_conversations_six_slots() {
        let g = kinawley();
        let path = g.extract_path(&"Q1".into(), "located_in").unwrap();
        let suite = generate_suite(&g, &[path], &TemplateRegistry::builtin(), true).unwrap();
        assert_eq!(suite.plans.len(), 3);
        assert_eq!(suite.unseen.len(), 3);
        for plan in &suite.plans {
            assert_eq!(plan.conversations.len(), 4);
            assert_eq!(plan.query_slots(), 6);
            let s12 = plan.conversation(ConversationKind::SequentialOriginalFirst).unwrap();
            let s21 = plan.conversation(ConversationKind::SequentialMutatedFirst).unwrap();
            assert_eq!(s12.queries, vec![plan.original.clone(), plan.mutated.clone()]);
            assert_eq!(s21.queries, vec![plan.mutated.clone(), plan.original.clone()]);
        }
        let roles: Vec<_> = suite.plans.iter().map(|p| p.role).collect();
        assert_eq!(roles, [PairRole::Direct, PairRole::Transitive, PairRole::Direct]);
        let c = suite.counts();
        assert_eq!(
            (c.atomic, c.sequential_intra, c.sequential_inter, c.query_slots),
            (3, 6, 6, 18)
        );
    }

    #[test]
    fn mismatched_plan_rejected() {
        let g = kinawley();
        let r = TemplateRegistry::builtin();
        let t1 = r.get("located_in", TemplateId::ORIGINAL).unwrap();
        let t2 = r.get("located_in", TemplateId::MUTATED).unwrap();
        let a = Query::render(&g, Relation::new("Q1", "Q2", "located_in"), t1).unwrap();
        let b = Query::render(&g, Relation::new("Q1", "Q3", "located_in"), t2).unwrap();
        assert!(matches!(
            plan_conversations(a.clone(), b, PairRole::Direct),
            Err(TestGenError::MismatchedRelation(..))
        ));
        assert!(matches!(
            plan_conversations(a.clone(), a, PairRole::Direct),
            Err(TestGenError::WrongTemplate(..))
        ));
    }

    #[test]
    fn degenerate_labels_flagged() {
        let mut g = KnowledgeGraph::new(2);
        g.add_kind(RelationKind::new("located_in", true)).unwrap();
        g.add_entity(Entity::new("A", "Capellen", "places")).unwrap();
        g.add_entity(Entity::new("B", "Capellen", "places")).unwrap();
        g.add_edge(&"A".into(), &"B".into(), "located_in").unwrap();
        let path = g.extract_path(&"A".into(), "located_in").unwrap();
        let suite = generate_suite(&g, &[path], &TemplateRegistry::builtin(), false).unwrap();
        assert!(suite.plans[0].degenerate);
        assert_eq!(suite.plans[0].original.text, "Is there a Capellen in Capellen?");
    }

    #[test]
    fn conversation_ids_are_stable_and_distinct() {
        let r = Relation::new("Q1", "Q2", "located_in");
        let ids: BTreeSet<_> = ConversationKind::PLANNED
            .iter()
            .map(|k| conversation_id(&r, *k))
            .collect();
        assert_eq!(ids.len(), 4);
        assert_eq!(
            conversation_id(&r, ConversationKind::AtomicOriginal),
            conversation_id(&r.clone(), ConversationKind::AtomicOriginal)
        );
    }
}
