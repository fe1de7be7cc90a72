//! Property tests for the stated invariants of every module.
#![allow(clippy::needless_range_loop)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;

use kgprobe_core::analytics::{compute_weights, coverage_report, ensemble_answer, kfold_mitigation, SutAnswers};
use kgprobe_core::ingest::{build_graph, Direction, FetchedRow, Fetcher, IngestError, RelationSpec};
use kgprobe_core::oracles::metamorphic::{check_responses, PlanResponses};
use kgprobe_core::oracles::ontological::{graph_build, graph_check, graph_checker, SutKnowledgeGraph};
use kgprobe_core::oracles::{Evidence, ResponseTable};
use kgprobe_core::sut::{ChatRequest, Role, Runner, RunnerOptions, SutAdapter, SutError};
use kgprobe_core::testgen::{
    gen_test, plan_conversations, Conversation, ConversationKind, PairRole, Query, TemplateRegistry,
};
use kgprobe_core::{
    Entity, EntityId, ErrorType, KnowledgeGraph, KnowledgePath, Relation, RelationKind, ResponseClass, TemplateId,
};
use proptest::prelude::*;

const KIND: &str = "located_in";

fn id(i: usize) -> EntityId {
    EntityId::new(format!("N{i}"))
}

/// Forest over `n` nodes from `links[i]`: node i attaches below node
/// `links[i] % i` when the link is present.
fn forest(n: usize, links: &[Option<usize>]) -> KnowledgeGraph {
    let mut g = KnowledgeGraph::new(8);
    g.add_kind(RelationKind::new(KIND, true)).unwrap();
    for i in 0..n {
        g.add_entity(Entity::new(format!("N{i}"), format!("Town {i}"), "places"))
            .unwrap();
    }
    for i in 1..n {
        if let Some(p) = links[i] {
            g.add_edge(&id(i), &id(p % i), KIND).unwrap();
        }
    }
    g
}

fn forest_strategy() -> impl Strategy<Value = (usize, Vec<Option<usize>>)> {
    (2usize..24).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec(prop::option::weighted(0.8, 0usize..64), n),
        )
    })
}

fn class() -> impl Strategy<Value = ResponseClass> {
    prop_oneof![
        Just(ResponseClass::Yes),
        Just(ResponseClass::No),
        Just(ResponseClass::Invalid)
    ]
}

fn chain_graph(len: usize) -> (KnowledgeGraph, KnowledgePath) {
    let links: Vec<Option<usize>> = (0..len).map(|i| i.checked_sub(1)).collect();
    let g = forest(len, &links);
    let nodes: Vec<EntityId> = (0..len).rev().map(id).collect();
    let path = KnowledgePath::new(nodes, KIND).unwrap();
    (g, path)
}

/// Records every request it sees.
#[derive(Default)]
struct Recorder {
    log: Mutex<Vec<(usize, String, usize)>>,
}

impl SutAdapter for Recorder {
    fn name(&self) -> &str {
        "recorder"
    }

    fn supports_system_command(&self) -> bool {
        true
    }

    fn complete(&self, request: &ChatRequest<'_>) -> Result<String, SutError> {
        let users = request.messages.iter().filter(|m| m.role == Role::User).count();
        let last = request.messages.last().unwrap().content.clone();
        self.log.lock().unwrap().push((request.turn, last, users));
        Ok("Yes.".into())
    }
}

/// Fetcher over a fixed forest.
struct ForestFetcher {
    children: BTreeMap<String, Vec<String>>,
}

impl Fetcher for ForestFetcher {
    fn fetch(&self, _: &RelationSpec, entity: &EntityId) -> Result<Vec<FetchedRow>, IngestError> {
        Ok(self
            .children
            .get(entity.as_str())
            .into_iter()
            .flatten()
            .map(|c| FetchedRow {
                id: c.clone(),
                label: if c.ends_with('7') {
                    String::new()
                } else {
                    format!("L{c}")
                },
            })
            .collect())
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn ancestor_pairs_count_and_order(len in 2usize..14) {
        let (_, path) = chain_graph(len);
        let pairs = path.all_ancestor_pairs();
        prop_assert_eq!(pairs.len(), len * (len - 1) / 2);
        let pos = |e: &EntityId| path.nodes().iter().position(|n| n == e).unwrap();
        for (d, a) in &pairs {
            prop_assert!(pos(d) < pos(a));
        }
        prop_assert_eq!(pairs.iter().collect::<BTreeSet<_>>().len(), pairs.len());
    }

    #[test]
    fn leaf_sampling_and_extraction_are_deterministic((n, links) in forest_strategy(), seed in any::<u64>()) {
        let g = forest(n, &links);
        let leaves = g.leaves().len();
        let k = leaves / 2;
        let a = g.select_leaves(k, seed).unwrap();
        let b = g.select_leaves(k, seed).unwrap();
        prop_assert_eq!(&a, &b);
        for (leaf, kind) in &a {
            prop_assert_eq!(g.extract_path(leaf, kind).unwrap(), g.extract_path(leaf, kind).unwrap());
        }
    }

    #[test]
    fn adding_an_edge_keeps_existing_paths((n, links) in forest_strategy(), child in 0usize..64, parent in 0usize..64) {
        let mut g = forest(n, &links);
        let before: Vec<(usize, usize)> = (0..n)
            .flat_map(|a| (0..n).map(move |b| (a, b)))
            .filter(|&(a, b)| g.reaches(&id(a), &id(b), KIND))
            .collect();
        let (c, p) = (child % n, parent % n);
        if g.add_edge(&id(c), &id(p), KIND).is_ok() {
            for (a, b) in before {
                prop_assert!(g.reaches(&id(a), &id(b), KIND), "N{a} -> N{b} lost after N{c} -> N{p}");
            }
        }
    }

    #[test]
    fn build_graph_is_deterministic_and_closed((n, links) in forest_strategy(), depth in 1u32..6) {
        let mut children: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for i in 1..n {
            if let Some(p) = links[i] {
                children.entry(format!("N{}", p % i)).or_default().push(format!("N{i}"));
            }
        }
        let fetcher = ForestFetcher { children };
        let seeds = vec![Entity::new("N0", "Root", "places")];
        let spec = RelationSpec::new(KIND, "children of {entity}", Direction::Children).unwrap();
        let one = build_graph(&seeds, &spec, depth, &fetcher, 1).unwrap();
        let many = build_graph(&seeds, &spec, depth, &fetcher, 8).unwrap();
        prop_assert_eq!(&one, &many);
        for e in one.edges() {
            prop_assert!(one.contains(&e.child) && one.contains(&e.parent));
        }
    }

    #[test]
    fn gen_test_covers_every_pair_once(len in 2usize..10) {
        let (g, path) = chain_graph(len);
        let registry = TemplateRegistry::builtin();
        let (orig, muts) = gen_test(&g, &path, &registry).unwrap();
        let n = len * (len - 1) / 2;
        prop_assert_eq!(orig.len(), n);
        prop_assert_eq!(muts.len(), n);
        let pairs: BTreeSet<(EntityId, EntityId)> = path.all_ancestor_pairs().into_iter().collect();
        for (o, m) in orig.iter().zip(&muts) {
            prop_assert_eq!(&o.relation, &m.relation);
            prop_assert!(pairs.contains(&(o.relation.child.clone(), o.relation.parent.clone())));
            prop_assert_eq!(o.template, TemplateId::ORIGINAL);
            prop_assert_eq!(m.template, TemplateId::MUTATED);
            for q in [o, m] {
                prop_assert!(q.text.contains(g.label(&q.relation.child).unwrap()));
                prop_assert!(q.text.contains(g.label(&q.relation.parent).unwrap()));
            }
        }
    }

    #[test]
    fn runner_sends_queries_in_script_order(len in 1usize..6, start in 0usize..20) {
        let (g, _) = chain_graph(start + len + 1);
        let registry = TemplateRegistry::builtin();
        let template = registry.get(KIND, TemplateId::ORIGINAL).unwrap();
        let queries: Vec<Query> = (0..len)
            .map(|i| Query::render(&g, Relation::new(id(start + i), id(start + i + 1), KIND), template).unwrap())
            .collect();
        let recorder = Recorder::default();
        let runner = Runner::new(&recorder, None, RunnerOptions::default());
        let kind = if len == 1 { ConversationKind::AtomicOriginal } else { ConversationKind::SequentialOriginalFirst };
        let t = runner.run_conversation(&Conversation { kind, queries: queries.clone() }).unwrap();
        prop_assert_eq!(t.turns.len(), len);
        let log = recorder.log.lock().unwrap();
        for (i, (turn, text, users)) in log.iter().enumerate() {
            prop_assert_eq!(*turn, i);
            prop_assert_eq!(text, &queries[i].text);
            prop_assert_eq!(*users, i + 1);
            prop_assert_eq!(&t.turns[i].query, &queries[i]);
        }
    }

    #[test]
    fn metamorphic_bounds(slots in prop::array::uniform6(class())) {
        let (g, path) = chain_graph(2);
        let registry = TemplateRegistry::builtin();
        let (o, m) = gen_test(&g, &path, &registry).unwrap();
        let plan = plan_conversations(o[0].clone(), m[0].clone(), PairRole::Direct).unwrap();
        let (errors, outcome) = check_responses("p", &plan, &PlanResponses::from_slots(slots));
        prop_assert!(outcome.atomic.errors <= 1);
        prop_assert!(outcome.sequential_intra.errors <= 2);
        prop_assert!(outcome.sequential_inter.errors <= 2);
        prop_assert!(outcome.total_metamorphic_errors() <= 5);
        for t in ErrorType::ALL {
            prop_assert!(outcome.tally(t).errors <= outcome.tally(t).valid);
        }
        let invalid = slots.iter().filter(|c| **c == ResponseClass::Invalid).count();
        if invalid == 0 {
            prop_assert_eq!(outcome.total().valid, 5);
        }
        for e in &errors {
            match &e.evidence {
                Evidence::Responses { left, right, .. } => {
                    prop_assert!(left.is_valid() && right.is_valid() && left != right);
                }
                other => prop_assert!(false, "unexpected evidence {other:?}"),
            }
        }
    }

    #[test]
    fn invalid_answers_reduce_valid_executions(slots in prop::array::uniform6(class()), which in 0usize..6) {
        let (g, path) = chain_graph(2);
        let (o, m) = gen_test(&g, &path, &TemplateRegistry::builtin()).unwrap();
        let plan = plan_conversations(o[0].clone(), m[0].clone(), PairRole::Direct).unwrap();
        let mut worse = slots;
        worse[which] = ResponseClass::Invalid;
        let (_, a) = check_responses("p", &plan, &PlanResponses::from_slots(slots));
        let (_, b) = check_responses("p", &plan, &PlanResponses::from_slots(worse));
        prop_assert!(b.total().valid <= a.total().valid);
        // Every slot takes part in some comparison, so a fully valid plan always loses one.
        if slots.iter().all(|c| c.is_valid()) {
            prop_assert!(b.total().valid < a.total().valid);
        }
    }

    #[test]
    fn graph_checker_matches_closure_on_any_digraph(
        n in 1usize..9,
        raw in prop::collection::btree_set((0usize..9, 0usize..9), 0..30),
    ) {
        let edges: BTreeSet<(usize, usize)> = raw.into_iter().filter(|(a, b)| a < &n && b < &n && a != b).collect();
        let mut g = SutKnowledgeGraph::default();
        for i in 0..n {
            g.add_node(id(i));
        }
        for &(a, b) in &edges {
            g.add_edge(id(a), id(b));
        }
        let mut reach = vec![vec![false; n]; n];
        for &(a, b) in &edges {
            reach[a][b] = true;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    reach[i][j] |= reach[i][k] && reach[k][j];
                }
            }
        }
        let err = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && reach[i][j] && !edges.contains(&(i, j)))
            .count();
        prop_assert_eq!(graph_checker(&g), (err, edges.len()));
    }

    #[test]
    fn adding_a_flagged_edge_moves_one_pair(
        n in 3usize..9,
        raw in prop::collection::btree_set((0usize..9, 0usize..9), 1..20),
        pick in any::<prop::sample::Index>(),
    ) {
        let mut g = SutKnowledgeGraph::default();
        for i in 0..n {
            g.add_node(id(i));
        }
        for (a, b) in raw {
            if a < n && b < n && a < b {
                g.add_edge(id(a), id(b));
            }
        }
        let check = graph_check(&g);
        prop_assume!(!check.indirect.is_empty());
        let p = &check.indirect[pick.index(check.indirect.len())];
        let (err, cov) = (check.err_count(), check.coverage_count);
        g.add_edge(p.from.clone(), p.to.clone());
        prop_assert_eq!(graph_checker(&g), (err - 1, cov + 1));
    }

    #[test]
    fn only_yes_creates_edges(answers in prop::collection::vec(class(), 1..15)) {
        let relations: Vec<Relation> = (0..answers.len()).map(|i| Relation::new(id(i), id(i + 1), KIND)).collect();
        let g = graph_build(None, relations.iter().zip(answers.iter().copied()));
        for (r, c) in relations.iter().zip(&answers) {
            prop_assert_eq!(g.has_edge(&r.child, &r.parent), *c == ResponseClass::Yes);
            prop_assert!(g.nodes().contains(&r.child) && g.nodes().contains(&r.parent));
        }
    }

    #[test]
    fn weights_are_scale_invariant(scores in prop::collection::vec(0u32..2000, 1..8), c in 1u32..1000) {
        let s: Vec<f64> = scores.iter().map(|&x| x as f64).collect();
        let scaled: Vec<f64> = s.iter().map(|x| x * c as f64).collect();
        let (w, v) = (compute_weights(&s), compute_weights(&scaled));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for (a, b) in w.iter().zip(&v) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ensemble_is_monotone(
        scores in prop::collection::vec(0u32..50, 1..7),
        votes in prop::collection::vec(any::<bool>(), 7),
        flip in any::<prop::sample::Index>(),
    ) {
        let w = compute_weights(&scores.iter().map(|&x| x as f64).collect::<Vec<_>>());
        let as_class = |b: bool| if b { ResponseClass::Yes } else { ResponseClass::No };
        let r: Vec<ResponseClass> = votes[..w.len()].iter().map(|&b| as_class(b)).collect();
        let i = flip.index(w.len());
        prop_assume!(r[i] == ResponseClass::No);
        let mut up = r.clone();
        up[i] = ResponseClass::Yes;
        if ensemble_answer(&r, &w).unwrap() == ResponseClass::Yes {
            prop_assert_eq!(ensemble_answer(&up, &w).unwrap(), ResponseClass::Yes);
        }
    }

    #[test]
    fn coverage_identity_holds(answers in prop::collection::vec((class(), class()), 1..60)) {
        let relations: Vec<Relation> = (0..answers.len()).map(|i| Relation::new(id(i), id(i + 100), KIND)).collect();
        let mut table = ResponseTable::default();
        for (r, (a, b)) in relations.iter().zip(&answers) {
            table.insert(r.clone(), TemplateId::ORIGINAL, *a);
            table.insert(r.clone(), TemplateId::MUTATED, *b);
        }
        let c = coverage_report("s", &table, &relations, 0).unwrap();
        prop_assert_eq!(c.overall_coverage + c.intersection.len(), c.relations);
        for t in [TemplateId::ORIGINAL, TemplateId::MUTATED] {
            prop_assert!(c.intersection.is_subset(&c.gaps[&t]));
        }
    }

    #[test]
    fn folds_partition_and_reproduce(
        answers in prop::collection::vec(prop::collection::vec(class(), 3), 10..60),
        k in 2usize..6,
        seed in any::<u64>(),
    ) {
        let relations: Vec<Relation> = (0..answers.len()).map(|i| Relation::new(id(i), id(i + 100), KIND)).collect();
        let suts: Vec<SutAnswers> = (0..3)
            .map(|s| {
                let mut table = ResponseTable::default();
                for (r, a) in relations.iter().zip(&answers) {
                    table.insert(r.clone(), TemplateId::ORIGINAL, a[s]);
                }
                SutAnswers { name: format!("s{s}"), relation_errors: BTreeMap::new(), table }
            })
            .collect();
        let eligible: Vec<&Relation> = relations
            .iter()
            .zip(&answers)
            .filter(|(_, a)| a.iter().all(|c| c.is_valid()))
            .map(|(r, _)| r)
            .collect();
        let result = kfold_mitigation(&relations, &suts, &[TemplateId::ORIGINAL], k, seed);
        if eligible.len() < k {
            prop_assert!(result.is_err());
        } else {
            let report = result.unwrap();
            let mut seen = BTreeSet::new();
            for f in &report.folds {
                for r in &f.held_out {
                    prop_assert!(seen.insert(r.clone()), "{r} in two folds");
                }
            }
            let expected: BTreeSet<Relation> = eligible.into_iter().cloned().collect();
            prop_assert_eq!(seen, expected);
            let sizes: Vec<usize> = report.folds.iter().map(|f| f.held_out.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            prop_assert_eq!(kfold_mitigation(&relations, &suts, &[TemplateId::ORIGINAL], k, seed).unwrap(), report);
        }
    }
}
