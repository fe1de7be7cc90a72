//! Workloads shared by the benchmarks.

use kgprobe_core::fixtures::{places_fixture, sample_paths, PLACES_LEAVES};
use kgprobe_core::oracles::metamorphic::PlanResponses;
use kgprobe_core::oracles::ontological::SutKnowledgeGraph;
use kgprobe_core::testgen::{generate_suite, TemplateRegistry};
use kgprobe_core::{EntityId, KnowledgeGraph, KnowledgePath, ResponseClass, TestSuite};

pub const PATH_SEED: u64 = 7;

/// Places graph and its sampled paths.
pub fn places() -> (KnowledgeGraph, Vec<KnowledgePath>) {
    let graph = places_fixture();
    let paths = sample_paths(&graph, PLACES_LEAVES, PATH_SEED).expect("fixture samples");
    (graph, paths)
}

pub fn places_suite() -> TestSuite {
    let (graph, paths) = places();
    generate_suite(&graph, &paths, &TemplateRegistry::builtin(), true).expect("fixture generates")
}

/// `chains` disjoint chains of `len` nodes. Each node links to its parent
/// and, on even positions, to its grandparent, so roughly half of the
/// ancestor pairs are indirect.
pub fn chain_forest(chains: usize, len: usize) -> SutKnowledgeGraph {
    let mut g = SutKnowledgeGraph::default();
    let node = |c: usize, i: usize| EntityId::new(format!("C{c}N{i}"));
    for c in 0..chains {
        for i in 0..len {
            g.add_node(node(c, i));
            if i + 1 < len {
                g.add_edge(node(c, i), node(c, i + 1));
            }
            if i % 2 == 0 && i + 2 < len {
                g.add_edge(node(c, i), node(c, i + 2));
            }
        }
    }
    g
}

/// Deterministic answer slots that exercise every comparison.
pub fn slot_pattern(i: usize) -> PlanResponses {
    use ResponseClass::{Invalid, No, Yes};
    const PATTERNS: [[ResponseClass; 6]; 4] = [
        [Yes, Yes, Yes, Yes, Yes, Yes],
        [Yes, No, Yes, No, No, Yes],
        [No, No, Yes, Invalid, No, No],
        [Yes, Invalid, No, Yes, Yes, No],
    ];
    PlanResponses::from_slots(PATTERNS[i % PATTERNS.len()])
}
