//! Built-in ground-truth graphs for offline runs and tests.

use crate::ingest::Provenance;
use crate::kg::{Entity, KgError, KnowledgeGraph, KnowledgePath, RelationKind};

pub const PLACES_KIND: &str = "located_in";
pub const PLACES_LEAVES: usize = 50;

const COUNTRIES: [&str; 10] = [
    "Luxembourg",
    "Ireland",
    "Switzerland",
    "Norway",
    "Singapore",
    "Qatar",
    "Iceland",
    "United States",
    "Denmark",
    "Australia",
];

/// Provenance stamped on the bundled fixture snapshot.
pub fn fixture_provenance() -> Provenance {
    Provenance {
        endpoint: "fixture:places".into(),
        retrieved: "1970-01-01T00:00:00Z".into(),
    }
}

/// Fifty administrative chains over ten countries: 48 of four nodes and
/// two of three, giving 294 distinct ancestor pairs.
pub fn places_fixture() -> KnowledgeGraph {
    let mut g = KnowledgeGraph::new(3);
    g.add_kind(RelationKind::new(PLACES_KIND, true)).expect("fresh graph");
    let mut add = |id: String, label: String| {
        g.add_entity(Entity::new(id, label, "places"))
            .expect("unique fixture ids");
    };
    for (i, c) in COUNTRIES.iter().enumerate() {
        add(format!("C{i}"), (*c).to_owned());
    }
    add("L0".into(), "Kinawley".into());
    add("R0".into(), "Ulster".into());
    add("L1".into(), "Mamer".into());
    add("R1".into(), "Canton of Capellen".into());
    for i in 2..PLACES_LEAVES {
        add(format!("L{i}"), format!("Settlement {i}"));
        add(format!("D{i}"), format!("District {i}"));
        add(format!("R{i}"), format!("Province {i}"));
    }
    let mut edge = |c: String, p: String| {
        g.add_edge(&c.as_str().into(), &p.as_str().into(), PLACES_KIND)
            .expect("fixture edges form a forest");
    };
    edge("L0".into(), "R0".into());
    edge("R0".into(), "C1".into());
    edge("L1".into(), "R1".into());
    edge("R1".into(), "C0".into());
    for i in 2..PLACES_LEAVES {
        edge(format!("L{i}"), format!("D{i}"));
        edge(format!("D{i}"), format!("R{i}"));
        edge(format!("R{i}"), format!("C{}", i % COUNTRIES.len()));
    }
    g
}

/// Samples `n` leaves with `seed` and extracts their paths, skipping
/// (with a warning) leaves whose ancestry branches.
pub fn sample_paths(graph: &KnowledgeGraph, n: usize, seed: u64) -> Result<Vec<KnowledgePath>, KgError> {
    let mut paths = Vec::with_capacity(n);
    for (leaf, kind) in graph.select_leaves(n, seed)? {
        match graph.extract_path(&leaf, &kind) {
            Ok(p) => {
                if !paths.contains(&p) {
                    paths.push(p);
                }
            }
            Err(e @ KgError::BranchingAncestry { .. }) => log::warn!("skipping {leaf}: {e}"),
            Err(e) => return Err(e),
        }
    }
    Ok(paths)
}
