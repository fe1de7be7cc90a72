//! Shared fixtures for the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use kgprobe_core::fixtures::{places_fixture, sample_paths, PLACES_LEAVES};
use kgprobe_core::retry::RetryPolicy;
use kgprobe_core::sut::{FaultSpec, Runner, RunnerOptions, ScriptedSut};
use kgprobe_core::testgen::{generate_suite, Conversation, ConversationKind, TemplateRegistry};
use kgprobe_core::{KnowledgeGraph, KnowledgePath, TestSuite, Transcript};

pub const PATH_SEED: u64 = 7;

pub struct Places {
    pub graph: Arc<KnowledgeGraph>,
    pub paths: Vec<KnowledgePath>,
    pub suite: TestSuite,
}

/// The bundled places graph with all 50 paths and template-3 queries.
pub fn places() -> Places {
    let graph = places_fixture();
    let paths = sample_paths(&graph, PLACES_LEAVES, PATH_SEED).unwrap();
    let suite = generate_suite(&graph, &paths, &TemplateRegistry::builtin(), true).unwrap();
    Places {
        graph: Arc::new(graph),
        paths,
        suite,
    }
}

/// Every conversation of the suite, template-3 queries included.
pub fn conversations(suite: &TestSuite) -> Vec<Conversation> {
    suite
        .plans
        .iter()
        .flat_map(|p| p.conversations.iter().cloned())
        .chain(suite.unseen.iter().map(|q| Conversation {
            kind: ConversationKind::AtomicUnseen,
            queries: vec![q.clone()],
        }))
        .collect()
}

/// Runs `conversations` in memory, keyed by conversation id.
pub fn run_in_memory(sut: &ScriptedSut, conversations: &[Conversation]) -> BTreeMap<String, Transcript> {
    let runner = Runner::new(
        sut,
        None,
        RunnerOptions {
            retry: RetryPolicy::no_delay(2),
            ..RunnerOptions::default()
        },
    );
    conversations
        .iter()
        .map(|c| {
            let t = runner.run_conversation(c).unwrap();
            (t.conversation_id.clone(), t)
        })
        .collect()
}

pub fn scripted(places: &Places, name: &str, faults: FaultSpec, seed: u64) -> ScriptedSut {
    ScriptedSut::new(name, places.graph.clone(), faults, seed)
}
