//! Consistency testing of question-answering models against a ground-truth
//! knowledge graph.
//!
//! The flow is: build a [`KnowledgeGraph`], extract leaf-to-root paths,
//! generate equivalent query pairs for every ancestor pair ([`testgen`]),
//! run the scripted conversations against each SUT ([`sut`]), detect
//! inconsistencies ([`oracles`]) and summarize or mitigate them
//! ([`analytics`]). [`pipeline`] drives the stages over on-disk artifacts.

pub mod analytics;
pub mod fixtures;
pub mod ingest;
pub mod kg;
pub mod oracles;
pub mod pipeline;
pub mod retry;
pub mod sut;
pub mod testgen;

pub use kg::{Entity, EntityId, KgError, KnowledgeGraph, KnowledgePath, RelationKind};
pub use oracles::{CheckOutcome, ErrorRecord, ErrorType};
pub use sut::{ResponseClass, SutAdapter, Transcript};
pub use testgen::{Query, Relation, TemplateId, TestPlan, TestSuite};
