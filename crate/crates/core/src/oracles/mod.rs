//! Consistency oracles: metamorphic equalities across equivalent queries and
//! ontological closure over affirmed relations.

pub mod metamorphic;
pub mod ontological;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{EntityId, KnowledgePath};
use crate::sut::{ResponseClass, Transcript};
use crate::testgen::{ConversationKind, Relation, TemplateId, TestSuite};

pub use metamorphic::{check_responses, comparisons, metamorphic_check, Comparison, PlanResponses};
pub use ontological::{
    graph_build, graph_check, graph_checker, ontological_check, ontological_summary, GraphCheck, IndirectPair,
    OntologicalSummary, PathCheck, SutKnowledgeGraph,
};

/// Upper bound on metamorphic errors one relation can induce.
pub const MAX_RELATION_ERRORS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorType {
    Atomic,
    SequentialIntra,
    SequentialInter,
    Ontological,
}

impl ErrorType {
    pub const ALL: [ErrorType; 4] = [
        ErrorType::Atomic,
        ErrorType::SequentialIntra,
        ErrorType::SequentialInter,
        ErrorType::Ontological,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Atomic => "atomic",
            Self::SequentialIntra => "sequential-intra",
            Self::SequentialInter => "sequential-inter",
            Self::Ontological => "ontological",
        }
    }

    pub fn is_metamorphic(self) -> bool {
        self != Self::Ontological
    }
}

impl fmt::Display for ErrorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Evidence {
    /// The two disagreeing answers of a metamorphic comparison.
    Responses {
        comparison: String,
        left: ResponseClass,
        right: ResponseClass,
    },
    /// Affirmed chain implying a pair the SUT did not affirm.
    Witness { path: Vec<EntityId> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub sut: String,
    pub error_type: ErrorType,
    /// The tested relation, or the flagged pair for ontological errors.
    pub relation: Relation,
    /// Template the SUT graph was built under; ontological errors only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<TemplateId>,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub valid: usize,
    pub errors: usize,
}

impl Tally {
    fn add(&mut self, o: Tally) {
        self.valid += o.valid;
        self.errors += o.errors;
    }
}

/// Valid executions and errors per error type.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub atomic: Tally,
    pub sequential_intra: Tally,
    pub sequential_inter: Tally,
    pub ontological: Tally,
    /// Pairs implied by a SUT graph but not affirmed.
    pub err_count: usize,
    /// Distinct affirmed pairs.
    pub coverage_count: usize,
    /// Turns that never got a reply, folded into Invalid above.
    pub no_response: usize,
}

impl CheckOutcome {
    pub fn tally(&self, t: ErrorType) -> Tally {
        match t {
            ErrorType::Atomic => self.atomic,
            ErrorType::SequentialIntra => self.sequential_intra,
            ErrorType::SequentialInter => self.sequential_inter,
            ErrorType::Ontological => self.ontological,
        }
    }

    pub fn tally_mut(&mut self, t: ErrorType) -> &mut Tally {
        match t {
            ErrorType::Atomic => &mut self.atomic,
            ErrorType::SequentialIntra => &mut self.sequential_intra,
            ErrorType::SequentialInter => &mut self.sequential_inter,
            ErrorType::Ontological => &mut self.ontological,
        }
    }

    pub fn total(&self) -> Tally {
        let mut t = Tally::default();
        for e in ErrorType::ALL {
            t.add(self.tally(e));
        }
        t
    }

    pub fn total_metamorphic_errors(&self) -> usize {
        self.atomic.errors + self.sequential_intra.errors + self.sequential_inter.errors
    }

    pub fn merge(&mut self, o: &CheckOutcome) {
        for e in ErrorType::ALL {
            self.tally_mut(e).add(o.tally(e));
        }
        self.err_count += o.err_count;
        self.coverage_count += o.coverage_count;
        self.no_response += o.no_response;
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("no {} transcript for {relation}", conversation.tag())]
    MissingTranscript {
        relation: Relation,
        conversation: ConversationKind,
    },
    #[error("no template-{template} answer for {relation}")]
    MissingResponse { relation: Relation, template: TemplateId },
    #[error("transcript does not match plan: {0}")]
    PlanMismatch(String),
}

/// Atomic direct-query answers keyed by relation and template.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ResponseTable {
    answers: BTreeMap<(Relation, TemplateId), ResponseClass>,
}

impl ResponseTable {
    /// Collects the first turn of every atomic transcript.
    pub fn from_transcripts<'a>(transcripts: impl IntoIterator<Item = &'a Transcript>) -> Self {
        let mut table = Self::default();
        for t in transcripts {
            if !t.kind.is_atomic() {
                continue;
            }
            if let Some(turn) = t.turns.first() {
                table.insert(turn.query.relation.clone(), turn.query.template, turn.class);
            }
        }
        table
    }

    pub fn insert(&mut self, relation: Relation, template: TemplateId, class: ResponseClass) {
        self.answers.insert((relation, template), class);
    }

    pub fn get(&self, relation: &Relation, template: TemplateId) -> Option<ResponseClass> {
        self.answers.get(&(relation.clone(), template)).copied()
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }
}

/// Everything the oracles derive for one SUT.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SutEvaluation {
    pub sut: String,
    pub outcome: CheckOutcome,
    /// Metamorphic records first (in plan order), then ontological.
    pub errors: Vec<ErrorRecord>,
    /// Metamorphic error count per tested relation, zeros included.
    pub relation_errors: BTreeMap<Relation, usize>,
    pub paths_with_errors: BTreeMap<TemplateId, usize>,
    pub table: ResponseTable,
}

/// Runs both oracles for one SUT over its stored transcripts. The
/// ontological oracle runs once per base template.
pub fn evaluate_sut(
    sut: &str,
    suite: &TestSuite,
    paths: &[KnowledgePath],
    transcripts: &BTreeMap<String, Transcript>,
) -> Result<SutEvaluation, OracleError> {
    let mut eval = SutEvaluation {
        sut: sut.to_owned(),
        table: ResponseTable::from_transcripts(transcripts.values()),
        ..SutEvaluation::default()
    };
    for plan in &suite.plans {
        let (errors, outcome) = metamorphic_check(sut, plan, transcripts)?;
        eval.relation_errors.insert(plan.relation.clone(), errors.len());
        eval.errors.extend(errors);
        eval.outcome.merge(&outcome);
    }
    let onto = ontological_summary(sut, paths, &[TemplateId::ORIGINAL, TemplateId::MUTATED], &eval.table)?;
    eval.outcome.merge(&onto.outcome);
    eval.errors.extend(onto.errors);
    eval.paths_with_errors = onto.paths_with_errors;
    Ok(eval)
}
