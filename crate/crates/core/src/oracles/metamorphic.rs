//! Equality checks across the four conversations of one test plan.

use std::collections::BTreeMap;

use super::{CheckOutcome, ErrorRecord, ErrorType, Evidence, OracleError};
use crate::sut::{ResponseClass, Transcript};
use crate::testgen::{conversation_id, ConversationKind, TestPlan};

/// The six answers of one plan, in script order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PlanResponses {
    /// Original query asked alone.
    pub a1: ResponseClass,
    /// Mutated query asked alone.
    pub a2: ResponseClass,
    /// Original then mutated.
    pub s12: [ResponseClass; 2],
    /// Mutated then original.
    pub s21: [ResponseClass; 2],
}

impl PlanResponses {
    pub fn from_slots(slots: [ResponseClass; 6]) -> Self {
        Self {
            a1: slots[0],
            a2: slots[1],
            s12: [slots[2], slots[3]],
            s21: [slots[4], slots[5]],
        }
    }

    pub fn slots(&self) -> [ResponseClass; 6] {
        [self.a1, self.a2, self.s12[0], self.s12[1], self.s21[0], self.s21[1]]
    }

    /// Picks the plan's four transcripts out of `transcripts` (keyed by
    /// conversation id). Turns lost to truncation read as Invalid.
    pub fn collect(plan: &TestPlan, transcripts: &BTreeMap<String, Transcript>) -> Result<Self, OracleError> {
        let get = |kind: ConversationKind| -> Result<&Transcript, OracleError> {
            let id = conversation_id(&plan.relation, kind);
            let t = transcripts.get(&id).ok_or_else(|| OracleError::MissingTranscript {
                relation: plan.relation.clone(),
                conversation: kind,
            })?;
            let expected = plan
                .conversation(kind)
                .ok_or_else(|| OracleError::PlanMismatch(format!("plan {} lacks {}", plan.relation, kind.tag())))?;
            let matches = t.kind == kind
                && t.turns.len() <= expected.queries.len()
                && t.turns.iter().zip(&expected.queries).all(|(turn, q)| turn.query == *q);
            if !matches {
                return Err(OracleError::PlanMismatch(format!(
                    "transcript {id} does not follow the {} script of {}",
                    kind.tag(),
                    plan.relation
                )));
            }
            Ok(t)
        };
        let a1 = get(ConversationKind::AtomicOriginal)?;
        let a2 = get(ConversationKind::AtomicMutated)?;
        let s12 = get(ConversationKind::SequentialOriginalFirst)?;
        let s21 = get(ConversationKind::SequentialMutatedFirst)?;
        Ok(Self {
            a1: a1.class_at(0),
            a2: a2.class_at(0),
            s12: [s12.class_at(0), s12.class_at(1)],
            s21: [s21.class_at(0), s21.class_at(1)],
        })
    }
}

/// One of the five equalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Comparison {
    pub error_type: ErrorType,
    pub label: &'static str,
    pub left: ResponseClass,
    pub right: ResponseClass,
}

impl Comparison {
    /// `None` when either side is Invalid and the comparison is skipped.
    pub fn holds(&self) -> Option<bool> {
        (self.left.is_valid() && self.right.is_valid()).then_some(self.left == self.right)
    }
}

/// The five comparisons: one atomic, two sequential-intra, two
/// sequential-inter.
pub fn comparisons(r: &PlanResponses) -> [Comparison; 5] {
    let c = |error_type, label, left, right| Comparison {
        error_type,
        label,
        left,
        right,
    };
    [
        c(ErrorType::Atomic, "a1=a2", r.a1, r.a2),
        c(ErrorType::SequentialIntra, "s12[0]=s12[1]", r.s12[0], r.s12[1]),
        c(ErrorType::SequentialIntra, "s21[0]=s21[1]", r.s21[0], r.s21[1]),
        c(ErrorType::SequentialInter, "a1=s21[1]", r.a1, r.s21[1]),
        c(ErrorType::SequentialInter, "a2=s12[1]", r.a2, r.s12[1]),
    ]
}

/// Runs the five comparisons for one plan.
pub fn check_responses(sut: &str, plan: &TestPlan, r: &PlanResponses) -> (Vec<ErrorRecord>, CheckOutcome) {
    let mut outcome = CheckOutcome::default();
    let mut errors = Vec::new();
    for cmp in comparisons(r) {
        let Some(holds) = cmp.holds() else { continue };
        let tally = outcome.tally_mut(cmp.error_type);
        tally.valid += 1;
        if !holds {
            tally.errors += 1;
            errors.push(ErrorRecord {
                sut: sut.to_owned(),
                error_type: cmp.error_type,
                relation: plan.relation.clone(),
                template: None,
                evidence: Evidence::Responses {
                    comparison: cmp.label.to_owned(),
                    left: cmp.left,
                    right: cmp.right,
                },
            });
        }
    }
    (errors, outcome)
}

/// Metamorphic oracle over the stored transcripts of one plan.
pub fn metamorphic_check(
    sut: &str,
    plan: &TestPlan,
    transcripts: &BTreeMap<String, Transcript>,
) -> Result<(Vec<ErrorRecord>, CheckOutcome), OracleError> {
    let r = PlanResponses::collect(plan, transcripts)?;
    let (errors, mut outcome) = check_responses(sut, plan, &r);
    outcome.no_response = plan
        .conversations
        .iter()
        .filter_map(|c| transcripts.get(&c.id()))
        .flat_map(|t| &t.turns)
        .filter(|t| t.no_response)
        .count();
    Ok((errors, outcome))
}
