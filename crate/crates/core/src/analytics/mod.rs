//! Knowledge coverage, inconsistency-weighted ensembles, error overlap and
//! report emission.

pub mod kfold;
pub mod overlap;
pub mod report;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracles::{ErrorRecord, ResponseTable, MAX_RELATION_ERRORS};
use crate::sut::ResponseClass;
use crate::testgen::{Relation, TemplateId};

pub use kfold::{eligible_relations, kfold_mitigation, FoldResult, GapCounts, MitigationReport, Scope, SutAnswers};
pub use overlap::{error_key, error_overlap, ErrorKey, OverlapRegion, OverlapReport};
pub use report::{emit_reports, format_percent, ReportInput, SutOutcome};

/// Weighted vote must exceed this to count as Yes.
pub const ENSEMBLE_THRESHOLD: f64 = 0.5;

/// Absorbs floating-point noise at the threshold, keeping exact ties at No.
const THRESHOLD_EPSILON: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("no template-{template} answer for {relation}")]
    MissingResponse { relation: Relation, template: TemplateId },
    #[error("invalid answer from SUT #{0} cannot enter the ensemble")]
    InvalidResponse(usize),
    #[error("{responses} responses for {weights} weights")]
    LengthMismatch { responses: usize, weights: usize },
    #[error("{eligible} eligible relations cannot fill {k} folds")]
    TooFewRelations { eligible: usize, k: usize },
    #[error("need at least one SUT")]
    NoSuts,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Relations whose direct answer under `template` is anything but Yes.
pub fn knowledge_gap<'a>(
    table: &ResponseTable,
    template: TemplateId,
    relations: impl IntoIterator<Item = &'a Relation>,
) -> Result<BTreeSet<Relation>, AnalyticsError> {
    let mut missed = BTreeSet::new();
    for r in relations {
        let class = table.get(r, template).ok_or_else(|| AnalyticsError::MissingResponse {
            relation: r.clone(),
            template,
        })?;
        if class != ResponseClass::Yes {
            missed.insert(r.clone());
        }
    }
    Ok(missed)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub sut: String,
    /// Ground-truth relations under test.
    pub relations: usize,
    pub gaps: BTreeMap<TemplateId, BTreeSet<Relation>>,
    /// Relations missed under every base template.
    pub intersection: BTreeSet<Relation>,
    /// `relations - |intersection|`.
    pub overall_coverage: usize,
    /// Distinct pairs the SUT affirmed directly, counted on its own graphs.
    pub graph_coverage_count: usize,
}

impl CoverageReport {
    pub fn gap(&self, t: TemplateId) -> usize {
        self.gaps.get(&t).map_or(0, BTreeSet::len)
    }

    pub fn coverage_fraction(&self) -> Option<f64> {
        (self.relations > 0).then(|| self.overall_coverage as f64 / self.relations as f64)
    }
}

/// Coverage of `relations` under the two base templates.
pub fn coverage_report(
    sut: &str,
    table: &ResponseTable,
    relations: &[Relation],
    graph_coverage_count: usize,
) -> Result<CoverageReport, AnalyticsError> {
    let t1 = knowledge_gap(table, TemplateId::ORIGINAL, relations)?;
    let t2 = knowledge_gap(table, TemplateId::MUTATED, relations)?;
    let intersection: BTreeSet<Relation> = t1.intersection(&t2).cloned().collect();
    let unique: BTreeSet<&Relation> = relations.iter().collect();
    Ok(CoverageReport {
        sut: sut.to_owned(),
        relations: unique.len(),
        overall_coverage: unique.len() - intersection.len(),
        gaps: BTreeMap::from([(TemplateId::ORIGINAL, t1), (TemplateId::MUTATED, t2)]),
        intersection,
        graph_coverage_count,
    })
}

/// Score of one relation: five minus its metamorphic error count.
pub fn relation_score(errors: usize) -> u32 {
    (MAX_RELATION_ERRORS - errors.min(MAX_RELATION_ERRORS)) as u32
}

/// Per-relation scores for one SUT; relations without errors score 5.
pub fn score_relations<'a>(
    relations: impl IntoIterator<Item = &'a Relation>,
    errors: &[ErrorRecord],
) -> BTreeMap<Relation, u32> {
    let mut counts: BTreeMap<&Relation, usize> = BTreeMap::new();
    for e in errors.iter().filter(|e| e.error_type.is_metamorphic()) {
        *counts.entry(&e.relation).or_default() += 1;
    }
    relations
        .into_iter()
        .map(|r| (r.clone(), relation_score(counts.get(r).copied().unwrap_or(0))))
        .collect()
}

/// Normalizes cumulative scores to weights summing to one. All-zero (or
/// non-positive) totals fall back to uniform weights.
pub fn compute_weights(scores: &[f64]) -> Vec<f64> {
    let total: f64 = scores.iter().sum();
    if scores.is_empty() {
        return Vec::new();
    }
    if total <= 0.0 {
        log::warn!("all SUT scores are zero; using uniform weights");
        return vec![1.0 / scores.len() as f64; scores.len()];
    }
    scores.iter().map(|s| s / total).collect()
}

/// Yes iff the weighted Yes share is strictly above the threshold.
pub fn ensemble_answer(responses: &[ResponseClass], weights: &[f64]) -> Result<ResponseClass, AnalyticsError> {
    if responses.len() != weights.len() {
        return Err(AnalyticsError::LengthMismatch {
            responses: responses.len(),
            weights: weights.len(),
        });
    }
    let mut score = 0.0;
    for (i, (r, w)) in responses.iter().zip(weights).enumerate() {
        score += w * r.as_vote().ok_or(AnalyticsError::InvalidResponse(i))?;
    }
    Ok(if score > ENSEMBLE_THRESHOLD + THRESHOLD_EPSILON {
        ResponseClass::Yes
    } else {
        ResponseClass::No
    })
}

/// Yes iff strictly more Yes than No; ties and Invalid-only go to No.
pub fn majority_vote(responses: &[ResponseClass]) -> ResponseClass {
    let yes = responses.iter().filter(|r| **r == ResponseClass::Yes).count();
    let no = responses.iter().filter(|r| **r == ResponseClass::No).count();
    if yes > no {
        ResponseClass::Yes
    } else {
        ResponseClass::No
    }
}
