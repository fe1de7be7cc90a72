//! Cross-validated comparison of the weighted ensemble against majority vote
//! and individual SUTs.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{compute_weights, ensemble_answer, majority_vote, relation_score, AnalyticsError};
use crate::oracles::ResponseTable;
use crate::sut::ResponseClass;
use crate::testgen::{Relation, TemplateId};

/// What one SUT contributes to mitigation.
#[derive(Debug, Clone)]
pub struct SutAnswers {
    pub name: String,
    /// Metamorphic errors per relation; missing relations count as zero.
    pub relation_errors: BTreeMap<Relation, usize>,
    pub table: ResponseTable,
}

impl SutAnswers {
    fn score(&self, r: &Relation) -> u32 {
        relation_score(self.relation_errors.get(r).copied().unwrap_or(0))
    }
}

/// A single template, or all evaluated templates summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Template(TemplateId),
    All,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Template(t) => write!(f, "t{t}"),
            Self::All => f.write_str("all"),
        }
    }
}

/// Held-out gap counts: relations not answered Yes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapCounts {
    pub scope: Scope,
    /// Queries evaluated (held-out relations times templates in scope).
    pub queries: usize,
    pub weighted: usize,
    pub majority: usize,
    /// Per SUT, in input order.
    pub per_sut: Vec<usize>,
    pub mean_sut: f64,
}

impl GapCounts {
    fn empty(scope: Scope, suts: usize) -> Self {
        Self {
            scope,
            queries: 0,
            weighted: 0,
            majority: 0,
            per_sut: vec![0; suts],
            mean_sut: 0.0,
        }
    }

    fn add(&mut self, o: &GapCounts) {
        self.queries += o.queries;
        self.weighted += o.weighted;
        self.majority += o.majority;
        for (a, b) in self.per_sut.iter_mut().zip(&o.per_sut) {
            *a += b;
        }
        self.finish();
    }

    fn finish(&mut self) {
        self.mean_sut = if self.per_sut.is_empty() {
            0.0
        } else {
            self.per_sut.iter().sum::<usize>() as f64 / self.per_sut.len() as f64
        };
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub held_out: Vec<Relation>,
    /// Cumulative training score per SUT.
    pub scores: Vec<u64>,
    pub weights: Vec<f64>,
    pub gaps: Vec<GapCounts>,
}

impl FoldResult {
    pub fn gap(&self, scope: Scope) -> Option<&GapCounts> {
        self.gaps.iter().find(|g| g.scope == scope)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationReport {
    pub k: usize,
    pub seed: u64,
    pub suts: Vec<String>,
    pub templates: Vec<TemplateId>,
    pub eligible: usize,
    pub excluded: usize,
    pub folds: Vec<FoldResult>,
    /// Fold gaps summed per scope.
    pub totals: Vec<GapCounts>,
}

impl MitigationReport {
    pub fn total(&self, scope: Scope) -> Option<&GapCounts> {
        self.totals.iter().find(|g| g.scope == scope)
    }
}

/// Relations every SUT answered Yes or No under every template in
/// `templates`, in input order.
pub fn eligible_relations(
    relations: &[Relation],
    suts: &[SutAnswers],
    templates: &[TemplateId],
) -> Result<Vec<Relation>, AnalyticsError> {
    let mut out = Vec::new();
    for r in relations {
        let mut ok = true;
        for s in suts {
            for &t in templates {
                let class = s.table.get(r, t).ok_or_else(|| AnalyticsError::MissingResponse {
                    relation: r.clone(),
                    template: t,
                })?;
                ok &= class.is_valid();
            }
        }
        if ok {
            out.push(r.clone());
        }
    }
    Ok(out)
}

/// Splits `n` shuffled items into `k` contiguous folds whose sizes differ
/// by at most one.
fn fold_bounds(n: usize, k: usize) -> Vec<(usize, usize)> {
    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    (0..k)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let b = (start, start + len);
            start += len;
            b
        })
        .collect()
}

/// Trains one global weight vector per fold on the other folds' relation
/// scores and counts held-out gaps under each template in `templates`.
pub fn kfold_mitigation(
    relations: &[Relation],
    suts: &[SutAnswers],
    templates: &[TemplateId],
    k: usize,
    seed: u64,
) -> Result<MitigationReport, AnalyticsError> {
    if suts.is_empty() {
        return Err(AnalyticsError::NoSuts);
    }
    let mut eligible = eligible_relations(relations, suts, templates)?;
    if k == 0 || eligible.len() < k {
        return Err(AnalyticsError::TooFewRelations {
            eligible: eligible.len(),
            k,
        });
    }
    let excluded = relations.len() - eligible.len();
    eligible.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut folds = Vec::with_capacity(k);
    for (fold, (lo, hi)) in fold_bounds(eligible.len(), k).into_iter().enumerate() {
        let held_out = &eligible[lo..hi];
        let training = eligible[..lo].iter().chain(&eligible[hi..]);
        let mut scores = vec![0u64; suts.len()];
        for r in training {
            for (i, s) in suts.iter().enumerate() {
                scores[i] += u64::from(s.score(r));
            }
        }
        let weights = compute_weights(&scores.iter().map(|&s| s as f64).collect::<Vec<_>>());

        let mut gaps = Vec::new();
        let mut all = GapCounts::empty(Scope::All, suts.len());
        for &t in templates {
            let mut g = GapCounts::empty(Scope::Template(t), suts.len());
            for r in held_out {
                let answers: Vec<ResponseClass> = suts
                    .iter()
                    .map(|s| s.table.get(r, t).expect("eligibility checked every answer"))
                    .collect();
                g.queries += 1;
                if ensemble_answer(&answers, &weights)? != ResponseClass::Yes {
                    g.weighted += 1;
                }
                if majority_vote(&answers) != ResponseClass::Yes {
                    g.majority += 1;
                }
                for (i, a) in answers.iter().enumerate() {
                    if *a != ResponseClass::Yes {
                        g.per_sut[i] += 1;
                    }
                }
            }
            g.finish();
            all.add(&g);
            gaps.push(g);
        }
        gaps.push(all);
        folds.push(FoldResult {
            fold,
            held_out: held_out.to_vec(),
            scores,
            weights,
            gaps,
        });
    }

    let mut totals: Vec<GapCounts> = folds[0]
        .gaps
        .iter()
        .map(|g| GapCounts::empty(g.scope, suts.len()))
        .collect();
    for f in &folds {
        for (t, g) in totals.iter_mut().zip(&f.gaps) {
            t.add(g);
        }
    }
    Ok(MitigationReport {
        k,
        seed,
        suts: suts.iter().map(|s| s.name.clone()).collect(),
        templates: templates.to_vec(),
        eligible: eligible.len(),
        excluded,
        folds,
        totals,
    })
}
