//! Exclusive overlap of error sets across SUTs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::oracles::{ErrorRecord, ErrorType, Evidence};
use crate::testgen::Relation;

/// Identity of an error independent of which SUT made it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ErrorKey {
    pub error_type: ErrorType,
    pub relation: Relation,
    /// Comparison label for metamorphic errors, template for ontological.
    pub detail: String,
}

pub fn error_key(e: &ErrorRecord) -> ErrorKey {
    let detail = match (&e.evidence, e.template) {
        (Evidence::Responses { comparison, .. }, _) => comparison.clone(),
        (Evidence::Witness { .. }, Some(t)) => format!("t{t}"),
        (Evidence::Witness { .. }, None) => String::new(),
    };
    ErrorKey {
        error_type: e.error_type,
        relation: e.relation.clone(),
        detail,
    }
}

/// Errors shared by exactly `members` and no other SUT.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapRegion {
    pub members: Vec<String>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub suts: Vec<String>,
    /// One region per non-empty subset, ordered by subset bitmask.
    pub regions: Vec<OverlapRegion>,
    pub total: usize,
    pub unique_to_one: usize,
    pub shared_by_all: usize,
}

/// Counts, for every non-empty subset of SUTs, the distinct errors made by
/// exactly that subset.
pub fn error_overlap(sets: &[(String, BTreeSet<ErrorKey>)]) -> OverlapReport {
    let n = sets.len();
    assert!(n < usize::BITS as usize, "too many SUTs for subset enumeration");
    let mut masks: BTreeMap<&ErrorKey, usize> = BTreeMap::new();
    for (i, (_, keys)) in sets.iter().enumerate() {
        for k in keys {
            *masks.entry(k).or_default() |= 1 << i;
        }
    }
    let mut counts = vec![0usize; 1 << n];
    for m in masks.values() {
        counts[*m] += 1;
    }
    let regions = (1..1usize << n)
        .map(|mask| OverlapRegion {
            members: (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| sets[i].0.clone())
                .collect(),
            count: counts[mask],
        })
        .collect();
    let full = (1usize << n) - 1;
    OverlapReport {
        suts: sets.iter().map(|(s, _)| s.clone()).collect(),
        regions,
        total: masks.len(),
        unique_to_one: (0..n).map(|i| counts[1 << i]).sum(),
        shared_by_all: if n == 0 { 0 } else { counts[full] },
    }
}
