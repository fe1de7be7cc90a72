//! Machine-readable results and CSV tables.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{AnalyticsError, CoverageReport, MitigationReport, OverlapReport};
use crate::oracles::{CheckOutcome, ErrorType};
use crate::testgen::TemplateId;

/// Oracle totals for one SUT.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SutOutcome {
    pub sut: String,
    pub outcome: CheckOutcome,
    pub paths: usize,
    pub paths_with_errors: BTreeMap<TemplateId, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportInput {
    pub outcomes: Vec<SutOutcome>,
    pub coverage: Vec<CoverageReport>,
    pub mitigation: Option<MitigationReport>,
    pub overlap: Option<OverlapReport>,
}

/// `num / den` as a percentage with one decimal, or "n/a" when `den` is 0.
pub fn format_percent(num: usize, den: usize) -> String {
    if den == 0 {
        "n/a".to_owned()
    } else {
        format!("{:.1}", 100.0 * num as f64 / den as f64)
    }
}

/// Relative reduction of `new` against `base`, in percent.
fn reduction(new: f64, base: f64) -> String {
    if base == 0.0 {
        "n/a".to_owned()
    } else {
        format!("{:.2}", 100.0 * (base - new) / base)
    }
}

fn writer(dir: &Path, name: &str) -> Result<(csv::Writer<fs::File>, PathBuf), AnalyticsError> {
    let path = dir.join(name);
    let w = csv::Writer::from_path(&path)?;
    Ok((w, path))
}

/// Writes every table for `input` into `outdir` and returns the paths
/// written, in a fixed order.
pub fn emit_reports(input: &ReportInput, outdir: &Path) -> Result<Vec<PathBuf>, AnalyticsError> {
    fs::create_dir_all(outdir).map_err(|source| AnalyticsError::Io {
        path: outdir.to_owned(),
        source,
    })?;
    let mut written = Vec::new();

    let (mut w, path) = writer(outdir, "errors.csv")?;
    let mut header = vec!["sut".to_owned()];
    for t in ErrorType::ALL {
        for col in ["valid", "errors", "percent"] {
            header.push(format!("{}_{col}", t.as_str()));
        }
    }
    header.extend(["total_valid", "total_errors", "total_percent", "no_response"].map(String::from));
    w.write_record(&header)?;
    for o in &input.outcomes {
        let mut row = vec![o.sut.clone()];
        for t in ErrorType::ALL {
            let tally = o.outcome.tally(t);
            row.push(tally.valid.to_string());
            row.push(tally.errors.to_string());
            row.push(format_percent(tally.errors, tally.valid));
        }
        let total = o.outcome.total();
        row.push(total.valid.to_string());
        row.push(total.errors.to_string());
        row.push(format_percent(total.errors, total.valid));
        row.push(o.outcome.no_response.to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|source| AnalyticsError::Io {
        path: path.clone(),
        source,
    })?;
    written.push(path);

    let (mut w, path) = writer(outdir, "coverage.csv")?;
    w.write_record([
        "sut",
        "relations",
        "gap_t1",
        "gap_t1_percent",
        "gap_t2",
        "gap_t2_percent",
        "intersection",
        "intersection_percent",
        "coverage",
        "coverage_percent",
        "graph_coverage_count",
    ])?;
    for c in &input.coverage {
        let (g1, g2) = (c.gap(TemplateId::ORIGINAL), c.gap(TemplateId::MUTATED));
        w.write_record([
            c.sut.clone(),
            c.relations.to_string(),
            g1.to_string(),
            format_percent(g1, c.relations),
            g2.to_string(),
            format_percent(g2, c.relations),
            c.intersection.len().to_string(),
            format_percent(c.intersection.len(), c.relations),
            c.overall_coverage.to_string(),
            format_percent(c.overall_coverage, c.relations),
            c.graph_coverage_count.to_string(),
        ])?;
    }
    w.flush().map_err(|source| AnalyticsError::Io {
        path: path.clone(),
        source,
    })?;
    written.push(path);

    if let Some(m) = &input.mitigation {
        let (mut w, path) = writer(outdir, "mitigation.csv")?;
        let mut header: Vec<String> = ["scope", "queries", "weighted", "majority", "mean_sut"]
            .map(String::from)
            .to_vec();
        header.extend(m.suts.iter().cloned());
        header.extend(["reduction_vs_majority", "reduction_vs_mean_sut"].map(String::from));
        w.write_record(&header)?;
        for g in &m.totals {
            let mut row = vec![
                g.scope.to_string(),
                g.queries.to_string(),
                g.weighted.to_string(),
                g.majority.to_string(),
                format!("{:.2}", g.mean_sut),
            ];
            row.extend(g.per_sut.iter().map(usize::to_string));
            row.push(reduction(g.weighted as f64, g.majority as f64));
            row.push(reduction(g.weighted as f64, g.mean_sut));
            w.write_record(&row)?;
        }
        w.flush().map_err(|source| AnalyticsError::Io {
            path: path.clone(),
            source,
        })?;
        written.push(path);

        let (mut w, path) = writer(outdir, "mitigation_folds.csv")?;
        let mut header: Vec<String> = ["fold", "scope", "held_out", "weighted", "majority", "mean_sut"]
            .map(String::from)
            .to_vec();
        header.extend(m.suts.iter().map(|s| format!("weight_{s}")));
        w.write_record(&header)?;
        for f in &m.folds {
            for g in &f.gaps {
                let mut row = vec![
                    f.fold.to_string(),
                    g.scope.to_string(),
                    f.held_out.len().to_string(),
                    g.weighted.to_string(),
                    g.majority.to_string(),
                    format!("{:.2}", g.mean_sut),
                ];
                row.extend(f.weights.iter().map(|x| format!("{x:.6}")));
                w.write_record(&row)?;
            }
        }
        w.flush().map_err(|source| AnalyticsError::Io {
            path: path.clone(),
            source,
        })?;
        written.push(path);
    }

    if let Some(o) = &input.overlap {
        let (mut w, path) = writer(outdir, "overlap.csv")?;
        w.write_record(["members", "count"])?;
        for r in &o.regions {
            w.write_record([r.members.join("+"), r.count.to_string()])?;
        }
        w.flush().map_err(|source| AnalyticsError::Io {
            path: path.clone(),
            source,
        })?;
        written.push(path);

        let plot = json!({
            "sets": o.suts,
            "regions": o.regions,
            "total": o.total,
            "unique_to_one": o.unique_to_one,
            "shared_by_all": o.shared_by_all,
        });
        written.push(write_text(
            outdir,
            "overlap_plot.json",
            &(serde_json::to_string_pretty(&plot).expect("serializable") + "\n"),
        )?);
    }

    let mut lines = String::new();
    let mut push = |v: serde_json::Value| {
        lines.push_str(&v.to_string());
        lines.push('\n');
    };
    for o in &input.outcomes {
        push(json!({"record": "outcome", "sut": o.sut, "outcome": o.outcome,
                    "paths": o.paths, "paths_with_errors": o.paths_with_errors}));
    }
    for c in &input.coverage {
        push(json!({"record": "coverage", "sut": c.sut, "relations": c.relations,
                    "gap_t1": c.gap(TemplateId::ORIGINAL), "gap_t2": c.gap(TemplateId::MUTATED),
                    "intersection": c.intersection.len(), "coverage": c.overall_coverage,
                    "graph_coverage_count": c.graph_coverage_count}));
    }
    if let Some(m) = &input.mitigation {
        for g in &m.totals {
            push(json!({"record": "mitigation", "k": m.k, "seed": m.seed, "eligible": m.eligible, "gaps": g}));
        }
    }
    if let Some(o) = &input.overlap {
        push(
            json!({"record": "overlap", "total": o.total, "unique_to_one": o.unique_to_one,
                    "shared_by_all": o.shared_by_all}),
        );
    }
    written.push(write_text(outdir, "results.jsonl", &lines)?);
    Ok(written)
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf, AnalyticsError> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|source| AnalyticsError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}
