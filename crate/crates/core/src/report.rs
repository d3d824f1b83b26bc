//! Markdown and JSON rendering of pipeline and evaluation results.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::curate::{CorpusStats, RejectionReason};
use crate::mcu::{CompileReport, Variant};
use crate::metrics::EvalReport;
use crate::pragma::{ComplexityBin, DirectiveType};
use crate::taxonomy::TaxonomyReport;

/// Pair counts after each dataset-construction step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineCounts {
    pub files: usize,
    pub pragma_instances: usize,
    pub extracted: usize,
    pub after_filter: usize,
    pub after_dedup: usize,
    #[serde(default)]
    pub rejections: BTreeMap<RejectionReason, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportData {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<PipelineCounts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<CorpusStats>,
    /// Row label for the model whose generations were scored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taxonomy: Option<TaxonomyReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compile: Option<CompileReport>,
}

impl ReportData {
    pub fn is_empty(&self) -> bool {
        self.counts.is_none()
            && self.stats.is_none()
            && self.eval.is_none()
            && self.taxonomy.is_none()
            && self.compile.is_none()
    }
}

fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn table(out: &mut String, title: &str, header: &[&str], rows: &[Vec<String>]) {
    let _ = writeln!(out, "### {title}\n");
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let align: Vec<&str> = header
        .iter()
        .enumerate()
        .map(|(i, _)| if i == 0 { "---" } else { "---:" })
        .collect();
    let _ = writeln!(out, "| {} |", align.join(" | "));
    for r in rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
    out.push('\n');
}

pub fn render_pipeline_counts(out: &mut String, c: &PipelineCounts) {
    let pct = |r: f64| format!("{:.0}%", r * 100.0);
    let mut rows = vec![
        vec!["Initially".to_string(), thousands(c.extracted)],
        vec!["Remove Pairs with Invalid Loops".to_string(), thousands(c.after_filter)],
        vec!["Deduplicate".to_string(), thousands(c.after_dedup)],
        vec!["Total Pragma-Loop Pairs".to_string(), thousands(c.after_dedup)],
    ];
    if let (Some(train), Some(test), Some(ratio)) = (c.train, c.test, c.ratio) {
        rows.push(vec![format!("Training Dataset ({})", pct(ratio)), thousands(train)]);
        rows.push(vec![format!("Testing Dataset ({})", pct(1.0 - ratio)), thousands(test)]);
    }
    table(out, "Dataset Creation through the Steps", &["Processing Step", "# of pragma-loop pairs"], &rows);
    let rows: Vec<Vec<String>> = RejectionReason::ALL
        .iter()
        .map(|r| vec![r.as_str().to_string(), c.rejections.get(r).copied().unwrap_or(0).to_string()])
        .collect();
    table(out, "Rejections by Rule", &["Rule", "Pairs"], &rows);
}

pub fn render_stats(out: &mut String, s: &CorpusStats) {
    let rows: Vec<Vec<String>> = ComplexityBin::ALL
        .iter()
        .map(|b| vec![b.label().to_string(), s.complexity_bins.get(b).copied().unwrap_or(0).to_string()])
        .collect();
    table(out, "Pragma Complexity Distribution", &["Pragma Complexity Type", "Frequency"], &rows);
    let rows: Vec<Vec<String>> = DirectiveType::ALL
        .iter()
        .map(|d| vec![d.as_str().to_string(), s.directive_types.get(d).copied().unwrap_or(0).to_string()])
        .collect();
    table(out, "Directive Type Distribution", &["Directive Type", "Frequency"], &rows);
}

pub fn render_eval(out: &mut String, label: &str, e: &EvalReport) {
    let p = |v: f64| format!("{:.2}", v * 100.0);
    table(
        out,
        "Precision, Recall, and F1-Score for Directive Type Prediction",
        &["Model", "P (%)", "R (%)", "F1 (%)"],
        &[vec![label.to_string(), p(e.prf.macro_precision), p(e.prf.macro_recall), p(e.prf.macro_f1)]],
    );
    let rows: Vec<Vec<String>> = e
        .prf
        .per_class
        .iter()
        .map(|c| {
            vec![
                c.class.clone(),
                c.support.to_string(),
                c.predicted.to_string(),
                p(c.precision),
                p(c.recall),
                p(c.f1),
            ]
        })
        .collect();
    table(out, "Per-Class Directive Scores", &["Class", "Gold", "Predicted", "P (%)", "R (%)", "F1 (%)"], &rows);
    let f = |v: f64| format!("{v:.4}");
    let mut rows = vec![
        vec!["Records".to_string(), e.n.to_string()],
        vec!["Exact match accuracy".to_string(), f(e.exact_match_rate)],
        vec!["Mean Levenshtein similarity".to_string(), f(e.mean_levenshtein)],
        vec!["Directive-type match".to_string(), f(e.directive_accuracy)],
    ];
    if let Some(x) = e.directive_accuracy_excluding_failures {
        rows.push(vec!["Directive-type match (extracted only)".to_string(), f(x)]);
    }
    rows.push(vec!["Mean clause-wise Jaccard".to_string(), f(e.mean_jaccard)]);
    rows.push(vec!["Extraction failure rate".to_string(), f(e.extraction_failure_rate)]);
    if !e.missing_generations.is_empty() {
        rows.push(vec!["References without a generation".to_string(), e.missing_generations.len().to_string()]);
    }
    table(out, "Aggregate Metrics", &["Metric", label], &rows);
}

pub fn render_taxonomy(out: &mut String, label: &str, t: &TaxonomyReport) {
    let rows: Vec<Vec<String>> = t.rows().into_iter().map(|(k, v)| vec![k, v]).collect();
    table(out, "Comparison of Error Categories", &["Error Category", label], &rows);
}

pub fn render_compile(out: &mut String, c: &CompileReport) {
    let rate = |r: Option<f64>| r.map_or("n/a".to_string(), |v| format!("{:.1}", v * 100.0));
    let rows: Vec<Vec<String>> = Variant::ALL
        .iter()
        .map(|v| {
            let s = c.stats(*v);
            vec![
                v.as_str().to_string(),
                s.attempted.to_string(),
                s.passed.to_string(),
                rate(s.rate),
                if *v == Variant::NoPragma {
                    "-".to_string()
                } else {
                    format!("{} of {}", rate(s.rate_of_baseline_passes), c.baseline_passed)
                },
            ]
        })
        .collect();
    table(
        out,
        "Compilation Success by MCU Variant",
        &["Variant", "Attempted", "Passed", "Rate (%)", "Rate over baseline passes (%)"],
        &rows,
    );
    if !c.skipped.is_empty() {
        let rows: Vec<Vec<String>> = c
            .skipped
            .iter()
            .map(|(k, v)| vec![k.as_str().to_string(), v.to_string()])
            .collect();
        table(out, "Variants Not Attempted", &["Reason", "Count"], &rows);
    }
    if let Some(t) = &c.toolchain {
        let _ = writeln!(out, "Toolchain: `{t}`\n");
    }
}

/// Sections appear only for the inputs that are present.
pub fn render_markdown(data: &ReportData) -> String {
    let label = data.label.as_deref().unwrap_or("model");
    let mut out = String::from("# OpenACC Pragma Dataset Report\n\n");
    if let Some(c) = &data.counts {
        out.push_str("## Dataset\n\n");
        render_pipeline_counts(&mut out, c);
    }
    if let Some(s) = &data.stats {
        if data.counts.is_none() {
            out.push_str("## Dataset\n\n");
        }
        render_stats(&mut out, s);
    }
    if let Some(e) = &data.eval {
        out.push_str("## Evaluation\n\n");
        render_eval(&mut out, label, e);
    }
    if let Some(t) = &data.taxonomy {
        out.push_str("## Error Taxonomy\n\n");
        render_taxonomy(&mut out, label, t);
    }
    if let Some(c) = &data.compile {
        out.push_str("## Compilation\n\n");
        render_compile(&mut out, c);
    }
    out
}
