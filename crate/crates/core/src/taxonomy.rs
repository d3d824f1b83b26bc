//! Error categories for non-exact generations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::EvalRecord;

/// Clause-set similarity below this is a major clause error.
pub const MAJOR_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaxonomyError {
    #[error("record {0} is an exact match")]
    NotAnError(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    DirectiveChoice,
    ClauseReordering,
    MajorClause,
    MinorClause,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 4] = [
        ErrorCategory::DirectiveChoice,
        ErrorCategory::ClauseReordering,
        ErrorCategory::MajorClause,
        ErrorCategory::MinorClause,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::DirectiveChoice => "directive_choice",
            ErrorCategory::ClauseReordering => "clause_reordering",
            ErrorCategory::MajorClause => "major_clause",
            ErrorCategory::MinorClause => "minor_clause",
        }
    }
}

/// Category from the three deciding quantities alone.
pub fn category_for(directive_match: bool, jaccard: f64) -> ErrorCategory {
    if !directive_match {
        ErrorCategory::DirectiveChoice
    } else if jaccard == 1.0 {
        ErrorCategory::ClauseReordering
    } else if jaccard < MAJOR_THRESHOLD {
        ErrorCategory::MajorClause
    } else {
        ErrorCategory::MinorClause
    }
}

pub fn classify(rec: &EvalRecord) -> Result<ErrorCategory, TaxonomyError> {
    if rec.exact_match {
        return Err(TaxonomyError::NotAnError(rec.id.clone()));
    }
    Ok(category_for(rec.directive_match, rec.jaccard))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyReport {
    pub total_records: usize,
    pub non_exact: usize,
    pub directive_choice: usize,
    pub clause_errors: usize,
    pub reordering: usize,
    pub major: usize,
    pub minor: usize,
    /// Per non-exact record, sorted by id.
    pub labels: Vec<(String, ErrorCategory)>,
}

fn pct(n: usize, d: usize) -> f64 {
    if d == 0 { 0.0 } else { 100.0 * n as f64 / d as f64 }
}

impl TaxonomyReport {
    pub fn pct_of_total(&self, n: usize) -> f64 {
        pct(n, self.total_records)
    }

    pub fn pct_of_clause_errors(&self, n: usize) -> f64 {
        pct(n, self.clause_errors)
    }

    pub fn identities_hold(&self) -> bool {
        self.clause_errors == self.non_exact - self.directive_choice
            && self.reordering + self.major + self.minor == self.clause_errors
            && self.labels.len() == self.non_exact
    }

    /// Rows shaped like `("Total Non-Exact Matches", "405(50% of 810)")`.
    pub fn rows(&self) -> Vec<(String, String)> {
        let of_total = |n: usize| format!("{n}({:.0}% of {})", self.pct_of_total(n), self.total_records);
        let of_clause = |n: usize| format!("{n}({:.0}% of {})", self.pct_of_clause_errors(n), self.clause_errors);
        vec![
            ("Total Non-Exact Matches".into(), of_total(self.non_exact)),
            ("Directive Choice Error".into(), of_total(self.directive_choice)),
            ("Clause Error (Correct Directive)".into(), of_total(self.clause_errors)),
            ("a. Clause Reordering".into(), of_clause(self.reordering)),
            ("b. Major Clause Error".into(), of_clause(self.major)),
            ("c. Minor Clause Error".into(), of_clause(self.minor)),
        ]
    }
}

pub fn taxonomy_report(records: &[EvalRecord]) -> TaxonomyReport {
    let mut labels: Vec<(String, ErrorCategory)> = records
        .iter()
        .filter_map(|r| classify(r).ok().map(|c| (r.id.clone(), c)))
        .collect();
    labels.sort();
    let count = |c: ErrorCategory| labels.iter().filter(|(_, l)| *l == c).count();
    let directive_choice = count(ErrorCategory::DirectiveChoice);
    let (reordering, major, minor) = (
        count(ErrorCategory::ClauseReordering),
        count(ErrorCategory::MajorClause),
        count(ErrorCategory::MinorClause),
    );
    TaxonomyReport {
        total_records: records.len(),
        non_exact: labels.len(),
        directive_choice,
        clause_errors: reordering + major + minor,
        reordering,
        major,
        minor,
        labels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Generated;
    use crate::pragma::parse_pragma;

    fn rec(id: &str, r: &str, g: Option<&str>) -> EvalRecord {
        let generated = match g {
            Some(g) => Generated::Parsed { pragma: parse_pragma(g).unwrap() },
            None => Generated::ExtractionFailed,
        };
        EvalRecord::new(id, parse_pragma(r).unwrap(), generated)
    }

    #[test]
    fn classify_examples() {
        let r = rec("a", "#pragma acc parallel loop", Some("#pragma acc kernels"));
        assert_eq!(classify(&r), Ok(ErrorCategory::DirectiveChoice));
        let r = rec(
            "b",
            "#pragma acc parallel loop present(val[0:gs0]) reduction(+ : sum)",
            Some("#pragma acc parallel loop reduction(+ : sum) present(val[0:gs0])"),
        );
        assert_eq!(classify(&r), Ok(ErrorCategory::ClauseReordering));
        // {present(x)} vs {copyin(x)}: intersection 0, union 2.
        let r = rec("c", "#pragma acc parallel loop present(x)", Some("#pragma acc parallel loop copyin(x)"));
        assert_eq!(r.jaccard, 0.0);
        assert_eq!(classify(&r), Ok(ErrorCategory::MajorClause));
        let r = rec("d", "#pragma acc loop", Some("#pragma acc loop"));
        assert_eq!(classify(&r), Err(TaxonomyError::NotAnError("d".into())));
        let r = rec("e", "#pragma acc loop", None);
        assert_eq!(classify(&r), Ok(ErrorCategory::DirectiveChoice));
    }

    #[test]
    fn half_is_minor() {
        assert_eq!(category_for(true, 0.5), ErrorCategory::MinorClause);
        assert_eq!(category_for(true, 0.4999), ErrorCategory::MajorClause);
        // {gang, vector} vs {gang}: intersection 1, union 2.
        let r = rec("x", "#pragma acc loop gang vector", Some("#pragma acc loop gang"));
        assert_eq!(r.jaccard, 0.5);
        assert_eq!(classify(&r), Ok(ErrorCategory::MinorClause));
    }

    #[test]
    fn constructed_fixture_counts() {
        let records = vec![
            rec("1", "#pragma acc parallel loop", Some("#pragma acc kernels")),
            rec("2", "#pragma acc loop", None),
            rec("3", "#pragma acc loop gang vector", Some("#pragma acc loop vector gang")),
            rec("4", "#pragma acc loop gang", Some("#pragma acc loop worker")),
            rec("5", "#pragma acc loop gang vector", Some("#pragma acc loop gang")),
            rec("6", "#pragma acc loop gang vector worker", Some("#pragma acc loop gang vector")),
            rec("7", "#pragma acc loop", Some("#pragma acc loop")),
        ];
        let t = taxonomy_report(&records);
        assert_eq!(
            (t.non_exact, t.directive_choice, t.reordering, t.major, t.minor),
            (6, 2, 1, 1, 2)
        );
        assert!(t.identities_hold());
    }

    #[test]
    fn all_exact_is_empty() {
        let records = vec![rec("a", "#pragma acc loop", Some("#pragma acc loop"))];
        let t = taxonomy_report(&records);
        assert_eq!((t.non_exact, t.clause_errors), (0, 0));
        assert!(t.identities_hold());
        assert_eq!(t.pct_of_clause_errors(0), 0.0);
    }
}
