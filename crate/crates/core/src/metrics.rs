//! Per-record and corpus-level scores for generated pragmas.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetRecord, GenerationRecord};
use crate::pragma::{self, DirectiveType, Pragma};

/// Predicted class for generations with no usable pragma.
pub const NONE_CLASS: &str = "none";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no records to evaluate")]
    EmptyInput,
    #[error("generation {0} has no matching reference")]
    UnknownId(String),
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("reference {id} is not a usable pragma: {reason}")]
    InvalidReference { id: String, reason: String },
}

pub fn exact_match(reference: &Pragma, generated: &Pragma) -> bool {
    reference.canonical == generated.canonical
}

/// Unit-cost Levenshtein distance over Unicode scalar values.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - distance / max(len)`, with two empty strings scoring 1.
pub fn levenshtein_similarity(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - edit_distance(a, b) as f64 / longest as f64
}

/// Intersection over union of the clause sets; 1 when both are empty.
pub fn clause_jaccard(reference: &Pragma, generated: &Pragma) -> f64 {
    let r = pragma::clause_set(reference);
    let g = pragma::clause_set(generated);
    let union = r.union(&g).count();
    if union == 0 {
        return 1.0;
    }
    r.intersection(&g).count() as f64 / union as f64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Generated {
    Parsed { pragma: Pragma },
    /// A pragma line was found but it does not parse.
    Unparseable { text: String },
    ExtractionFailed,
}

impl Generated {
    pub fn from_record(g: &GenerationRecord) -> Generated {
        match &g.extracted_pragma {
            None => Generated::ExtractionFailed,
            Some(text) => match pragma::parse_pragma(text) {
                Ok(pragma) => Generated::Parsed { pragma },
                Err(_) => Generated::Unparseable {
                    text: pragma::normalize_pragma(text),
                },
            },
        }
    }

    pub fn pragma(&self) -> Option<&Pragma> {
        match self {
            Generated::Parsed { pragma } => Some(pragma),
            _ => None,
        }
    }

    /// Pragma line to splice into an MCU, if any.
    pub fn line(&self) -> Option<&str> {
        match self {
            Generated::Parsed { pragma } => Some(&pragma.canonical),
            Generated::Unparseable { text } => Some(text),
            Generated::ExtractionFailed => None,
        }
    }

    pub fn is_extraction_failure(&self) -> bool {
        matches!(self, Generated::ExtractionFailed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub reference: Pragma,
    pub generated: Generated,
    pub exact_match: bool,
    pub levenshtein_sim: f64,
    pub directive_match: bool,
    pub jaccard: f64,
    pub reference_type: DirectiveType,
    pub predicted_type: Option<DirectiveType>,
}

impl EvalRecord {
    pub fn new(id: impl Into<String>, reference: Pragma, generated: Generated) -> EvalRecord {
        let reference_type = pragma::directive_type(&reference);
        let (exact, lev, predicted, jaccard) = match &generated {
            Generated::Parsed { pragma: g } => (
                exact_match(&reference, g),
                levenshtein_similarity(&reference.canonical, &g.canonical),
                Some(pragma::directive_type(g)),
                clause_jaccard(&reference, g),
            ),
            Generated::Unparseable { text } => (
                false,
                levenshtein_similarity(&reference.canonical, text),
                None,
                0.0,
            ),
            Generated::ExtractionFailed => (false, 0.0, None, 0.0),
        };
        EvalRecord {
            id: id.into(),
            directive_match: predicted == Some(reference_type),
            reference,
            generated,
            exact_match: exact,
            levenshtein_sim: lev,
            jaccard,
            reference_type,
            predicted_type: predicted,
        }
    }

    pub fn predicted_class(&self) -> String {
        self.predicted_type
            .map(|t| t.as_str().to_string())
            .unwrap_or_else(|| NONE_CLASS.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Occurrences in the gold labels.
    pub support: usize,
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrfReport {
    pub per_class: Vec<ClassScores>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 { 0.0 } else { num as f64 / den as f64 }
}

/// One-vs-rest precision/recall/F1 per class, macro-averaged over the
/// classes that occur in the gold labels.
pub fn macro_prf<L: Ord + Clone + ToString>(gold_pred: &[(L, L)]) -> Result<PrfReport, MetricsError> {
    if gold_pred.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut tp: BTreeMap<L, usize> = BTreeMap::new();
    let mut gold: BTreeMap<L, usize> = BTreeMap::new();
    let mut pred: BTreeMap<L, usize> = BTreeMap::new();
    for (g, p) in gold_pred {
        *gold.entry(g.clone()).or_insert(0) += 1;
        *pred.entry(p.clone()).or_insert(0) += 1;
        if g == p {
            *tp.entry(g.clone()).or_insert(0) += 1;
        }
    }
    let classes: BTreeSet<&L> = gold.keys().chain(pred.keys()).collect();
    let mut per_class = Vec::with_capacity(classes.len());
    let (mut sp, mut sr, mut sf) = (0.0, 0.0, 0.0);
    for class in classes {
        let t = tp.get(class).copied().unwrap_or(0);
        let support = gold.get(class).copied().unwrap_or(0);
        let predicted = pred.get(class).copied().unwrap_or(0);
        let precision = ratio(t, predicted);
        let recall = ratio(t, support);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        if support > 0 {
            sp += precision;
            sr += recall;
            sf += f1;
        }
        per_class.push(ClassScores {
            class: class.to_string(),
            precision,
            recall,
            f1,
            support,
            predicted,
        });
    }
    let k = gold.len() as f64;
    Ok(PrfReport {
        per_class,
        macro_precision: sp / k,
        macro_recall: sr / k,
        macro_f1: sf / k,
    })
}

/// Directive-type P/R/F1 with failed or unparseable generations predicting
/// the reserved `none` class.
pub fn directive_prf(records: &[EvalRecord]) -> Result<PrfReport, MetricsError> {
    let labels: Vec<(String, String)> = records
        .iter()
        .map(|r| (r.reference_type.as_str().to_string(), r.predicted_class()))
        .collect();
    macro_prf(&labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub exact_match_rate: f64,
    pub mean_levenshtein: f64,
    pub directive_accuracy: f64,
    /// Directive accuracy over records where a pragma was extracted.
    pub directive_accuracy_excluding_failures: Option<f64>,
    pub mean_jaccard: f64,
    pub extraction_failure_rate: f64,
    pub prf: PrfReport,
    /// Reference ids with no generation; not part of any aggregate.
    pub missing_generations: Vec<String>,
    pub records: Vec<EvalRecord>,
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    if n == 0 { 0.0 } else { values.sum::<f64>() / n as f64 }
}

pub fn aggregate(mut records: Vec<EvalRecord>, missing: Vec<String>) -> Result<EvalReport, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));
    let n = records.len();
    let rate = |f: &dyn Fn(&EvalRecord) -> bool| records.iter().filter(|r| f(r)).count() as f64 / n as f64;
    let extracted: Vec<&EvalRecord> = records
        .iter()
        .filter(|r| !r.generated.is_extraction_failure())
        .collect();
    let excl = (!extracted.is_empty()).then(|| {
        extracted.iter().filter(|r| r.directive_match).count() as f64 / extracted.len() as f64
    });
    Ok(EvalReport {
        n,
        exact_match_rate: rate(&|r| r.exact_match),
        mean_levenshtein: mean(records.iter().map(|r| r.levenshtein_sim), n),
        directive_accuracy: rate(&|r| r.directive_match),
        directive_accuracy_excluding_failures: excl,
        mean_jaccard: mean(records.iter().map(|r| r.jaccard), n),
        extraction_failure_rate: rate(&|r| r.generated.is_extraction_failure()),
        prf: directive_prf(&records)?,
        missing_generations: missing,
        records,
    })
}

/// Score every generation against the test record with the same id.
pub fn evaluate_corpus(
    refs: &[DatasetRecord],
    gens: &[GenerationRecord],
) -> Result<EvalReport, MetricsError> {
    let mut by_id: BTreeMap<&str, &DatasetRecord> = BTreeMap::new();
    for r in refs {
        if by_id.insert(r.id.as_str(), r).is_some() {
            return Err(MetricsError::DuplicateId(r.id.clone()));
        }
    }
    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(gens.len());
    for g in gens {
        if !seen.insert(g.id.as_str()) {
            return Err(MetricsError::DuplicateId(g.id.clone()));
        }
        let r = by_id
            .get(g.id.as_str())
            .ok_or_else(|| MetricsError::UnknownId(g.id.clone()))?;
        let label = r.assistant_content().ok_or_else(|| MetricsError::InvalidReference {
            id: r.id.clone(),
            reason: "no assistant message".into(),
        })?;
        let reference = pragma::parse_pragma(label).map_err(|e| MetricsError::InvalidReference {
            id: r.id.clone(),
            reason: e.to_string(),
        })?;
        records.push(EvalRecord::new(g.id.clone(), reference, Generated::from_record(g)));
    }
    let missing = by_id
        .keys()
        .filter(|id| !seen.contains(*id))
        .map(|s| s.to_string())
        .collect();
    aggregate(records, missing)
}
