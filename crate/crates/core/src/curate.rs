//! Cleaning mined pairs: invalid-loop filtering, body deduplication,
//! complexity statistics and the stratified train/test split.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tree_sitter::Node;

use crate::extract::PragmaLoopPair;
use crate::pragma::{self, ComplexityBin, DirectiveType};
use crate::syntax::{self, LoopSnippet};

/// Name of the shuffle generator recorded alongside every split.
pub const SPLIT_RNG: &str = "chacha8";
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_RATIO: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurateError {
    #[error("cannot split an empty corpus")]
    EmptyCorpus,
    #[error("split ratio must be in (0, 1), got {0}")]
    InvalidRatio(f64),
    #[error("pair id {0} occurs more than once")]
    DuplicateId(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionReason {
    EmptyLoop,
    InfiniteLoopNoBody,
    BreakStatement,
    GotoStatement,
    ContinueStatement,
    ReturnStatement,
}

impl RejectionReason {
    pub const ALL: [RejectionReason; 6] = [
        RejectionReason::EmptyLoop,
        RejectionReason::InfiniteLoopNoBody,
        RejectionReason::BreakStatement,
        RejectionReason::GotoStatement,
        RejectionReason::ContinueStatement,
        RejectionReason::ReturnStatement,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RejectionReason::EmptyLoop => "empty_loop",
            RejectionReason::InfiniteLoopNoBody => "infinite_loop_no_body",
            RejectionReason::BreakStatement => "break_statement",
            RejectionReason::GotoStatement => "goto_statement",
            RejectionReason::ContinueStatement => "continue_statement",
            RejectionReason::ReturnStatement => "return_statement",
        }
    }
}

impl fmt::Display for RejectionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn is_empty_statement(node: Node<'_>) -> bool {
    match node.kind() {
        "expression_statement" => node.named_child_count() == 0,
        "compound_statement" => {
            let mut cursor = node.walk();
            node.named_children(&mut cursor)
                .all(|c| c.kind() == "comment" || is_empty_statement(c))
        }
        _ => false,
    }
}

/// Whether a `break` leaves a `switch` rather than a loop inside `body`.
fn break_targets_switch(brk: Node<'_>, body: Node<'_>) -> bool {
    let mut cur = brk.parent();
    while let Some(n) = cur {
        if n.id() == body.id() {
            return false;
        }
        if n.kind() == "switch_statement" {
            return true;
        }
        if syntax::is_loop(n.kind()) {
            return false;
        }
        cur = n.parent();
    }
    false
}

/// Rule that rejects the loop, checked in [`RejectionReason::ALL`] order.
///
/// A `for` with no condition is `infinite_loop_no_body` whatever its body;
/// `empty_loop` covers loops with a condition and a body that is missing or
/// holds only `;`/`{}`. Control-flow statements count at any depth, except
/// `break` inside a nested `switch`.
pub fn rejection_reason(pair: &PragmaLoopPair) -> Option<RejectionReason> {
    let snippet = LoopSnippet::parse(&pair.loop_text, pair.lang);
    let Some(for_node) = snippet.for_node() else {
        log::warn!("pair {} does not re-parse as a for loop; keeping it", pair.id);
        return None;
    };
    let body = for_node.child_by_field_name("body");
    let infinite =
        for_node.kind() == "for_statement" && for_node.child_by_field_name("condition").is_none();
    let empty = body.is_none_or(is_empty_statement);

    let mut found = [false; 6];
    if let Some(body) = body {
        syntax::walk(body, |n| match n.kind() {
            "break_statement" if !break_targets_switch(n, body) => found[2] = true,
            "goto_statement" => found[3] = true,
            "continue_statement" => found[4] = true,
            "return_statement" => found[5] = true,
            _ => {}
        });
    }
    found[0] = empty && !infinite;
    found[1] = infinite;
    RejectionReason::ALL
        .into_iter()
        .zip(found)
        .find_map(|(reason, hit)| hit.then_some(reason))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub pair: PragmaLoopPair,
    pub reason: RejectionReason,
}

/// One line of the rejection log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionLogEntry {
    pub id: String,
    pub file: String,
    pub reason: RejectionReason,
}

impl From<&Rejection> for RejectionLogEntry {
    fn from(r: &Rejection) -> Self {
        RejectionLogEntry {
            id: r.pair.id.clone(),
            file: r.pair.file.clone(),
            reason: r.reason,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterOutcome {
    pub kept: Vec<PragmaLoopPair>,
    pub rejected: Vec<Rejection>,
}

impl FilterOutcome {
    pub fn counts(&self) -> BTreeMap<RejectionReason, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.rejected {
            *counts.entry(r.reason).or_insert(0) += 1;
        }
        counts
    }
}

pub fn filter_pairs(pairs: Vec<PragmaLoopPair>) -> FilterOutcome {
    let verdicts: Vec<Option<RejectionReason>> = pairs.par_iter().map(rejection_reason).collect();
    let mut out = FilterOutcome::default();
    for (pair, verdict) in pairs.into_iter().zip(verdicts) {
        match verdict {
            Some(reason) => out.rejected.push(Rejection { pair, reason }),
            None => out.kept.push(pair),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedDuplicate {
    pub id: String,
    pub kept_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DedupOutcome {
    pub kept: Vec<PragmaLoopPair>,
    pub dropped: Vec<DroppedDuplicate>,
    /// Sizes of groups with more than one member, in first-occurrence order.
    pub group_sizes: Vec<usize>,
}

/// Keep the first pair for each byte-identical loop body.
pub fn deduplicate(pairs: Vec<PragmaLoopPair>) -> DedupOutcome {
    let mut first: HashMap<String, usize> = HashMap::new();
    let mut sizes: Vec<usize> = Vec::new();
    let mut out = DedupOutcome::default();
    for pair in pairs {
        match first.get(&pair.loop_body) {
            Some(&group) => {
                sizes[group] += 1;
                out.dropped.push(DroppedDuplicate {
                    id: pair.id,
                    kept_id: out.kept[group].id.clone(),
                });
            }
            None => {
                first.insert(pair.loop_body.clone(), out.kept.len());
                sizes.push(1);
                out.kept.push(pair);
            }
        }
    }
    out.group_sizes = sizes.into_iter().filter(|&s| s > 1).collect();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinSplit {
    pub size: usize,
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub ratio: f64,
    pub rng: String,
    pub assignments: BTreeMap<String, Part>,
    pub per_bin: BTreeMap<ComplexityBin, BinSplit>,
}

impl SplitAssignment {
    pub fn ids(&self, part: Part) -> impl Iterator<Item = &str> {
        self.assignments
            .iter()
            .filter(move |(_, p)| **p == part)
            .map(|(id, _)| id.as_str())
    }

    pub fn count(&self, part: Part) -> usize {
        self.ids(part).count()
    }
}

pub fn pair_bin(pair: &PragmaLoopPair) -> ComplexityBin {
    pragma::complexity_bin(pragma::complexity_score(&pair.pragma))
}

/// `x` with float noise around integers removed, so `0.7 * 10` is exactly 7.
fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < 1e-9 { r } else { x }
}

/// Per-bin train quotas: each bin gets `floor(ratio * size)` and the
/// remaining `round(ratio * N) - sum(floors)` slots go to the bins with the
/// largest fractional parts (ties to the simpler bin).
pub fn bin_quotas(sizes: &BTreeMap<ComplexityBin, usize>, ratio: f64) -> BTreeMap<ComplexityBin, usize> {
    let total: usize = sizes.values().sum();
    let target = snap(ratio * total as f64).round() as usize;
    let mut quotas = BTreeMap::new();
    let mut fractions = Vec::new();
    for (&bin, &size) in sizes {
        let exact = snap(ratio * size as f64);
        let floor = exact.floor() as usize;
        quotas.insert(bin, floor);
        fractions.push((exact - floor as f64, bin));
    }
    let assigned: usize = quotas.values().sum();
    let mut remaining = target.saturating_sub(assigned);
    fractions.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for (frac, bin) in fractions {
        if remaining == 0 {
            break;
        }
        if frac > 0.0 {
            *quotas.get_mut(&bin).unwrap() += 1;
            remaining -= 1;
        }
    }
    quotas
}

/// Stratified split over complexity bins.
///
/// Inside each bin the ids are sorted, shuffled with a ChaCha8 generator
/// seeded from `seed` (bins processed in order), and the first quota ids go to
/// train. The result does not depend on input order.
pub fn split(pairs: &[PragmaLoopPair], ratio: f64, seed: u64) -> Result<SplitAssignment, CurateError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(CurateError::InvalidRatio(ratio));
    }
    if pairs.is_empty() {
        return Err(CurateError::EmptyCorpus);
    }
    let mut bins: BTreeMap<ComplexityBin, Vec<&str>> = BTreeMap::new();
    let mut seen = std::collections::HashSet::new();
    for p in pairs {
        if !seen.insert(p.id.as_str()) {
            return Err(CurateError::DuplicateId(p.id.clone()));
        }
        bins.entry(pair_bin(p)).or_default().push(p.id.as_str());
    }
    let sizes = bins.iter().map(|(b, ids)| (*b, ids.len())).collect();
    let quotas = bin_quotas(&sizes, ratio);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = BTreeMap::new();
    let mut per_bin = BTreeMap::new();
    for (bin, mut ids) in bins {
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        let quota = quotas[&bin];
        for (i, id) in ids.iter().enumerate() {
            let part = if i < quota { Part::Train } else { Part::Test };
            assignments.insert(id.to_string(), part);
        }
        per_bin.insert(
            bin,
            BinSplit {
                size: ids.len(),
                train: quota,
                test: ids.len() - quota,
            },
        );
    }
    Ok(SplitAssignment {
        seed,
        ratio,
        rng: SPLIT_RNG.to_string(),
        assignments,
        per_bin,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total: usize,
    pub directive_types: BTreeMap<DirectiveType, usize>,
    pub complexity_bins: BTreeMap<ComplexityBin, usize>,
}

pub fn corpus_stats(pairs: &[PragmaLoopPair]) -> CorpusStats {
    let mut directive_types: BTreeMap<_, _> = DirectiveType::ALL.iter().map(|d| (*d, 0)).collect();
    let mut complexity_bins: BTreeMap<_, _> = ComplexityBin::ALL.iter().map(|b| (*b, 0)).collect();
    for p in pairs {
        *directive_types
            .get_mut(&pragma::directive_type(&p.pragma))
            .unwrap() += 1;
        *complexity_bins.get_mut(&pair_bin(p)).unwrap() += 1;
    }
    CorpusStats {
        total: pairs.len(),
        directive_types,
        complexity_bins,
    }
}
