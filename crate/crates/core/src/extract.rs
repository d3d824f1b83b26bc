//! Pairing `#pragma acc` lines with the `for` loop that immediately follows them.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tree_sitter::{Node, Tree};

use crate::ingest::SourceFile;
use crate::pragma::{self, Pragma, PragmaError, RawPragma};
use crate::syntax::{self, Lang};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("no C/C++ grammar for {0}")]
    GrammarUnavailable(String),
}

pub struct SyntaxTree {
    pub tree: Tree,
    pub lang: Lang,
}

impl SyntaxTree {
    pub fn has_errors(&self) -> bool {
        self.tree.root_node().has_error()
    }
}

/// Grammar is picked from the file extension. Syntax errors stay in the tree
/// as error nodes.
pub fn parse_source(f: &SourceFile) -> Result<SyntaxTree, ExtractError> {
    let lang = f
        .extension()
        .and_then(Lang::from_extension)
        .ok_or_else(|| ExtractError::GrammarUnavailable(f.display_path()))?;
    Ok(SyntaxTree {
        tree: syntax::parse(&f.text, lang),
        lang,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PragmaLoopPair {
    pub id: String,
    pub pragma: Pragma,
    pub loop_text: String,
    pub loop_body: String,
    pub file: String,
    pub lang: Lang,
    pub pragma_line: usize,
    pub loop_line: usize,
    pub loop_span: (usize, usize),
    /// Another `acc` pragma sits directly above this one.
    #[serde(default)]
    pub stacked: bool,
}

/// First 16 hex digits of SHA-256 over the canonical pragma and the loop text.
pub fn pair_id(canonical_pragma: &str, loop_text: &str) -> String {
    let mut h = Sha256::new();
    h.update(canonical_pragma.as_bytes());
    h.update(b"\n");
    h.update(loop_text.as_bytes());
    hex::encode(h.finalize())[..16].to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    /// The next statement is not a `for` loop (or there is none).
    NoAdjacentFor,
    /// An outer pragma in a chain of `acc` pragmas above one loop.
    Stacked,
    NotAnAccPragma,
    UnbalancedParentheses,
}

impl SkipReason {
    pub fn as_str(self) -> &'static str {
        match self {
            SkipReason::NoAdjacentFor => "no_adjacent_for",
            SkipReason::Stacked => "stacked",
            SkipReason::NotAnAccPragma => "not_an_acc_pragma",
            SkipReason::UnbalancedParentheses => "unbalanced_parentheses",
        }
    }
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FileExtraction {
    pub pairs: Vec<PragmaLoopPair>,
    pub skipped: BTreeMap<SkipReason, usize>,
    /// `#pragma acc` lines found in pragma nodes.
    pub pragma_instances: usize,
}

struct PragmaSite<'t> {
    node: Node<'t>,
    normalized: String,
    raw: RawPragma,
}

fn strip_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    loop {
        let line = rest.find("//");
        let block = rest.find("/*");
        match (line, block) {
            (Some(l), b) if b.is_none_or(|b| l < b) => {
                out.push_str(&rest[..l]);
                match rest[l..].find('\n') {
                    Some(nl) => rest = &rest[l + nl..],
                    None => return out,
                }
            }
            (_, Some(b)) => {
                out.push_str(&rest[..b]);
                out.push(' ');
                match rest[b + 2..].find("*/") {
                    Some(end) => rest = &rest[b + 2 + end + 2..],
                    None => return out,
                }
            }
            _ => {
                out.push_str(rest);
                return out;
            }
        }
    }
}

/// Reconstructs a `#pragma ...` line from a `preproc_call` node; `None` for
/// other preprocessor calls.
fn pragma_site<'t>(node: Node<'t>, src: &str, file: &str) -> Option<PragmaSite<'t>> {
    if node.kind() != "preproc_call" {
        return None;
    }
    let directive = node.child_by_field_name("directive")?;
    let directive: String = syntax::node_text(directive, src)
        .chars()
        .filter(|c| !c.is_whitespace())
        .collect();
    if directive != "#pragma" {
        return None;
    }
    let arg = node
        .child_by_field_name("argument")
        .map(|a| syntax::node_text(a, src))
        .unwrap_or("");
    let raw = RawPragma::new(
        &format!("#pragma {}", strip_comments(arg)),
        file,
        node.start_position().row + 1,
    );
    let normalized = pragma::normalize_pragma(&raw.text);
    Some(PragmaSite {
        node,
        normalized,
        raw,
    })
}

fn is_acc_site(node: Node<'_>, src: &str) -> Option<bool> {
    pragma_site(node, src, "").map(|s| pragma::is_acc_pragma(&s.normalized))
}

fn loop_body(node: Node<'_>, src: &str) -> String {
    let Some(body) = node.child_by_field_name("body") else {
        return String::new();
    };
    let text = syntax::node_text(body, src);
    if body.kind() == "compound_statement" {
        let inner = text.strip_prefix('{').unwrap_or(text);
        inner.strip_suffix('}').unwrap_or(inner).to_string()
    } else {
        text.to_string()
    }
}

enum Target<'t> {
    For(Node<'t>),
    /// The chain reaches another `acc` pragma before any statement.
    Chained,
    Other,
}

fn following_target<'t>(site: Node<'t>, src: &str) -> Target<'t> {
    let mut next = site.next_named_sibling();
    while let Some(n) = next {
        match n.kind() {
            "comment" => {}
            _ => match is_acc_site(n, src) {
                Some(true) => return Target::Chained,
                Some(false) => {}
                None if syntax::is_for(n.kind()) => return Target::For(n),
                None => return Target::Other,
            },
        }
        next = n.next_named_sibling();
    }
    Target::Other
}

fn has_acc_pragma_above(site: Node<'_>, src: &str) -> bool {
    let mut prev = site.prev_named_sibling();
    while let Some(n) = prev {
        match n.kind() {
            "comment" => {}
            _ => match is_acc_site(n, src) {
                Some(true) => return true,
                Some(false) => {}
                None => return false,
            },
        }
        prev = n.prev_named_sibling();
    }
    false
}

/// Emits one pair per `acc` pragma whose next non-comment, non-pragma sibling
/// is a `for` statement.
///
/// In a chain of `acc` pragmas above one loop only the nearest is paired (and
/// flagged `stacked`); the outer ones are counted under [`SkipReason::Stacked`].
pub fn extract_pairs(tree: &SyntaxTree, f: &SourceFile) -> FileExtraction {
    let src = f.text.as_str();
    let file = f.display_path();
    let mut sites = Vec::new();
    syntax::walk(tree.tree.root_node(), |n| {
        if let Some(site) = pragma_site(n, src, &file)
            && pragma::is_acc_pragma(&site.normalized) {
                sites.push(site);
            }
    });

    let mut out = FileExtraction {
        pragma_instances: sites.len(),
        ..FileExtraction::default()
    };
    let mut skip = |reason: SkipReason| *out.skipped.entry(reason).or_insert(0) += 1;

    for site in sites {
        let loop_node = match following_target(site.node, src) {
            Target::For(n) => n,
            Target::Chained => {
                skip(SkipReason::Stacked);
                continue;
            }
            Target::Other => {
                skip(SkipReason::NoAdjacentFor);
                continue;
            }
        };
        let parsed = match pragma::parse_pragma(&site.raw.text) {
            Ok(p) => p,
            Err(PragmaError::UnbalancedParentheses(_)) => {
                skip(SkipReason::UnbalancedParentheses);
                continue;
            }
            Err(_) => {
                skip(SkipReason::NotAnAccPragma);
                continue;
            }
        };
        let loop_text = syntax::node_text(loop_node, src).to_string();
        out.pairs.push(PragmaLoopPair {
            id: pair_id(&parsed.canonical, &loop_text),
            loop_body: loop_body(loop_node, src),
            loop_text,
            file: file.clone(),
            lang: tree.lang,
            pragma_line: site.raw.line,
            loop_line: loop_node.start_position().row + 1,
            loop_span: (loop_node.start_byte(), loop_node.end_byte()),
            stacked: has_acc_pragma_above(site.node, src),
            pragma: parsed,
        });
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionTotals {
    pub files: usize,
    pub unsupported_files: usize,
    pub pragma_instances: usize,
    pub pairs: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub pairs: Vec<PragmaLoopPair>,
    pub skipped: BTreeMap<SkipReason, usize>,
    pub totals: ExtractionTotals,
}

/// Extract every file (in parallel) and merge results in input order.
pub fn corpus_extract(files: &[SourceFile]) -> ExtractionReport {
    let per_file: Vec<Option<FileExtraction>> = files
        .par_iter()
        .map(|f| match parse_source(f) {
            Ok(tree) => Some(extract_pairs(&tree, f)),
            Err(e) => {
                log::warn!("{e}");
                None
            }
        })
        .collect();

    let mut report = ExtractionReport::default();
    report.totals.files = files.len();
    for fx in per_file {
        let Some(fx) = fx else {
            report.totals.unsupported_files += 1;
            continue;
        };
        report.totals.pragma_instances += fx.pragma_instances;
        for (reason, n) in fx.skipped {
            *report.skipped.entry(reason).or_insert(0) += n;
            report.totals.skipped += n;
        }
        report.pairs.extend(fx.pairs);
    }
    report.totals.pairs = report.pairs.len();
    report
}
