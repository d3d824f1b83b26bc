//! OpenACC pragma lines: normalization, parsing, directive classification and
//! complexity scoring.
//!
//! Every other module goes through [`parse_pragma`] to interpret pragma text, so
//! the canonical form produced by [`normalize_pragma`] is what exact-match
//! comparison, deduplication and dataset labels all see.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Prefix every canonical OpenACC pragma starts with.
pub const ACC_PREFIX: &str = "#pragma acc";

/// Keywords that count as directive words while they precede the first clause.
pub const DIRECTIVE_VOCABULARY: [&str; 14] = [
    "parallel", "kernels", "serial", "loop", "data", "enter", "exit", "wait", "atomic", "routine",
    "update", "host_data", "declare", "cache",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PragmaError {
    #[error("not an OpenACC pragma: {0:?}")]
    NotAnAccPragma(String),
    #[error("unbalanced parentheses in pragma: {0:?}")]
    UnbalancedParentheses(String),
    #[error("pragma has no directive keyword: {0:?}")]
    MissingDirective(String),
}

/// One `#pragma` source line as it was found in a file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPragma {
    pub text: String,
    pub file: String,
    pub line: usize,
}

impl RawPragma {
    /// Continuation lines are joined with a single space so the text stays on one line.
    pub fn new(text: &str, file: impl Into<String>, line: usize) -> Self {
        let text = text
            .replace("\\\r\n", " ")
            .replace("\\\n", " ")
            .replace(['\r', '\n'], " ");
        RawPragma {
            text,
            file: file.into(),
            line: line.max(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Clause {
    pub name: String,
    pub args: String,
    pub canonical: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pragma {
    pub directives: Vec<String>,
    /// Parenthesized argument of the leading directive, e.g. `1` in `wait(1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directive_args: Option<String>,
    pub clauses: Vec<Clause>,
    pub canonical: String,
}

impl fmt::Display for Pragma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectiveType {
    Loop,
    Parallel,
    Kernels,
    Serial,
    Data,
    Enter,
    Exit,
    Wait,
    Unknown,
}

impl DirectiveType {
    /// Table order used by the corpus statistics.
    pub const ALL: [DirectiveType; 9] = [
        DirectiveType::Loop,
        DirectiveType::Parallel,
        DirectiveType::Kernels,
        DirectiveType::Serial,
        DirectiveType::Unknown,
        DirectiveType::Enter,
        DirectiveType::Data,
        DirectiveType::Exit,
        DirectiveType::Wait,
    ];

    pub fn from_keyword(keyword: &str) -> Self {
        match keyword {
            "loop" => DirectiveType::Loop,
            "parallel" => DirectiveType::Parallel,
            "kernels" => DirectiveType::Kernels,
            "serial" => DirectiveType::Serial,
            "data" => DirectiveType::Data,
            "enter" => DirectiveType::Enter,
            "exit" => DirectiveType::Exit,
            "wait" => DirectiveType::Wait,
            _ => DirectiveType::Unknown,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DirectiveType::Loop => "loop",
            DirectiveType::Parallel => "parallel",
            DirectiveType::Kernels => "kernels",
            DirectiveType::Serial => "serial",
            DirectiveType::Data => "data",
            DirectiveType::Enter => "enter",
            DirectiveType::Exit => "exit",
            DirectiveType::Wait => "wait",
            DirectiveType::Unknown => "unknown",
        }
    }
}

impl fmt::Display for DirectiveType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplexityBin {
    Simple,
    Medium,
    Complex,
    VeryComplex,
}

impl ComplexityBin {
    pub const ALL: [ComplexityBin; 4] = [
        ComplexityBin::Simple,
        ComplexityBin::Medium,
        ComplexityBin::Complex,
        ComplexityBin::VeryComplex,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ComplexityBin::Simple => "simple",
            ComplexityBin::Medium => "medium",
            ComplexityBin::Complex => "complex",
            ComplexityBin::VeryComplex => "very_complex",
        }
    }

    /// Row label with the score range, e.g. `simple (0-2)`.
    pub fn label(self) -> &'static str {
        match self {
            ComplexityBin::Simple => "simple (0-2)",
            ComplexityBin::Medium => "medium (3-5)",
            ComplexityBin::Complex => "complex (6-10)",
            ComplexityBin::VeryComplex => "very complex (11+)",
        }
    }
}

impl fmt::Display for ComplexityBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn is_tight(c: char) -> bool {
    matches!(c, '(' | ')' | '[' | ']' | ':' | ',')
}

/// Canonical whitespace form of a pragma line.
///
/// Whitespace runs collapse to one space. Inside parenthesized or bracketed
/// argument text, spaces touching `( ) [ ] : ,` are dropped. Case is untouched.
pub fn normalize_pragma(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
    let chars: Vec<char> = collapsed.chars().collect();
    let mut out = String::with_capacity(collapsed.len());
    let mut depth: usize = 0;
    for (i, &c) in chars.iter().enumerate() {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => depth = depth.saturating_sub(1),
            ' ' if depth > 0 => {
                let prev = out.chars().last();
                let next = chars.get(i + 1).copied();
                if prev.is_some_and(is_tight) || next.is_some_and(is_tight) {
                    continue;
                }
            }
            _ => {}
        }
        out.push(c);
    }
    out
}

/// True when `normalized` is `#pragma acc` alone or followed by a space.
pub fn is_acc_pragma(normalized: &str) -> bool {
    match normalized.strip_prefix(ACC_PREFIX) {
        Some(rest) => rest.is_empty() || rest.starts_with(' '),
        None => false,
    }
}

fn check_balanced(text: &str) -> bool {
    let mut stack = Vec::new();
    for c in text.chars() {
        match c {
            '(' | '[' => stack.push(c),
            ')' => {
                if stack.pop() != Some('(') {
                    return false;
                }
            }
            ']'
                if stack.pop() != Some('[') => {
                    return false;
                }
            _ => {}
        }
    }
    stack.is_empty()
}

/// Splits the body after `#pragma acc` at top-level spaces and commas, gluing
/// a token that starts with `(` onto the one before it (`present (a)`).
fn tokenize(body: &str) -> Vec<String> {
    let mut raw = Vec::new();
    let mut current = String::new();
    let mut depth: usize = 0;
    for c in body.chars() {
        match c {
            '(' | '[' => {
                depth += 1;
                current.push(c);
            }
            ')' | ']' => {
                depth = depth.saturating_sub(1);
                current.push(c);
            }
            ' ' | ',' if depth == 0 => {
                if !current.is_empty() {
                    raw.push(std::mem::take(&mut current));
                }
            }
            _ => current.push(c),
        }
    }
    if !current.is_empty() {
        raw.push(current);
    }

    let mut tokens: Vec<String> = Vec::with_capacity(raw.len());
    for tok in raw {
        match tokens.last_mut() {
            Some(prev) if tok.starts_with('(') => prev.push_str(&tok),
            _ => tokens.push(tok),
        }
    }
    tokens
}

/// (lowercased name, text inside the first parenthesis group, rest after the name)
fn split_token(token: &str) -> (String, Option<String>, &str) {
    let Some(open) = token.find('(') else {
        return (token.to_lowercase(), None, "");
    };
    let name = token[..open].to_lowercase();
    let mut depth = 0usize;
    let mut close = token.len();
    for (i, c) in token[open..].char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    close = open + i;
                    break;
                }
            }
            _ => {}
        }
    }
    let args = token[open + 1..close].to_string();
    (name, Some(args), &token[open..])
}

/// Parse one pragma line into directive keywords and clauses.
///
/// The first token is always a directive. Following tokens stay directives
/// while they are bare words from [`DIRECTIVE_VOCABULARY`] and no clause has
/// been seen yet; `wait` past the first position is the clause form.
pub fn parse_pragma(text: &str) -> Result<Pragma, PragmaError> {
    let canonical = normalize_pragma(text);
    if !is_acc_pragma(&canonical) {
        return Err(PragmaError::NotAnAccPragma(canonical));
    }
    if !check_balanced(&canonical) {
        return Err(PragmaError::UnbalancedParentheses(canonical));
    }
    let body = canonical[ACC_PREFIX.len()..].trim_start();
    let tokens = tokenize(body);

    let mut directives = Vec::new();
    let mut directive_args = None;
    let mut clauses = Vec::new();
    for (i, token) in tokens.iter().enumerate() {
        let (name, args, rest) = split_token(token);
        if name.is_empty() {
            return Err(PragmaError::MissingDirective(canonical));
        }
        if i == 0 {
            directive_args = args;
            directives.push(name);
            continue;
        }
        let directive_word = args.is_none()
            && clauses.is_empty()
            && directive_args.is_none()
            && name != "wait"
            && DIRECTIVE_VOCABULARY.contains(&name.as_str());
        if directive_word {
            directives.push(name);
        } else {
            let canonical = format!("{name}{rest}");
            clauses.push(Clause {
                name,
                args: args.unwrap_or_default(),
                canonical,
            });
        }
    }
    if directives.is_empty() {
        return Err(PragmaError::MissingDirective(canonical));
    }
    Ok(Pragma {
        directives,
        directive_args,
        clauses,
        canonical,
    })
}

/// Category of the first directive keyword.
pub fn directive_type(p: &Pragma) -> DirectiveType {
    p.directives
        .first()
        .map(|k| DirectiveType::from_keyword(k))
        .unwrap_or(DirectiveType::Unknown)
}

/// Number of directive keywords plus number of clauses.
pub fn complexity_score(p: &Pragma) -> usize {
    p.directives.len() + p.clauses.len()
}

pub fn complexity_bin(score: usize) -> ComplexityBin {
    match score {
        0..=2 => ComplexityBin::Simple,
        3..=5 => ComplexityBin::Medium,
        6..=10 => ComplexityBin::Complex,
        _ => ComplexityBin::VeryComplex,
    }
}

pub fn clause_set(p: &Pragma) -> BTreeSet<String> {
    p.clauses.iter().map(|c| c.canonical.clone()).collect()
}
