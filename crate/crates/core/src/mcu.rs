//! Minimal compilable units: instantiation, synthesis and the gated compile matrix.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tree_sitter::Node;

use crate::dataset::TARGET_MARKER;
use crate::extract::PragmaLoopPair;
use crate::metrics::Generated;
use crate::pragma::Pragma;
use crate::syntax::{self, Lang, LoopSnippet};

/// Extent of every synthesized array dimension.
pub const ARRAY_EXTENT: usize = 1000;
const SIZE_CONST: &str = "ACCMINE_N";
const KERNEL_NAME: &str = "accmine_kernel";

#[derive(Debug, Error)]
pub enum McuError {
    #[error("MCU {0} has no {TARGET_MARKER} line")]
    MarkerMissing(String),
    #[error("MCU {id} has {count} {TARGET_MARKER} markers")]
    MarkerDuplicated { id: String, count: usize },
    #[error("compiler not found: {0}")]
    CompilerNotFound(String),
    #[error("invalid compiler config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> McuError + '_ {
    move |source| McuError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McuOrigin {
    Imported,
    Synthesized,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mcu {
    pub id: String,
    pub source: String,
    pub lang: Lang,
    pub origin: McuOrigin,
    /// Identifiers whose role synthesis could not infer.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unresolved: Vec<String>,
}

impl Mcu {
    pub fn new(id: impl Into<String>, source: impl Into<String>, lang: Lang, origin: McuOrigin) -> Result<Mcu, McuError> {
        let mcu = Mcu {
            id: id.into(),
            source: source.into(),
            lang,
            origin,
            unresolved: Vec::new(),
        };
        marker_line(&mcu)?;
        Ok(mcu)
    }

    pub fn is_complete(&self) -> bool {
        self.unresolved.is_empty()
    }
}

/// Byte range of the single line holding the marker, newline excluded.
fn marker_line(mcu: &Mcu) -> Result<(usize, usize), McuError> {
    let count = mcu.source.matches(TARGET_MARKER).count();
    match count {
        0 => return Err(McuError::MarkerMissing(mcu.id.clone())),
        1 => {}
        _ => {
            return Err(McuError::MarkerDuplicated {
                id: mcu.id.clone(),
                count,
            })
        }
    }
    let at = mcu.source.find(TARGET_MARKER).unwrap();
    let start = mcu.source[..at].rfind('\n').map_or(0, |i| i + 1);
    let end = mcu.source[at..].find('\n').map_or(mcu.source.len(), |i| at + i);
    Ok((start, end))
}

/// Replace the marker line with `pragma` (keeping its indentation) or drop it.
pub fn instantiate(mcu: &Mcu, pragma: Option<&str>) -> Result<String, McuError> {
    let (start, end) = marker_line(mcu)?;
    let src = &mcu.source;
    let mut out = String::with_capacity(src.len() + 64);
    out.push_str(&src[..start]);
    match pragma {
        Some(p) => {
            let line = &src[start..end];
            let indent = &line[..line.len() - line.trim_start().len()];
            out.push_str(indent);
            out.push_str(p);
            out.push_str(&src[end..]);
        }
        None => {
            let rest = &src[end..];
            out.push_str(rest.strip_prefix('\n').unwrap_or(rest));
        }
    }
    Ok(out)
}

/// Read `<id>.c` / `<id>.cpp` files from an import directory.
pub fn load_mcus(dir: &Path) -> Result<Vec<Mcu>, McuError> {
    let mut mcus = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let (Some(stem), Some(lang)) = (
            path.file_stem().and_then(|s| s.to_str()),
            path.extension().and_then(|e| e.to_str()).and_then(|e| match e {
                "c" => Some(Lang::C),
                "cpp" => Some(Lang::Cpp),
                _ => None,
            }),
        ) else {
            continue;
        };
        let source = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        mcus.push(Mcu::new(stem, source, lang, McuOrigin::Imported)?);
    }
    mcus.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(mcus)
}

/// Imported MCUs win; every other pair gets a synthesized one.
pub fn resolve_mcus(pairs: &[PragmaLoopPair], imported: Vec<Mcu>) -> Vec<Mcu> {
    let mut by_id: BTreeMap<String, Mcu> = imported.into_iter().map(|m| (m.id.clone(), m)).collect();
    for p in pairs {
        by_id.entry(p.id.clone()).or_insert_with(|| synthesize_mcu(p));
    }
    let wanted: std::collections::HashSet<&str> = pairs.iter().map(|p| p.id.as_str()).collect();
    by_id.into_values().filter(|m| wanted.contains(m.id.as_str())).collect()
}

// ---------------------------------------------------------------- synthesis

const KNOWN_FUNCTIONS: &[&str] = &[
    "abs", "acos", "asin", "atan", "atan2", "cbrt", "ceil", "cos", "cosf", "cosh", "erf", "exp",
    "exp2", "expf", "fabs", "fabsf", "floor", "floorf", "fma", "fmax", "fmaxf", "fmin", "fminf",
    "fmod", "hypot", "labs", "log", "log10", "log2", "logf", "pow", "powf", "printf", "round",
    "sin", "sinf", "sinh", "sqrt", "sqrtf", "tan", "tanf", "tanh", "trunc",
];

const KNOWN_CONSTANTS: &[&str] = &[
    "DBL_EPSILON", "DBL_MAX", "DBL_MIN", "FLT_EPSILON", "FLT_MAX", "FLT_MIN", "HUGE_VAL",
    "INFINITY", "INT_MAX", "INT_MIN", "M_PI", "NAN", "NULL", "RAND_MAX",
];

const HEADERS: &[&str] = &["float.h", "limits.h", "math.h", "stdio.h", "stdlib.h"];

/// Node kinds the heuristics do not model.
const OPAQUE_KINDS: &[&str] = &[
    "field_expression",
    "qualified_identifier",
    "template_function",
    "type_identifier",
    "lambda_expression",
    "new_expression",
    "for_range_loop",
];

const INT_OPERATORS: &[&str] = &["%", "<<", ">>", "&", "|", "^"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    Int,
    Double,
}

#[derive(Debug, Default, Clone)]
struct Usage {
    dims: Option<usize>,
    int_ctx: bool,
    unresolved: bool,
}

impl Usage {
    fn scalar(&self) -> Scalar {
        if self.int_ctx { Scalar::Int } else { Scalar::Double }
    }

    fn set_dims(&mut self, d: usize) {
        match self.dims {
            Some(prev) if prev != d => self.unresolved = true,
            _ => self.dims = Some(d),
        }
    }
}

fn is_field<'t>(parent: Node<'t>, field: &str, child: Node<'t>) -> bool {
    parent.child_by_field_name(field).is_some_and(|f| f.id() == child.id())
}

/// Outermost subscript chain whose innermost argument is `ident`, with its depth.
fn subscript_chain<'t>(ident: Node<'t>) -> (Node<'t>, usize) {
    let mut top = ident;
    let mut dims = 0;
    while let Some(p) = top.parent() {
        if p.kind() == "subscript_expression" && is_field(p, "argument", top) {
            dims += 1;
            top = p;
        } else {
            break;
        }
    }
    (top, dims)
}

/// Whether `expr` sits where an integer is expected.
fn integer_context(expr: Node<'_>, stop: Node<'_>) -> bool {
    let mut child = expr;
    while let Some(p) = child.parent() {
        match p.kind() {
            "subscript_expression" if !is_field(p, "argument", child) => return true,
            "subscript_argument_list" => return true,
            "for_statement"
                if ["initializer", "condition", "update"]
                    .iter()
                    .any(|f| is_field(p, f, child)) =>
            {
                return true;
            }
            "binary_expression" | "assignment_expression" => {
                let op = p.child_by_field_name("operator").map(|o| o.kind()).unwrap_or("");
                let op = op.trim_end_matches('=');
                if INT_OPERATORS.contains(&op) {
                    return true;
                }
            }
            "unary_expression"
                if p.child_by_field_name("operator").is_some_and(|o| o.kind() == "~") => {
                    return true;
                }
            _ => {}
        }
        if p.id() == stop.id() {
            break;
        }
        child = p;
    }
    false
}

fn declared_name<'t>(mut decl: Node<'t>) -> Option<Node<'t>> {
    loop {
        if matches!(decl.kind(), "identifier") {
            return Some(decl);
        }
        decl = decl.child_by_field_name("declarator")?;
    }
}

/// Names declared anywhere inside the loop, including its initializer.
fn local_names(for_node: Node<'_>, src: &str) -> std::collections::HashSet<String> {
    let mut names = std::collections::HashSet::new();
    syntax::walk(for_node, |n| {
        if n.kind() == "declaration" || n.kind() == "parameter_declaration" {
            let mut cursor = n.walk();
            for d in n.children_by_field_name("declarator", &mut cursor) {
                if let Some(id) = declared_name(d) {
                    names.insert(syntax::node_text(id, src).to_string());
                }
            }
        }
    });
    names
}

fn loop_usages(snippet: &LoopSnippet, unresolved: &mut Vec<String>) -> BTreeMap<String, Usage> {
    let mut usages: BTreeMap<String, Usage> = BTreeMap::new();
    let Some(for_node) = snippet.for_node() else {
        unresolved.push("<loop does not parse as a for statement>".into());
        return usages;
    };
    if for_node.kind() == "for_range_loop" {
        unresolved.push("<range-based for>".into());
    }
    if for_node.has_error() {
        unresolved.push("<syntax error in loop>".into());
    }
    let src = snippet.source.as_str();
    let locals = local_names(for_node, src);
    syntax::walk(for_node, |n| {
        if OPAQUE_KINDS.contains(&n.kind()) && n.kind() != "for_range_loop" {
            unresolved.push(syntax::node_text(n, src).to_string());
            return;
        }
        if n.kind() != "identifier" {
            return;
        }
        let name = syntax::node_text(n, src);
        if locals.contains(name) || KNOWN_CONSTANTS.contains(&name) {
            return;
        }
        let Some(parent) = n.parent() else { return };
        if parent.kind() == "call_expression" && is_field(parent, "function", n) {
            if !KNOWN_FUNCTIONS.contains(&name) {
                unresolved.push(name.to_string());
            }
            return;
        }
        if matches!(parent.kind(), "declaration" | "init_declarator" | "labeled_statement" | "goto_statement") {
            return;
        }
        let usage = usages.entry(name.to_string()).or_default();
        if parent.kind() == "pointer_expression" {
            usage.unresolved = true;
            return;
        }
        let (top, dims) = subscript_chain(n);
        if dims > 0 {
            usage.set_dims(dims);
        } else if usage.dims.is_some() {
            // used both as a scalar and as an array
            usage.unresolved = true;
        }
        if integer_context(top, for_node) {
            usage.int_ctx = true;
        }
    });
    usages
}

/// Identifiers mentioned in clause arguments, with bracket depth and
/// whether they appear inside a subscript.
fn pragma_usages(p: &Pragma) -> Vec<(String, Usage)> {
    let mut out = Vec::new();
    for clause in &p.clauses {
        let mut args = clause.args.as_str();
        if clause.name == "reduction" {
            args = args.split_once(':').map_or(args, |(_, list)| list);
        }
        let int_clause = !matches!(
            clause.name.as_str(),
            "copy" | "copyin" | "copyout" | "create" | "present" | "private" | "firstprivate"
                | "reduction" | "deviceptr" | "attach" | "detach" | "delete" | "no_create"
                | "pcopy" | "pcopyin" | "pcopyout" | "pcreate" | "present_or_copy"
                | "present_or_copyin" | "present_or_copyout" | "present_or_create" | "host"
                | "device" | "self" | "use_device" | "cache"
        );
        let bytes = args.as_bytes();
        let mut depth = 0usize;
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i];
            if c == b'[' {
                depth += 1;
                i += 1;
                continue;
            }
            if c == b']' {
                depth = depth.saturating_sub(1);
                i += 1;
                continue;
            }
            if !(c.is_ascii_alphabetic() || c == b'_') {
                i += 1;
                continue;
            }
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let word = &args[start..i];
            let prev = args[..start].trim_end();
            if prev.ends_with('.') || prev.ends_with("->") || prev.ends_with(|ch: char| ch.is_ascii_digit()) {
                continue;
            }
            let rest = args[i..].trim_start();
            if rest.starts_with(':') && depth == 0 {
                // modifier such as `static:` or `num:`
                continue;
            }
            if rest.starts_with('(') || KNOWN_CONSTANTS.contains(&word) {
                continue;
            }
            let mut dims = 0;
            let mut tail = rest;
            while let Some(t) = tail.strip_prefix('[') {
                dims += 1;
                let mut d = 1;
                let close = t
                    .char_indices()
                    .find(|&(_, ch)| {
                        match ch {
                            '[' => d += 1,
                            ']' => d -= 1,
                            _ => {}
                        }
                        d == 0
                    })
                    .map_or(t.len(), |(k, _)| k + 1);
                tail = t[close..].trim_start();
            }
            let usage = Usage {
                dims: (dims > 0).then_some(dims),
                int_ctx: depth > 0 || (dims == 0 && int_clause),
                unresolved: false,
            };
            out.push((word.to_string(), usage));
        }
    }
    out
}

/// Best-effort MCU around the pair's loop; identifiers it cannot type are
/// listed in `unresolved`.
pub fn synthesize_mcu(pair: &PragmaLoopPair) -> Mcu {
    let snippet = LoopSnippet::parse(&pair.loop_text, pair.lang);
    let mut unresolved = Vec::new();
    let mut usages = loop_usages(&snippet, &mut unresolved);
    for (name, u) in pragma_usages(&pair.pragma) {
        if KNOWN_FUNCTIONS.contains(&name.as_str()) {
            continue;
        }
        match usages.get_mut(&name) {
            Some(existing) => existing.int_ctx |= u.int_ctx && existing.dims.is_none() && u.dims.is_none(),
            None => {
                usages.insert(name, u);
            }
        }
    }
    for (name, u) in &usages {
        if u.unresolved {
            unresolved.push(name.clone());
        }
    }
    unresolved.sort();
    unresolved.dedup();

    let mut globals = String::new();
    let mut locals = String::new();
    for (name, u) in &usages {
        if u.unresolved {
            continue;
        }
        let ty = match u.scalar() {
            Scalar::Int => "int",
            Scalar::Double => "double",
        };
        match u.dims {
            Some(d) if d <= 2 => {
                let ext = format!("[{SIZE_CONST}]").repeat(d);
                globals.push_str(&format!("{ty} {name}{ext};\n"));
            }
            Some(d) => globals.push_str(&format!("{ty} {}{name};\n", "*".repeat(d))),
            None => {
                let init = match u.scalar() {
                    Scalar::Int => SIZE_CONST,
                    Scalar::Double => "0.0",
                };
                locals.push_str(&format!("    {ty} {name} = {init};\n"));
            }
        }
    }

    let mut source = String::new();
    for h in HEADERS {
        source.push_str(&format!("#include <{h}>\n"));
    }
    source.push_str(&format!("\nenum {{ {SIZE_CONST} = {ARRAY_EXTENT} }};\n\n"));
    if !globals.is_empty() {
        source.push_str(&globals);
        source.push('\n');
    }
    source.push_str(&format!("void {KERNEL_NAME}(void)\n{{\n"));
    source.push_str(&locals);
    source.push_str(TARGET_MARKER);
    source.push('\n');
    source.push_str(pair.loop_text.trim_end());
    source.push_str("\n}\n");

    Mcu {
        id: pair.id.clone(),
        source,
        lang: pair.lang,
        origin: McuOrigin::Synthesized,
        unresolved,
    }
}

// ---------------------------------------------------------------- compiling

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompilerConfig {
    pub executable: String,
    pub base_flags: Vec<String>,
    pub acc_flags: Vec<String>,
    pub timeout_secs: u64,
    /// Scratch directory for sources and objects; system temp when unset.
    pub work_dir: Option<PathBuf>,
}

impl Default for CompilerConfig {
    fn default() -> Self {
        CompilerConfig {
            executable: "nvc".into(),
            base_flags: vec!["-c".into()],
            acc_flags: vec!["-acc".into(), "-Minfo=accel".into()],
            timeout_secs: 60,
            work_dir: None,
        }
    }
}

impl CompilerConfig {
    pub fn validate(&self) -> Result<(), McuError> {
        if self.timeout_secs == 0 {
            return Err(McuError::InvalidConfig("timeout must be positive".into()));
        }
        Ok(())
    }

    /// Absolute path of the executable, searching `PATH` for bare names.
    pub fn locate(&self) -> Result<PathBuf, McuError> {
        let exe = Path::new(&self.executable);
        let found = if self.executable.contains('/') {
            exe.is_file().then(|| exe.to_path_buf())
        } else {
            std::env::var_os("PATH").and_then(|paths| {
                std::env::split_paths(&paths)
                    .map(|d| d.join(exe))
                    .find(|p| p.is_file())
            })
        };
        found.ok_or_else(|| McuError::CompilerNotFound(self.executable.clone()))
    }

    /// First line of `<compiler> --version`, if it answers.
    pub fn version(&self) -> Option<String> {
        let out = Command::new(self.locate().ok()?)
            .arg("--version")
            .stdin(Stdio::null())
            .output()
            .ok()?;
        let text = String::from_utf8_lossy(&out.stdout);
        let line = text.lines().find(|l| !l.trim().is_empty())?.trim().to_string();
        Some(line)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompileRun {
    pub success: bool,
    pub timed_out: bool,
    pub diagnostics: String,
    pub duration_ms: u64,
}

fn drain(mut r: impl Read + Send + 'static) -> std::thread::JoinHandle<Vec<u8>> {
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = r.read_to_end(&mut buf);
        buf
    })
}

/// Compile `source` once in a scratch directory; `stem` names the input file.
pub fn compile(
    source: &str,
    lang: Lang,
    stem: &str,
    cfg: &CompilerConfig,
    acc_enabled: bool,
) -> Result<CompileRun, McuError> {
    cfg.validate()?;
    let exe = cfg.locate()?;
    let scratch = match &cfg.work_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
            tempfile::Builder::new().prefix("accmine-").tempdir_in(dir)
        }
        None => tempfile::Builder::new().prefix("accmine-").tempdir(),
    }
    .map_err(io_err(cfg.work_dir.as_deref().unwrap_or(Path::new("."))))?;
    let input = scratch.path().join(format!("{stem}.{}", lang.extension()));
    let object = scratch.path().join(format!("{stem}.o"));
    std::fs::write(&input, source).map_err(io_err(&input))?;

    let mut cmd = Command::new(&exe);
    cmd.args(&cfg.base_flags);
    if acc_enabled {
        cmd.args(&cfg.acc_flags);
    }
    cmd.arg(&input).arg("-o").arg(&object);
    cmd.current_dir(scratch.path())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());

    let started = Instant::now();
    let mut child = cmd.spawn().map_err(io_err(&exe))?;
    let out = drain(child.stdout.take().expect("piped stdout"));
    let err = drain(child.stderr.take().expect("piped stderr"));
    let deadline = Duration::from_secs(cfg.timeout_secs);
    let status = loop {
        match child.try_wait().map_err(io_err(&exe))? {
            Some(status) => break Some(status),
            None if started.elapsed() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                break None;
            }
            None => std::thread::sleep(Duration::from_millis(5)),
        }
    };
    let duration_ms = started.elapsed().as_millis() as u64;
    let mut diagnostics = String::from_utf8_lossy(&out.join().unwrap_or_default()).into_owned();
    diagnostics.push_str(&String::from_utf8_lossy(&err.join().unwrap_or_default()));
    Ok(match status {
        Some(s) => CompileRun {
            success: s.success(),
            timed_out: false,
            diagnostics,
            duration_ms,
        },
        None => CompileRun {
            success: false,
            timed_out: true,
            diagnostics: "timeout".into(),
            duration_ms,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    NoPragma,
    ReferencePragma,
    GeneratedPragma,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::NoPragma, Variant::ReferencePragma, Variant::GeneratedPragma];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::NoPragma => "no_pragma",
            Variant::ReferencePragma => "reference_pragma",
            Variant::GeneratedPragma => "generated_pragma",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NotAttempted {
    BaselineFailed,
    ExtractionFailed,
    MissingGeneration,
    MissingReference,
}

impl NotAttempted {
    pub fn as_str(self) -> &'static str {
        match self {
            NotAttempted::BaselineFailed => "baseline_failed",
            NotAttempted::ExtractionFailed => "extraction_failed",
            NotAttempted::MissingGeneration => "missing_generation",
            NotAttempted::MissingReference => "missing_reference",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McuOutcome {
    pub id: String,
    pub variant: Variant,
    pub attempted: bool,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<NotAttempted>,
    pub diagnostics: String,
    pub duration_ms: u64,
}

impl McuOutcome {
    fn ran(id: &str, variant: Variant, run: CompileRun) -> McuOutcome {
        McuOutcome {
            id: id.into(),
            variant,
            attempted: true,
            success: run.success,
            skipped: None,
            diagnostics: run.diagnostics,
            duration_ms: run.duration_ms,
        }
    }

    fn skipped(id: &str, variant: Variant, why: NotAttempted) -> McuOutcome {
        McuOutcome {
            id: id.into(),
            variant,
            attempted: false,
            success: false,
            skipped: Some(why),
            diagnostics: String::new(),
            duration_ms: 0,
        }
    }
}

fn run_one(
    mcu: &Mcu,
    reference: Option<&Pragma>,
    generated: Option<&Generated>,
    cfg: &CompilerConfig,
) -> Result<Vec<McuOutcome>, McuError> {
    let id = mcu.id.as_str();
    let stem = |v: Variant| format!("{id}.{}", v.as_str());
    let baseline_src = instantiate(mcu, None)?;
    let baseline = compile(&baseline_src, mcu.lang, &stem(Variant::NoPragma), cfg, false)?;
    let passed = baseline.success;
    let mut out = vec![McuOutcome::ran(id, Variant::NoPragma, baseline)];

    if !passed {
        out.push(McuOutcome::skipped(id, Variant::ReferencePragma, NotAttempted::BaselineFailed));
        out.push(McuOutcome::skipped(id, Variant::GeneratedPragma, NotAttempted::BaselineFailed));
        return Ok(out);
    }
    out.push(match reference {
        Some(p) => {
            let src = instantiate(mcu, Some(&p.canonical))?;
            McuOutcome::ran(
                id,
                Variant::ReferencePragma,
                compile(&src, mcu.lang, &stem(Variant::ReferencePragma), cfg, true)?,
            )
        }
        None => McuOutcome::skipped(id, Variant::ReferencePragma, NotAttempted::MissingReference),
    });
    out.push(match generated.map(|g| (g, g.line())) {
        None => McuOutcome::skipped(id, Variant::GeneratedPragma, NotAttempted::MissingGeneration),
        Some((_, None)) => McuOutcome::skipped(id, Variant::GeneratedPragma, NotAttempted::ExtractionFailed),
        Some((_, Some(line))) => {
            let src = instantiate(mcu, Some(line))?;
            McuOutcome::ran(
                id,
                Variant::GeneratedPragma,
                compile(&src, mcu.lang, &stem(Variant::GeneratedPragma), cfg, true)?,
            )
        }
    });
    Ok(out)
}

/// Baseline first for every MCU; pragma variants only after it compiles.
/// MCUs run concurrently on up to `jobs` threads.
pub fn run_compile_matrix(
    mcus: &[Mcu],
    refs: &BTreeMap<String, Pragma>,
    gens: &BTreeMap<String, Generated>,
    cfg: &CompilerConfig,
    jobs: usize,
) -> Result<Vec<McuOutcome>, McuError> {
    cfg.validate()?;
    cfg.locate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| McuError::InvalidConfig(e.to_string()))?;
    let per_mcu: Vec<Result<Vec<McuOutcome>, McuError>> = pool.install(|| {
        mcus.par_iter()
            .map(|m| run_one(m, refs.get(&m.id), gens.get(&m.id), cfg))
            .collect()
    });
    let mut outcomes = Vec::with_capacity(mcus.len() * 3);
    for r in per_mcu {
        outcomes.extend(r?);
    }
    outcomes.sort_by(|a, b| (&a.id, a.variant).cmp(&(&b.id, b.variant)));
    Ok(outcomes)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VariantStats {
    pub outcomes: usize,
    pub attempted: usize,
    pub passed: usize,
    /// passed / attempted.
    pub rate: Option<f64>,
    /// passed / baseline passes.
    pub rate_of_baseline_passes: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CompileReport {
    pub mcus: usize,
    pub baseline_passed: usize,
    pub variants: BTreeMap<Variant, VariantStats>,
    pub skipped: BTreeMap<NotAttempted, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toolchain: Option<String>,
}

impl CompileReport {
    pub fn stats(&self, v: Variant) -> VariantStats {
        self.variants.get(&v).cloned().unwrap_or_default()
    }
}

pub fn compile_report(outcomes: &[McuOutcome], toolchain: Option<String>) -> CompileReport {
    let ratio = |n: usize, d: usize| (d > 0).then(|| n as f64 / d as f64);
    let baseline_passed = outcomes
        .iter()
        .filter(|o| o.variant == Variant::NoPragma && o.success)
        .count();
    let mut variants = BTreeMap::new();
    for v in Variant::ALL {
        let of: Vec<&McuOutcome> = outcomes.iter().filter(|o| o.variant == v).collect();
        let attempted = of.iter().filter(|o| o.attempted).count();
        let passed = of.iter().filter(|o| o.success).count();
        variants.insert(
            v,
            VariantStats {
                outcomes: of.len(),
                attempted,
                passed,
                rate: ratio(passed, attempted),
                rate_of_baseline_passes: if v == Variant::NoPragma {
                    None
                } else {
                    ratio(passed, baseline_passed)
                },
            },
        );
    }
    let mut skipped = BTreeMap::new();
    for o in outcomes {
        if let Some(why) = o.skipped {
            *skipped.entry(why).or_insert(0) += 1;
        }
    }
    let mcus = outcomes.iter().filter(|o| o.variant == Variant::NoPragma).count();
    CompileReport {
        mcus,
        baseline_passed,
        variants,
        skipped,
        toolchain,
    }
}
