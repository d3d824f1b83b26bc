//! Thin layer over tree-sitter shared by extraction, filtering and MCU synthesis.

use serde::{Deserialize, Serialize};
use tree_sitter::{Node, Parser, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lang {
    C,
    Cpp,
}

impl Lang {
    pub fn from_extension(ext: &str) -> Option<Lang> {
        match ext {
            "c" | "h" => Some(Lang::C),
            "cc" | "cpp" | "cxx" | "c++" | "C" | "hh" | "hpp" | "hxx" | "h++" => Some(Lang::Cpp),
            _ => None,
        }
    }

    pub fn from_path(path: &str) -> Option<Lang> {
        std::path::Path::new(path)
            .extension()
            .and_then(|e| e.to_str())
            .and_then(Lang::from_extension)
    }

    pub fn extension(self) -> &'static str {
        match self {
            Lang::C => "c",
            Lang::Cpp => "cpp",
        }
    }

    fn grammar(self) -> tree_sitter::Language {
        match self {
            Lang::C => tree_sitter_c::LANGUAGE.into(),
            Lang::Cpp => tree_sitter_cpp::LANGUAGE.into(),
        }
    }
}

pub fn parse(text: &str, lang: Lang) -> Tree {
    let mut parser = Parser::new();
    parser
        .set_language(&lang.grammar())
        .expect("bundled grammar is ABI compatible");
    parser
        .parse(text, None)
        .expect("parser has a language and no cancellation")
}

pub fn node_text<'a>(node: Node<'_>, src: &'a str) -> &'a str {
    &src[node.byte_range()]
}

pub fn is_loop(kind: &str) -> bool {
    matches!(
        kind,
        "for_statement" | "for_range_loop" | "while_statement" | "do_statement"
    )
}

pub fn is_for(kind: &str) -> bool {
    matches!(kind, "for_statement" | "for_range_loop")
}

/// Pre-order walk over every node under `root`.
pub fn walk<'t>(root: Node<'t>, mut visit: impl FnMut(Node<'t>)) {
    let mut cursor = root.walk();
    loop {
        visit(cursor.node());
        if cursor.goto_first_child() {
            continue;
        }
        loop {
            if cursor.goto_next_sibling() {
                break;
            }
            if !cursor.goto_parent() {
                return;
            }
        }
    }
}

/// A loop statement re-parsed on its own, wrapped in a dummy function body.
pub struct LoopSnippet {
    pub source: String,
    pub tree: Tree,
}

const WRAP_OPEN: &str = "void __accmine_wrapper(void) {\n";

impl LoopSnippet {
    pub fn parse(loop_text: &str, lang: Lang) -> LoopSnippet {
        let source = format!("{WRAP_OPEN}{loop_text}\n}}\n");
        let tree = parse(&source, lang);
        LoopSnippet { source, tree }
    }

    /// The outermost `for` node of the snippet, if the text parsed as one.
    pub fn for_node(&self) -> Option<Node<'_>> {
        let mut found = None;
        walk(self.tree.root_node(), |n| {
            if found.is_none() && is_for(n.kind()) && n.start_byte() == WRAP_OPEN.len() {
                found = Some(n);
            }
        });
        found
    }

    pub fn text(&self, node: Node<'_>) -> &str {
        node_text(node, &self.source)
    }
}
