//! Structural model of a Jest test file.
//!
//! A [`TestTree`] records every top-level `describe`/`test`/`it` call
//! statement as a byte span, with nested items recorded inside describe
//! bodies. Bytes that are not part of a top-level item are kept verbatim as
//! interstitial ranges, so the tree always tiles the original file and no
//! statement the scanner does not understand can be lost on rewrite.

mod lexer;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use lexer::{tokenize, LexError, Token, TokenKind};

/// Describe nesting beyond this depth is parsed but never reordered.
pub const MAX_REORDER_DEPTH: usize = 2;

/// Name recorded for items whose title is not a string literal.
pub const DYNAMIC_NAME: &str = "<dynamic>";

const ITEM_CALLEES: &[&str] = &["describe", "test", "it"];

#[derive(Debug, Error)]
pub enum TestModelError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not valid UTF-8")]
    Encoding { path: PathBuf },
    #[error("syntax error in {path}:{line}:{column}: {message}")]
    Syntax {
        path: PathBuf,
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },
}

/// Half-open byte range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn slice<'a>(&self, src: &'a str) -> &'a str {
        &src[self.start..self.end]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    Test,
    Describe,
}

/// Ordinal path of an item: `[2, 0]` is the first child of the third
/// top-level item.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemPath(pub Vec<usize>);

impl ItemPath {
    pub fn parent(&self) -> Option<ItemPath> {
        if self.0.is_empty() {
            None
        } else {
            Some(ItemPath(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    pub fn child(&self, ordinal: usize) -> ItemPath {
        let mut v = self.0.clone();
        v.push(ordinal);
        ItemPath(v)
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for ItemPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("root");
        }
        for (i, n) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("/")?;
            }
            write!(f, "{n}")?;
        }
        Ok(())
    }
}

/// Stable identifier of an item: `<file>#<ordinal path>`.
pub fn item_id(file: &Path, path: &ItemPath) -> String {
    format!("{}#{}", file.display(), path)
}

/// The suite (test file) an item or test id belongs to.
pub fn suite_of(id: &str) -> &str {
    id.split_once('#').map_or("", |(suite, _)| suite)
}

/// Whether `id` names `unit` itself or something nested inside it.
pub fn id_within(id: &str, unit: &str) -> bool {
    id == unit
        || id
            .strip_prefix(unit)
            .is_some_and(|rest| rest.starts_with('/') || rest.starts_with('#'))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestItem {
    pub id: String,
    pub path: ItemPath,
    pub kind: ItemKind,
    pub name: String,
    /// Callee chain as written, e.g. `test`, `describe.each`, `it.only`.
    pub callee: String,
    pub span: Span,
    /// Inside of the callback body braces, for describes with a block body.
    pub body: Option<Span>,
    pub depth: usize,
    pub reorderable: bool,
    pub children: Vec<TestItem>,
}

impl TestItem {
    pub fn is_dynamic(&self) -> bool {
        self.name == DYNAMIC_NAME
    }

    fn walk<'a>(&'a self, out: &mut Vec<&'a TestItem>) {
        out.push(self);
        for c in &self.children {
            c.walk(out);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestTree {
    pub file_path: PathBuf,
    pub items: Vec<TestItem>,
    pub interstitial: Vec<Span>,
    pub source_hash: String,
    #[serde(skip)]
    pub source: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemLevel {
    Test,
    Describe,
}

impl ItemLevel {
    pub fn kind(self) -> ItemKind {
        match self {
            ItemLevel::Test => ItemKind::Test,
            ItemLevel::Describe => ItemKind::Describe,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ItemLevel::Test => "test",
            ItemLevel::Describe => "describe",
        }
    }
}

/// Reorderable siblings of one kind sharing a parent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiblingGroup {
    pub id: String,
    pub level: ItemLevel,
    pub parent: ItemPath,
    pub members: Vec<ItemPath>,
    pub member_ids: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn parse_test_file(path: &Path) -> Result<TestTree, TestModelError> {
    let bytes = std::fs::read(path).map_err(|source| TestModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let source = String::from_utf8(bytes).map_err(|_| TestModelError::Encoding {
        path: path.to_path_buf(),
    })?;
    parse_source(path, source)
}

/// JSX is recognised everywhere except plain TypeScript, where `<T>x`
/// is a type assertion.
fn jsx_enabled(path: &Path) -> bool {
    !matches!(path.extension().and_then(|e| e.to_str()), Some("ts" | "mts" | "cts"))
}

pub fn parse_source(path: &Path, source: String) -> Result<TestTree, TestModelError> {
    let tokens = tokenize(&source, jsx_enabled(path)).map_err(|e| {
        let (line, column) = line_col(&source, e.offset);
        TestModelError::Syntax {
            path: path.to_path_buf(),
            offset: e.offset,
            line,
            column,
            message: e.message,
        }
    })?;
    let matching = match_brackets(&source, &tokens);
    let scanner = Scanner {
        src: &source,
        tokens: &tokens,
        matching: &matching,
        file: path,
    };
    let items = scanner.scan_block(0, tokens.len(), 0, &ItemPath::default());
    let interstitial = complement(items.iter().map(|i| i.span), source.len());
    Ok(TestTree {
        file_path: path.to_path_buf(),
        items,
        interstitial,
        source_hash: sha256_hex(source.as_bytes()),
        source,
    })
}

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |n| before.len() - n - 1) + 1;
    (line, column)
}

fn match_brackets(src: &str, tokens: &[Token]) -> Vec<usize> {
    let mut matching = vec![usize::MAX; tokens.len()];
    let mut stack = Vec::new();
    for (i, t) in tokens.iter().enumerate() {
        if t.kind != TokenKind::Punct {
            continue;
        }
        match t.text(src) {
            "(" | "[" | "{" => stack.push(i),
            ")" | "]" | "}" => {
                // the lexer already rejected unbalanced input
                let open = stack.pop().expect("balanced brackets");
                matching[open] = i;
                matching[i] = open;
            }
            _ => {}
        }
    }
    matching
}

/// Ranges of `[0, len)` not covered by the sorted, disjoint `spans`.
fn complement(spans: impl Iterator<Item = Span>, len: usize) -> Vec<Span> {
    let mut out = Vec::new();
    let mut cursor = 0;
    for s in spans {
        if s.start > cursor {
            out.push(Span::new(cursor, s.start));
        }
        cursor = s.end;
    }
    if cursor < len {
        out.push(Span::new(cursor, len));
    }
    out
}

struct Scanner<'a> {
    src: &'a str,
    tokens: &'a [Token],
    matching: &'a [usize],
    file: &'a Path,
}

impl Scanner<'_> {
    fn text(&self, i: usize) -> &str {
        self.tokens[i].text(self.src)
    }

    fn is_punct(&self, i: usize, p: &str) -> bool {
        i < self.tokens.len() && self.tokens[i].is_punct(self.src, p)
    }

    fn is_open(&self, i: usize) -> bool {
        self.tokens[i].kind == TokenKind::Punct && matches!(self.text(i), "(" | "[" | "{")
    }

    /// Step over token `i`, jumping across a whole bracketed group.
    fn next(&self, i: usize) -> usize {
        if self.is_open(i) {
            self.matching[i] + 1
        } else {
            i + 1
        }
    }

    fn ends_expression(&self, i: usize) -> bool {
        let t = &self.tokens[i];
        match t.kind {
            TokenKind::Punct => matches!(self.text(i), ")" | "]" | "}" | "++" | "--"),
            TokenKind::Ident => !matches!(
                self.text(i),
                "return"
                    | "typeof"
                    | "new"
                    | "delete"
                    | "void"
                    | "throw"
                    | "await"
                    | "yield"
                    | "in"
                    | "of"
                    | "instanceof"
                    | "case"
                    | "export"
                    | "default"
                    | "async"
            ),
            _ => true,
        }
    }

    /// Token `i` begins a statement within a block starting at `lo`.
    fn at_statement_start(&self, i: usize, lo: usize) -> bool {
        if i == lo {
            return true;
        }
        let prev = i - 1;
        if self.is_punct(prev, ";") || self.is_punct(prev, "}") {
            return true;
        }
        self.tokens[i].newline_before && self.ends_expression(prev)
    }

    /// Token `k` cannot continue the expression that ended just before it.
    fn terminates_statement(&self, k: usize, hi: usize) -> bool {
        if k >= hi {
            return true;
        }
        let t = &self.tokens[k];
        if !t.newline_before {
            return false;
        }
        match t.kind {
            TokenKind::Template => false,
            TokenKind::Punct => matches!(self.text(k), "{" | "!" | "~" | "++" | "--" | "@" | "#"),
            _ => true,
        }
    }

    fn scan_block(&self, lo: usize, hi: usize, depth: usize, parent: &ItemPath) -> Vec<TestItem> {
        let mut items = Vec::new();
        let mut i = lo;
        while i < hi {
            if self.tokens[i].kind == TokenKind::Ident
                && ITEM_CALLEES.contains(&self.text(i))
                && self.at_statement_start(i, lo)
            {
                if let Some((item, next)) = self.parse_item(i, hi, depth, &parent.child(items.len())) {
                    items.push(item);
                    i = next;
                    continue;
                }
            }
            i = self.next(i);
        }
        items
    }

    fn parse_item(&self, i: usize, hi: usize, depth: usize, path: &ItemPath) -> Option<(TestItem, usize)> {
        let root = self.text(i);
        let mut callee = root.to_string();
        let mut calls: Vec<(usize, usize)> = Vec::new();
        let mut j = i + 1;
        let mut ends_with_call = false;
        while j < hi {
            if self.is_punct(j, ".") && j + 1 < hi && self.tokens[j + 1].kind == TokenKind::Ident {
                callee.push('.');
                callee.push_str(self.text(j + 1));
                j += 2;
                ends_with_call = false;
            } else if self.is_punct(j, "(") {
                let close = self.matching[j];
                calls.push((j, close));
                j = close + 1;
                ends_with_call = true;
            } else if self.tokens[j].kind == TokenKind::Template && !ends_with_call && callee.ends_with(".each") {
                j += 1;
                ends_with_call = false;
            } else {
                break;
            }
        }
        if !ends_with_call || !self.terminates_statement(j, hi) && !self.is_punct(j, ";") {
            return None;
        }
        let mut end = self.tokens[j - 1].end;
        let mut next = j;
        // a `;` opening the next line guards the following statement
        if self.is_punct(j, ";") && j < hi && !self.tokens[j].newline_before {
            end = self.tokens[j].end;
            next = j + 1;
        }
        let (open, close) = *calls.last()?;
        let kind = if root == "describe" {
            ItemKind::Describe
        } else {
            ItemKind::Test
        };
        let name = self.literal_name(open, close);
        let mut body = None;
        let mut children = Vec::new();
        if kind == ItemKind::Describe {
            if let Some((b_open, b_close)) = self.callback_body(open, close) {
                body = Some(Span::new(self.tokens[b_open].end, self.tokens[b_close].start));
                children = self.scan_block(b_open + 1, b_close, depth + 1, path);
            }
        }
        let item = TestItem {
            id: item_id(self.file, path),
            path: path.clone(),
            kind,
            name,
            callee,
            span: Span::new(self.tokens[i].start, end),
            body,
            depth,
            reorderable: depth <= MAX_REORDER_DEPTH,
            children,
        };
        Some((item, next))
    }

    fn literal_name(&self, open: usize, close: usize) -> String {
        let first = open + 1;
        if first >= close {
            return DYNAMIC_NAME.to_string();
        }
        let single = first + 1 == close || self.is_punct(first + 1, ",");
        let t = &self.tokens[first];
        let raw = t.text(self.src);
        match t.kind {
            TokenKind::Str if single => unescape(&raw[1..raw.len() - 1]),
            TokenKind::Template if single && !raw.contains("${") => unescape(&raw[1..raw.len() - 1]),
            _ => DYNAMIC_NAME.to_string(),
        }
    }

    /// Brace pair of the last function argument with a block body.
    fn callback_body(&self, open: usize, close: usize) -> Option<(usize, usize)> {
        let mut found = None;
        let mut k = open + 1;
        while k < close {
            if self.is_punct(k, "=>") && self.is_punct(k + 1, "{") {
                found = Some((k + 1, self.matching[k + 1]));
            } else if self.tokens[k].kind == TokenKind::Ident && self.text(k) == "function" {
                let mut m = k + 1;
                if self.is_punct(m, "*") {
                    m += 1;
                }
                if self.tokens[m].kind == TokenKind::Ident {
                    m += 1;
                }
                if self.is_punct(m, "(") {
                    let after = self.matching[m] + 1;
                    if self.is_punct(after, "{") {
                        found = Some((after, self.matching[after]));
                        k = self.matching[after] + 1;
                        continue;
                    }
                }
            }
            k = self.next(k);
        }
        found
    }
}

fn unescape(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut chars = raw.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('r') => out.push('\r'),
            Some('\n') | None => {}
            Some(other) => out.push(other),
        }
    }
    out
}

impl TestTree {
    pub fn item(&self, path: &ItemPath) -> Option<&TestItem> {
        let (first, rest) = path.0.split_first()?;
        let mut cur = self.items.get(*first)?;
        for n in rest {
            cur = cur.children.get(*n)?;
        }
        Some(cur)
    }

    /// Children of the container at `parent` (the file itself for root).
    pub fn children_of(&self, parent: &ItemPath) -> Option<&[TestItem]> {
        if parent.is_root() {
            Some(&self.items)
        } else {
            self.item(parent).map(|i| i.children.as_slice())
        }
    }

    /// All items in document order.
    pub fn all_items(&self) -> Vec<&TestItem> {
        let mut out = Vec::new();
        for i in &self.items {
            i.walk(&mut out);
        }
        out
    }

    pub fn tests(&self) -> Vec<&TestItem> {
        self.all_items()
            .into_iter()
            .filter(|i| i.kind == ItemKind::Test)
            .collect()
    }

    pub fn count(&self, kind: ItemKind) -> usize {
        self.all_items().iter().filter(|i| i.kind == kind).count()
    }

    /// Titles of the enclosing describes followed by the item's own title,
    /// as the runner reports them (`ancestorTitles` + `title`).
    pub fn title_path(&self, path: &ItemPath) -> Vec<String> {
        (1..=path.0.len())
            .filter_map(|n| self.item(&ItemPath(path.0[..n].to_vec())))
            .map(|i| i.name.clone())
            .collect()
    }

    /// Top-level spans and interstitial ranges merged in source order.
    pub fn tiles(&self) -> Vec<Span> {
        let mut tiles: Vec<Span> = self
            .items
            .iter()
            .map(|i| i.span)
            .chain(self.interstitial.iter().copied())
            .collect();
        tiles.sort();
        tiles
    }

    /// Concatenation of all tiles; equals the source when the tiling holds.
    pub fn reassemble(&self) -> String {
        self.tiles().iter().map(|s| s.slice(&self.source)).collect()
    }

    pub fn tiling_holds(&self) -> bool {
        let tiles = self.tiles();
        let mut cursor = 0;
        for t in &tiles {
            if t.start != cursor || t.end < t.start {
                return false;
            }
            cursor = t.end;
        }
        cursor == self.source.len() && sha256_hex(self.reassemble().as_bytes()) == self.source_hash
    }

    /// Map from runner-style title path to item path, for tests with fully
    /// literal titles. Titles that occur more than once map to every match.
    pub fn tests_by_title(&self) -> BTreeMap<Vec<String>, Vec<ItemPath>> {
        let mut map: BTreeMap<Vec<String>, Vec<ItemPath>> = BTreeMap::new();
        for t in self.tests() {
            map.entry(self.title_path(&t.path)).or_default().push(t.path.clone());
        }
        map
    }
}

/// Sibling groups of size at least two that can be reordered at `level`.
///
/// Describe groups are taken at the top level and one nesting level below;
/// test groups are the tests sharing each reorderable parent.
pub fn enumerate_level(tree: &TestTree, level: ItemLevel) -> Vec<SiblingGroup> {
    let mut containers = vec![ItemPath::default()];
    containers.extend(
        tree.all_items()
            .into_iter()
            .filter(|i| i.kind == ItemKind::Describe)
            .filter(|i| match level {
                ItemLevel::Describe => i.depth == 0,
                ItemLevel::Test => i.depth < MAX_REORDER_DEPTH,
            })
            .map(|i| i.path.clone()),
    );
    let mut groups = Vec::new();
    for parent in containers {
        let Some(children) = tree.children_of(&parent) else {
            continue;
        };
        let members: Vec<&TestItem> = children
            .iter()
            .filter(|c| c.kind == level.kind() && c.reorderable)
            .collect();
        if members.len() < 2 {
            continue;
        }
        groups.push(SiblingGroup {
            id: format!("{}:{}", item_id(&tree.file_path, &parent), level.as_str()),
            level,
            parent: parent.clone(),
            members: members.iter().map(|m| m.path.clone()).collect(),
            member_ids: members.iter().map(|m| m.id.clone()).collect(),
        });
    }
    groups
}
