//! Proposed fix for shared mocking state: clear all mocks before each test.

use serde::{Deserialize, Serialize};
use similar::TextDiff;

use crate::testmodel::{ItemKind, TestTree};
use crate::verdict::call_count_pattern;

const ALREADY_RESET: &[&str] = &["clearAllMocks", "resetAllMocks", "restoreAllMocks"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockResetPatch {
    pub file: String,
    /// Byte offsets in the original file where hooks were inserted.
    pub sites: Vec<usize>,
    #[serde(skip)]
    pub content: String,
    pub diff: String,
}

impl MockResetPatch {
    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
}

fn line_indent(src: &str, offset: usize) -> &str {
    let line_start = src[..offset].rfind('\n').map_or(0, |i| i + 1);
    let line = &src[line_start..];
    &line[..line.len() - line.trim_start_matches([' ', '\t']).len()]
}

fn resets(text: &str) -> bool {
    ALREADY_RESET.iter().any(|r| text.contains(r))
}

/// Inserts a `beforeEach` that calls `jest.clearAllMocks()` at the top of
/// every top-level describe asserting on mock call counts, and at file
/// level when top-level tests do. The file on disk is not touched.
pub fn propose_mock_reset_patch(tree: &TestTree) -> MockResetPatch {
    let src = tree.source.as_str();
    let pattern = call_count_pattern();
    let file_level_reset = tree.interstitial.iter().any(|s| resets(s.slice(src)));
    let mut inserts: Vec<(usize, String)> = Vec::new();

    if !file_level_reset {
        for item in tree.items.iter().filter(|i| i.kind == ItemKind::Describe) {
            let Some(body) = item.body else { continue };
            let text = body.slice(src);
            if !pattern.is_match(text) || resets(text) {
                continue;
            }
            let indent = match item.children.first() {
                Some(child) => line_indent(src, child.span.start).to_string(),
                None => format!("{}  ", line_indent(src, item.span.start)),
            };
            inserts.push((
                body.start,
                format!("\n{indent}beforeEach(() => {{\n{indent}  jest.clearAllMocks();\n{indent}}});\n"),
            ));
        }
        let top_tests_need_it = tree
            .items
            .iter()
            .any(|i| i.kind == ItemKind::Test && pattern.is_match(i.span.slice(src)));
        if top_tests_need_it {
            let first = &tree.items[0];
            let at = first.span.start - line_indent(src, first.span.start).len();
            inserts.push((at, "beforeEach(() => {\n  jest.clearAllMocks();\n});\n\n".to_string()));
        }
    }
    inserts.sort_by_key(|(at, _)| *at);

    let mut content = String::with_capacity(src.len() + inserts.len() * 64);
    let mut cursor = 0;
    for (at, text) in &inserts {
        content.push_str(&src[cursor..*at]);
        content.push_str(text);
        cursor = *at;
    }
    content.push_str(&src[cursor..]);

    let file = tree.file_path.display().to_string();
    let diff = if inserts.is_empty() {
        String::new()
    } else {
        unified_diff(&file, src, &content)
    };
    MockResetPatch {
        file,
        sites: inserts.into_iter().map(|(at, _)| at).collect(),
        content,
        diff,
    }
}

pub fn unified_diff(file: &str, old: &str, new: &str) -> String {
    TextDiff::from_lines(old, new)
        .unified_diff()
        .context_radius(3)
        .header(&format!("a/{file}"), &format!("b/{file}"))
        .to_string()
}
