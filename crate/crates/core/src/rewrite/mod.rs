//! Materializing orders as variant test files.
//!
//! A variant is the original file with one sibling group's spans emitted in
//! a new order. Bytes between two siblings that are more than whitespace
//! travel with the sibling they precede; whitespace separators stay in
//! place so statements never run together.

mod config;
mod journal;
mod mockreset;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{patch_config, ConfigPatch, VARIANT_GLOB, VARIANT_REGEX};
pub use journal::{recover, tree_hash, Journal, JournalEntry, Workspace, JOURNAL_FILE, LOCK_FILE, MASK_SUFFIX};
pub use mockreset::{propose_mock_reset_patch, unified_diff, MockResetPatch};

use crate::testmodel::{sha256_hex, ItemKind, ItemLevel, ItemPath, SiblingGroup, TestItem, TestTree};

/// Marker embedded in every generated file name.
pub const VARIANT_MARKER: &str = "jstod";

#[derive(Debug, Error)]
pub enum RewriteError {
    #[error("spans of group {0} do not tile the file")]
    SpanConflict(String),
    #[error("order of group {0} would merge two statements (missing semicolon)")]
    AsiHazard(String),
    #[error("order is not a permutation of group {0}")]
    NotAPermutation(String),
    #[error("refusing to overwrite existing file {0}")]
    Collision(PathBuf),
    #[error("{path} has no file name")]
    BadPath { path: PathBuf },
    #[error("project {0} is locked by another run")]
    Locked(PathBuf),
    #[error("journal error: {0}")]
    Journal(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RewriteError + '_ {
    move |source| RewriteError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantFile {
    pub original_path: PathBuf,
    pub variant_path: PathBuf,
    pub order: Vec<String>,
    pub level: ItemLevel,
    pub content_hash: String,
    #[serde(skip)]
    pub content: String,
}

/// `a/b.test.js` at test level, index 3 → `a/b.jstod-test-03.test.js`.
///
/// The marker goes before the `.test`/`.spec` suffix (or the extension)
/// so the name still matches the runner's default test patterns.
pub fn variant_name(original: &Path, level: ItemLevel, order_index: usize) -> Result<PathBuf, RewriteError> {
    let file_name = original
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| RewriteError::BadPath {
            path: original.to_path_buf(),
        })?;
    let split = [".test.", ".spec."]
        .iter()
        .filter_map(|m| file_name.find(m))
        .min()
        .or_else(|| file_name.rfind('.').filter(|&i| i > 0))
        .unwrap_or(file_name.len());
    let (stem, rest) = file_name.split_at(split);
    let name = format!("{stem}.{VARIANT_MARKER}-{}-{order_index:02}{rest}", level.as_str());
    Ok(original.with_file_name(name))
}

/// Like [`variant_name`], additionally refusing targets that already exist.
pub fn generate_name(original: &Path, level: ItemLevel, order_index: usize) -> Result<PathBuf, RewriteError> {
    let path = variant_name(original, level, order_index)?;
    if path.exists() {
        return Err(RewriteError::Collision(path));
    }
    Ok(path)
}

struct GroupLayout<'a> {
    members: Vec<&'a TestItem>,
    index: HashMap<&'a str, usize>,
}

fn layout<'a>(tree: &'a TestTree, group: &SiblingGroup) -> Result<GroupLayout<'a>, RewriteError> {
    let conflict = || RewriteError::SpanConflict(group.id.clone());
    let members: Vec<&TestItem> = group
        .members
        .iter()
        .map(|p| tree.item(p).ok_or_else(conflict))
        .collect::<Result<_, _>>()?;
    if members.is_empty() || members.windows(2).any(|w| w[0].span.end > w[1].span.start) {
        return Err(conflict());
    }
    if members.last().is_none_or(|m| m.span.end > tree.source.len()) {
        return Err(conflict());
    }
    let index = members.iter().enumerate().map(|(i, m)| (m.id.as_str(), i)).collect();
    Ok(GroupLayout { members, index })
}

fn order_indices(group: &SiblingGroup, layout: &GroupLayout<'_>, order: &[String]) -> Result<Vec<usize>, RewriteError> {
    let bad = || RewriteError::NotAPermutation(group.id.clone());
    if order.len() != layout.members.len() {
        return Err(bad());
    }
    let mut used = vec![false; order.len()];
    order
        .iter()
        .map(|id| {
            let i = *layout.index.get(id.as_str()).ok_or_else(bad)?;
            if std::mem::replace(&mut used[i], true) {
                return Err(bad());
            }
            Ok(i)
        })
        .collect()
}

/// Splits the bytes between two siblings into the whitespace that stays in
/// place and the content pinned to the following sibling.
fn split_gap(gap: &str) -> (&str, &str) {
    let core_start = gap.len() - gap.trim_start().len();
    if gap[core_start..].is_empty() {
        (gap, "")
    } else {
        gap.split_at(core_start)
    }
}

/// First significant character, skipping whitespace and comments.
fn leading_char(text: &str) -> Option<char> {
    let mut rest = text.trim_start();
    loop {
        if let Some(r) = rest.strip_prefix("//") {
            rest = r.find('\n').map_or("", |i| &r[i..]).trim_start();
        } else if let Some(r) = rest.strip_prefix("/*") {
            rest = r.find("*/").map_or("", |i| &r[i + 2..]).trim_start();
        } else {
            return rest.chars().next();
        }
    }
}

/// Whether `next` can follow `prev` without the two fusing into one
/// statement. Conservative: unknown endings are unsafe.
fn asi_safe(prev: &str, next: &str) -> bool {
    match leading_char(next) {
        Some('(' | '[' | '`' | '+' | '-' | '/') => {}
        _ => return true,
    }
    let prev = prev.trim_end();
    prev.is_empty() || prev.ends_with(';') || prev.ends_with('{')
}

/// File content with `group`'s members emitted in `order`.
pub fn render_variant(tree: &TestTree, group: &SiblingGroup, order: &[String]) -> Result<String, RewriteError> {
    let layout = layout(tree, group)?;
    let perm = order_indices(group, &layout, order)?;
    let src = tree.source.as_str();
    let spans: Vec<_> = layout.members.iter().map(|m| m.span).collect();
    let mut separators = Vec::with_capacity(spans.len());
    let mut pinned = vec![""];
    for w in spans.windows(2) {
        let (sep, pin) = split_gap(&src[w[0].end..w[1].start]);
        separators.push(sep);
        pinned.push(pin);
    }
    let first = spans[0].start;
    let last = spans[spans.len() - 1].end;
    let hazard = || RewriteError::AsiHazard(group.id.clone());
    let mut out = String::with_capacity(src.len());
    out.push_str(&src[..first]);
    for (slot, &member) in perm.iter().enumerate() {
        let prev = if slot == 0 {
            &src[..first]
        } else {
            spans[perm[slot - 1]].slice(src)
        };
        let moved = member != slot || (slot > 0 && perm[slot - 1] + 1 != member);
        if moved && !asi_safe(prev, &format!("{}{}", pinned[member], spans[member].slice(src))) {
            return Err(hazard());
        }
        if slot > 0 {
            out.push_str(separators[slot - 1]);
        }
        out.push_str(pinned[member]);
        out.push_str(spans[member].slice(src));
    }
    let tail_prev = spans[perm[perm.len() - 1]].slice(src);
    if perm[perm.len() - 1] != perm.len() - 1 && !asi_safe(tail_prev, &src[last..]) {
        return Err(hazard());
    }
    out.push_str(&src[last..]);
    Ok(out)
}

/// Test ids of the variant in document (and so execution) order.
pub fn variant_test_order(
    tree: &TestTree,
    group: &SiblingGroup,
    order: &[String],
) -> Result<Vec<String>, RewriteError> {
    let layout = layout(tree, group)?;
    let perm = order_indices(group, &layout, order)?;
    let siblings = tree
        .children_of(&group.parent)
        .ok_or_else(|| RewriteError::SpanConflict(group.id.clone()))?;
    let pos_of = |path: &ItemPath| siblings.iter().position(|s| &s.path == path).expect("member of parent");
    let member_pos: Vec<usize> = layout.members.iter().map(|m| pos_of(&m.path)).collect();
    // siblings strictly between member i-1 and member i travel with member i
    let mut units: Vec<Vec<&TestItem>> = Vec::new();
    for (i, &p) in member_pos.iter().enumerate() {
        let lo = if i == 0 { p } else { member_pos[i - 1] + 1 };
        units.push(siblings[lo..=p].iter().collect());
    }
    let mut sequence: Vec<&TestItem> = siblings[..member_pos[0]].iter().collect();
    for &m in &perm {
        sequence.extend(units[m].iter().copied());
    }
    sequence.extend(siblings[member_pos[member_pos.len() - 1] + 1..].iter());

    let mut ids = Vec::new();
    collect_tests(&tree.items, &ItemPath::default(), &group.parent, &sequence, &mut ids);
    Ok(ids)
}

fn collect_tests<'a>(
    items: &'a [TestItem],
    container: &ItemPath,
    target: &ItemPath,
    replacement: &[&'a TestItem],
    out: &mut Vec<String>,
) {
    let sequence: Vec<&TestItem> = if container == target {
        replacement.to_vec()
    } else {
        items.iter().collect()
    };
    for item in sequence {
        match item.kind {
            ItemKind::Test => out.push(item.id.clone()),
            ItemKind::Describe => collect_tests(&item.children, &item.path, target, replacement, out),
        }
    }
}

/// Renders every order of `group` without touching the filesystem.
pub fn plan_variants(
    tree: &TestTree,
    group: &SiblingGroup,
    orders: &[Vec<String>],
) -> Result<Vec<VariantFile>, RewriteError> {
    orders
        .iter()
        .enumerate()
        .map(|(i, order)| {
            let content = render_variant(tree, group, order)?;
            Ok(VariantFile {
                original_path: tree.file_path.clone(),
                variant_path: variant_name(&tree.file_path, group.level, i)?,
                order: order.clone(),
                level: group.level,
                content_hash: sha256_hex(content.as_bytes()),
                content,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testmodel::{enumerate_level, parse_source};

    fn tree(src: &str) -> TestTree {
        parse_source(Path::new("/p/a.test.js"), src.to_string()).unwrap()
    }

    #[test]
    fn refuses_orders_that_fuse_statements() {
        let src = "const n = 1\ntest('a', () => {});\n(function () {})()\ntest('b', () => {})\n";
        let tree = parse_source(Path::new("a.test.js"), src.into()).unwrap();
        let group = &enumerate_level(&tree, ItemLevel::Test)[0];
        let mut order = group.member_ids.clone();
        order.reverse();
        assert!(matches!(
            render_variant(&tree, group, &order),
            Err(RewriteError::AsiHazard(_))
        ));
        assert_eq!(render_variant(&tree, group, &group.member_ids).unwrap(), src);

        let guarded = "const n = 1;\ntest('a', () => {});\n;(function () {})()\ntest('b', () => {});\n";
        let tree = parse_source(Path::new("a.test.js"), guarded.into()).unwrap();
        let group = &enumerate_level(&tree, ItemLevel::Test)[0];
        let mut order = group.member_ids.clone();
        order.reverse();
        let out = render_variant(&tree, group, &order).unwrap();
        assert!(out.starts_with("const n = 1;\n;(function () {})()\ntest('b'"), "{out}");
    }

    #[test]
    fn names() {
        let p = variant_name(Path::new("a/b.test.js"), ItemLevel::Test, 3).unwrap();
        assert_eq!(p, PathBuf::from("a/b.jstod-test-03.test.js"));
        assert_eq!(p, variant_name(Path::new("a/b.test.js"), ItemLevel::Test, 3).unwrap());
        assert_eq!(
            variant_name(Path::new("x/katex-spec.js"), ItemLevel::Describe, 12).unwrap(),
            PathBuf::from("x/katex-spec.jstod-describe-12.js")
        );
        assert_eq!(
            variant_name(Path::new("__tests__/util.ts"), ItemLevel::Test, 0).unwrap(),
            PathBuf::from("__tests__/util.jstod-test-00.ts")
        );
    }

    #[test]
    fn existing_target_is_a_collision() {
        let dir = tempfile::tempdir().unwrap();
        let orig = dir.path().join("b.test.js");
        std::fs::write(dir.path().join("b.jstod-test-03.test.js"), "foreign").unwrap();
        assert!(matches!(
            generate_name(&orig, ItemLevel::Test, 3),
            Err(RewriteError::Collision(_))
        ));
        assert!(generate_name(&orig, ItemLevel::Test, 4).is_ok());
    }

    #[test]
    fn swap_with_pinned_hook() {
        let src =
            "import x from 'x';\n\ntest('a', () => {});\nbeforeEach(() => reset());\ntest('b', () => {});\n// end\n";
        let t = tree(src);
        let g = &enumerate_level(&t, ItemLevel::Test)[0];
        let out = render_variant(&t, g, &[g.member_ids[1].clone(), g.member_ids[0].clone()]).unwrap();
        assert_eq!(
            out,
            "import x from 'x';\n\nbeforeEach(() => reset());\ntest('b', () => {});\ntest('a', () => {});\n// end\n"
        );
    }

    #[test]
    fn variant_order_lists_leaves() {
        let src = "describe('d', () => {\n  it('x', () => {});\n  it('y', () => {});\n});\ndescribe('e', () => {\n  it('z', () => {});\n});\n";
        let t = tree(src);
        let g = &enumerate_level(&t, ItemLevel::Test)[0];
        let order = vec![g.member_ids[1].clone(), g.member_ids[0].clone()];
        let ids = variant_test_order(&t, g, &order).unwrap();
        assert_eq!(ids, ["/p/a.test.js#0/1", "/p/a.test.js#0/0", "/p/a.test.js#1/0"]);

        let d = &enumerate_level(&t, ItemLevel::Describe)[0];
        let order = vec![d.member_ids[1].clone(), d.member_ids[0].clone()];
        let ids = variant_test_order(&t, d, &order).unwrap();
        assert_eq!(ids, ["/p/a.test.js#1/0", "/p/a.test.js#0/0", "/p/a.test.js#0/1"]);
    }

    #[test]
    fn rejects_non_permutations() {
        let t = tree("test('a', () => {});\ntest('b', () => {});\n");
        let g = &enumerate_level(&t, ItemLevel::Test)[0];
        let dup = vec![g.member_ids[0].clone(), g.member_ids[0].clone()];
        assert!(matches!(
            render_variant(&t, g, &dup),
            Err(RewriteError::NotAPermutation(_))
        ));
        assert!(matches!(
            render_variant(&t, g, &dup[..1]),
            Err(RewriteError::NotAPermutation(_))
        ));
    }
}
