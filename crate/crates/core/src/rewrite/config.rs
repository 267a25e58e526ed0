use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{RewriteError, Workspace};

/// Glob matching every variant name, appended to `testMatch`.
pub const VARIANT_GLOB: &str = "**/*.jstod-@(test|describe)-+([0-9])*";
/// Regex matching every variant name, appended to `testRegex`.
pub const VARIANT_REGEX: &str = r"\.jstod-(test|describe)-\d+[^/\\]*$";

const JS_CONFIGS: &[&str] = &["jest.config.js", "jest.config.ts", "jest.config.mjs", "jest.config.cjs"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ConfigPatch {
    /// The runner's default patterns already select variant names.
    NotNeeded,
    /// A JSON config's patterns were extended; the original bytes are in
    /// the workspace journal.
    Patched { path: PathBuf, keys: Vec<String> },
    /// The config could not be edited; variants are selected with an
    /// explicit pattern flag instead.
    Degraded {
        path: PathBuf,
        flag: String,
        reason: String,
    },
}

impl ConfigPatch {
    /// Extra runner arguments needed to select `variant` in this mode.
    pub fn selection_args(&self, variant: &Path) -> Vec<String> {
        match self {
            ConfigPatch::Degraded { flag, .. } if flag == "testRegex" => {
                vec![format!("--testRegex={}", regex::escape(&variant.display().to_string()))]
            }
            ConfigPatch::Degraded { .. } => vec![format!("--testMatch={}", variant.display())],
            _ => Vec::new(),
        }
    }
}

fn extend_patterns(config: &mut serde_json::Map<String, Value>) -> Vec<String> {
    let mut keys = Vec::new();
    if let Some(m) = config.get_mut("testMatch") {
        let addition = Value::String(VARIANT_GLOB.into());
        match m {
            Value::Array(a) if !a.contains(&addition) => {
                a.push(addition);
                keys.push("testMatch".into());
            }
            Value::String(s) => {
                *m = Value::Array(vec![Value::String(s.clone()), addition]);
                keys.push("testMatch".into());
            }
            _ => {}
        }
    }
    if let Some(r) = config.get_mut("testRegex") {
        let addition = Value::String(VARIANT_REGEX.into());
        match r {
            Value::Array(a) if !a.contains(&addition) => {
                a.push(addition);
                keys.push("testRegex".into());
            }
            Value::String(s) => {
                *r = Value::Array(vec![Value::String(s.clone()), addition]);
                keys.push("testRegex".into());
            }
            _ => {}
        }
    }
    keys
}

fn patch_json(
    ws: &mut Workspace,
    path: &Path,
    text: &str,
    nested_key: Option<&str>,
) -> Result<ConfigPatch, RewriteError> {
    let degraded = |reason: String| ConfigPatch::Degraded {
        path: path.to_path_buf(),
        flag: "testMatch".into(),
        reason,
    };
    let mut doc: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => return Ok(degraded(format!("invalid JSON: {e}"))),
    };
    let target = match nested_key {
        Some(k) => doc.get_mut(k),
        None => Some(&mut doc),
    };
    let Some(Value::Object(config)) = target else {
        return Ok(degraded("runner config is not an object".into()));
    };
    let keys = extend_patterns(config);
    if keys.is_empty() {
        return Ok(ConfigPatch::NotNeeded);
    }
    let mut out = serde_json::to_string_pretty(&doc).map_err(|e| RewriteError::Journal(e.to_string()))?;
    out.push('\n');
    ws.rewrite_file(path, &out)?;
    Ok(ConfigPatch::Patched {
        path: path.to_path_buf(),
        keys,
    })
}

/// Makes the project's test-file patterns accept variant names.
///
/// Looks at the manifest's `jest` section, then `jest.config.json`, then
/// JavaScript config files. JavaScript configs are never edited: if they
/// set patterns, the run falls back to an explicit selection flag.
pub fn patch_config(ws: &mut Workspace) -> Result<ConfigPatch, RewriteError> {
    let root = ws.root().to_path_buf();
    let manifest = root.join("package.json");
    if let Ok(text) = std::fs::read_to_string(&manifest) {
        let has_section = serde_json::from_str::<Value>(&text)
            .map(|v| v.get("jest").is_some())
            .unwrap_or(false);
        if has_section {
            return patch_json(ws, &manifest, &text, Some("jest"));
        }
    }
    let json_config = root.join("jest.config.json");
    if let Ok(text) = std::fs::read_to_string(&json_config) {
        return patch_json(ws, &json_config, &text, None);
    }
    for name in JS_CONFIGS {
        let path = root.join(name);
        let Ok(text) = std::fs::read_to_string(&path) else {
            continue;
        };
        let flag = if text.contains("testRegex") {
            "testRegex"
        } else if text.contains("testMatch") {
            "testMatch"
        } else {
            return Ok(ConfigPatch::NotNeeded);
        };
        return Ok(ConfigPatch::Degraded {
            path,
            flag: flag.into(),
            reason: format!("{name} sets {flag} in JavaScript; not edited"),
        });
    }
    Ok(ConfigPatch::NotNeeded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rewrite::tree_hash;

    fn project(manifest: &str) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("package.json"), manifest).unwrap();
        dir
    }

    #[test]
    fn restricted_match_is_extended_and_restored() {
        let dir = project(r#"{"name":"p","jest":{"testMatch":["<rootDir>/src/**/*.test.js"]}}"#);
        let before = tree_hash(dir.path());
        let mut ws = Workspace::open(dir.path()).unwrap();
        let patch = patch_config(&mut ws).unwrap();
        assert!(matches!(&patch, ConfigPatch::Patched { keys, .. } if keys == &["testMatch"]));
        let text = std::fs::read_to_string(dir.path().join("package.json")).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["jest"]["testMatch"][1], VARIANT_GLOB);
        assert_eq!(v.as_object().unwrap().keys().next().unwrap(), "name");
        ws.close().unwrap();
        assert_eq!(tree_hash(dir.path()), before);
    }

    #[test]
    fn regex_config_in_json_file() {
        let dir = project(r#"{"name":"p"}"#);
        std::fs::write(
            dir.path().join("jest.config.json"),
            r#"{"testRegex":"/test/.*-spec\\.js$"}"#,
        )
        .unwrap();
        let mut ws = Workspace::open(dir.path()).unwrap();
        let patch = patch_config(&mut ws).unwrap();
        assert!(matches!(&patch, ConfigPatch::Patched { keys, .. } if keys == &["testRegex"]));
        let v: Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("jest.config.json")).unwrap()).unwrap();
        let re = regex::Regex::new(v["testRegex"][1].as_str().unwrap()).unwrap();
        assert!(re.is_match("/x/test/katex-spec.jstod-test-03.js"));
        assert!(!re.is_match("/x/test/katex-spec.js"));
    }

    #[test]
    fn default_config_needs_nothing() {
        let dir = project(r#"{"name":"p","devDependencies":{"jest":"^29.0.0"}}"#);
        let mut ws = Workspace::open(dir.path()).unwrap();
        assert_eq!(patch_config(&mut ws).unwrap(), ConfigPatch::NotNeeded);
        assert!(ws.journal().entries.is_empty());
    }

    #[test]
    fn javascript_config_degrades() {
        let dir = project(r#"{"name":"p"}"#);
        std::fs::write(
            dir.path().join("jest.config.js"),
            "module.exports = { testMatch: ['**/test/*-spec.js'] };\n",
        )
        .unwrap();
        let mut ws = Workspace::open(dir.path()).unwrap();
        let patch = patch_config(&mut ws).unwrap();
        assert!(matches!(patch, ConfigPatch::Degraded { .. }));
        assert_eq!(
            patch.selection_args(Path::new("/p/test/a.jstod-test-00.js")),
            ["--testMatch=/p/test/a.jstod-test-00.js"]
        );
    }

    #[test]
    fn unparseable_manifest_section_degrades() {
        let dir = project(r#"{"name":"p","jest":"./config/jest.js"}"#);
        let mut ws = Workspace::open(dir.path()).unwrap();
        assert!(matches!(patch_config(&mut ws).unwrap(), ConfigPatch::Degraded { .. }));
    }
}
