//! Project discovery: runner detection, suite listing, structure counts and
//! the default-order baseline that gates which projects are reordered.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use walkdir::WalkDir;

use crate::orchestrate::{run_baseline, OrderExecutor, Outcome, RunLedger, RunRecord};
use crate::permute::Level;
use crate::rewrite::{MASK_SUFFIX, VARIANT_MARKER};
use crate::testmodel::{parse_test_file, ItemKind, TestTree};

/// First runner major version with the `testSequencer` option.
pub const SEQUENCER_MIN_MAJOR: u64 = 24;

const TEST_EXTENSIONS: &[&str] = &["js", "jsx", "ts", "tsx"];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("no package.json in {0}")]
    ManifestMissing(PathBuf),
    #[error("package.json in {0} could not be parsed: {1}")]
    ManifestInvalid(PathBuf, String),
    #[error("jest is not declared in {0}/package.json")]
    RunnerAbsent(PathBuf),
    #[error("no test files found in {root}: {reason}")]
    ListFailed { root: PathBuf, reason: String },
    #[error("runner crashed during the baseline run: {0}")]
    RunnerCrashed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ListingSource {
    Runner,
    Glob,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub n_suites: usize,
    pub n_describes: usize,
    pub n_tests: usize,
}

impl Counts {
    pub fn at(&self, level: Level) -> usize {
        match level {
            Level::Test => self.n_tests,
            Level::Describe => self.n_describes,
            Level::Suite => self.n_suites,
        }
    }

    /// A level is worth reordering when it has at least two units.
    pub fn eligible(&self, level: Level) -> bool {
        self.at(level) >= 2
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseFailure {
    pub path: PathBuf,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub reruns: u32,
    pub eligible: bool,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectInfo {
    pub root_path: PathBuf,
    /// Declared (or installed) runner version; `None` when not a version.
    pub runner_version: Option<String>,
    pub sequencer_supported: bool,
    pub suite_paths: Vec<PathBuf>,
    pub listing: Option<ListingSource>,
    pub counts: Counts,
    pub parse_failures: Vec<ParseFailure>,
    pub baseline: Option<BaselineSummary>,
    #[serde(skip)]
    pub trees: Vec<TestTree>,
}

impl ProjectInfo {
    pub fn levels_enabled(&self) -> Vec<Level> {
        Level::ALL
            .into_iter()
            .filter(|l| self.counts.eligible(*l))
            .filter(|l| *l != Level::Suite || self.sequencer_supported)
            .collect()
    }

    pub fn tree(&self, suite: &Path) -> Option<&TestTree> {
        self.trees.iter().find(|t| t.file_path == suite)
    }
}

/// Leading `major[.minor[.patch]]` of a version or range string.
pub fn parse_version(spec: &str) -> Option<(u64, u64, u64)> {
    let start = spec.find(|c: char| c.is_ascii_digit())?;
    let mut parts = spec[start..]
        .split(|c: char| !c.is_ascii_digit() && c != '.')
        .next()?
        .split('.')
        .map(|p| p.parse::<u64>().ok());
    let major = parts.next()??;
    let minor = parts.next().flatten().unwrap_or(0);
    let patch = parts.next().flatten().unwrap_or(0);
    Some((major, minor, patch))
}

fn declared_runner(manifest: &Value) -> Option<String> {
    [
        "devDependencies",
        "dependencies",
        "peerDependencies",
        "optionalDependencies",
    ]
    .iter()
    .find_map(|section| manifest.get(section)?.get("jest")?.as_str().map(str::to_string))
}

fn installed_runner(root: &Path) -> Option<String> {
    let text = std::fs::read_to_string(root.join("node_modules/jest/package.json")).ok()?;
    let v: Value = serde_json::from_str(&text).ok()?;
    v.get("version")?.as_str().map(str::to_string)
}

pub fn detect_runner(root: &Path) -> Result<ProjectInfo, CorpusError> {
    let manifest_path = root.join("package.json");
    let text = std::fs::read_to_string(&manifest_path).map_err(|_| CorpusError::ManifestMissing(root.to_path_buf()))?;
    let manifest: Value =
        serde_json::from_str(&text).map_err(|e| CorpusError::ManifestInvalid(root.to_path_buf(), e.to_string()))?;
    let declared = declared_runner(&manifest).ok_or_else(|| CorpusError::RunnerAbsent(root.to_path_buf()))?;
    let version = installed_runner(root).unwrap_or(declared);
    let parsed = parse_version(&version);
    // tags such as "latest" resolve to a modern release
    let sequencer_supported = parsed.is_none_or(|(major, _, _)| major >= SEQUENCER_MIN_MAJOR);
    Ok(ProjectInfo {
        root_path: root.to_path_buf(),
        runner_version: parsed.map(|_| version),
        sequencer_supported,
        suite_paths: Vec::new(),
        listing: None,
        counts: Counts::default(),
        parse_failures: Vec::new(),
        baseline: None,
        trees: Vec::new(),
    })
}

/// Something that can ask the runner for its test files.
pub trait SuiteLister {
    fn list_tests(&self, root: &Path) -> Result<Vec<PathBuf>, String>;
}

fn is_generated(path: &Path) -> bool {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    name.contains(&format!(".{VARIANT_MARKER}-")) || name.ends_with(MASK_SUFFIX)
}

/// Conventional test-file names, as the runner's defaults select them.
pub fn is_conventional_test_file(path: &Path) -> bool {
    let Some(ext) = path.extension().and_then(|e| e.to_str()) else {
        return false;
    };
    if !TEST_EXTENSIONS.contains(&ext) || is_generated(path) {
        return false;
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    let stem = &name[..name.len() - ext.len() - 1];
    stem.ends_with(".test") || stem.ends_with(".spec") || path.components().any(|c| c.as_os_str() == "__tests__")
}

pub fn glob_suites(root: &Path) -> Vec<PathBuf> {
    WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| {
            e.depth() == 0
                || !e
                    .file_name()
                    .to_str()
                    .is_some_and(|n| n == "node_modules" || n.starts_with('.'))
        })
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file() && is_conventional_test_file(e.path()))
        .map(|e| e.into_path())
        .collect()
}

fn normalize(root: &Path, paths: Vec<PathBuf>) -> Vec<PathBuf> {
    let set: BTreeSet<PathBuf> = paths
        .into_iter()
        .map(|p| if p.is_absolute() { p } else { root.join(p) })
        .filter_map(|p| p.canonicalize().ok())
        .filter(|p| p.is_file() && !is_generated(p))
        .collect();
    set.into_iter().collect()
}

/// Runner-reported suites, or a conventional-name scan when the runner
/// cannot list them. Output is absolute, sorted and deduplicated.
pub fn list_suites(project: &mut ProjectInfo, lister: &dyn SuiteLister) -> Result<Vec<PathBuf>, CorpusError> {
    let root = project.root_path.clone();
    let (paths, source, runner_error) = match lister.list_tests(&root) {
        Ok(p) if !p.is_empty() => (normalize(&root, p), ListingSource::Runner, None),
        Ok(_) => (
            normalize(&root, glob_suites(&root)),
            ListingSource::Glob,
            Some("runner listed nothing".to_string()),
        ),
        Err(e) => (normalize(&root, glob_suites(&root)), ListingSource::Glob, Some(e)),
    };
    if paths.is_empty() {
        return Err(CorpusError::ListFailed {
            root,
            reason: runner_error.unwrap_or_else(|| "no conventional test files".into()),
        });
    }
    project.suite_paths = paths.clone();
    project.listing = Some(source);
    Ok(paths)
}

/// Parses every suite and fills in the structure counts. Files that fail
/// to parse are recorded and skipped.
pub fn scan_structure(project: &mut ProjectInfo) {
    project.trees.clear();
    project.parse_failures.clear();
    for path in &project.suite_paths {
        match parse_test_file(path) {
            Ok(tree) => project.trees.push(tree),
            Err(e) => project.parse_failures.push(ParseFailure {
                path: path.clone(),
                error: e.to_string(),
            }),
        }
    }
    project.counts = Counts {
        n_suites: project.suite_paths.len(),
        n_describes: project.trees.iter().map(|t| t.count(ItemKind::Describe)).sum(),
        n_tests: project.trees.iter().map(|t| t.count(ItemKind::Test)).sum(),
    };
}

#[derive(Debug, Clone)]
pub struct Baseline {
    pub records: Vec<RunRecord>,
    pub summary: BaselineSummary,
}

/// Runs the default order `reruns` times and decides eligibility: every
/// test must pass every rerun.
pub fn baseline_run<E: OrderExecutor + ?Sized>(
    executor: &mut E,
    default_order: &[String],
    reruns: u32,
    ledger: &mut RunLedger,
) -> Result<Baseline, CorpusError> {
    let records = run_baseline(executor, Level::Suite, default_order, reruns, ledger);
    if let Some(bad) = records.iter().find(|r| !r.is_completed()) {
        let reason = match &bad.status {
            crate::orchestrate::RunStatus::Infrastructure { reason } => reason.clone(),
            _ => unreachable!(),
        };
        return Err(CorpusError::RunnerCrashed(reason));
    }
    let mut tallies: BTreeMap<&str, (u32, u32)> = BTreeMap::new();
    for r in &records {
        for (id, o) in &r.outcomes {
            let t = tallies.entry(id).or_default();
            match o {
                Outcome::Pass => t.0 += 1,
                Outcome::Fail => t.1 += 1,
                Outcome::Skip => {}
            }
        }
    }
    let reasons: Vec<String> = tallies
        .iter()
        .filter(|(_, (_, fail))| *fail > 0)
        .map(|(id, (pass, fail))| {
            if *pass == 0 {
                format!("{id} fails in default order ({fail}/{} reruns)", pass + fail)
            } else {
                format!("{id} is flaky in default order ({pass}/{} passed)", pass + fail)
            }
        })
        .collect();
    Ok(Baseline {
        summary: BaselineSummary {
            reruns,
            eligible: reasons.is_empty(),
            reasons,
        },
        records,
    })
}
