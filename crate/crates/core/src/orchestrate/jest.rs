//! Jest subprocess backend: command construction, report parsing and the
//! executors for the suite, describe and test levels.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::Deserialize;

use super::{ExecRequest, Execution, OrderExecutor, Outcome, ProbeError, BASELINE_GROUP};
use crate::permute::{Level, OrderPlan};
use crate::rewrite::{generate_name, render_variant, variant_test_order, ConfigPatch, RewriteError, Workspace};
use crate::testmodel::{ItemKind, ItemPath, SiblingGroup, TestTree};

/// The vendored sequencer, written next to each run's reports.
pub const SHIM_SOURCE: &str = include_str!("../../assets/custom-sequencer.js");
pub const SHIM_FILE_NAME: &str = "custom-sequencer.js";
/// Environment variable the shim reads when `--order=` is absent.
pub const ORDER_ENV: &str = "JSTOD_ORDER";

/// Variables that switch the runner into CI behavior.
pub const CI_ENV_VARS: &[&str] = &[
    "CI",
    "CONTINUOUS_INTEGRATION",
    "BUILD_NUMBER",
    "RUN_ID",
    "GITHUB_ACTIONS",
    "GITLAB_CI",
    "TRAVIS",
    "CIRCLECI",
    "BUILDKITE",
    "JENKINS_URL",
    "TF_BUILD",
];

const POLL: Duration = Duration::from_millis(20);

pub fn write_shim(dir: &Path) -> std::io::Result<PathBuf> {
    let path = dir.join(SHIM_FILE_NAME);
    std::fs::write(&path, SHIM_SOURCE)?;
    Ok(path)
}

/// What one invocation selects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selection {
    /// Every suite, default order.
    All,
    /// Every suite, sequenced by the shim in the given order.
    Suites { shim: PathBuf, order: Vec<String> },
    /// One file (a variant) only.
    File { path: PathBuf, extra: Vec<String> },
    /// One test of one file.
    Isolate { path: PathBuf, pattern: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JestCommand {
    pub program: String,
    pub args: Vec<String>,
    pub env: Vec<(String, String)>,
    pub env_remove: Vec<String>,
    pub cwd: PathBuf,
}

fn path_arg(path: &Path) -> String {
    let s = path.display().to_string();
    if s.chars().all(|c| c.is_ascii_alphanumeric() || "_./-".contains(c)) {
        s
    } else {
        regex::escape(&s)
    }
}

/// `<runner> --runInBand --json --outputFile=<report>` plus the selection.
pub fn build_command(
    runner: &[String],
    root: &Path,
    report: &Path,
    selection: &Selection,
    cache_dir: Option<&Path>,
) -> JestCommand {
    let (program, base) = runner.split_first().expect("runner command is not empty");
    let mut args: Vec<String> = base.to_vec();
    args.extend([
        "--runInBand".to_string(),
        "--json".to_string(),
        format!("--outputFile={}", report.display()),
    ]);
    let mut env = Vec::new();
    match selection {
        Selection::All => {}
        Selection::Suites { shim, order } => {
            let joined = order.join(",");
            args.push(format!("--testSequencer={}", shim.display()));
            args.push(format!("--order={joined}"));
            env.push((ORDER_ENV.to_string(), joined));
        }
        Selection::File { path, extra } => {
            args.extend(extra.iter().cloned());
            args.push(path_arg(path));
        }
        Selection::Isolate { path, pattern } => {
            args.push(format!("--testNamePattern={pattern}"));
            args.push(path_arg(path));
        }
    }
    if let Some(dir) = cache_dir {
        args.push(format!("--cacheDirectory={}", dir.display()));
    }
    JestCommand {
        program: program.clone(),
        args,
        env,
        env_remove: CI_ENV_VARS.iter().map(|s| s.to_string()).collect(),
        cwd: root.to_path_buf(),
    }
}

#[derive(Debug, Clone)]
pub struct ProcessOutput {
    pub exit_code: Option<i32>,
    pub timed_out: bool,
    pub duration: Duration,
    pub stdout: String,
    pub stderr: String,
}

/// Spawns, waits up to `timeout` and kills on expiry.
pub fn run_process(cmd: &JestCommand, timeout: Option<Duration>) -> std::io::Result<ProcessOutput> {
    let mut command = Command::new(&cmd.program);
    command
        .args(&cmd.args)
        .current_dir(&cmd.cwd)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    for k in &cmd.env_remove {
        command.env_remove(k);
    }
    for (k, v) in &cmd.env {
        command.env(k, v);
    }
    #[cfg(unix)]
    std::os::unix::process::CommandExt::process_group(&mut command, 0);
    let started = Instant::now();
    let mut child = command.spawn()?;
    let drain = |mut r: Box<dyn Read + Send>| {
        std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = r.read_to_end(&mut buf);
            String::from_utf8_lossy(&buf).into_owned()
        })
    };
    let out = drain(Box::new(child.stdout.take().expect("piped")));
    let err = drain(Box::new(child.stderr.take().expect("piped")));
    let mut timed_out = false;
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if timeout.is_some_and(|t| started.elapsed() >= t) {
            timed_out = true;
            kill_tree(&mut child);
            break child.wait()?;
        }
        std::thread::sleep(POLL);
    };
    Ok(ProcessOutput {
        exit_code: status.code(),
        timed_out,
        duration: started.elapsed(),
        stdout: out.join().unwrap_or_default(),
        stderr: err.join().unwrap_or_default(),
    })
}

/// Kills the child's whole process group (npx forks the real runner).
fn kill_tree(child: &mut std::process::Child) {
    #[cfg(unix)]
    if let Ok(pgid) = libc::pid_t::try_from(child.id()) {
        if pgid > 1 {
            // SAFETY: signals only the group created for this child
            unsafe {
                libc::killpg(pgid, libc::SIGKILL);
            }
        }
    }
    let _ = child.kill();
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JestReport {
    #[serde(default)]
    pub test_results: Vec<SuiteResult>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SuiteResult {
    pub name: String,
    #[serde(default)]
    pub status: String,
    #[serde(default)]
    pub message: String,
    #[serde(default)]
    pub assertion_results: Vec<AssertionResult>,
    #[serde(default)]
    pub start_time: Option<f64>,
    #[serde(default)]
    pub end_time: Option<f64>,
}

impl SuiteResult {
    pub fn duration(&self) -> Option<Duration> {
        match (self.start_time, self.end_time) {
            (Some(s), Some(e)) if e >= s => Some(Duration::from_secs_f64((e - s) / 1000.0)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AssertionResult {
    #[serde(default)]
    pub ancestor_titles: Vec<String>,
    pub title: String,
    pub status: String,
}

impl AssertionResult {
    pub fn outcome(&self) -> Outcome {
        match self.status.as_str() {
            "passed" => Outcome::Pass,
            "failed" => Outcome::Fail,
            _ => Outcome::Skip,
        }
    }

    pub fn titles(&self) -> Vec<String> {
        let mut t = self.ancestor_titles.clone();
        t.push(self.title.clone());
        t
    }
}

pub fn parse_report(text: &str) -> Result<JestReport, String> {
    serde_json::from_str(text).map_err(|e| format!("unparseable report: {e}"))
}

fn placeholder() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"%[sdifjopP#%]|\$[A-Za-z_$][\w$]*(?:\.[A-Za-z_$][\w$]*)*").expect("valid regex"))
}

#[derive(Debug, Clone)]
enum TitleMatcher {
    Exact(String),
    Template(Regex),
    Any,
}

impl TitleMatcher {
    fn for_item(name: &str, callee: &str, dynamic: bool) -> Self {
        if dynamic {
            return TitleMatcher::Any;
        }
        if callee.contains(".each") && placeholder().is_match(name) {
            let mut re = String::from("^");
            let mut last = 0;
            for m in placeholder().find_iter(name) {
                re.push_str(&regex::escape(&name[last..m.start()]));
                re.push_str(if m.as_str() == "%%" { "%" } else { "(?s:.*)" });
                last = m.end();
            }
            re.push_str(&regex::escape(&name[last..]));
            re.push('$');
            return TitleMatcher::Template(Regex::new(&re).expect("escaped template"));
        }
        TitleMatcher::Exact(name.to_string())
    }

    fn matches(&self, title: &str) -> bool {
        match self {
            TitleMatcher::Exact(s) => s == title,
            TitleMatcher::Template(re) => re.is_match(title),
            TitleMatcher::Any => true,
        }
    }

    fn pattern(&self) -> String {
        match self {
            TitleMatcher::Exact(s) => regex::escape(s),
            TitleMatcher::Template(re) => re.as_str().trim_start_matches('^').trim_end_matches('$').to_string(),
            TitleMatcher::Any => ".*".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
struct IndexEntry {
    id: String,
    titles: Vec<TitleMatcher>,
    literal: bool,
}

impl IndexEntry {
    fn matches(&self, titles: &[String]) -> bool {
        self.titles.len() == titles.len() && self.titles.iter().zip(titles).all(|(m, t)| m.matches(t))
    }
}

/// Maps a suite's reported titles back to test ids.
#[derive(Debug, Clone)]
pub struct SuiteIndex {
    pub suite: String,
    entries: Vec<IndexEntry>,
    /// Test ids in execution order, for positional fallback.
    positional: Vec<String>,
}

impl SuiteIndex {
    pub fn from_tree(tree: &TestTree) -> Self {
        let positional = tree.tests().iter().map(|t| t.id.clone()).collect();
        Self::with_order(tree, positional)
    }

    pub fn with_order(tree: &TestTree, positional: Vec<String>) -> Self {
        let entries = tree
            .tests()
            .into_iter()
            .map(|t| {
                let titles: Vec<TitleMatcher> = (1..=t.path.0.len())
                    .filter_map(|n| tree.item(&ItemPath(t.path.0[..n].to_vec())))
                    .map(|i| TitleMatcher::for_item(&i.name, &i.callee, i.is_dynamic()))
                    .collect();
                let literal = !titles.iter().any(|m| matches!(m, TitleMatcher::Any));
                IndexEntry {
                    id: t.id.clone(),
                    titles,
                    literal,
                }
            })
            .collect();
        SuiteIndex {
            suite: tree.file_path.display().to_string(),
            entries,
            positional,
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    /// Anchored `--testNamePattern` selecting exactly `test_id`.
    pub fn isolation_pattern(&self, test_id: &str) -> Result<String, ProbeError> {
        let entry = self
            .entries
            .iter()
            .find(|e| e.id == test_id)
            .ok_or_else(|| ProbeError::UnknownTest(test_id.to_string()))?;
        if !entry.literal {
            return Err(ProbeError::DynamicName(test_id.to_string()));
        }
        let pattern = format!(
            "^{}$",
            entry
                .titles
                .iter()
                .map(TitleMatcher::pattern)
                .collect::<Vec<_>>()
                .join(" ")
        );
        let re = Regex::new(&pattern).map_err(|_| ProbeError::AmbiguousPattern(test_id.to_string()))?;
        let clash = self.entries.iter().filter(|e| e.id != test_id).any(|e| {
            !e.literal
                || e.titles
                    .iter()
                    .map(|m| match m {
                        TitleMatcher::Exact(s) => Some(s.clone()),
                        _ => None,
                    })
                    .collect::<Option<Vec<_>>>()
                    .is_none_or(|t| re.is_match(&t.join(" ")))
        });
        if clash {
            return Err(ProbeError::AmbiguousPattern(test_id.to_string()));
        }
        Ok(pattern)
    }

    /// Folds one suite's results into `outcomes`; returns the suite outcome.
    pub fn map_results(&self, result: &SuiteResult, outcomes: &mut BTreeMap<String, Outcome>) -> Outcome {
        let mut hits: HashMap<usize, usize> = HashMap::new();
        let mut assigned: Vec<bool> = vec![false; self.entries.len()];
        let mut unmatched: Vec<&AssertionResult> = Vec::new();
        let mut suite = Outcome::Skip;
        let record = |id: &str, o: Outcome, out: &mut BTreeMap<String, Outcome>| {
            let merged = out.get(id).map_or(o, |prev| prev.merge(o));
            out.insert(id.to_string(), merged);
        };
        for a in &result.assertion_results {
            let titles = a.titles();
            suite = suite.merge(a.outcome());
            let literal: Vec<usize> = (0..self.entries.len())
                .filter(|&i| self.entries[i].literal && self.entries[i].matches(&titles))
                .collect();
            let chosen = if literal.is_empty() {
                None
            } else {
                // the k-th duplicate title belongs to the k-th such test
                let key = literal[0];
                let k = hits.entry(key).or_insert(0);
                let pick = literal[(*k).min(literal.len() - 1)];
                *k += 1;
                Some(pick)
            };
            match chosen {
                Some(i) => {
                    assigned[i] = true;
                    record(&self.entries[i].id, a.outcome(), outcomes);
                }
                None => unmatched.push(a),
            }
        }
        // leftovers go, in order, to tests that received nothing
        let by_id: HashMap<&str, usize> = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id.as_str(), i))
            .collect();
        let mut free = self
            .positional
            .iter()
            .filter_map(|id| by_id.get(id.as_str()).copied())
            .filter(|&i| !assigned[i] && !self.entries[i].literal);
        for a in unmatched {
            match free.next() {
                Some(i) => record(&self.entries[i].id, a.outcome(), outcomes),
                None => record(
                    &format!("{}#{}", self.suite, a.titles().join(" > ")),
                    a.outcome(),
                    outcomes,
                ),
            }
        }
        if result.assertion_results.is_empty() && result.status == "failed" {
            for e in &self.entries {
                outcomes.insert(e.id.clone(), Outcome::Fail);
            }
        }
        if result.status == "failed" {
            suite = Outcome::Fail;
        }
        suite
    }
}

/// Per-reported-path indexes for one invocation.
#[derive(Debug, Clone, Default)]
pub struct ReportIndex {
    suites: HashMap<PathBuf, SuiteIndex>,
}

fn canonical(p: &Path) -> PathBuf {
    p.canonicalize().unwrap_or_else(|_| p.to_path_buf())
}

impl ReportIndex {
    pub fn from_trees<'a>(trees: impl IntoIterator<Item = &'a TestTree>) -> Self {
        let suites = trees
            .into_iter()
            .map(|t| (canonical(&t.file_path), SuiteIndex::from_tree(t)))
            .collect();
        ReportIndex { suites }
    }

    pub fn insert(&mut self, reported_path: &Path, index: SuiteIndex) {
        self.suites.insert(canonical(reported_path), index);
    }

    pub fn get(&self, path: &Path) -> Option<&SuiteIndex> {
        self.suites.get(&canonical(path))
    }

    /// Test outcomes and suite outcomes of a whole report.
    pub fn map_report(&self, report: &JestReport) -> (BTreeMap<String, Outcome>, BTreeMap<String, Outcome>) {
        let mut outcomes = BTreeMap::new();
        let mut suites = BTreeMap::new();
        for result in &report.test_results {
            let path = PathBuf::from(&result.name);
            let (suite, outcome) = match self.get(&path) {
                Some(index) => (index.suite.clone(), index.map_results(result, &mut outcomes)),
                None => {
                    let orphan = SuiteIndex {
                        suite: result.name.clone(),
                        entries: Vec::new(),
                        positional: Vec::new(),
                    };
                    (result.name.clone(), orphan.map_results(result, &mut outcomes))
                }
            };
            let merged = suites.get(&suite).map_or(outcome, |prev: &Outcome| prev.merge(outcome));
            suites.insert(suite, merged);
        }
        (outcomes, suites)
    }
}

/// Shared state for invoking the runner in one project.
#[derive(Debug)]
pub struct JestRunner {
    pub root: PathBuf,
    /// Program and leading arguments; `npx jest` unless overridden.
    pub runner: Vec<String>,
    pub timeout: Option<Duration>,
    pub index: ReportIndex,
    pub sequencer_supported: bool,
    work: tempfile::TempDir,
    shim: PathBuf,
    invocations: usize,
    keep_reports: Option<PathBuf>,
}

impl JestRunner {
    pub fn new(root: &Path, trees: &[TestTree]) -> std::io::Result<Self> {
        let work = tempfile::Builder::new().prefix("jstod-").tempdir()?;
        let shim = write_shim(work.path())?;
        Ok(JestRunner {
            root: canonical(root),
            runner: vec!["npx".into(), "jest".into()],
            timeout: None,
            index: ReportIndex::from_trees(trees),
            sequencer_supported: true,
            work,
            shim,
            invocations: 0,
            keep_reports: None,
        })
    }

    pub fn shim_path(&self) -> &Path {
        &self.shim
    }

    /// Keeps raw reports in `dir` instead of the temporary work directory.
    pub fn keep_reports_in(&mut self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        self.keep_reports = Some(dir.to_path_buf());
        Ok(())
    }

    pub fn cache_dir(&self, key: &str) -> PathBuf {
        self.work.path().join("cache").join(key)
    }

    /// One invocation; an unusable report is an infrastructure result.
    pub fn invoke(&mut self, selection: &Selection, cache_key: &str, index: &ReportIndex) -> Execution {
        self.invocations += 1;
        let dir = self
            .keep_reports
            .clone()
            .unwrap_or_else(|| self.work.path().join("reports"));
        if let Err(e) = std::fs::create_dir_all(&dir) {
            return Execution::infrastructure(format!("report directory: {e}"));
        }
        let report = dir.join(format!("report-{:05}.json", self.invocations));
        let cache = self.cache_dir(cache_key);
        let cmd = build_command(&self.runner, &self.root, &report, selection, Some(&cache));
        let out = match run_process(&cmd, self.timeout) {
            Ok(o) => o,
            Err(e) => return Execution::infrastructure(format!("could not start {}: {e}", cmd.program)),
        };
        let mut exec = if out.timed_out {
            Execution::infrastructure(format!("timed out after {:.0}s", out.duration.as_secs_f64()))
        } else {
            match std::fs::read_to_string(&report)
                .map_err(|e| format!("no report ({e})"))
                .and_then(|t| parse_report(&t))
            {
                Ok(r) => {
                    let (outcomes, suites) = index.map_report(&r);
                    let mut e = Execution::completed(outcomes);
                    e.suites = suites;
                    e
                }
                Err(reason) => {
                    let tail: String = out
                        .stderr
                        .lines()
                        .rev()
                        .take(5)
                        .collect::<Vec<_>>()
                        .into_iter()
                        .rev()
                        .collect::<Vec<_>>()
                        .join("\n");
                    Execution::infrastructure(format!("exit {:?}, {reason}; stderr: {tail}", out.exit_code))
                }
            }
        };
        exec.exit_code = out.exit_code;
        exec.duration = out.duration;
        exec.raw_report_path = report.exists().then_some(report);
        exec
    }

    fn suite_for_test(&self, test_id: &str) -> Option<(PathBuf, &SuiteIndex)> {
        self.index
            .suites
            .iter()
            .find(|(_, idx)| idx.ids().any(|id| id == test_id))
            .map(|(p, idx)| (p.clone(), idx))
    }

    /// Runs one test alone in its original file.
    pub fn probe(&mut self, test_id: &str) -> Result<Execution, ProbeError> {
        let (path, idx) = self
            .suite_for_test(test_id)
            .ok_or_else(|| ProbeError::UnknownTest(test_id.to_string()))?;
        let pattern = idx.isolation_pattern(test_id)?;
        let index = self.index.clone();
        Ok(self.invoke(&Selection::Isolate { path, pattern }, "isolate", &index))
    }
}

fn group_key(group_id: &str, order_id: usize) -> String {
    format!(
        "{}-{order_id}",
        &crate::testmodel::sha256_hex(group_id.as_bytes())[..12]
    )
}

/// Baseline runs, suite-level orders through the sequencer, and probes.
impl OrderExecutor for JestRunner {
    fn execute(&mut self, request: &ExecRequest<'_>) -> Execution {
        let index = self.index.clone();
        if request.group_id == BASELINE_GROUP {
            // the default sequencer reorders by cached failures and timings
            let key = format!("{BASELINE_GROUP}-{}", request.rerun_index);
            return self.invoke(&Selection::All, &key, &index);
        }
        if request.level != Level::Suite {
            return Execution::infrastructure("item-level orders need a variant executor");
        }
        if !self.sequencer_supported {
            return Execution::infrastructure("runner version predates testSequencer");
        }
        let selection = Selection::Suites {
            shim: self.shim.clone(),
            order: request.order.to_vec(),
        };
        self.invoke(&selection, &group_key(request.group_id, request.order_id), &index)
    }

    fn isolate(&mut self, test_id: &str) -> Result<Execution, ProbeError> {
        self.probe(test_id)
    }
}

fn snapshot_path(file: &Path) -> Option<PathBuf> {
    Some(
        file.parent()?
            .join("__snapshots__")
            .join(format!("{}.snap", file.file_name()?.to_str()?)),
    )
}

/// Materializes each order of one sibling group as a variant file while
/// the original is masked.
pub struct JestVariantExecutor<'a> {
    runner: &'a mut JestRunner,
    ws: &'a mut Workspace,
    tree: &'a TestTree,
    group: &'a SiblingGroup,
    patch: &'a ConfigPatch,
    current: Option<Materialized>,
}

struct Materialized {
    variant: PathBuf,
    snapshot: Option<(PathBuf, bool)>,
    index: ReportIndex,
}

impl<'a> JestVariantExecutor<'a> {
    pub fn new(
        runner: &'a mut JestRunner,
        ws: &'a mut Workspace,
        tree: &'a TestTree,
        group: &'a SiblingGroup,
        patch: &'a ConfigPatch,
    ) -> Result<Self, RewriteError> {
        ws.mask(&tree.file_path)?;
        Ok(JestVariantExecutor {
            runner,
            ws,
            tree,
            group,
            patch,
            current: None,
        })
    }

    /// Removes any live variant and restores the original file.
    pub fn finish(mut self) -> Result<(), RewriteError> {
        self.teardown()?;
        self.ws.unmask(&self.tree.file_path)
    }

    fn teardown(&mut self) -> Result<(), RewriteError> {
        let Some(m) = self.current.take() else {
            return Ok(());
        };
        self.ws.remove_created(&m.variant)?;
        if let Some((snap, created)) = m.snapshot {
            if created {
                self.ws.remove_created(&snap)?;
            } else if snap.exists() {
                // written by the runner itself
                std::fs::remove_file(&snap).map_err(crate::rewrite::io_err(&snap))?;
                if let Some(dir) = snap.parent() {
                    let _ = std::fs::remove_dir(dir);
                }
            }
        }
        Ok(())
    }

    fn materialize(&mut self, plan: &OrderPlan, order_id: usize) -> Result<(), RewriteError> {
        let order = &plan.orders[order_id];
        let content = render_variant(self.tree, self.group, order)?;
        let variant = generate_name(&self.tree.file_path, self.group.level, order_id)?;
        self.ws.create_file(&variant, &content)?;
        let mut snapshot = None;
        if let (Some(orig), Some(copy)) = (snapshot_path(&self.tree.file_path), snapshot_path(&variant)) {
            let created = match std::fs::read_to_string(&orig) {
                Ok(text) => {
                    self.ws.create_file(&copy, &text)?;
                    true
                }
                Err(_) => false,
            };
            snapshot = Some((copy, created));
        }
        let mut index = ReportIndex::default();
        let positional = variant_test_order(self.tree, self.group, order)?;
        index.insert(&variant, SuiteIndex::with_order(self.tree, positional));
        self.current = Some(Materialized {
            variant,
            snapshot,
            index,
        });
        Ok(())
    }
}

impl OrderExecutor for JestVariantExecutor<'_> {
    fn begin_order(&mut self, plan: &OrderPlan, order_id: usize) -> Result<(), String> {
        self.teardown().map_err(|e| e.to_string())?;
        self.materialize(plan, order_id).map_err(|e| e.to_string())
    }

    fn end_order(&mut self, _plan: &OrderPlan, _order_id: usize) {
        let _ = self.teardown();
    }

    fn execute(&mut self, request: &ExecRequest<'_>) -> Execution {
        let Some(m) = &self.current else {
            return Execution::infrastructure("no variant materialized");
        };
        let selection = Selection::File {
            path: m.variant.clone(),
            extra: self.patch.selection_args(&m.variant),
        };
        let index = m.index.clone();
        let key = group_key(request.group_id, request.order_id);
        self.runner.invoke(&selection, &key, &index)
    }
}

impl Drop for JestVariantExecutor<'_> {
    fn drop(&mut self) {
        let _ = self.teardown();
    }
}

/// `npx jest --listTests`, one absolute path per line.
#[derive(Debug, Clone)]
pub struct JestLister {
    pub runner: Vec<String>,
    pub timeout: Option<Duration>,
}

impl Default for JestLister {
    fn default() -> Self {
        JestLister {
            runner: vec!["npx".into(), "jest".into()],
            timeout: Some(Duration::from_secs(300)),
        }
    }
}

impl crate::corpus::SuiteLister for JestLister {
    fn list_tests(&self, root: &Path) -> Result<Vec<PathBuf>, String> {
        let (program, base) = self.runner.split_first().ok_or("empty runner command")?;
        let mut args = base.to_vec();
        args.push("--listTests".into());
        let cmd = JestCommand {
            program: program.clone(),
            args,
            env: Vec::new(),
            env_remove: CI_ENV_VARS.iter().map(|s| s.to_string()).collect(),
            cwd: root.to_path_buf(),
        };
        let out = run_process(&cmd, self.timeout).map_err(|e| e.to_string())?;
        if out.timed_out || out.exit_code != Some(0) {
            return Err(format!("--listTests exited {:?}", out.exit_code));
        }
        Ok(out
            .stdout
            .lines()
            .map(str::trim)
            .filter(|l| l.starts_with('/'))
            .map(PathBuf::from)
            .collect())
    }
}

/// Test ids in the tree that a reordering at `level` could affect.
pub fn tests_under(tree: &TestTree, group: &SiblingGroup) -> Vec<String> {
    let mut ids = Vec::new();
    for p in &group.members {
        if let Some(item) = tree.item(p) {
            let mut stack = vec![item];
            while let Some(i) = stack.pop() {
                match i.kind {
                    ItemKind::Test => ids.push(i.id.clone()),
                    ItemKind::Describe => stack.extend(i.children.iter()),
                }
            }
        }
    }
    ids.sort();
    ids
}
