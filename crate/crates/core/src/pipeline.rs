//! End-to-end detection: baseline, per-level order plans, reruns,
//! classification, roles and cause hints.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::{mpsc, Mutex};
use std::time::{Duration, Instant};

use crate::corpus::{self, CorpusError, ProjectInfo};
use crate::orchestrate::jest::{JestLister, JestRunner, JestVariantExecutor};
use crate::orchestrate::{derive_timeout, run_plan, OrderExecutor, RunConfig, RunLedger, RunRecord};
use crate::permute::{group_seed, randomize_group, Level, OrderPlan, PermuteError};
use crate::report::{GroupReport, LevelReport, ProjectReport};
use crate::rewrite::{patch_config, propose_mock_reset_patch, unified_diff, MockResetPatch, RewriteError, Workspace};
use crate::simharness::{Scenario, SimExecutor};
use crate::testmodel::{enumerate_level, suite_of, ItemLevel, TestTree};
use crate::verdict::{assign_roles, classify, hint_cause, CauseKind, Classification, Verdict};

/// Ceiling for default-order runs, before any duration is known.
pub const BASELINE_TIMEOUT: Duration = Duration::from_secs(30 * 60);

/// Group id of the single suite-level group.
pub const SUITE_GROUP: &str = "suites";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Rewrite(#[from] RewriteError),
    #[error(transparent)]
    Permute(#[from] PermuteError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Source text of order units, for cause hints.
pub trait SourceLookup {
    fn source_of(&self, unit: &str) -> Option<String>;
}

impl SourceLookup for () {
    fn source_of(&self, _unit: &str) -> Option<String> {
        None
    }
}

impl SourceLookup for [TestTree] {
    fn source_of(&self, unit: &str) -> Option<String> {
        let suite = suite_of(unit);
        let file = if suite.is_empty() { unit } else { suite };
        let tree = self.iter().find(|t| t.file_path.as_os_str() == file)?;
        if suite.is_empty() {
            return Some(tree.source.clone());
        }
        tree.all_items()
            .into_iter()
            .find(|i| i.id == unit)
            .map(|i| i.span.slice(&tree.source).to_string())
    }
}

/// Classifies one group's records and fills in roles and hints for the
/// order-dependent subjects. Isolation probes go through `prober`, and are
/// cached in `probes` across groups.
pub fn judge_group<P: OrderExecutor + ?Sized>(
    plan: &OrderPlan,
    baseline: &[RunRecord],
    records: &[RunRecord],
    prober: &mut P,
    probes: &mut HashMap<String, Option<RunRecord>>,
    sources: &(impl SourceLookup + ?Sized),
) -> Vec<Verdict> {
    classify(plan.level, &plan.group_id, baseline, records)
        .into_iter()
        .map(|v| {
            if v.classification != Classification::OrderDependent {
                return v;
            }
            let probe = probes
                .entry(v.subject.clone())
                .or_insert_with(|| {
                    prober
                        .isolate(&v.subject)
                        .ok()
                        .map(|e| e.into_record(plan.level, "isolation", 0, 0))
                })
                .clone();
            let mut v = assign_roles(v, probe.as_ref(), plan, records);
            if let Some(src) = sources.source_of(&v.subject) {
                let partner = v.suspected_partner.as_deref().and_then(|p| sources.source_of(p));
                v.cause_hint = Some(hint_cause(&src, partner.as_deref()));
            }
            v
        })
        .collect()
}

pub fn plan_group(
    cfg: &RunConfig,
    level: Level,
    group_id: &str,
    default_order: &[String],
) -> Result<OrderPlan, PermuteError> {
    randomize_group(
        level,
        group_id,
        default_order,
        cfg.reorders,
        group_seed(cfg.seed, group_id),
    )
}

/// Plans, runs and judges one group against any executor.
pub fn detect_group<E: OrderExecutor + ?Sized>(
    exec: &mut E,
    cfg: &RunConfig,
    level: Level,
    group_id: &str,
    default_order: &[String],
    baseline: &[RunRecord],
    ledger: &mut RunLedger,
) -> Result<GroupReport, PermuteError> {
    let plan = plan_group(cfg, level, group_id, default_order)?;
    let records = run_plan(exec, &plan, cfg.reruns, ledger);
    let verdicts = judge_group(&plan, baseline, &records, exec, &mut HashMap::new(), &());
    Ok(GroupReport::new(plan, records, verdicts))
}

/// Runs a simulated scenario as a single test-level group.
pub fn detect_scenario(scenario: &Scenario, cfg: &RunConfig) -> Result<ProjectReport, PipelineError> {
    let started = Instant::now();
    let mut exec = SimExecutor::new(scenario.clone());
    let mut ledger = RunLedger::default();
    let order = scenario.ids();
    let baseline = corpus::baseline_run(&mut exec, &order, cfg.reruns, &mut ledger)?;
    let group = detect_group(
        &mut exec,
        cfg,
        Level::Test,
        &scenario.name,
        &order,
        &baseline.records,
        &mut ledger,
    )?;
    let mut report = ProjectReport::new(&scenario.name, cfg);
    report.baseline = Some(baseline.summary);
    report.levels.push(LevelReport {
        level: Level::Test,
        runtime_secs: started.elapsed().as_secs_f64(),
        groups: vec![group],
    });
    Ok(report)
}

/// Knobs of the Jest flow that are not part of the detection config.
#[derive(Debug, Clone)]
pub struct JestOptions {
    /// Program and leading arguments used to invoke the runner.
    pub runner: Vec<String>,
    /// Where raw runner reports are kept; a temporary directory if unset.
    pub reports_dir: Option<PathBuf>,
}

impl Default for JestOptions {
    fn default() -> Self {
        JestOptions {
            runner: vec!["npx".into(), "jest".into()],
            reports_dir: None,
        }
    }
}

fn item_level(level: Level) -> Option<ItemLevel> {
    match level {
        Level::Test => Some(ItemLevel::Test),
        Level::Describe => Some(ItemLevel::Describe),
        Level::Suite => None,
    }
}

/// Scans a project without running anything.
pub fn scan_project(root: &Path) -> Result<ProjectInfo, PipelineError> {
    scan_with(root, &JestLister::default())
}

pub fn scan_with(root: &Path, lister: &dyn corpus::SuiteLister) -> Result<ProjectInfo, PipelineError> {
    let root = root.canonicalize()?;
    let mut project = corpus::detect_runner(&root)?;
    corpus::list_suites(&mut project, lister)?;
    corpus::scan_structure(&mut project);
    Ok(project)
}

/// Full detection on one Jest project.
pub fn run_jest_project(root: &Path, cfg: &RunConfig, opts: &JestOptions) -> Result<ProjectReport, PipelineError> {
    let lister = JestLister {
        runner: opts.runner.clone(),
        ..JestLister::default()
    };
    let mut project = scan_with(root, &lister)?;
    let mut report = ProjectReport::new(&project.root_path.display().to_string(), cfg);
    report.runner_version = project.runner_version.clone();

    let mut runner = JestRunner::new(&project.root_path, &project.trees)?;
    runner.runner = opts.runner.clone();
    runner.sequencer_supported = project.sequencer_supported;
    runner.timeout = cfg.timeout_per_run.or(Some(BASELINE_TIMEOUT));
    if let Some(dir) = &opts.reports_dir {
        runner.keep_reports_in(dir)?;
    }
    let mut ledger = RunLedger::default();
    let suite_order: Vec<String> = project.suite_paths.iter().map(|p| p.display().to_string()).collect();
    let baseline = corpus::baseline_run(&mut runner, &suite_order, cfg.reruns, &mut ledger)?;
    project.baseline = Some(baseline.summary.clone());
    report.baseline = Some(baseline.summary.clone());
    report.counts = Some(project.counts);
    if !baseline.summary.eligible {
        return Ok(report);
    }
    if cfg.timeout_per_run.is_none() {
        let longest = baseline.records.iter().map(|r| r.duration_secs).fold(0.0, f64::max);
        runner.timeout = Some(derive_timeout(Duration::from_secs_f64(longest)));
    }

    let mut ws = Workspace::open(&project.root_path)?;
    let config_patch = patch_config(&mut ws)?;
    report.config_patch = Some(config_patch.clone());
    let mut probes = HashMap::new();
    let enabled = project.levels_enabled();

    for level in cfg.levels.iter().copied().filter(|l| enabled.contains(l)) {
        let started = Instant::now();
        let mut groups = Vec::new();
        match item_level(level) {
            None => {
                let plan = plan_group(cfg, level, SUITE_GROUP, &suite_order)?;
                let records = run_plan(&mut runner, &plan, cfg.reruns, &mut ledger);
                let verdicts = judge_group(
                    &plan,
                    &baseline.records,
                    &records,
                    &mut runner,
                    &mut probes,
                    &project.trees[..],
                );
                groups.push(GroupReport::new(plan, records, verdicts));
            }
            Some(item) => {
                for tree in &project.trees {
                    for group in enumerate_level(tree, item) {
                        let plan = plan_group(cfg, level, &group.id, &group.member_ids)?;
                        let records = {
                            let mut exec = JestVariantExecutor::new(&mut runner, &mut ws, tree, &group, &config_patch)?;
                            let records = run_plan(&mut exec, &plan, cfg.reruns, &mut ledger);
                            exec.finish()?;
                            records
                        };
                        // probes need the original file back in place
                        let verdicts = judge_group(
                            &plan,
                            &baseline.records,
                            &records,
                            &mut runner,
                            &mut probes,
                            &project.trees[..],
                        );
                        groups.push(GroupReport::new(plan, records, verdicts));
                    }
                }
            }
        }
        report.levels.push(LevelReport {
            level,
            runtime_secs: started.elapsed().as_secs_f64(),
            groups,
        });
    }
    ws.close()?;
    report.patches = mock_patches(&project.root_path, &project.trees, &report);
    Ok(report)
}

/// One mock-reset proposal per file holding an order-dependent test
/// hinted as shared mocking state, with diff paths relative to `root`.
pub fn mock_patches(root: &Path, trees: &[TestTree], report: &ProjectReport) -> Vec<MockResetPatch> {
    let mut files: Vec<&str> = report
        .verdicts()
        .filter(|v| v.classification == Classification::OrderDependent)
        .filter(|v| v.cause_hint.as_ref().is_some_and(|h| h.kind == CauseKind::SharedMock))
        .map(|v| v.suite.as_str())
        .collect();
    files.sort();
    files.dedup();
    files
        .into_iter()
        .filter_map(|f| trees.iter().find(|t| t.file_path.as_os_str() == f))
        .map(|tree| {
            let mut patch = propose_mock_reset_patch(tree);
            if let (false, Ok(rel)) = (patch.is_empty(), tree.file_path.strip_prefix(root)) {
                patch.diff = unified_diff(&rel.to_string_lossy(), &tree.source, &patch.content);
            }
            patch
        })
        .filter(|p| !p.is_empty())
        .collect()
}

/// Runs `job` over `items` on `workers` threads. Results come back on a
/// channel and are returned in input order.
pub fn run_parallel<T: Sync, R: Send>(items: &[T], workers: usize, job: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let queue: Mutex<VecDeque<usize>> = Mutex::new((0..items.len()).collect());
    let (tx, rx) = mpsc::channel::<(usize, R)>();
    std::thread::scope(|s| {
        for _ in 0..workers.max(1).min(items.len().max(1)) {
            let tx = tx.clone();
            let (queue, job) = (&queue, &job);
            s.spawn(move || loop {
                let Some(i) = queue.lock().expect("queue lock").pop_front() else {
                    break;
                };
                if tx.send((i, job(&items[i]))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut results: BTreeMap<usize, R> = rx.iter().collect();
        (0..items.len())
            .map(|i| results.remove(&i).expect("every job reports"))
            .collect()
    })
}

/// Runs each project on its own worker; projects never share a runner.
pub fn run_projects(
    roots: &[PathBuf],
    cfg: &RunConfig,
    opts: &JestOptions,
    workers: usize,
) -> Vec<Result<ProjectReport, PipelineError>> {
    run_parallel(roots, workers, |root| {
        let mut o = opts.clone();
        if let Some(dir) = &opts.reports_dir {
            let name = root
                .file_name()
                .map_or("project".into(), |n| n.to_string_lossy().into_owned());
            o.reports_dir = Some(dir.join(name));
        }
        run_jest_project(root, cfg, &o)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simharness::{Behavior, SimTest};
    use crate::verdict::Role;

    fn t(id: &str, b: Behavior) -> SimTest {
        SimTest {
            id: id.into(),
            behavior: b,
        }
    }

    #[test]
    fn polluter_victim_scenario_end_to_end() {
        let s = Scenario::new(
            "pv",
            vec![
                t("victim", Behavior::Victim { state_key: "k".into() }),
                t("other", Behavior::Independent { pass_prob: 1.0 }),
                t("polluter", Behavior::Polluter { state_key: "k".into() }),
            ],
        );
        let report = detect_scenario(&s, &RunConfig::default()).unwrap();
        let v: BTreeMap<&str, &Verdict> = report.verdicts().map(|v| (v.subject.as_str(), v)).collect();
        assert_eq!(v["victim"].classification, Classification::OrderDependent);
        assert_eq!(v["victim"].role, Role::Victim);
        assert_eq!(v["victim"].suspected_partner.as_deref(), Some("polluter"));
        assert_eq!(v["other"].classification, Classification::Stable);
        assert_eq!(v["polluter"].classification, Classification::Stable);
        // 3! = 6 < 10 requested: exhaustive
        let g = &report.levels[0].groups[0];
        assert_eq!(g.orders.len(), 6);
    }

    #[test]
    fn parallel_results_keep_input_order() {
        let items: Vec<u64> = (0..20).collect();
        let out = run_parallel(&items, 4, |x| {
            std::thread::sleep(Duration::from_millis(20 - x));
            x * 2
        });
        assert_eq!(out, items.iter().map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn sources_resolve_items_and_suites() {
        let src = "test('a', () => { fs.writeFileSync('/tmp/x'); });\ntest('b', () => {});\n";
        let tree = crate::testmodel::parse_source(Path::new("/p/a.test.js"), src.into()).unwrap();
        let ids: Vec<String> = tree.tests().iter().map(|i| i.id.clone()).collect();
        let trees = [tree];
        assert!(trees[..].source_of(&ids[0]).unwrap().contains("writeFileSync"));
        assert_eq!(trees[..].source_of("/p/a.test.js").unwrap(), src);
        assert!(trees[..].source_of("/p/missing.test.js").is_none());
    }
}
