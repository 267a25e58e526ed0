//! Result files and the per-level summary table.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{BaselineSummary, Counts};
use crate::orchestrate::{Outcome, RunConfig, RunRecord};
use crate::permute::{Level, OrderPlan};
use crate::rewrite::{ConfigPatch, MockResetPatch};
use crate::verdict::{CauseKind, Classification, Verdict};

pub const REPORT_SUFFIX: &str = ".jstod.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub reorders: u64,
    pub reruns: u32,
    pub levels: Vec<Level>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub rerun: u32,
    pub outcomes: std::collections::BTreeMap<String, Outcome>,
    #[serde(flatten)]
    pub status: crate::orchestrate::RunStatus,
    pub duration_secs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    pub order: Vec<String>,
    pub is_default: bool,
    pub runs: Vec<RunEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub group_id: String,
    pub seed: u64,
    pub exhaustive: bool,
    pub orders: Vec<OrderReport>,
    pub verdicts: Vec<Verdict>,
}

impl GroupReport {
    pub fn new(plan: OrderPlan, records: Vec<RunRecord>, verdicts: Vec<Verdict>) -> Self {
        let mut orders: Vec<OrderReport> = plan
            .orders
            .iter()
            .enumerate()
            .map(|(i, order)| OrderReport {
                order: order.clone(),
                is_default: plan.is_default(i),
                runs: Vec::new(),
            })
            .collect();
        for r in records {
            if let Some(o) = orders.get_mut(r.order_id) {
                o.runs.push(RunEntry {
                    rerun: r.rerun_index,
                    outcomes: r.outcomes,
                    status: r.status,
                    duration_secs: r.duration_secs,
                    raw_report: r.raw_report_path,
                });
            }
        }
        GroupReport {
            group_id: plan.group_id,
            seed: plan.seed,
            exhaustive: plan.exhaustive,
            orders,
            verdicts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: Level,
    pub runtime_secs: f64,
    pub groups: Vec<GroupReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectReport {
    pub project: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runner_version: Option<String>,
    pub seed: u64,
    pub config: ConfigSummary,
    #[serde(default)]
    pub counts: Option<Counts>,
    #[serde(default)]
    pub baseline: Option<BaselineSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_patch: Option<ConfigPatch>,
    pub levels: Vec<LevelReport>,
    #[serde(default)]
    pub patches: Vec<MockResetPatch>,
}

impl ProjectReport {
    pub fn new(project: &str, cfg: &RunConfig) -> Self {
        ProjectReport {
            project: project.to_string(),
            runner_version: None,
            seed: cfg.seed,
            config: ConfigSummary {
                reorders: cfg.reorders,
                reruns: cfg.reruns,
                levels: cfg.levels.clone(),
            },
            counts: None,
            baseline: None,
            config_patch: None,
            levels: Vec::new(),
            patches: Vec::new(),
        }
    }

    pub fn verdicts(&self) -> impl Iterator<Item = &Verdict> {
        self.levels
            .iter()
            .flat_map(|l| l.groups.iter())
            .flat_map(|g| g.verdicts.iter())
    }

    pub fn level(&self, level: Level) -> Option<&LevelReport> {
        self.levels.iter().find(|l| l.level == level)
    }
}

fn file_stem(project: &str) -> String {
    let name = Path::new(project)
        .file_name()
        .map_or_else(|| project.to_string(), |n| n.to_string_lossy().into_owned());
    let clean: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    if clean.is_empty() {
        "project".into()
    } else {
        clean
    }
}

/// Writes `<dir>/<project>.jstod.json`; returns the path.
pub fn emit_report(dir: &Path, report: &ProjectReport) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}{REPORT_SUFFIX}", file_stem(&report.project)));
    let text = serde_json::to_string_pretty(report).map_err(std::io::Error::other)?;
    std::fs::write(&path, text + "\n")?;
    Ok(path)
}

/// Every report in `dir` (or `dir` itself when it is a report file).
pub fn load_reports(dir: &Path) -> std::io::Result<Vec<ProjectReport>> {
    let mut paths: Vec<PathBuf> = if dir.is_file() {
        vec![dir.to_path_buf()]
    } else {
        std::fs::read_dir(dir)?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.to_string_lossy().ends_with(REPORT_SUFFIX))
            .collect()
    };
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", p.display())))
        })
        .collect()
}

/// One row of the summary table.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LevelSummary {
    pub tests: usize,
    pub suites: usize,
    pub failed_tests: usize,
    pub failed_suites: usize,
    pub odft: usize,
    pub odfts: usize,
    pub hint_file: usize,
    pub hint_mock: usize,
    pub hint_none: usize,
    pub runtime_secs: f64,
}

/// Counts distinct subjects: a test reordered in several groups counts
/// once, and is order-dependent if any group says so.
pub fn summarize(level: &LevelReport) -> LevelSummary {
    let verdicts: Vec<&Verdict> = level.groups.iter().flat_map(|g| g.verdicts.iter()).collect();
    let subjects: BTreeSet<&str> = verdicts.iter().map(|v| v.subject.as_str()).collect();
    let suites: BTreeSet<&str> = verdicts.iter().map(|v| v.suite.as_str()).collect();
    let failed: Vec<&&Verdict> = verdicts.iter().filter(|v| !v.failing_orders.is_empty()).collect();
    let od: Vec<&&Verdict> = verdicts
        .iter()
        .filter(|v| v.classification == Classification::OrderDependent)
        .collect();
    let distinct = |vs: &[&&Verdict], f: fn(&Verdict) -> &str| vs.iter().map(|v| f(v)).collect::<BTreeSet<_>>().len();
    let mut hinted: std::collections::BTreeMap<&str, CauseKind> = std::collections::BTreeMap::new();
    for v in &od {
        // first hint per subject wins
        hinted
            .entry(v.subject.as_str())
            .or_insert_with(|| v.cause_hint.as_ref().map_or(CauseKind::None, |h| h.kind));
    }
    let count = |k: CauseKind| hinted.values().filter(|h| **h == k).count();
    LevelSummary {
        tests: subjects.len(),
        suites: suites.len(),
        failed_tests: distinct(&failed, |v| &v.subject),
        failed_suites: distinct(&failed, |v| &v.suite),
        odft: distinct(&od, |v| &v.subject),
        odfts: distinct(&od, |v| &v.suite),
        hint_file: count(CauseKind::SharedFile),
        hint_mock: count(CauseKind::SharedMock),
        hint_none: count(CauseKind::None),
        runtime_secs: level.runtime_secs,
    }
}

pub fn summary_table(reports: &[ProjectReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<28} {:<9} {:>7} {:>7} {:>8} {:>8} {:>6} {:>6} {:>12} {:>10}",
        "project", "level", "#tests", "#suites", "#failT", "#failS", "#ODFT", "#ODFTS", "file/mock/-", "runtime"
    );
    for r in reports {
        let name = file_stem(&r.project);
        if r.levels.is_empty() {
            let why = match &r.baseline {
                Some(b) if !b.eligible => format!("skipped: {}", b.reasons.first().map_or("", String::as_str)),
                _ => "no eligible levels".into(),
            };
            let _ = writeln!(out, "{name:<28} {why}");
            continue;
        }
        for l in &r.levels {
            let s = summarize(l);
            let _ = writeln!(
                out,
                "{:<28} {:<9} {:>7} {:>7} {:>8} {:>8} {:>6} {:>6} {:>12} {:>9.1}s",
                name,
                l.level.as_str(),
                s.tests,
                s.suites,
                s.failed_tests,
                s.failed_suites,
                s.odft,
                s.odfts,
                format!("{}/{}/{}", s.hint_file, s.hint_mock, s.hint_none),
                s.runtime_secs
            );
        }
    }
    out
}

/// Order-dependent verdicts, one line each.
pub fn verdict_lines(report: &ProjectReport) -> Vec<String> {
    report
        .verdicts()
        .filter(|v| v.classification == Classification::OrderDependent)
        .map(|v| {
            format!(
                "[{}] {} ({:?}, partner: {}, hint: {})",
                v.level,
                v.subject,
                v.role,
                v.suspected_partner.as_deref().unwrap_or("-"),
                v.cause_hint
                    .as_ref()
                    .map_or("-".to_string(), |h| format!("{:?}", h.kind)),
            )
        })
        .collect()
}

pub fn patch_diffs(reports: &[ProjectReport]) -> String {
    reports
        .iter()
        .flat_map(|r| r.patches.iter())
        .map(|p| p.diff.as_str())
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrate::Execution;
    use crate::permute::randomize_group;
    use crate::verdict::{CauseHint, OrderTally, Role};

    fn verdict(subject: &str, suite: &str, class: Classification, hint: Option<CauseKind>) -> Verdict {
        Verdict {
            subject: subject.into(),
            suite: suite.into(),
            level: Level::Test,
            group_id: "g".into(),
            classification: class,
            failing_orders: if class == Classification::Stable {
                vec![]
            } else {
                vec![OrderTally {
                    order_id: 1,
                    failures: 10,
                    runs: 10,
                }]
            },
            infrastructure_orders: vec![],
            role: Role::Victim,
            suspected_partner: None,
            cause_hint: hint.map(|kind| CauseHint { kind, evidence: vec![] }),
            note: None,
        }
    }

    #[test]
    fn summary_counts_distinct_subjects() {
        let g = |vs: Vec<Verdict>| GroupReport {
            group_id: "g".into(),
            seed: 0,
            exhaustive: true,
            orders: vec![],
            verdicts: vs,
        };
        let level = LevelReport {
            level: Level::Test,
            runtime_secs: 2.0,
            groups: vec![
                g(vec![
                    verdict("a#0", "a", Classification::OrderDependent, Some(CauseKind::SharedMock)),
                    verdict("a#1", "a", Classification::Stable, None),
                    verdict("b#0", "b", Classification::FlakyNonOd, None),
                ]),
                g(vec![verdict(
                    "a#0",
                    "a",
                    Classification::OrderDependent,
                    Some(CauseKind::SharedMock),
                )]),
            ],
        };
        let s = summarize(&level);
        assert_eq!(
            (s.tests, s.suites, s.failed_tests, s.failed_suites, s.odft, s.odfts),
            (3, 2, 2, 2, 1, 1)
        );
        assert_eq!((s.hint_file, s.hint_mock, s.hint_none), (0, 1, 0));
    }

    #[test]
    fn report_round_trips_through_disk() {
        let cfg = RunConfig::default();
        let plan = randomize_group(Level::Test, "g", &["x".into(), "y".into()], 10, 1).unwrap();
        let records: Vec<RunRecord> = (0..2)
            .flat_map(|o| {
                (0..2).map(move |r| {
                    Execution::completed([("x".to_string(), Outcome::Pass)].into()).into_record(Level::Test, "g", o, r)
                })
            })
            .collect();
        let mut rep = ProjectReport::new("/some/proj", &cfg);
        rep.levels.push(LevelReport {
            level: Level::Test,
            runtime_secs: 1.0,
            groups: vec![GroupReport::new(plan, records, vec![])],
        });
        let dir = tempfile::tempdir().unwrap();
        let path = emit_report(dir.path(), &rep).unwrap();
        assert!(path.ends_with("proj.jstod.json"));
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(v["config"]["reorders"], 10);
        assert_eq!(v["levels"][0]["groups"][0]["orders"][0]["is_default"], true);
        assert_eq!(v["levels"][0]["groups"][0]["orders"][1]["runs"][1]["rerun"], 1);
        assert_eq!(
            v["levels"][0]["groups"][0]["orders"][1]["runs"][1]["outcomes"]["x"],
            "pass"
        );
        assert_eq!(load_reports(dir.path()).unwrap(), vec![rep.clone()]);
        assert!(summary_table(&[rep]).contains("proj"));
    }
}
