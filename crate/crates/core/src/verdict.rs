//! Classification of rerun outcomes.
//!
//! A subject that fails in every completed rerun of some order, while
//! passing in the default order, is order-dependent. A subject whose
//! outcome changes between reruns of one order is flaky for other reasons.
//! Invocations without a usable report never count either way.

use std::collections::{BTreeMap, BTreeSet};

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use crate::orchestrate::{Outcome, RunRecord};
use crate::permute::{Level, OrderPlan};
use crate::testmodel::{id_within, suite_of};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Stable,
    OrderDependent,
    FlakyNonOd,
    Infrastructure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Victim,
    Brittle,
    Unknown,
    #[serde(rename = "n/a")]
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CauseKind {
    SharedFile,
    SharedMock,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CauseHint {
    pub kind: CauseKind,
    pub evidence: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderTally {
    pub order_id: usize,
    pub failures: u32,
    /// Completed reruns in which the subject reported pass or fail.
    pub runs: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub subject: String,
    pub suite: String,
    pub level: Level,
    pub group_id: String,
    pub classification: Classification,
    /// Orders in which the subject failed at least once.
    pub failing_orders: Vec<OrderTally>,
    /// Orders with no completed invocation.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub infrastructure_orders: Vec<usize>,
    pub role: Role,
    /// Nearest differing predecessor between a failing and a passing
    /// order. A heuristic, not a minimal polluter.
    pub suspected_partner: Option<String>,
    pub cause_hint: Option<CauseHint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Verdict {
    /// Orders in which the subject failed every completed rerun.
    pub fn consistent_failures(&self) -> impl Iterator<Item = usize> + '_ {
        self.failing_orders
            .iter()
            .filter(|t| t.runs > 0 && t.failures == t.runs)
            .map(|t| t.order_id)
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    pass: u32,
    fail: u32,
}

impl Tally {
    fn add(&mut self, o: Outcome) {
        match o {
            Outcome::Pass => self.pass += 1,
            Outcome::Fail => self.fail += 1,
            Outcome::Skip => {}
        }
    }

    fn runs(&self) -> u32 {
        self.pass + self.fail
    }
}

/// Suite a subject counts towards: the file part of its id, or the group
/// when ids carry no file.
fn suite_for(subject: &str, group_id: &str) -> String {
    let s = suite_of(subject);
    if s.is_empty() {
        group_id.to_string()
    } else {
        s.to_string()
    }
}

/// Classifies every subject reported by `records`.
pub fn classify(level: Level, group_id: &str, baseline: &[RunRecord], records: &[RunRecord]) -> Vec<Verdict> {
    let collect = |runs: &'_ [RunRecord]| -> BTreeSet<String> {
        runs.iter()
            .filter(|r| r.is_completed())
            .flat_map(|r| r.outcomes.keys().cloned())
            .collect()
    };
    // subjects come from the reordered runs; the baseline only names them
    // when no reordered run completed
    let mut subjects = collect(records);
    if subjects.is_empty() {
        subjects = collect(baseline);
    }
    let order_ids: BTreeSet<usize> = records.iter().map(|r| r.order_id).collect();
    subjects
        .into_iter()
        .map(|subject| classify_subject(level, group_id, &subject, baseline, records, &order_ids))
        .collect()
}

fn classify_subject(
    level: Level,
    group_id: &str,
    subject: &str,
    baseline: &[RunRecord],
    records: &[RunRecord],
    order_ids: &BTreeSet<usize>,
) -> Verdict {
    let mut base = Tally::default();
    for o in baseline.iter().filter_map(|r| r.outcome(subject)) {
        base.add(o);
    }
    let mut per_order: BTreeMap<usize, Tally> = BTreeMap::new();
    let mut infrastructure_orders = Vec::new();
    for &order_id in order_ids {
        let runs: Vec<&RunRecord> = records.iter().filter(|r| r.order_id == order_id).collect();
        if !runs.iter().any(|r| r.is_completed()) {
            infrastructure_orders.push(order_id);
            continue;
        }
        let mut t = Tally::default();
        for o in runs.iter().filter_map(|r| r.outcome(subject)) {
            t.add(o);
        }
        if t.runs() > 0 {
            per_order.insert(order_id, t);
        }
    }
    let failing_orders: Vec<OrderTally> = per_order
        .iter()
        .filter(|(_, t)| t.fail > 0)
        .map(|(&order_id, t)| OrderTally {
            order_id,
            failures: t.fail,
            runs: t.runs(),
        })
        .collect();
    let consistent = per_order.values().any(|t| t.fail > 0 && t.pass == 0);
    let mixed = per_order.values().any(|t| t.fail > 0 && t.pass > 0);
    let some_order_passes = per_order.values().any(|t| t.fail == 0 && t.pass > 0);
    let baseline_mixed = base.fail > 0 && base.pass > 0;
    let baseline_clean = base.fail == 0 && (base.pass > 0 || some_order_passes);
    let mut note = None;

    let classification = if per_order.is_empty() && base.runs() == 0 {
        Classification::Infrastructure
    } else if per_order.is_empty() && !records.is_empty() {
        note = Some("no completed run reported this subject outside the default order".into());
        Classification::Infrastructure
    } else if baseline_mixed {
        note = Some("flaky in default order".into());
        Classification::FlakyNonOd
    } else if consistent && baseline_clean {
        Classification::OrderDependent
    } else if mixed {
        Classification::FlakyNonOd
    } else if base.fail > 0 || consistent {
        note = Some("fails in default order; not attributable to reordering".into());
        Classification::FlakyNonOd
    } else {
        Classification::Stable
    };

    Verdict {
        subject: subject.to_string(),
        suite: suite_for(subject, group_id),
        level,
        group_id: group_id.to_string(),
        classification,
        failing_orders,
        infrastructure_orders,
        role: Role::NotApplicable,
        suspected_partner: None,
        cause_hint: None,
        note,
    }
}

/// Position of the order unit that contains `subject`.
fn unit_position(order: &[String], subject: &str) -> Option<usize> {
    order.iter().position(|u| id_within(subject, u))
}

/// Fills `role` and `suspected_partner` for order-dependent verdicts.
///
/// `isolation` is a run of the subject alone; without one the role is
/// unknown. The partner compares the predecessors of the subject's unit in
/// a consistently failing order against an order where it passed.
pub fn assign_roles(
    mut verdict: Verdict,
    isolation: Option<&RunRecord>,
    plan: &OrderPlan,
    records: &[RunRecord],
) -> Verdict {
    if verdict.classification != Classification::OrderDependent {
        verdict.role = Role::NotApplicable;
        return verdict;
    }
    verdict.role = match isolation.and_then(|r| r.outcome(&verdict.subject)) {
        Some(Outcome::Pass) => Role::Victim,
        Some(Outcome::Fail) => Role::Brittle,
        _ => Role::Unknown,
    };

    let failing = verdict.consistent_failures().next();
    let passing = passing_order(&verdict.subject, plan, records);
    if let (Some(f), Some(p)) = (failing, passing) {
        let (f_order, p_order) = (&plan.orders[f], &plan.orders[p]);
        let preds = |order: &[String]| -> Vec<String> {
            unit_position(order, &verdict.subject)
                .map(|pos| order[..pos].to_vec())
                .unwrap_or_default()
        };
        let (f_preds, p_preds) = (preds(f_order), preds(p_order));
        let only_in = |a: &[String], b: &[String]| a.iter().rev().find(|u| !b.contains(u)).cloned();
        verdict.suspected_partner = match verdict.role {
            Role::Brittle => only_in(&p_preds, &f_preds),
            _ => only_in(&f_preds, &p_preds).or_else(|| only_in(&p_preds, &f_preds)),
        };
    }
    verdict
}

/// An order in which the subject passed every completed rerun; the
/// default order is preferred.
fn passing_order(subject: &str, plan: &OrderPlan, records: &[RunRecord]) -> Option<usize> {
    let passes_all = |order_id: usize| {
        let outcomes: Vec<Outcome> = records
            .iter()
            .filter(|r| r.order_id == order_id)
            .filter_map(|r| r.outcome(subject))
            .filter(|o| *o != Outcome::Skip)
            .collect();
        !outcomes.is_empty() && outcomes.iter().all(|o| *o == Outcome::Pass)
    };
    let default = (0..plan.orders.len()).find(|&i| plan.is_default(i));
    default
        .filter(|&i| passes_all(i))
        .or_else(|| (0..plan.orders.len()).find(|&i| passes_all(i)))
        .or(default)
}

fn fs_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"\bfs\.|require\(\s*['\x22](?:node:)?fs['\x22]\s*\)|\b(?:readFileSync|writeFileSync|readFile|writeFile|readdirSync|unlinkSync|rmSync|mkdirSync|existsSync|copyFileSync|appendFileSync|rimraf|tmpdir)\b",
        )
        .expect("valid regex")
    })
}

fn mock_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"\b(?:toHaveBeenCalledTimes|toBeCalledTimes|toHaveBeenCalled|toBeCalled|toHaveBeenCalledWith|toBeCalledWith|toHaveBeenNthCalledWith|toHaveBeenLastCalledWith)\b|\.mock\.(?:calls|results|instances)\b|\bjest\.(?:mock|doMock|spyOn|fn)\s*\(",
        )
        .expect("valid regex")
    })
}

/// Mock call-count assertions, the trigger for the mock-reset patch.
pub fn call_count_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"\b(?:toHaveBeenCalledTimes|toBeCalledTimes|toHaveBeenCalled|toBeCalled|toHaveBeenNthCalledWith)\b|\.mock\.(?:calls|results|instances)\b",
        )
        .expect("valid regex")
    })
}

fn path_literals(src: &str) -> BTreeSet<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r#"['"`]([^'"`\s]*(?:/[^'"`\s]*|\.(?:json|js|txt|xml|png|jpg|snap|csv|yml|yaml|html|log)))['"`]"#)
            .expect("valid regex")
    });
    re.captures_iter(src).map(|c| c[1].to_string()).collect()
}

fn matching_lines(src: &str, re: &Regex) -> Vec<String> {
    src.lines()
        .filter(|l| re.is_match(l))
        .map(|l| l.trim().to_string())
        .collect()
}

/// Static guess at why a subject depends on order, from its source and
/// (when known) its partner's.
pub fn hint_cause(subject_src: &str, partner_src: Option<&str>) -> CauseHint {
    let sources: Vec<&str> = std::iter::once(subject_src).chain(partner_src).collect();

    if let Some(partner) = partner_src {
        let shared: Vec<String> = path_literals(subject_src)
            .intersection(&path_literals(partner))
            .cloned()
            .collect();
        if !shared.is_empty() {
            return CauseHint {
                kind: CauseKind::SharedFile,
                evidence: shared
                    .into_iter()
                    .map(|p| format!("both tests reference '{p}'"))
                    .collect(),
            };
        }
    }
    let fs_lines: Vec<String> = sources.iter().flat_map(|s| matching_lines(s, fs_pattern())).collect();
    if !fs_lines.is_empty() {
        return CauseHint {
            kind: CauseKind::SharedFile,
            evidence: fs_lines,
        };
    }
    let mock_lines: Vec<String> = sources.iter().flat_map(|s| matching_lines(s, mock_pattern())).collect();
    if !mock_lines.is_empty() {
        return CauseHint {
            kind: CauseKind::SharedMock,
            evidence: mock_lines,
        };
    }
    CauseHint {
        kind: CauseKind::None,
        evidence: Vec::new(),
    }
}
