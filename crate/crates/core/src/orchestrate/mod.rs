//! Running orders and collecting per-test outcomes.
//!
//! Everything here is written against the [`OrderExecutor`] trait. The Jest
//! subprocess backend lives in [`jest`]; the in-process simulator in
//! `simharness` implements the same trait.

pub mod jest;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::permute::{Level, OrderPlan};

/// Group id used for default-order baseline runs.
pub const BASELINE_GROUP: &str = "baseline";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
    Skip,
}

impl Outcome {
    /// Folds several results for one id (e.g. rows of a `test.each` table).
    pub fn merge(self, other: Outcome) -> Outcome {
        match (self, other) {
            (Outcome::Fail, _) | (_, Outcome::Fail) => Outcome::Fail,
            (Outcome::Pass, _) | (_, Outcome::Pass) => Outcome::Pass,
            _ => Outcome::Skip,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// The invocation produced no usable report (timeout, crash, setup
    /// failure). Never evidence of order dependency.
    Infrastructure {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub level: Level,
    pub group_id: String,
    pub order_id: usize,
    pub rerun_index: u32,
    pub outcomes: BTreeMap<String, Outcome>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub suites: BTreeMap<String, Outcome>,
    #[serde(flatten)]
    pub status: RunStatus,
    pub exit_code: Option<i32>,
    pub duration_secs: f64,
    pub raw_report_path: Option<PathBuf>,
}

impl RunRecord {
    pub fn is_completed(&self) -> bool {
        self.status == RunStatus::Completed
    }

    pub fn outcome(&self, test_id: &str) -> Option<Outcome> {
        if self.is_completed() {
            self.outcomes.get(test_id).copied()
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub reorders: u64,
    pub reruns: u32,
    pub seed: u64,
    pub levels: Vec<Level>,
    /// Fixed per-invocation timeout; when unset it is derived from the
    /// baseline duration (see [`derive_timeout`]).
    pub timeout_per_run: Option<Duration>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            reorders: 10,
            reruns: 10,
            seed: 0x6a_7374_6f64,
            levels: Level::ALL.to_vec(),
            timeout_per_run: None,
        }
    }
}

pub const MIN_TIMEOUT: Duration = Duration::from_secs(60);

/// Ten times the baseline duration, never below [`MIN_TIMEOUT`].
pub fn derive_timeout(baseline: Duration) -> Duration {
    (baseline * 10).max(MIN_TIMEOUT)
}

/// Result of one invocation before it is stamped into a [`RunRecord`].
#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub outcomes: Result<BTreeMap<String, Outcome>, String>,
    pub suites: BTreeMap<String, Outcome>,
    pub exit_code: Option<i32>,
    pub duration: Duration,
    pub raw_report_path: Option<PathBuf>,
}

impl Execution {
    pub fn completed(outcomes: BTreeMap<String, Outcome>) -> Self {
        Execution {
            outcomes: Ok(outcomes),
            suites: BTreeMap::new(),
            exit_code: Some(0),
            duration: Duration::ZERO,
            raw_report_path: None,
        }
    }

    pub fn infrastructure(reason: impl Into<String>) -> Self {
        Execution {
            outcomes: Err(reason.into()),
            suites: BTreeMap::new(),
            exit_code: None,
            duration: Duration::ZERO,
            raw_report_path: None,
        }
    }

    pub fn into_record(self, level: Level, group_id: &str, order_id: usize, rerun_index: u32) -> RunRecord {
        let (outcomes, status) = match self.outcomes {
            Ok(o) => (o, RunStatus::Completed),
            Err(reason) => (BTreeMap::new(), RunStatus::Infrastructure { reason }),
        };
        RunRecord {
            level,
            group_id: group_id.to_string(),
            order_id,
            rerun_index,
            outcomes,
            suites: self.suites,
            status,
            exit_code: self.exit_code,
            duration_secs: self.duration.as_secs_f64(),
            raw_report_path: self.raw_report_path,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExecRequest<'a> {
    pub level: Level,
    pub group_id: &'a str,
    pub order_id: usize,
    pub order: &'a [String],
    pub rerun_index: u32,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProbeError {
    #[error("isolation probes are not supported by this runner")]
    Unsupported,
    #[error("test name '{0}' is not unique; isolation probe skipped")]
    AmbiguousPattern(String),
    #[error("test '{0}' has no literal name to select it by")]
    DynamicName(String),
    #[error("unknown test '{0}'")]
    UnknownTest(String),
}

/// A backend able to execute one order of one group.
pub trait OrderExecutor {
    /// Called once before the reruns of an order. An error turns every
    /// rerun of the order into an infrastructure record.
    fn begin_order(&mut self, _plan: &OrderPlan, _order_id: usize) -> Result<(), String> {
        Ok(())
    }

    fn end_order(&mut self, _plan: &OrderPlan, _order_id: usize) {}

    fn execute(&mut self, request: &ExecRequest<'_>) -> Execution;

    /// Runs a single test alone.
    fn isolate(&mut self, _test_id: &str) -> Result<Execution, ProbeError> {
        Err(ProbeError::Unsupported)
    }
}

impl<E: OrderExecutor + ?Sized> OrderExecutor for &mut E {
    fn begin_order(&mut self, plan: &OrderPlan, order_id: usize) -> Result<(), String> {
        (**self).begin_order(plan, order_id)
    }

    fn end_order(&mut self, plan: &OrderPlan, order_id: usize) {
        (**self).end_order(plan, order_id)
    }

    fn execute(&mut self, request: &ExecRequest<'_>) -> Execution {
        (**self).execute(request)
    }

    fn isolate(&mut self, test_id: &str) -> Result<Execution, ProbeError> {
        (**self).isolate(test_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub group_id: String,
    pub order_id: usize,
    pub rerun_index: u32,
    /// Offsets from the ledger's creation, in seconds.
    pub started: f64,
    pub finished: f64,
}

/// Append-only log of runner invocations.
#[derive(Debug, Clone)]
pub struct RunLedger {
    origin: Instant,
    entries: Vec<LedgerEntry>,
}

impl Default for RunLedger {
    fn default() -> Self {
        RunLedger {
            origin: Instant::now(),
            entries: Vec::new(),
        }
    }
}

impl RunLedger {
    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn invocations(&self, group_id: &str) -> usize {
        self.entries.iter().filter(|e| e.group_id == group_id).count()
    }

    /// No two recorded invocations overlap in time.
    pub fn is_serial(&self) -> bool {
        let mut spans: Vec<(f64, f64)> = self.entries.iter().map(|e| (e.started, e.finished)).collect();
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        spans.windows(2).all(|w| w[0].1 <= w[1].0)
    }

    fn timed<T>(&mut self, group_id: &str, order_id: usize, rerun_index: u32, f: impl FnOnce() -> T) -> T {
        let started = self.origin.elapsed().as_secs_f64();
        let out = f();
        let finished = self.origin.elapsed().as_secs_f64();
        self.entries.push(LedgerEntry {
            group_id: group_id.to_string(),
            order_id,
            rerun_index,
            started,
            finished,
        });
        out
    }
}

/// Executes every order of `plan` `reruns` times, serially.
pub fn run_plan<E: OrderExecutor + ?Sized>(
    executor: &mut E,
    plan: &OrderPlan,
    reruns: u32,
    ledger: &mut RunLedger,
) -> Vec<RunRecord> {
    let mut records = Vec::with_capacity(plan.orders.len() * reruns as usize);
    for (order_id, order) in plan.orders.iter().enumerate() {
        if let Err(reason) = executor.begin_order(plan, order_id) {
            records.extend((0..reruns).map(|r| {
                Execution::infrastructure(format!("order setup failed: {reason}")).into_record(
                    plan.level,
                    &plan.group_id,
                    order_id,
                    r,
                )
            }));
            continue;
        }
        for rerun_index in 0..reruns {
            let request = ExecRequest {
                level: plan.level,
                group_id: &plan.group_id,
                order_id,
                order,
                rerun_index,
            };
            let exec = ledger.timed(&plan.group_id, order_id, rerun_index, || executor.execute(&request));
            records.push(exec.into_record(plan.level, &plan.group_id, order_id, rerun_index));
        }
        executor.end_order(plan, order_id);
    }
    records
}

/// Runs the untouched default order `reruns` times.
pub fn run_baseline<E: OrderExecutor + ?Sized>(
    executor: &mut E,
    level: Level,
    default_order: &[String],
    reruns: u32,
    ledger: &mut RunLedger,
) -> Vec<RunRecord> {
    (0..reruns)
        .map(|rerun_index| {
            let request = ExecRequest {
                level,
                group_id: BASELINE_GROUP,
                order_id: 0,
                order: default_order,
                rerun_index,
            };
            ledger
                .timed(BASELINE_GROUP, 0, rerun_index, || executor.execute(&request))
                .into_record(level, BASELINE_GROUP, 0, rerun_index)
        })
        .collect()
}
