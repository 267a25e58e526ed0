//! Deterministic in-process test runner.
//!
//! A [`Scenario`] describes tests by how they touch shared state. Executing
//! an order replays that state machine; [`oracle`] derives the same outcomes
//! analytically from predecessor relations, giving an independent reference
//! for the classifier.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::orchestrate::{ExecRequest, Execution, OrderExecutor, Outcome, ProbeError};
use crate::permute::next_permutation;

/// Largest scenario the oracle will enumerate (8! = 40320 orders).
pub const ORACLE_MAX_TESTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Behavior {
    Independent {
        pass_prob: f64,
    },
    /// Leaves `state_key` dirty.
    Polluter {
        state_key: String,
    },
    /// Fails when `state_key` is dirty.
    Victim {
        state_key: String,
    },
    /// Makes `state_key` ready.
    StateSetter {
        state_key: String,
    },
    /// Fails unless `state_key` is ready.
    Brittle {
        state_key: String,
    },
    /// Calls the mock once, then asserts its total call count.
    MockCaller {
        mock_key: String,
        expected_calls: u32,
    },
    /// Calls the mock once without asserting anything about it.
    MockUser {
        mock_key: String,
    },
}

impl Behavior {
    fn mock_key(&self) -> Option<&str> {
        match self {
            Behavior::MockCaller { mock_key, .. } | Behavior::MockUser { mock_key } => Some(mock_key),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTest {
    pub id: String,
    pub behavior: Behavior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    pub tests: Vec<SimTest>,
    #[serde(default)]
    pub rng_seed: u64,
    /// Allows `pass_prob` values other than 0 and 1.
    #[serde(default)]
    pub stochastic: bool,
    /// Allows consumers whose state key no test produces.
    #[serde(default)]
    pub orphan: bool,
    /// Mock call counts are cleared before every test.
    #[serde(default)]
    pub mock_reset: bool,
}

fn default_name() -> String {
    "scenario".to_string()
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("unknown test id '{0}'")]
    UnknownId(String),
    #[error("test id '{0}' appears more than once")]
    DuplicateId(String),
    #[error("scenario has {0} tests; the oracle enumerates at most {ORACLE_MAX_TESTS}")]
    TooLarge(usize),
    #[error("'{consumer}' reads state '{key}' that no test produces")]
    OrphanKey { consumer: String, key: String },
    #[error("'{0}' has pass probability {1} in a non-stochastic scenario")]
    NotDeterministic(String, f64),
    #[error("'{0}' has pass probability {1} outside [0, 1]")]
    BadProbability(String, f64),
    #[error("failed to read scenario: {0}")]
    Io(String),
    #[error("invalid scenario document: {0}")]
    Parse(String),
}

impl Scenario {
    pub fn new(name: &str, tests: Vec<SimTest>) -> Self {
        Scenario {
            name: name.to_string(),
            tests,
            rng_seed: 0,
            stochastic: false,
            orphan: false,
            mock_reset: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn ids(&self) -> Vec<String> {
        self.tests.iter().map(|t| t.id.clone()).collect()
    }

    pub fn test(&self, id: &str) -> Option<&SimTest> {
        self.tests.iter().find(|t| t.id == id)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let mut seen = HashSet::new();
        for t in &self.tests {
            if !seen.insert(t.id.as_str()) {
                return Err(SimError::DuplicateId(t.id.clone()));
            }
        }
        let produced: HashSet<(&str, &str)> = self
            .tests
            .iter()
            .filter_map(|t| match &t.behavior {
                Behavior::Polluter { state_key } => Some(("dirty", state_key.as_str())),
                Behavior::StateSetter { state_key } => Some(("ready", state_key.as_str())),
                _ => None,
            })
            .collect();
        for t in &self.tests {
            let needed = match &t.behavior {
                Behavior::Victim { state_key } => Some(("dirty", state_key)),
                Behavior::Brittle { state_key } => Some(("ready", state_key)),
                Behavior::Independent { pass_prob } => {
                    if !(0.0..=1.0).contains(pass_prob) {
                        return Err(SimError::BadProbability(t.id.clone(), *pass_prob));
                    }
                    if !self.stochastic && *pass_prob != 0.0 && *pass_prob != 1.0 {
                        return Err(SimError::NotDeterministic(t.id.clone(), *pass_prob));
                    }
                    None
                }
                _ => None,
            };
            if let Some((kind, key)) = needed {
                if !self.orphan && !produced.contains(&(kind, key.as_str())) {
                    return Err(SimError::OrphanKey {
                        consumer: t.id.clone(),
                        key: key.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// The clear-all-mocks-before-each-test fix as a scenario transform.
    pub fn with_mock_reset(&self) -> Scenario {
        Scenario {
            mock_reset: true,
            ..self.clone()
        }
    }

    pub fn uses_mocks(&self) -> bool {
        self.tests.iter().any(|t| t.behavior.mock_key().is_some())
    }
}

/// Uniform draw in `[0, 1)` for `(seed, rerun, id)`, independent of order.
fn schedule_draw(seed: u64, rerun_index: u32, id: &str) -> f64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(rerun_index.to_le_bytes());
    h.update(id.as_bytes());
    let digest = h.finalize();
    let bits = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
    (bits >> 11) as f64 / (1u64 << 53) as f64
}

/// Runs the tests named in `order` (all or a subset) in that order.
pub fn execute(scenario: &Scenario, order: &[String], rerun_index: u32) -> Result<BTreeMap<String, Outcome>, SimError> {
    let mut seen = HashSet::new();
    for id in order {
        if scenario.test(id).is_none() {
            return Err(SimError::UnknownId(id.clone()));
        }
        if !seen.insert(id) {
            return Err(SimError::DuplicateId(id.clone()));
        }
    }
    let mut dirty: HashSet<&str> = HashSet::new();
    let mut ready: HashSet<&str> = HashSet::new();
    let mut calls: HashMap<&str, u32> = HashMap::new();
    let mut outcomes = BTreeMap::new();
    for id in order {
        let test = scenario.test(id).expect("checked above");
        if scenario.mock_reset {
            calls.clear();
        }
        let passed = match &test.behavior {
            Behavior::Independent { pass_prob } => schedule_draw(scenario.rng_seed, rerun_index, id) < *pass_prob,
            Behavior::Polluter { state_key } => {
                dirty.insert(state_key);
                true
            }
            Behavior::Victim { state_key } => !dirty.contains(state_key.as_str()),
            Behavior::StateSetter { state_key } => {
                ready.insert(state_key);
                true
            }
            Behavior::Brittle { state_key } => ready.contains(state_key.as_str()),
            Behavior::MockCaller {
                mock_key,
                expected_calls,
            } => {
                let count = calls.entry(mock_key).or_insert(0);
                *count += 1;
                *count == *expected_calls
            }
            Behavior::MockUser { mock_key } => {
                *calls.entry(mock_key).or_insert(0) += 1;
                true
            }
        };
        outcomes.insert(id.clone(), if passed { Outcome::Pass } else { Outcome::Fail });
    }
    Ok(outcomes)
}

/// Expected outcome of a test in a given order; `None` for stochastic tests.
pub type OracleOutcome = Option<Outcome>;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub order: Vec<String>,
    pub outcomes: BTreeMap<String, OracleOutcome>,
}

/// Per-order expected outcomes over every permutation of the scenario.
///
/// Derived from which tests precede each test, not by replaying state.
pub fn oracle(scenario: &Scenario) -> Result<Vec<OracleRow>, SimError> {
    let n = scenario.tests.len();
    if n > ORACLE_MAX_TESTS {
        return Err(SimError::TooLarge(n));
    }
    if n == 0 {
        return Ok(vec![OracleRow {
            order: vec![],
            outcomes: BTreeMap::new(),
        }]);
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rows = Vec::new();
    loop {
        let order: Vec<&SimTest> = perm.iter().map(|&i| &scenario.tests[i]).collect();
        rows.push(OracleRow {
            order: order.iter().map(|t| t.id.clone()).collect(),
            outcomes: order
                .iter()
                .enumerate()
                .map(|(pos, t)| (t.id.clone(), expected_at(scenario, &order[..pos], t)))
                .collect(),
        });
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok(rows)
}

pub fn expected_at(scenario: &Scenario, before: &[&SimTest], test: &SimTest) -> OracleOutcome {
    let verdict = |pass: bool| Some(if pass { Outcome::Pass } else { Outcome::Fail });
    let any_before = |pred: &dyn Fn(&Behavior) -> bool| before.iter().any(|t| pred(&t.behavior));
    match &test.behavior {
        Behavior::Independent { pass_prob } if *pass_prob == 1.0 => verdict(true),
        Behavior::Independent { pass_prob } if *pass_prob == 0.0 => verdict(false),
        Behavior::Independent { .. } => None,
        Behavior::Polluter { .. } | Behavior::StateSetter { .. } | Behavior::MockUser { .. } => verdict(true),
        Behavior::Victim { state_key } => verdict(!any_before(
            &|b| matches!(b, Behavior::Polluter { state_key: k } if k == state_key),
        )),
        Behavior::Brittle { state_key } => verdict(any_before(
            &|b| matches!(b, Behavior::StateSetter { state_key: k } if k == state_key),
        )),
        Behavior::MockCaller {
            mock_key,
            expected_calls,
        } => {
            let prior = if scenario.mock_reset {
                0
            } else {
                before
                    .iter()
                    .filter(|t| t.behavior.mock_key() == Some(mock_key))
                    .count() as u32
            };
            verdict(prior + 1 == *expected_calls)
        }
    }
}

/// Ground-truth classification a correct detector should reach for each
/// test when every order is run, with the scenario's test list as the
/// default order.
pub fn expected_verdicts(rows: &[OracleRow], default_order: &[String]) -> BTreeMap<String, ExpectedClass> {
    let Some(default_row) = rows.iter().find(|r| r.order == default_order) else {
        return BTreeMap::new();
    };
    let mut out = BTreeMap::new();
    for (id, base) in &default_row.outcomes {
        let class = match base {
            None => ExpectedClass::Flaky,
            Some(Outcome::Fail) => ExpectedClass::FailsByDefault,
            _ => {
                let failing: BTreeSet<usize> = rows
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| r.outcomes.get(id) == Some(&Some(Outcome::Fail)))
                    .map(|(i, _)| i)
                    .collect();
                if failing.is_empty() {
                    ExpectedClass::Stable
                } else {
                    ExpectedClass::OrderDependent { failing_rows: failing }
                }
            }
        };
        out.insert(id.clone(), class);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExpectedClass {
    Stable,
    OrderDependent { failing_rows: BTreeSet<usize> },
    Flaky,
    FailsByDefault,
}

/// [`OrderExecutor`] backed by a scenario.
#[derive(Debug, Clone)]
pub struct SimExecutor {
    pub scenario: Scenario,
    pub invocations: usize,
}

impl SimExecutor {
    pub fn new(scenario: Scenario) -> Self {
        SimExecutor {
            scenario,
            invocations: 0,
        }
    }
}

impl OrderExecutor for SimExecutor {
    fn execute(&mut self, request: &ExecRequest<'_>) -> Execution {
        self.invocations += 1;
        match execute(&self.scenario, request.order, request.rerun_index) {
            Ok(outcomes) => Execution::completed(outcomes),
            Err(e) => Execution::infrastructure(e.to_string()),
        }
    }

    fn isolate(&mut self, test_id: &str) -> Result<Execution, ProbeError> {
        self.invocations += 1;
        execute(&self.scenario, &[test_id.to_string()], 0)
            .map(Execution::completed)
            .map_err(|_| ProbeError::UnknownTest(test_id.to_string()))
    }
}
