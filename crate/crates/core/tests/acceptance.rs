//! Acceptance gate: one line per criterion, non-zero exit if any fails.
//!
//! Expected values are computed here from first principles (closed-form
//! predecessor rules, independent permutation enumeration, character
//! multisets), never read back from the code under test.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use jstod::orchestrate::{run_plan, ExecRequest, Execution, OrderExecutor, Outcome, RunConfig, RunLedger};
use jstod::permute::{randomize_order, Level};
use jstod::pipeline::{detect_scenario, plan_group};
use jstod::report::ProjectReport;
use jstod::rewrite::{propose_mock_reset_patch, render_variant, variant_test_order};
use jstod::simharness::{expected_verdicts, oracle, Behavior, ExpectedClass, Scenario, SimTest};
use jstod::testmodel::{enumerate_level, parse_source, parse_test_file, ItemKind, ItemLevel, TestTree};
use jstod::verdict::{Classification, Role};

const PERMUTATION_BUDGET: Duration = Duration::from_secs(1);
const ROUND_TRIP_BUDGET: Duration = Duration::from_secs(5);
const ORACLE_BUDGET: Duration = Duration::from_secs(30);
const MIN_FIXTURE_FILES: usize = 20;
const PROTOCOL_EXECUTIONS: usize = 100;
const FLAKY_SEEDS: u64 = 50;

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

fn fixtures(sub: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(sub)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

/// Heap's algorithm, independent of the crate's lexicographic stepper.
fn all_permutations(items: &[String]) -> BTreeSet<Vec<String>> {
    fn heap(k: usize, a: &mut Vec<String>, out: &mut BTreeSet<Vec<String>>) {
        if k <= 1 {
            out.insert(a.clone());
            return;
        }
        for i in 0..k {
            heap(k - 1, a, out);
            if k.is_multiple_of(2) {
                a.swap(i, k - 1);
            } else {
                a.swap(0, k - 1);
            }
        }
    }
    let mut out = BTreeSet::new();
    heap(items.len(), &mut items.to_vec(), &mut out);
    out
}

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("t{i}")).collect()
}

fn permutation_law() -> Check {
    let started = Instant::now();
    let mut cases = 0;
    for n in 1..=6 {
        let items = ids(n);
        let universe = all_permutations(&items);
        let nf = factorial(n);
        for reorder_num in [1, 10, nf, nf + 5] {
            for seed in [0u64, 1, 0xdead_beef] {
                let plan =
                    randomize_order(&items, reorder_num, seed).map_err(|e| format!("n={n} r={reorder_num}: {e}"))?;
                let want = nf.min(reorder_num) as usize;
                ensure(plan.orders.len() == want, || {
                    format!(
                        "n={n} r={reorder_num} seed={seed}: {} orders, want {want}",
                        plan.orders.len()
                    )
                })?;
                let distinct: BTreeSet<&Vec<String>> = plan.orders.iter().collect();
                ensure(distinct.len() == want, || {
                    format!("n={n} r={reorder_num}: duplicate orders")
                })?;
                ensure(plan.orders.iter().all(|o| universe.contains(o)), || {
                    format!("n={n} r={reorder_num}: an order is not a permutation of the input")
                })?;
                cases += 1;
            }
        }
    }
    let items = ids(3);
    let plan = randomize_order(&items, 10, 7).map_err(|e| e.to_string())?;
    let got: BTreeSet<Vec<String>> = plan.orders.iter().cloned().collect();
    ensure(got == all_permutations(&items), || {
        "n=3 r=10 did not yield all 6 orders".into()
    })?;
    let elapsed = started.elapsed();
    ensure(elapsed < PERMUTATION_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{cases} (n, reorder_num, seed) cases exact; n=3,r=10 -> all 6; {elapsed:.2?}"
    ))
}

/// Counts every invocation and the (order, rerun) pairs it saw.
#[derive(Default)]
struct Counting {
    seen: Vec<(usize, u32, Vec<String>)>,
}

impl OrderExecutor for Counting {
    fn execute(&mut self, r: &ExecRequest<'_>) -> Execution {
        self.seen.push((r.order_id, r.rerun_index, r.order.to_vec()));
        Execution::completed(r.order.iter().map(|id| (id.clone(), Outcome::Pass)).collect())
    }
}

fn protocol_fidelity() -> Check {
    let cfg = RunConfig::default();
    ensure(cfg.reorders == 10 && cfg.reruns == 10, || {
        "defaults are not 10 x 10".into()
    })?;
    let mut groups = 0;
    for (level, n) in [
        (Level::Test, 4),
        (Level::Describe, 5),
        (Level::Suite, 6),
        (Level::Test, 12),
    ] {
        let group = format!("{level}-group-{n}");
        let plan = plan_group(&cfg, level, &group, &ids(n)).map_err(|e| e.to_string())?;
        let mut exec = Counting::default();
        let mut ledger = RunLedger::default();
        let records = run_plan(&mut exec, &plan, cfg.reruns, &mut ledger);
        let invocations = ledger.invocations(&group);
        ensure(invocations == PROTOCOL_EXECUTIONS, || {
            format!("{group}: ledger shows {invocations} executions")
        })?;
        ensure(
            records.len() == PROTOCOL_EXECUTIONS && exec.seen.len() == PROTOCOL_EXECUTIONS,
            || format!("{group}: {} records, {} invocations", records.len(), exec.seen.len()),
        )?;
        let pairs: BTreeSet<(usize, u32)> = exec.seen.iter().map(|(o, r, _)| (*o, *r)).collect();
        ensure(pairs.len() == PROTOCOL_EXECUTIONS, || {
            format!("{group}: repeated (order, rerun) pair")
        })?;
        let orders: BTreeSet<&Vec<String>> = exec.seen.iter().map(|(_, _, o)| o).collect();
        ensure(orders.len() == 10, || {
            format!("{group}: {} distinct orders executed", orders.len())
        })?;
        ensure(ledger.is_serial(), || format!("{group}: overlapping executions"))?;
        groups += 1;
    }
    Ok(format!(
        "{groups} groups, each exactly 10 orders x 10 reruns = {PROTOCOL_EXECUTIONS} serial executions"
    ))
}

fn char_multiset(s: &str) -> BTreeMap<char, usize> {
    let mut m = BTreeMap::new();
    for c in s.chars().filter(|c| !c.is_whitespace()) {
        *m.entry(c).or_insert(0) += 1;
    }
    m
}

fn test_texts(tree: &TestTree) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for t in tree.tests() {
        *m.entry(t.span.slice(&tree.source).to_string()).or_insert(0) += 1;
    }
    m
}

fn round_trip() -> Check {
    let started = Instant::now();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(fixtures("round_trip"))
        .map_err(|e| e.to_string())?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .collect();
    paths.sort();
    ensure(paths.len() >= MIN_FIXTURE_FILES, || {
        format!("only {} fixture files", paths.len())
    })?;

    let (mut chains, mut deep, mut dynamic, mut requires) = (false, false, false, false);
    let (mut groups, mut variants) = (0, 0);
    let cfg = RunConfig::default();
    for path in &paths {
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        let tree = parse_test_file(path).map_err(|e| format!("{name}: {e}"))?;
        let items = tree.all_items();
        chains |= items.iter().any(|i| i.callee.matches('.').count() >= 2);
        deep |= items.iter().any(|i| i.kind == ItemKind::Test && i.depth >= 3);
        dynamic |= items.iter().any(|i| i.is_dynamic());
        requires |= tree.source.starts_with("/*")
            && tree.source.lines().filter(|l| l.contains("= require(")).count() >= 5
            && items
                .iter()
                .filter(|i| i.kind == ItemKind::Describe && i.depth == 0)
                .count()
                >= 2;
        ensure(tree.reassemble() == tree.source, || {
            format!("{name}: tiles do not reassemble the source")
        })?;

        for level in [ItemLevel::Test, ItemLevel::Describe] {
            for group in enumerate_level(&tree, level) {
                groups += 1;
                let identity = render_variant(&tree, &group, &group.member_ids).map_err(|e| format!("{name}: {e}"))?;
                ensure(identity.as_bytes() == tree.source.as_bytes(), || {
                    format!("{name} {}: identity differs", group.id)
                })?;
                let lv = if level == ItemLevel::Test {
                    Level::Test
                } else {
                    Level::Describe
                };
                let plan = plan_group(&cfg, lv, &group.id, &group.member_ids).map_err(|e| e.to_string())?;
                for order in &plan.orders {
                    variants += 1;
                    let text = render_variant(&tree, &group, order).map_err(|e| format!("{name}: {e}"))?;
                    ensure(char_multiset(&text) == char_multiset(&tree.source), || {
                        format!("{name} {}: characters not conserved", group.id)
                    })?;
                    let reparsed =
                        parse_source(path, text).map_err(|e| format!("{name}: variant does not parse: {e}"))?;
                    ensure(test_texts(&reparsed) == test_texts(&tree), || {
                        format!("{name} {}: test statements not conserved", group.id)
                    })?;
                    // the variant's tests, read in document order, are the
                    // original tests in the permuted order
                    let moved = variant_test_order(&tree, &group, order).map_err(|e| e.to_string())?;
                    let by_id: HashMap<String, String> = tree
                        .tests()
                        .iter()
                        .map(|t| (t.id.clone(), t.span.slice(&tree.source).to_string()))
                        .collect();
                    let expected: Vec<&str> = moved.iter().map(|id| by_id[id].as_str()).collect();
                    let actual: Vec<&str> = reparsed
                        .tests()
                        .iter()
                        .map(|t| t.span.slice(&reparsed.source))
                        .collect();
                    ensure(expected == actual, || {
                        format!("{name} {}: test sequence mismatch", group.id)
                    })?;
                }
            }
        }
    }
    ensure(chains, || "corpus lacks a modifier chain".into())?;
    ensure(deep, || "corpus lacks a test nested in three describes".into())?;
    ensure(dynamic, || "corpus lacks a dynamic name".into())?;
    ensure(requires, || "corpus lacks a leading-require file".into())?;
    let elapsed = started.elapsed();
    ensure(elapsed < ROUND_TRIP_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} files, {groups} groups, {variants} variants conserved; {elapsed:.2?}",
        paths.len()
    ))
}

/// Expected pass/fail of `test` given the tests before it, from the
/// behavior definitions alone.
fn closed_form(test: &SimTest, before: &[&SimTest], mock_reset: bool) -> Option<bool> {
    let earlier = |f: &dyn Fn(&Behavior) -> bool| before.iter().any(|t| f(&t.behavior));
    Some(match &test.behavior {
        Behavior::Independent { pass_prob } if *pass_prob == 1.0 => true,
        Behavior::Independent { pass_prob } if *pass_prob == 0.0 => false,
        Behavior::Independent { .. } => return None,
        Behavior::Polluter { .. } | Behavior::StateSetter { .. } | Behavior::MockUser { .. } => true,
        Behavior::Victim { state_key } => {
            !earlier(&|b| matches!(b, Behavior::Polluter { state_key: k } if k == state_key))
        }
        Behavior::Brittle { state_key } => {
            earlier(&|b| matches!(b, Behavior::StateSetter { state_key: k } if k == state_key))
        }
        Behavior::MockCaller {
            mock_key,
            expected_calls,
        } => {
            let prior = before
                .iter()
                .filter(|t| matches!(&t.behavior, Behavior::MockCaller { mock_key: k, .. } | Behavior::MockUser { mock_key: k } if k == mock_key))
                .count() as u32;
            (if mock_reset { 0 } else { prior }) + 1 == *expected_calls
        }
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Want {
    Stable,
    Od(BTreeSet<Vec<String>>),
    FailsByDefault,
}

fn want_for(s: &Scenario) -> BTreeMap<String, Want> {
    let orders = all_permutations(&s.ids());
    let outcome = |order: &[String], id: &str| {
        let pos = order.iter().position(|x| x == id).unwrap();
        let before: Vec<&SimTest> = order[..pos].iter().map(|i| s.test(i).unwrap()).collect();
        closed_form(s.test(id).unwrap(), &before, s.mock_reset).expect("deterministic")
    };
    s.ids()
        .into_iter()
        .map(|id| {
            let w = if !outcome(&s.ids(), &id) {
                Want::FailsByDefault
            } else {
                let failing: BTreeSet<Vec<String>> = orders.iter().filter(|o| !outcome(o, &id)).cloned().collect();
                if failing.is_empty() {
                    Want::Stable
                } else {
                    Want::Od(failing)
                }
            };
            (id, w)
        })
        .collect()
}

fn exhaustive(s: &Scenario) -> Result<ProjectReport, String> {
    let cfg = RunConfig {
        reorders: factorial(s.tests.len()),
        ..RunConfig::default()
    };
    detect_scenario(s, &cfg).map_err(|e| format!("{}: {e}", s.name))
}

fn got_for(report: &ProjectReport) -> BTreeMap<String, (Classification, BTreeSet<Vec<String>>, Role)> {
    let group = &report.levels[0].groups[0];
    group
        .verdicts
        .iter()
        .map(|v| {
            let failing = v.consistent_failures().map(|i| group.orders[i].order.clone()).collect();
            (v.subject.clone(), (v.classification, failing, v.role))
        })
        .collect()
}

fn scenario_fixtures() -> Result<Vec<Scenario>, String> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(fixtures("scenarios"))
        .map_err(|e| e.to_string())?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| Scenario::load(p).map_err(|e| e.to_string()))
        .collect()
}

/// Every valid scenario of up to three tests over a small behavior set.
fn generated_scenarios() -> Vec<Scenario> {
    let alphabet = [
        Behavior::Independent { pass_prob: 1.0 },
        Behavior::Independent { pass_prob: 0.0 },
        Behavior::Polluter { state_key: "k".into() },
        Behavior::Victim { state_key: "k".into() },
        Behavior::StateSetter { state_key: "k".into() },
        Behavior::Brittle { state_key: "k".into() },
        Behavior::MockCaller {
            mock_key: "m".into(),
            expected_calls: 1,
        },
        Behavior::MockUser { mock_key: "m".into() },
    ];
    let mut out = Vec::new();
    for n in 1..=3u32 {
        for code in 0..alphabet.len().pow(n) {
            let mut c = code;
            let tests = (0..n as usize)
                .map(|i| {
                    let b = alphabet[c % alphabet.len()].clone();
                    c /= alphabet.len();
                    SimTest {
                        id: format!("t{i}"),
                        behavior: b,
                    }
                })
                .collect();
            let s = Scenario::new(&format!("gen-{n}-{code}"), tests);
            if s.validate().is_ok() {
                out.push(s);
            }
        }
    }
    out
}

fn all_scenarios() -> Result<Vec<Scenario>, String> {
    let mut all = scenario_fixtures()?;
    all.extend(generated_scenarios());
    Ok(all)
}

fn oracle_equivalence(scenarios: &[Scenario]) -> Check {
    let started = Instant::now();
    let (mut od, mut stable_indep) = (0, 0);
    for s in scenarios {
        ensure(s.tests.len() <= 4, || format!("{}: more than 4 tests", s.name))?;
        let report = exhaustive(s)?;
        let group = &report.levels[0].groups[0];
        ensure(group.orders.len() as u64 == factorial(s.tests.len()), || {
            format!("{}: not exhaustive", s.name)
        })?;
        ensure(group.orders.iter().all(|o| o.runs.len() == 10), || {
            format!("{}: not 10 reruns", s.name)
        })?;
        let got = got_for(&report);
        let want = want_for(s);
        // the crate's own analytic oracle must agree with the closed form too
        let rows = oracle(s).map_err(|e| e.to_string())?;
        let lib = expected_verdicts(&rows, &s.ids());
        for (id, w) in &want {
            let (class, failing, _) = got.get(id).ok_or_else(|| format!("{}: no verdict for {id}", s.name))?;
            let ok = match w {
                Want::Stable => *class == Classification::Stable,
                Want::Od(orders) => *class == Classification::OrderDependent && failing == orders,
                Want::FailsByDefault => *class == Classification::FlakyNonOd,
            };
            ensure(ok, || {
                format!(
                    "{}: {id} classified {class:?} with {} failing orders, want {w:?}",
                    s.name,
                    failing.len()
                )
            })?;
            let lib_ok = match (w, &lib[id]) {
                (Want::Stable, ExpectedClass::Stable) | (Want::FailsByDefault, ExpectedClass::FailsByDefault) => true,
                (Want::Od(orders), ExpectedClass::OrderDependent { failing_rows }) => {
                    failing_rows
                        .iter()
                        .map(|&r| rows[r].order.clone())
                        .collect::<BTreeSet<_>>()
                        == *orders
                }
                _ => false,
            };
            ensure(lib_ok, || format!("{}: library oracle disagrees for {id}", s.name))?;
            if matches!(w, Want::Od(_)) {
                od += 1;
            }
            if matches!(s.test(id).unwrap().behavior, Behavior::Independent { pass_prob } if pass_prob == 1.0) {
                ensure(*class == Classification::Stable, || {
                    format!("{}: false positive on {id}", s.name)
                })?;
                stable_indep += 1;
            }
        }
        check_families(s, &got)?;
    }
    let elapsed = started.elapsed();
    ensure(elapsed < ORACLE_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} scenarios exhaustive x 10 reruns; {od} OD verdicts exact; 0 false positives over {stable_indep} independent(1.0); {elapsed:.2?}",
        scenarios.len()
    ))
}

/// Family-specific statements, checked in plain terms on top of the
/// closed-form comparison.
fn check_families(
    s: &Scenario,
    got: &BTreeMap<String, (Classification, BTreeSet<Vec<String>>, Role)>,
) -> Result<(), String> {
    let before = |order: &[String], a: &str, b: &str| {
        order.iter().position(|x| x == a).unwrap() < order.iter().position(|x| x == b).unwrap()
    };
    match s.name.as_str() {
        "polluter_victim_pair" | "polluter_victim_with_bystanders" => {
            let (class, failing, _) = &got["victim"];
            let all = all_permutations(&s.ids());
            let want: BTreeSet<Vec<String>> = all.into_iter().filter(|o| before(o, "polluter", "victim")).collect();
            ensure(*class == Classification::OrderDependent && *failing == want, || {
                format!("{}: victim should fail exactly when the polluter precedes it", s.name)
            })
        }
        "listing1_setter_brittle" => {
            let (class, failing, role) = &got["second test"];
            ensure(
                *class == Classification::OrderDependent
                    && *role == Role::Brittle
                    && *failing == BTreeSet::from([vec!["second test".to_string(), "first test".to_string()]])
                    && got["first test"].0 == Classification::Stable,
                || "listing1: second test should be brittle, failing only when run first".into(),
            )
        }
        "listing4_shared_mock" => {
            let (class, failing, role) = &got["getAll"];
            ensure(
                *class == Classification::OrderDependent
                    && *role == Role::Victim
                    && *failing == BTreeSet::from([vec!["getAll promise".to_string(), "getAll".to_string()]]),
                || "listing4: getAll should fail only after the promise test".into(),
            )
        }
        "listing4_reversed_default" => ensure(got["getAll"].0 == Classification::FlakyNonOd, || {
            "listing4 reversed: failing in the default order must not be labeled order-dependent".into()
        }),
        _ => Ok(()),
    }
}

fn flaky_separation() -> Check {
    let mut flaky = 0;
    for seed in 0..FLAKY_SEEDS {
        let mut s = Scenario::new(
            "flaky",
            vec![
                SimTest {
                    id: "coin".into(),
                    behavior: Behavior::Independent { pass_prob: 0.3 },
                },
                SimTest {
                    id: "a".into(),
                    behavior: Behavior::Independent { pass_prob: 1.0 },
                },
                SimTest {
                    id: "b".into(),
                    behavior: Behavior::Independent { pass_prob: 1.0 },
                },
                SimTest {
                    id: "c".into(),
                    behavior: Behavior::Independent { pass_prob: 1.0 },
                },
            ],
        );
        s.stochastic = true;
        s.rng_seed = seed;
        let report = detect_scenario(&s, &RunConfig::default()).map_err(|e| e.to_string())?;
        let group = &report.levels[0].groups[0];
        ensure(
            group.orders.len() == 10 && group.orders.iter().all(|o| o.runs.len() == 10),
            || format!("seed {seed}: not the 10 x 10 protocol"),
        )?;
        for v in &group.verdicts {
            ensure(v.classification != Classification::OrderDependent, || {
                format!("seed {seed}: {} labeled order-dependent", v.subject)
            })?;
        }
        let coin = group
            .verdicts
            .iter()
            .find(|v| v.subject == "coin")
            .ok_or("no verdict for coin")?;
        ensure(coin.classification == Classification::FlakyNonOd, || {
            format!("seed {seed}: coin classified {:?}", coin.classification)
        })?;
        flaky += 1;
    }
    Ok(format!(
        "independent(0.3) flaky_non_od under {flaky}/{FLAKY_SEEDS} seeds, never order_dependent"
    ))
}

fn uses_mock(s: &Scenario) -> bool {
    s.tests
        .iter()
        .any(|t| matches!(t.behavior, Behavior::MockCaller { .. }))
}

fn fix_reproduction(scenarios: &[Scenario]) -> Check {
    let (mut flipped, mut unchanged) = (0, 0);
    for s in scenarios {
        let before = got_for(&exhaustive(s)?);
        let after = got_for(&exhaustive(&s.with_mock_reset())?);
        for (id, (class, _, _)) in &before {
            let is_mock = matches!(s.test(id).unwrap().behavior, Behavior::MockCaller { .. });
            if is_mock && *class == Classification::OrderDependent {
                ensure(after[id].0 == Classification::Stable, || {
                    format!("{}: {id} stays {:?} after the mock reset", s.name, after[id].0)
                })?;
                flipped += 1;
            } else if !is_mock {
                ensure(after[id] == before[id], || {
                    format!("{}: {id} changed under the mock reset", s.name)
                })?;
                unchanged += 1;
            }
        }
    }
    ensure(flipped > 0, || "no shared-mock order-dependent verdicts to flip".into())?;
    ensure(scenarios.iter().any(uses_mock), || "no mock scenarios".into())?;

    // the source-level transform inserts the reset where call counts are asserted
    let src = std::fs::read_to_string(fixtures("round_trip/18_mocks.test.js")).map_err(|e| e.to_string())?;
    let tree = parse_source(Path::new("18_mocks.test.js"), src).map_err(|e| e.to_string())?;
    let patch = propose_mock_reset_patch(&tree);
    let patched = parse_source(Path::new("18_mocks.test.js"), patch.content.clone()).map_err(|e| e.to_string())?;
    ensure(
        patch.sites.len() == 2 && patch.content.matches("jest.clearAllMocks();").count() == 2,
        || format!("mock fixture: {} hook sites", patch.sites.len()),
    )?;
    ensure(test_texts(&patched) == test_texts(&tree), || {
        "mock patch altered test bodies".into()
    })?;
    Ok(format!(
        "{flipped} shared-mock OD verdicts -> stable; {unchanged} other verdicts unchanged; source patch adds 2 hooks"
    ))
}

fn role_assignment(scenarios: &[Scenario]) -> Check {
    let (mut victims, mut brittle) = (0, 0);
    for s in scenarios {
        for (id, (class, _, role)) in got_for(&exhaustive(s)?) {
            if class != Classification::OrderDependent {
                continue;
            }
            // ground truth: a test that passes alone is a victim
            let alone = closed_form(s.test(&id).unwrap(), &[], s.mock_reset).expect("deterministic");
            let want = if alone { Role::Victim } else { Role::Brittle };
            ensure(role == want, || format!("{}: {id} got {role:?}, want {want:?}", s.name))?;
            match want {
                Role::Victim => victims += 1,
                _ => brittle += 1,
            }
        }
    }
    ensure(victims > 0 && brittle > 0, || {
        "scenarios lack either victims or brittle tests".into()
    })?;
    Ok(format!(
        "{victims} victims and {brittle} brittle tests assigned correctly"
    ))
}

fn main() {
    let scenarios = match all_scenarios() {
        Ok(s) => s,
        Err(e) => {
            println!("FAIL scenario fixtures: {e}");
            std::process::exit(1);
        }
    };
    let criteria: Vec<Criterion> = vec![
        ("permutation law", Box::new(permutation_law)),
        ("protocol fidelity", Box::new(protocol_fidelity)),
        ("round-trip", Box::new(round_trip)),
        ("oracle equivalence", Box::new(|| oracle_equivalence(&scenarios))),
        ("flaky-vs-od separation", Box::new(flaky_separation)),
        ("fix reproduction", Box::new(|| fix_reproduction(&scenarios))),
        ("role assignment", Box::new(|| role_assignment(&scenarios))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
