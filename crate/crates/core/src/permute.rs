//! Unique random orders for one group of reorderable units.
//!
//! When the requested number of orders reaches `n!`, every permutation is
//! returned in lexicographic order of input positions. Otherwise a seeded
//! uniform shuffle is drawn repeatedly and only unseen results are kept.

use std::collections::HashSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Consecutive duplicate draws, per requested order, before the sampler
/// switches to systematic enumeration.
pub const STALL_FACTOR: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Test,
    Describe,
    Suite,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Test, Level::Describe, Level::Suite];

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Test => "test",
            Level::Describe => "describe",
            Level::Suite => "suite",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "test" => Ok(Level::Test),
            "describe" => Ok(Level::Describe),
            "suite" => Ok(Level::Suite),
            other => Err(format!("unknown level '{other}' (expected test, describe or suite)")),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PermuteError {
    #[error("cannot reorder an empty group")]
    Empty,
    #[error("reorder count must be at least 1")]
    ZeroReorders,
    #[error("group contains duplicate id '{0}'")]
    DuplicateId(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderPlan {
    pub level: Level,
    pub group_id: String,
    /// The group's members in their default (source or discovery) order.
    pub default_order: Vec<String>,
    pub orders: Vec<Vec<String>>,
    pub seed: u64,
    pub requested: u64,
    pub exhaustive: bool,
}

impl OrderPlan {
    pub fn is_default(&self, index: usize) -> bool {
        self.orders.get(index) == Some(&self.default_order)
    }
}

/// `n!`, saturating at `u64::MAX` (from `n = 21` on).
pub fn factorial(n: usize) -> u64 {
    (1..=n as u64)
        .try_fold(1u64, |acc, k| acc.checked_mul(k))
        .unwrap_or(u64::MAX)
}

/// Rearranges `perm` into the next permutation in lexicographic order;
/// returns false (leaving it sorted) after the last one.
pub fn next_permutation(perm: &mut [usize]) -> bool {
    if perm.len() < 2 {
        return false;
    }
    let Some(i) = (0..perm.len() - 1).rev().find(|&i| perm[i] < perm[i + 1]) else {
        perm.reverse();
        return false;
    };
    let j = (i + 1..perm.len())
        .rev()
        .find(|&j| perm[j] > perm[i])
        .expect("successor exists");
    perm.swap(i, j);
    perm[i + 1..].reverse();
    true
}

/// Returns `min(n!, reorder_num)` distinct orders of `items`.
pub fn randomize_order(items: &[String], reorder_num: u64, seed: u64) -> Result<OrderPlan, PermuteError> {
    randomize_group(Level::Test, "", items, reorder_num, seed)
}

pub fn randomize_group(
    level: Level,
    group_id: &str,
    items: &[String],
    reorder_num: u64,
    seed: u64,
) -> Result<OrderPlan, PermuteError> {
    if items.is_empty() {
        return Err(PermuteError::Empty);
    }
    if reorder_num == 0 {
        return Err(PermuteError::ZeroReorders);
    }
    let mut seen = HashSet::new();
    for id in items {
        if !seen.insert(id) {
            return Err(PermuteError::DuplicateId(id.clone()));
        }
    }
    let n = items.len();
    let all = factorial(n);
    // n >= 21 saturates, so it always samples
    let exhaustive = n <= 20 && reorder_num >= all;
    let indices = if exhaustive {
        enumerate_all(n)
    } else {
        sample_unique(n, reorder_num as usize, seed)
    };
    Ok(OrderPlan {
        level,
        group_id: group_id.to_string(),
        default_order: items.to_vec(),
        orders: indices
            .into_iter()
            .map(|p| p.into_iter().map(|i| items[i].clone()).collect())
            .collect(),
        seed,
        requested: reorder_num,
        exhaustive,
    })
}

fn enumerate_all(n: usize) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut out = vec![perm.clone()];
    while next_permutation(&mut perm) {
        out.push(perm.clone());
    }
    out
}

fn sample_unique(n: usize, wanted: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: HashSet<Vec<usize>> = HashSet::with_capacity(wanted);
    let mut out = Vec::with_capacity(wanted);
    let stall_limit = STALL_FACTOR.saturating_mul(wanted as u64);
    let mut stalled = 0u64;
    let mut base: Vec<usize> = (0..n).collect();
    while out.len() < wanted {
        base.shuffle(&mut rng);
        if seen.insert(base.clone()) {
            out.push(base.clone());
            stalled = 0;
            continue;
        }
        stalled += 1;
        if stalled >= stall_limit {
            fill_systematically(n, wanted, &mut seen, &mut out);
        }
    }
    out
}

fn fill_systematically(n: usize, wanted: usize, seen: &mut HashSet<Vec<usize>>, out: &mut Vec<Vec<usize>>) {
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        if out.len() >= wanted {
            return;
        }
        if seen.insert(perm.clone()) {
            out.push(perm.clone());
        }
        if !next_permutation(&mut perm) {
            return;
        }
    }
}

/// Per-group seed derived from the run seed, so each group's sample is
/// reproducible independently of which other groups exist.
pub fn group_seed(run_seed: u64, group_id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in group_id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix(run_seed ^ h)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("t{i}")).collect()
    }

    #[test]
    fn three_items_ten_requested_is_exhaustive() {
        let plan = randomize_order(&ids(3), 10, 7).unwrap();
        assert!(plan.exhaustive);
        assert_eq!(plan.orders.len(), 6);
        assert_eq!(plan.orders[0], ids(3));
        assert!(plan.is_default(0));
    }

    #[test]
    fn single_item() {
        let plan = randomize_order(&ids(1), 10, 0).unwrap();
        assert!(plan.exhaustive);
        assert_eq!(plan.orders, vec![ids(1)]);
    }

    #[test]
    fn errors() {
        assert_eq!(randomize_order(&[], 3, 0), Err(PermuteError::Empty));
        assert_eq!(randomize_order(&ids(2), 0, 0), Err(PermuteError::ZeroReorders));
        let dup = vec!["a".to_string(), "a".to_string()];
        assert!(matches!(randomize_order(&dup, 2, 0), Err(PermuteError::DuplicateId(_))));
    }

    #[test]
    fn factorial_saturates() {
        assert_eq!(factorial(0), 1);
        assert_eq!(factorial(5), 120);
        assert_eq!(factorial(20), 2_432_902_008_176_640_000);
        assert_eq!(factorial(21), u64::MAX);
    }

    #[test]
    fn large_groups_sample() {
        let plan = randomize_order(&ids(25), 10, 3).unwrap();
        assert!(!plan.exhaustive);
        assert_eq!(plan.orders.len(), 10);
    }

    #[test]
    fn systematic_fill_completes() {
        let mut seen = HashSet::new();
        seen.insert(vec![0, 1, 2]);
        let mut out = vec![vec![0, 1, 2]];
        fill_systematically(3, 4, &mut seen, &mut out);
        assert_eq!(out, vec![vec![0, 1, 2], vec![0, 2, 1], vec![1, 0, 2], vec![1, 2, 0]]);
    }

    #[test]
    fn group_seeds_differ() {
        assert_ne!(group_seed(1, "a"), group_seed(1, "b"));
        assert_eq!(group_seed(9, "x"), group_seed(9, "x"));
    }

    proptest! {
        #[test]
        fn plans_obey_permutation_laws(n in 1usize..8, reorders in 1u64..60, seed in any::<u64>()) {
            let items = ids(n);
            let plan = randomize_order(&items, reorders, seed).unwrap();
            prop_assert_eq!(plan.orders.len() as u64, factorial(n).min(reorders));
            prop_assert_eq!(plan.exhaustive, reorders >= factorial(n));
            let unique: HashSet<_> = plan.orders.iter().collect();
            prop_assert_eq!(unique.len(), plan.orders.len());
            let mut sorted_items = items.clone();
            sorted_items.sort();
            for order in &plan.orders {
                let mut o = order.clone();
                o.sort();
                prop_assert_eq!(&o, &sorted_items);
            }
            prop_assert_eq!(plan, randomize_order(&items, reorders, seed).unwrap());
        }
    }
}
