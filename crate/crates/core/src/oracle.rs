//! Exhaustive maximizer of the selection objective for small instances.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::problem::{evaluate_objective, SelectionProblem};

/// Cap on the number of `p`-subsets an exhaustive search may visit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleLimit {
    pub max_combinations: u64,
}

impl Default for OracleLimit {
    fn default() -> Self {
        Self {
            max_combinations: 2_000_000,
        }
    }
}

/// Exact optimum of a selection problem.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    /// Ascending indices.
    pub selected: Vec<usize>,
    pub objective: f64,
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step.
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Objective of `subset` via pairwise lookups; summation order follows the
/// subset order so equal-valued subsets compare equal.
fn subset_value(problem: &SelectionProblem, subset: &[usize]) -> f64 {
    let scores = problem.scores().values();
    let k = problem.similarity();
    let mut linear = 0.0;
    let mut pairwise = 0.0;
    for (a, &z) in subset.iter().enumerate() {
        linear += scores[z];
        for &s in &subset[a + 1..] {
            pairwise += k.get(z, s) + k.get(s, z);
        }
    }
    linear - problem.alpha() * pairwise
}

/// Advances `comb` to the next `p`-subset of `0..n` in lexicographic order,
/// keeping `comb[0]` fixed. Returns false when exhausted.
fn next_combination(comb: &mut [usize], n: usize) -> bool {
    let p = comb.len();
    let mut i = p;
    while i > 1 {
        i -= 1;
        if comb[i] < n - p + i {
            comb[i] += 1;
            for j in i + 1..p {
                comb[j] = comb[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Prefers the higher objective, then the lexicographically smaller set.
fn better(a: &OracleSolution, b: &OracleSolution) -> bool {
    a.objective > b.objective || (a.objective == b.objective && a.selected < b.selected)
}

/// Enumerates every `p`-subset and returns the best one.
///
/// Work is split by the first (smallest) index of the subset; blocks are
/// merged deterministically, so the answer does not depend on scheduling.
pub fn brute_force_optimum(problem: &SelectionProblem, limit: &OracleLimit) -> Result<OracleSolution> {
    let n = problem.n();
    let p = problem.budget();
    let count = binomial(n, p);
    if count > limit.max_combinations as u128 {
        return Err(Error::Capacity(format!(
            "C({n}, {p}) = {count} subsets exceeds the limit of {}",
            limit.max_combinations
        )));
    }

    (0..=n - p)
        .into_par_iter()
        .map(|first| {
            let mut comb: Vec<usize> = (first..first + p).collect();
            let mut best = OracleSolution {
                objective: subset_value(problem, &comb),
                selected: comb.clone(),
            };
            while next_combination(&mut comb, n) {
                let v = subset_value(problem, &comb);
                if v > best.objective {
                    best.objective = v;
                    best.selected.copy_from_slice(&comb);
                }
            }
            best
        })
        .reduce_with(|a, b| if better(&b, &a) { b } else { a })
        .map(|best| OracleSolution {
            objective: evaluate_objective(problem, &best.selected).expect("valid subset"),
            selected: best.selected,
        })
        .ok_or_else(|| Error::input("empty search space"))
}
