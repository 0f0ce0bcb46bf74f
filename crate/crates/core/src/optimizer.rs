//! Cardinality-constrained maximization of an [`Objective`].
//!
//! Every path uses the same tie rule: among candidates whose gain is within
//! `1e-12` of the step's maximum, the lowest index wins. Lazy greedy keeps
//! stale upper bounds in a max-heap and re-evaluates a candidate only when
//! its bound could still reach the current best, so on submodular
//! objectives it returns exactly the naive sequence.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::objectives::{Objective, ObjectiveState};
use crate::{Error, Result, Scalar};

/// Gains within this absolute distance of the best are ties.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Upper bound on the number of subsets [`exhaustive_maximize`] visits.
pub const EXHAUSTIVE_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Naive,
    #[default]
    Lazy,
    Exhaustive,
}

impl FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "naive" => Ok(Algorithm::Naive),
            "lazy" => Ok(Algorithm::Lazy),
            "exhaustive" => Ok(Algorithm::Exhaustive),
            other => Err(format!("unknown algorithm {other:?}")),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Naive => "naive",
            Algorithm::Lazy => "lazy",
            Algorithm::Exhaustive => "exhaustive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SelectionConfig {
    pub budget: usize,
    pub algorithm: Algorithm,
    /// Only consumed by randomized baselines; kept for provenance.
    pub rng_seed: u64,
}

impl SelectionConfig {
    pub fn new(budget: usize, algorithm: Algorithm) -> Self {
        Self { budget, algorithm, rng_seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult<T> {
    pub selected: Vec<usize>,
    pub gains: Vec<T>,
    pub total_value: T,
    pub evaluations: u64,
    /// Set when the budget exceeded the ground set and everything was taken.
    pub truncated: bool,
}

impl<T: Scalar> SelectionResult<T> {
    pub fn empty() -> Self {
        Self {
            selected: Vec::new(),
            gains: Vec::new(),
            total_value: T::zero(),
            evaluations: 0,
            truncated: false,
        }
    }
}

/// Greedy maximization under `|A| ≤ budget`, always spending the full
/// budget (gains may go to zero or negative).
///
/// Lazy evaluation requires submodularity, so it falls back to naive for
/// kinds where [`crate::ObjectiveKind::is_submodular`] is false.
pub fn greedy_maximize<T: Scalar>(objective: &Objective<T>, cfg: &SelectionConfig) -> Result<SelectionResult<T>> {
    let n = objective.ground_size();
    let steps = cfg.budget.min(n);
    let truncated = cfg.budget > n;
    let mut result = match cfg.algorithm {
        Algorithm::Exhaustive => exhaustive_maximize(objective, steps)?,
        Algorithm::Lazy if objective.kind().is_submodular() => lazy_greedy(objective, steps)?,
        _ => naive_greedy(objective, steps)?,
    };
    result.truncated = truncated;
    Ok(result)
}

fn finish<T: Scalar>(state: ObjectiveState<T>, gains: Vec<T>, evaluations: u64) -> SelectionResult<T> {
    SelectionResult {
        total_value: gains.iter().copied().sum(),
        selected: state.selected().to_vec(),
        gains,
        evaluations,
        truncated: false,
    }
}

/// Pick the lowest index whose gain is within the tie tolerance of the max.
fn pick<T: Scalar>(scored: &[(usize, T)]) -> Option<(usize, T)> {
    let tol = T::lit(TIE_TOLERANCE);
    let best = scored.iter().map(|&(_, g)| g).fold(T::neg_infinity(), T::max);
    scored
        .iter()
        .filter(|&&(_, g)| g >= best - tol)
        .min_by_key(|&&(i, _)| i)
        .copied()
}

fn naive_greedy<T: Scalar>(objective: &Objective<T>, steps: usize) -> Result<SelectionResult<T>> {
    let n = objective.ground_size();
    let mut state = objective.new_state();
    let mut gains = Vec::with_capacity(steps);
    let mut evaluations = 0u64;
    for _ in 0..steps {
        let scored: Vec<(usize, T)> = (0..n)
            .into_par_iter()
            .filter(|&i| !state.contains(i))
            .map(|i| objective.gain(&state, i).map(|g| (i, g)))
            .collect::<Result<_>>()?;
        evaluations += scored.len() as u64;
        let (winner, gain) = pick(&scored).ok_or_else(|| Error::Size("no candidates left".into()))?;
        objective.commit(&mut state, winner)?;
        gains.push(gain);
    }
    Ok(finish(state, gains, evaluations))
}

struct Bound<T> {
    value: T,
    index: usize,
    /// Selection size at which `value` was computed.
    round: usize,
}

impl<T: Scalar> PartialEq for Bound<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Bound<T> {}

impl<T: Scalar> PartialOrd for Bound<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Bound<T> {
    // max-heap on value, then lowest index first
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .partial_cmp(&other.value)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.index.cmp(&self.index))
    }
}

fn lazy_greedy<T: Scalar>(objective: &Objective<T>, steps: usize) -> Result<SelectionResult<T>> {
    let n = objective.ground_size();
    let tol = T::lit(TIE_TOLERANCE);
    let mut state = objective.new_state();
    let mut gains = Vec::with_capacity(steps);
    let mut evaluations = 0u64;

    let initial: Vec<T> = (0..n)
        .into_par_iter()
        .map(|i| objective.gain(&state, i))
        .collect::<Result<_>>()?;
    evaluations += n as u64;
    let mut heap: BinaryHeap<Bound<T>> = initial
        .into_iter()
        .enumerate()
        .map(|(index, value)| Bound { value, index, round: 0 })
        .collect();

    for round in 0..steps {
        // Find the best fresh gain. Bounds never underestimate, so once the
        // top is fresh it is the round's maximum.
        let best = loop {
            let top = heap.peek().ok_or_else(|| Error::Size("no candidates left".into()))?;
            if top.round == round {
                break top.value;
            }
            let mut top = heap.pop().expect("peeked");
            top.value = objective.gain(&state, top.index)?;
            top.round = round;
            evaluations += 1;
            heap.push(top);
        };

        // Every candidate that may tie with `best` has a bound ≥ best − tol.
        let mut contenders: Vec<Bound<T>> = Vec::new();
        let mut best = best;
        while let Some(top) = heap.peek() {
            if top.value < best - tol {
                break;
            }
            let mut top = heap.pop().expect("peeked");
            if top.round != round {
                top.value = objective.gain(&state, top.index)?;
                top.round = round;
                evaluations += 1;
                if top.value > best {
                    best = top.value;
                }
            }
            contenders.push(top);
        }
        let winner_pos = contenders
            .iter()
            .enumerate()
            .filter(|(_, b)| b.value >= best - tol)
            .min_by_key(|(_, b)| b.index)
            .map(|(pos, _)| pos)
            .expect("the fresh top is a contender");
        let winner = contenders.swap_remove(winner_pos);
        heap.extend(contenders);

        objective.commit(&mut state, winner.index)?;
        gains.push(winner.value);
    }
    Ok(finish(state, gains, evaluations))
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u128::MAX / 1024 {
            return u128::MAX;
        }
    }
    acc
}

/// Exact maximum of the objective over all subsets with at most `k`
/// elements. Ties within `1e-12` go to the lexicographically smallest sorted
/// index set. Gains are reported along the sorted order.
pub fn exhaustive_maximize<T: Scalar>(objective: &Objective<T>, k: usize) -> Result<SelectionResult<T>> {
    let n = objective.ground_size();
    let k = k.min(n);
    let count: u128 = (0..=k).map(|j| binomial(n, j)).fold(0u128, |a, b| a.saturating_add(b));
    if count > EXHAUSTIVE_LIMIT {
        return Err(Error::Size(format!(
            "exhaustive search over {count} subsets exceeds the limit of {EXHAUSTIVE_LIMIT}"
        )));
    }
    let tol = T::lit(TIE_TOLERANCE);
    let mut best_set: Vec<usize> = Vec::new();
    let mut best_value = T::zero();
    let mut evaluations = 1u64;
    for size in 1..=k {
        let mut combo: Vec<usize> = (0..size).collect();
        loop {
            let v = objective.eval(&combo)?;
            evaluations += 1;
            if v > best_value + tol || (v >= best_value - tol && combo < best_set) {
                best_value = v;
                best_set.clone_from(&combo);
            }
            // next combination in lexicographic order
            let mut i = size;
            while i > 0 && combo[i - 1] == n - size + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            combo[i - 1] += 1;
            for j in i..size {
                combo[j] = combo[j - 1] + 1;
            }
        }
    }
    let mut state = objective.new_state();
    let mut gains = Vec::with_capacity(best_set.len());
    for &a in &best_set {
        gains.push(objective.gain(&state, a)?);
        objective.commit(&mut state, a)?;
    }
    let mut result = finish(state, gains, evaluations);
    result.total_value = best_value;
    Ok(result)
}
