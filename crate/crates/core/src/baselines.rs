//! Non-SMI selection baselines: random, entropy uncertainty sampling (US),
//! targeted uncertainty sampling (TUS) and k-means++ seeding over gradient
//! embeddings (BADGE-style).
//!
//! Every baseline returns a [`SelectionResult`] so callers can treat SMI
//! objectives and baselines uniformly.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::datastore::{FeatureMatrix, ProbabilityMatrix};
use crate::kernel::SimilarityKernel;
use crate::optimizer::{SelectionResult, TIE_TOLERANCE};
use crate::{Error, Result, Scalar};

fn check_budget(n: usize, k: usize) -> Result<()> {
    if k > n {
        return Err(Error::Size(format!("budget {k} exceeds pool size {n}")));
    }
    Ok(())
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `k` distinct indices drawn uniformly without replacement, in draw order.
pub fn random_select<T: Scalar>(n: usize, k: usize, seed: u64) -> Result<SelectionResult<T>> {
    check_budget(n, k)?;
    let mut rng = rng_for(seed);
    // partial Fisher-Yates: position i receives a uniform draw from the rest
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(k);
    Ok(SelectionResult {
        gains: vec![T::zero(); k],
        selected: pool,
        total_value: T::zero(),
        evaluations: 0,
        truncated: false,
    })
}

/// Shannon entropy `−Σ p ln p` with `0 ln 0 = 0`.
pub fn entropy<T: Scalar>(p: &[T]) -> T {
    p.iter()
        .filter(|&&v| v > T::zero())
        .map(|&v| -v * v.ln())
        .sum()
}

/// Top-`k` by score, lowest index on ties (scores within `1e-12`).
fn top_k<T: Scalar>(scores: &[T], k: usize) -> SelectionResult<T> {
    let tol = T::lit(TIE_TOLERANCE);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // stable sort by descending score keeps index order among exact ties;
    // near-ties are resolved below
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal));
    let mut selected = Vec::with_capacity(k);
    let mut taken = vec![false; scores.len()];
    for _ in 0..k {
        let best = order.iter().find(|&&i| !taken[i]).map(|&i| scores[i]).expect("k <= n");
        let winner = order
            .iter()
            .copied()
            .filter(|&i| !taken[i] && scores[i] >= best - tol)
            .min()
            .expect("best itself qualifies");
        taken[winner] = true;
        selected.push(winner);
    }
    let gains: Vec<T> = selected.iter().map(|&i| scores[i]).collect();
    SelectionResult {
        total_value: gains.iter().copied().sum(),
        gains,
        selected,
        evaluations: scores.len() as u64,
        truncated: false,
    }
}

/// Uncertainty sampling: top-`k` rows by predictive entropy.
pub fn uncertainty_select<T: Scalar>(probs: &ProbabilityMatrix<T>, k: usize) -> Result<SelectionResult<T>> {
    check_budget(probs.rows(), k)?;
    let scores: Vec<T> = (0..probs.rows()).map(|i| entropy(probs.row(i))).collect();
    Ok(top_k(&scores, k))
}

/// Targeted uncertainty sampling: top-`k` by `H(p_i) · max_{j∈T} s_ij`.
pub fn targeted_uncertainty_select<T: Scalar>(
    probs: &ProbabilityMatrix<T>,
    s_ut: &SimilarityKernel<T>,
    k: usize,
) -> Result<SelectionResult<T>> {
    if probs.rows() != s_ut.rows() {
        return Err(Error::Shape(format!(
            "probability rows ({}) differ from cross-kernel rows ({})",
            probs.rows(),
            s_ut.rows()
        )));
    }
    check_budget(probs.rows(), k)?;
    let scores: Vec<T> = (0..probs.rows())
        .map(|i| entropy(probs.row(i)) * s_ut.row_max(i))
        .collect();
    Ok(top_k(&scores, k))
}

fn squared_distance<T: Scalar>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).map(|(&a, &b)| (a - b) * (a - b)).sum()
}

/// k-means++ seeding over embedding rows; gains are the squared distance
/// of each pick to its nearest previously chosen center (0 for the first).
pub fn badge_select<T: Scalar>(embeddings: &FeatureMatrix<T>, k: usize, seed: u64) -> Result<SelectionResult<T>> {
    check_budget(embeddings.rows(), k)?;
    if k == 0 {
        return Ok(SelectionResult::empty());
    }
    let mut rng = rng_for(seed);
    let first = rng.random_range(0..embeddings.rows());
    Ok(kmeans_pp_from(embeddings, k, first, &mut rng))
}

/// k-means++ seeding with a fixed first center.
pub fn kmeans_pp_from<T: Scalar, R: Rng>(
    embeddings: &FeatureMatrix<T>,
    k: usize,
    first: usize,
    rng: &mut R,
) -> SelectionResult<T> {
    let n = embeddings.rows();
    let mut chosen = vec![false; n];
    let mut selected = vec![first];
    let mut gains = vec![T::zero()];
    chosen[first] = true;
    let mut nearest: Vec<T> = (0..n)
        .map(|i| squared_distance(embeddings.row(i), embeddings.row(first)))
        .collect();
    let mut evaluations = n as u64;
    while selected.len() < k {
        let weights: Vec<f64> = (0..n)
            .map(|i| if chosen[i] { 0.0 } else { nearest[i].as_f64().max(0.0) })
            .collect();
        let next = match WeightedIndex::new(&weights) {
            Ok(dist) => dist.sample(rng),
            Err(_) => {
                // every remaining point coincides with a center
                let open: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
                open[rng.random_range(0..open.len())]
            }
        };
        chosen[next] = true;
        selected.push(next);
        gains.push(nearest[next]);
        let center = embeddings.row(next);
        for (i, d) in nearest.iter_mut().enumerate() {
            let cand = squared_distance(embeddings.row(i), center);
            if cand < *d {
                *d = cand;
            }
        }
        evaluations += n as u64;
    }
    SelectionResult {
        total_value: gains.iter().copied().sum(),
        gains,
        selected,
        evaluations,
        truncated: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::{prop_assert_eq, proptest};

    fn probs(rows: &[Vec<f64>]) -> ProbabilityMatrix<f64> {
        ProbabilityMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn random_is_seeded_permutation_prefix() {
        let all = random_select::<f64>(7, 7, 42).unwrap();
        let mut sorted = all.selected.clone();
        sorted.sort();
        assert_eq!(sorted, (0..7).collect::<Vec<_>>());
        assert!(random_select::<f64>(7, 0, 42).unwrap().selected.is_empty());
        assert_eq!(random_select::<f64>(50, 10, 9).unwrap(), random_select::<f64>(50, 10, 9).unwrap());
        assert_ne!(random_select::<f64>(50, 10, 9).unwrap().selected, random_select::<f64>(50, 10, 10).unwrap().selected);
        assert!(matches!(random_select::<f64>(3, 4, 0), Err(Error::Size(_))));
        let r = random_select::<f64>(10, 4, 1).unwrap();
        assert!(r.gains.iter().all(|&g| g == 0.0) && r.total_value == 0.0);
    }

    #[test]
    fn entropy_values() {
        let e = [entropy(&[0.5, 0.5]), entropy(&[1.0, 0.0]), entropy(&[0.9, 0.1])];
        assert!((e[0] - 2f64.ln()).abs() < 1e-15);
        assert_eq!(e[1], 0.0);
        assert!((e[2] - 0.325_082_973_391_448_2).abs() < 1e-15);
        assert!((entropy(&[0.25; 4]) - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn uncertainty_picks_max_entropy() {
        let p = probs(&[vec![0.5, 0.5], vec![1.0, 0.0], vec![0.9, 0.1]]);
        assert_eq!(uncertainty_select(&p, 1).unwrap().selected, vec![0]);
        assert_eq!(uncertainty_select(&p, 3).unwrap().selected, vec![0, 2, 1]);
        let onehot = probs(&[vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 0.0]]);
        assert_eq!(uncertainty_select(&onehot, 2).unwrap().selected, vec![0, 1]);
        assert!(matches!(uncertainty_select(&p, 4), Err(Error::Size(_))));
    }

    #[test]
    fn targeted_uncertainty() {
        let p = probs(&[vec![0.5, 0.5], vec![1.0, 0.0], vec![0.9, 0.1]]);
        let s = SimilarityKernel::from_rows(&[vec![0.1, 0.05], vec![1.0, 0.2], vec![0.3, 1.0]]).unwrap();
        let r = targeted_uncertainty_select(&p, &s, 1).unwrap();
        assert_eq!(r.selected, vec![2]);
        assert!((r.gains[0] - 0.325_082_973_391_448_2).abs() < 1e-15);
        let zero = SimilarityKernel::new(3, 2, vec![0.0; 6]).unwrap();
        assert_eq!(targeted_uncertainty_select(&p, &zero, 2).unwrap().selected, vec![0, 1]);
        assert!(targeted_uncertainty_select(&p, &s, 0).unwrap().selected.is_empty());
        let short = SimilarityKernel::new(2, 1, vec![0.0; 2]).unwrap();
        assert!(matches!(targeted_uncertainty_select(&p, &short, 1), Err(Error::Shape(_))));
    }

    #[test]
    fn kmeans_pp_second_center_is_far_point() {
        let e = FeatureMatrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0], vec![10.0, 0.0]]).unwrap();
        for seed in 0..20 {
            let r = kmeans_pp_from(&e, 2, 0, &mut rng_for(seed));
            assert_eq!(r.selected, vec![0, 2]);
            assert_eq!(r.gains, vec![0.0, 100.0]);
        }
    }

    #[test]
    fn kmeans_pp_identical_points_fall_back_to_uniform() {
        let e = FeatureMatrix::from_rows(&vec![vec![1.0, 1.0]; 5]).unwrap();
        let r = badge_select(&e, 5, 3).unwrap();
        let mut s = r.selected.clone();
        s.sort();
        assert_eq!(s, vec![0, 1, 2, 3, 4]);
        assert_eq!(badge_select(&e, 1, 3).unwrap().selected.len(), 1);
        assert!(badge_select(&e, 0, 3).unwrap().selected.is_empty());
        assert!(matches!(badge_select(&e, 6, 3), Err(Error::Size(_))));
    }

    proptest! {
        #[test]
        fn badge_never_duplicates(seed in 0u64..1000, n in 1usize..30) {
            let mut rng = rng_for(seed ^ 0xABCD);
            let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(0..3) as f64, rng.random_range(0..3) as f64]).collect();
            let e = FeatureMatrix::from_rows(&rows).unwrap();
            let k = (seed as usize % n) + 1;
            let r = badge_select(&e, k, seed).unwrap();
            let mut s = r.selected.clone();
            s.sort();
            s.dedup();
            prop_assert_eq!(s.len(), k);
            prop_assert_eq!(r, badge_select(&e, k, seed).unwrap());
        }

        #[test]
        fn uncertainty_is_class_permutation_invariant(
            raw in proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, 4), 1..15),
            k_frac in 0.0f64..1.0,
            rot in 0usize..4,
        ) {
            let rows: Vec<Vec<f64>> = raw.iter().map(|r| {
                let s: f64 = r.iter().sum();
                r.iter().map(|v| v / s).collect()
            }).collect();
            let permuted: Vec<Vec<f64>> = rows.iter().map(|r| {
                let mut r = r.clone();
                r.rotate_left(rot);
                r.swap(0, 3);
                r
            }).collect();
            let k = (k_frac * rows.len() as f64) as usize;
            let a = uncertainty_select(&probs(&rows), k).unwrap();
            let b = uncertainty_select(&probs(&permuted), k).unwrap();
            prop_assert_eq!(a.selected, b.selected);
        }
    }
}
