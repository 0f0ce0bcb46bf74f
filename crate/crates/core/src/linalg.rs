//! Small dense Cholesky helpers used by the log-determinant objectives.

use crate::Scalar;

/// Lower-triangular Cholesky factor of a symmetric positive definite
/// matrix, stored row-major in a dense `n×n` buffer.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    n: usize,
    lower: Vec<T>,
}

impl<T: Scalar> Cholesky<T> {
    /// Factors the `n×n` matrix whose `(i, j)` entry is `entry(i, j)`.
    /// Only the lower triangle is read. Returns `None` when a pivot is not
    /// strictly positive (or not finite).
    pub fn factor(n: usize, entry: impl Fn(usize, usize) -> T) -> Option<Self> {
        let mut lower = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = entry(i, j);
                for k in 0..j {
                    sum -= lower[i * n + k] * lower[j * n + k];
                }
                if i == j {
                    if !(sum > T::zero()) || !sum.is_finite() {
                        return None;
                    }
                    lower[i * n + i] = sum.sqrt();
                } else {
                    lower[i * n + j] = sum / lower[j * n + j];
                }
            }
        }
        Some(Self { n, lower })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.lower[i * self.n + j]
    }

    /// `log det` of the factored matrix, `2·Σ log L_ii`.
    pub fn log_det(&self) -> T {
        let two = T::lit(2.0);
        (0..self.n).map(|i| two * self.get(i, i).ln()).sum()
    }

    /// Solves `L x = b` by forward substitution.
    pub fn forward_solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.lower[i * n + k] * x[k];
            }
            x[i] = s / self.lower[i * n + i];
        }
        x
    }
}

/// Log-determinant of the principal submatrix on `idx` via a fresh
/// factorization. `None` if it is not positive definite.
pub fn log_det_subset<T: Scalar>(idx: &[usize], entry: impl Fn(usize, usize) -> T) -> Option<T> {
    Cholesky::factor(idx.len(), |i, j| entry(idx[i], idx[j])).map(|c| c.log_det())
}

/// Greedy-friendly Cholesky state over a ground set.
///
/// For the selected set `A` with factor `L` of `K_A`, every unselected
/// candidate `i` keeps `c_i = L⁻¹ K_{A,i}` and the Schur complement
/// `d_i = K_ii − ‖c_i‖²`. Adding `i` to `A` multiplies `det K_A` by `d_i`, so
/// the log-det marginal gain is `ln d_i`. Committing `a` extends every `c_i`
/// by one entry (a rank-1 extension of the factor), which costs
/// `O(n·|A|)`.
#[derive(Debug, Clone)]
pub struct IncrementalCholesky<T> {
    coeffs: Vec<Vec<T>>,
    schur: Vec<T>,
}

impl<T: Scalar> IncrementalCholesky<T> {
    pub fn new(n: usize, diag: impl Fn(usize) -> T) -> Self {
        Self {
            coeffs: vec![Vec::new(); n],
            schur: (0..n).map(diag).collect(),
        }
    }

    /// Current Schur complement of candidate `i` given the selected set.
    pub fn schur(&self, i: usize) -> T {
        self.schur[i]
    }

    /// Extends the factor with `a`. Candidates flagged in `skip` (already
    /// selected) are left untouched. Returns `false` without modifying the
    /// state when `a`'s pivot is not strictly positive.
    pub fn extend(&mut self, a: usize, skip: &[bool], entry: impl Fn(usize, usize) -> T) -> bool {
        let pivot = self.schur[a];
        if !(pivot > T::zero()) || !pivot.is_finite() {
            return false;
        }
        let d = pivot.sqrt();
        let ca = std::mem::take(&mut self.coeffs[a]);
        for i in 0..self.schur.len() {
            if i == a || skip[i] {
                continue;
            }
            let dot: T = ca.iter().zip(&self.coeffs[i]).map(|(&x, &y)| x * y).sum();
            let e = (entry(a, i) - dot) / d;
            self.coeffs[i].push(e);
            self.schur[i] -= e * e;
        }
        self.coeffs[a] = ca;
        true
    }

    /// Rebuilds the cache from scratch for the selected sequence `selected`.
    /// Returns `None` if `K_selected` is not positive definite.
    pub fn rebuild(
        n: usize,
        selected: &[usize],
        diag: impl Fn(usize) -> T,
        entry: impl Fn(usize, usize) -> T,
    ) -> Option<Self> {
        let chol = Cholesky::factor(selected.len(), |i, j| entry(selected[i], selected[j]))?;
        let mut state = Self::new(n, &diag);
        for i in 0..n {
            let b: Vec<T> = selected.iter().map(|&s| entry(s, i)).collect();
            let c = chol.forward_solve(&b);
            let norm: T = c.iter().map(|&x| x * x).sum();
            state.schur[i] = diag(i) - norm;
            state.coeffs[i] = c;
        }
        Some(state)
    }
}
