//! Set-function objectives and their incremental marginal gains.
//!
//! Notation: `U` is the unlabeled ground set (size `n`), `T` the target /
//! query set (size `m`). Kernels are `S_UU` (`n×n`, symmetric), `S_UT`
//! (`n×m`) and `S_TT` (`m×m`, symmetric).
//!
//! | kind       | value of `f(A)`                                                        |
//! |------------|------------------------------------------------------------------------|
//! | `gcmi`     | `2 Σ_{i∈A} Σ_{j∈T} s_ij`                                              |
//! | `fl1mi`    | `Σ_{i∈U} min(max_{j∈A} s_ij, η max_{j∈T} s_ij)`                       |
//! | `fl2mi`    | `Σ_{i∈T} max_{j∈A} s_ij + η Σ_{i∈A} max_{j∈T} s_ij`                   |
//! | `logdetmi` | `log det S_A − log det(S_A − η² S_AT S_T⁻¹ S_ATᵀ)`                    |
//! | `gcmi_div` | `gcmi(A) + γ dsum(A)`                                                  |
//! | `fl`       | `Σ_{i∈U} max_{j∈A} s_ij`                                              |
//! | `gc`       | `Σ_{i∈U, j∈A} s_ij − λ Σ_{i,j∈A} s_ij`                                |
//! | `logdet`   | `log det(S_A + εI)`                                                   |
//! | `dsum`     | `Σ_{i<j∈A} (1 − s_ij)`                                                |
//!
//! Log-det kinds add the ridge `ε` to the diagonals of `S_A` and `S_T`.
//! Maxima over an empty set are 0 and every kind has `f(∅) = 0`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::kernel::SimilarityKernel;
use crate::linalg::{log_det_subset, Cholesky, IncrementalCholesky};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Gcmi,
    Fl1mi,
    Fl2mi,
    Logdetmi,
    GcmiDiv,
    Fl,
    Gc,
    Logdet,
    Dsum,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 9] = [
        ObjectiveKind::Gcmi,
        ObjectiveKind::Fl1mi,
        ObjectiveKind::Fl2mi,
        ObjectiveKind::Logdetmi,
        ObjectiveKind::GcmiDiv,
        ObjectiveKind::Fl,
        ObjectiveKind::Gc,
        ObjectiveKind::Logdet,
        ObjectiveKind::Dsum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::Gcmi => "gcmi",
            ObjectiveKind::Fl1mi => "fl1mi",
            ObjectiveKind::Fl2mi => "fl2mi",
            ObjectiveKind::Logdetmi => "logdetmi",
            ObjectiveKind::GcmiDiv => "gcmi_div",
            ObjectiveKind::Fl => "fl",
            ObjectiveKind::Gc => "gc",
            ObjectiveKind::Logdet => "logdet",
            ObjectiveKind::Dsum => "dsum",
        }
    }

    /// Whether the kind is a mutual-information objective (needs a target).
    pub fn uses_target(self) -> bool {
        self.needs_ut()
    }

    pub fn needs_uu(self) -> bool {
        !matches!(self, ObjectiveKind::Gcmi | ObjectiveKind::Fl2mi)
    }

    pub fn needs_ut(self) -> bool {
        matches!(
            self,
            ObjectiveKind::Gcmi
                | ObjectiveKind::Fl1mi
                | ObjectiveKind::Fl2mi
                | ObjectiveKind::Logdetmi
                | ObjectiveKind::GcmiDiv
        )
    }

    pub fn needs_tt(self) -> bool {
        self == ObjectiveKind::Logdetmi
    }

    /// Kinds whose marginal gains are non-increasing, which lazy greedy
    /// relies on. `dsum` is supermodular, so `gcmi_div` is not submodular.
    /// `logdetmi` is not either: a pool item mixing a selected item with
    /// the target gains more once that item is selected.
    pub fn is_submodular(self) -> bool {
        !matches!(self, ObjectiveKind::Dsum | ObjectiveKind::GcmiDiv | ObjectiveKind::Logdetmi)
    }

    fn uses_log_det(self) -> bool {
        matches!(self, ObjectiveKind::Logdet | ObjectiveKind::Logdetmi)
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObjectiveKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ObjectiveKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown objective {s:?}"))
    }
}

/// Tunable parameters; see the module table for where each enters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveParams<T> {
    pub eta: T,
    pub gamma: T,
    pub lambda_gc: T,
    pub ridge: T,
}

impl<T: Scalar> Default for ObjectiveParams<T> {
    fn default() -> Self {
        Self {
            eta: T::one(),
            gamma: T::one(),
            lambda_gc: T::lit(0.5),
            ridge: T::lit(1e-6),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Kernels<T> {
    pub uu: Option<SimilarityKernel<T>>,
    pub ut: Option<SimilarityKernel<T>>,
    pub tt: Option<SimilarityKernel<T>>,
}

/// A fully configured objective over a ground set of `ground_size()` items.
///
/// The objective is immutable; selection progress lives in an
/// [`ObjectiveState`], so gains for different candidates may be probed
/// concurrently against one frozen state.
#[derive(Debug, Clone)]
pub struct Objective<T> {
    kind: ObjectiveKind,
    params: ObjectiveParams<T>,
    kernels: Kernels<T>,
    n: usize,
    /// Per ground item: gcmi `2·Σ_j s_ij`, fl1mi `η·max_j s_ij`,
    /// fl2mi `max_j s_ij` (all over the target); gc the `S_UU` row sum.
    relevance: Vec<T>,
    /// logdetmi: `L_T⁻¹ s_{i,T}` per ground item, so that
    /// `s_{i,T} S_T⁻¹ s_{T,j} = ⟨w_i, w_j⟩`.
    projections: Vec<Vec<T>>,
}

#[derive(Debug, Clone)]
enum Cache<T> {
    Empty,
    /// Running `max_{j∈A}` per item (over U for fl/fl1mi, over T for fl2mi).
    Max(Vec<T>),
    /// Running `Σ_{j∈A} s_ij` over U.
    Sum(Vec<T>),
    LogDet(IncrementalCholesky<T>),
    LogDetMi {
        plain: IncrementalCholesky<T>,
        conditioned: IncrementalCholesky<T>,
    },
}

/// Selected set plus per-kind caches for fast marginal gains.
#[derive(Debug, Clone)]
pub struct ObjectiveState<T> {
    selected: Vec<usize>,
    member: Vec<bool>,
    value: T,
    cache: Cache<T>,
}

impl<T: Scalar> ObjectiveState<T> {
    /// Selected indices in commit order.
    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn contains(&self, i: usize) -> bool {
        self.member.get(i).copied().unwrap_or(false)
    }

    /// Objective value of the selected set, accumulated from gains.
    pub fn value(&self) -> T {
        self.value
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }
}

fn require<T>(k: &Option<SimilarityKernel<T>>, name: &str, kind: ObjectiveKind) -> Result<()> {
    if k.is_none() {
        return Err(Error::Configuration(format!("objective {kind} requires kernel {name}")));
    }
    Ok(())
}

impl<T: Scalar> Objective<T> {
    pub fn new(kind: ObjectiveKind, params: ObjectiveParams<T>, kernels: Kernels<T>) -> Result<Self> {
        for (name, v) in [("eta", params.eta), ("gamma", params.gamma), ("ridge", params.ridge)] {
            if !(v >= T::zero()) || !v.is_finite() {
                return Err(Error::Configuration(format!("{name} must be a finite nonnegative number, got {v}")));
            }
        }
        if !(params.lambda_gc >= T::zero() && params.lambda_gc <= T::one()) {
            return Err(Error::Configuration(format!("lambda_gc must lie in [0, 1], got {}", params.lambda_gc)));
        }
        if kind.needs_uu() {
            require(&kernels.uu, "S_UU", kind)?;
        }
        if kind.needs_ut() {
            require(&kernels.ut, "S_UT", kind)?;
        }
        if kind.needs_tt() {
            require(&kernels.tt, "S_TT", kind)?;
        }

        let n = match (&kernels.uu, &kernels.ut) {
            (Some(uu), _) if kind.needs_uu() => uu.rows(),
            (_, Some(ut)) => ut.rows(),
            _ => unreachable!("kernel presence checked above"),
        };
        if let Some(uu) = kernels.uu.as_ref().filter(|_| kind.needs_uu()) {
            if !uu.is_symmetric() || uu.cols() != n {
                return Err(Error::Shape("S_UU must be a symmetric square kernel".into()));
            }
        }
        if let Some(ut) = kernels.ut.as_ref().filter(|_| kind.needs_ut()) {
            if ut.rows() != n {
                return Err(Error::Shape(format!("S_UT has {} rows, ground set has {n}", ut.rows())));
            }
            if ut.cols() == 0 {
                return Err(Error::Configuration(format!("objective {kind} requires a nonempty target set")));
            }
        }

        let mut objective = Self {
            kind,
            params,
            kernels,
            n,
            relevance: Vec::new(),
            projections: Vec::new(),
        };
        objective.precompute()?;
        Ok(objective)
    }

    fn precompute(&mut self) -> Result<()> {
        let two = T::lit(2.0);
        match self.kind {
            ObjectiveKind::Gcmi | ObjectiveKind::GcmiDiv => {
                let ut = self.ut();
                self.relevance = (0..self.n).map(|i| two * ut.row_sum(i)).collect();
            }
            ObjectiveKind::Fl1mi => {
                let ut = self.ut();
                let eta = self.params.eta;
                self.relevance = (0..self.n).map(|i| eta * ut.row_max(i)).collect();
            }
            ObjectiveKind::Fl2mi => {
                let ut = self.ut();
                self.relevance = (0..self.n).map(|i| ut.row_max(i)).collect();
            }
            ObjectiveKind::Gc => {
                let uu = self.uu();
                self.relevance = (0..self.n).map(|i| uu.row_sum(i)).collect();
            }
            ObjectiveKind::Logdetmi => {
                let tt = self.kernels.tt.as_ref().expect("checked");
                let ut = self.ut();
                if !tt.is_symmetric() || tt.rows() != ut.cols() {
                    return Err(Error::Shape("S_TT must be symmetric and match S_UT columns".into()));
                }
                let eps = self.params.ridge;
                let chol = Cholesky::factor(tt.rows(), |i, j| if i == j { tt.get(i, j) + eps } else { tt.get(i, j) })
                    .ok_or_else(|| Error::IndefiniteKernel { context: "target kernel S_TT".into() })?;
                self.projections = (0..self.n).map(|i| chol.forward_solve(ut.row(i))).collect();
            }
            ObjectiveKind::Fl | ObjectiveKind::Logdet | ObjectiveKind::Dsum => {}
        }
        Ok(())
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.kind
    }

    pub fn params(&self) -> &ObjectiveParams<T> {
        &self.params
    }

    pub fn ground_size(&self) -> usize {
        self.n
    }

    fn uu(&self) -> &SimilarityKernel<T> {
        self.kernels.uu.as_ref().expect("S_UU checked at construction")
    }

    fn ut(&self) -> &SimilarityKernel<T> {
        self.kernels.ut.as_ref().expect("S_UT checked at construction")
    }

    /// `S_UU` entry with the ridge on the diagonal.
    #[inline]
    fn ridged(&self, i: usize, j: usize) -> T {
        let s = self.uu().get(i, j);
        if i == j {
            s + self.params.ridge
        } else {
            s
        }
    }

    /// Entry of `S_UU + εI − η² S_UT S_T⁻¹ S_UTᵀ`.
    #[inline]
    fn conditioned(&self, i: usize, j: usize) -> T {
        let cross: T = self.projections[i].iter().zip(&self.projections[j]).map(|(&a, &b)| a * b).sum();
        self.ridged(i, j) - self.params.eta * self.params.eta * cross
    }

    fn check_index(&self, member: &[bool], a: usize) -> Result<()> {
        if a >= self.n {
            return Err(Error::OutOfBounds { index: a, size: self.n });
        }
        if member[a] {
            return Err(Error::Duplicate(a));
        }
        Ok(())
    }

    fn validate_set(&self, set: &[usize]) -> Result<()> {
        let mut member = vec![false; self.n];
        for &a in set {
            self.check_index(&member, a)?;
            member[a] = true;
        }
        Ok(())
    }

    /// Evaluates `f(set)` directly from the kernels, without caches.
    pub fn eval(&self, set: &[usize]) -> Result<T> {
        self.validate_set(set)?;
        self.eval_unchecked(set)
    }

    fn eval_unchecked(&self, set: &[usize]) -> Result<T> {
        if set.is_empty() {
            return Ok(T::zero());
        }
        let zero = T::zero();
        let max_over = |f: &dyn Fn(usize) -> T| set.iter().map(|&j| f(j)).fold(zero, T::max);
        let value = match self.kind {
            ObjectiveKind::Gcmi => self.gcmi_value(set),
            ObjectiveKind::Fl1mi => {
                let uu = self.uu();
                (0..self.n)
                    .map(|i| max_over(&|j| uu.get(i, j)).min(self.relevance[i]))
                    .sum()
            }
            ObjectiveKind::Fl2mi => {
                let ut = self.ut();
                let coverage: T = (0..ut.cols()).map(|q| max_over(&|j| ut.get(j, q))).sum();
                let relevance: T = set.iter().map(|&i| self.relevance[i]).sum();
                coverage + self.params.eta * relevance
            }
            ObjectiveKind::Logdetmi => {
                let plain = log_det_subset(set, |i, j| self.ridged(i, j))
                    .ok_or_else(|| Error::IndefiniteKernel { context: "S_A".into() })?;
                let cond = log_det_subset(set, |i, j| self.conditioned(i, j)).ok_or_else(|| {
                    Error::IndefiniteKernel { context: "conditioned kernel S_A - eta^2 S_AT S_T^-1 S_TA".into() }
                })?;
                plain - cond
            }
            ObjectiveKind::GcmiDiv => self.gcmi_value(set) + self.params.gamma * self.dsum_value(set),
            ObjectiveKind::Fl => {
                let uu = self.uu();
                (0..self.n).map(|i| max_over(&|j| uu.get(i, j))).sum()
            }
            ObjectiveKind::Gc => {
                let uu = self.uu();
                let cover: T = set.iter().map(|&j| self.relevance[j]).sum();
                let within: T = set.iter().flat_map(|&i| set.iter().map(move |&j| uu.get(i, j))).sum();
                cover - self.params.lambda_gc * within
            }
            ObjectiveKind::Logdet => log_det_subset(set, |i, j| self.ridged(i, j))
                .ok_or_else(|| Error::IndefiniteKernel { context: "S_A".into() })?,
            ObjectiveKind::Dsum => self.dsum_value(set),
        };
        Ok(value)
    }

    fn gcmi_value(&self, set: &[usize]) -> T {
        set.iter().map(|&i| self.relevance[i]).sum()
    }

    fn dsum_value(&self, set: &[usize]) -> T {
        let uu = self.uu();
        let mut total = T::zero();
        for (p, &i) in set.iter().enumerate() {
            for &j in &set[p + 1..] {
                total += T::one() - uu.get(i, j);
            }
        }
        total
    }

    /// Fresh state for the empty set.
    pub fn new_state(&self) -> ObjectiveState<T> {
        let n = self.n;
        let cache = match self.kind {
            ObjectiveKind::Gcmi => Cache::Empty,
            ObjectiveKind::Fl | ObjectiveKind::Fl1mi => Cache::Max(vec![T::zero(); n]),
            ObjectiveKind::Fl2mi => Cache::Max(vec![T::zero(); self.ut().cols()]),
            ObjectiveKind::Gc | ObjectiveKind::Dsum | ObjectiveKind::GcmiDiv => Cache::Sum(vec![T::zero(); n]),
            ObjectiveKind::Logdet => Cache::LogDet(IncrementalCholesky::new(n, |i| self.ridged(i, i))),
            ObjectiveKind::Logdetmi => Cache::LogDetMi {
                plain: IncrementalCholesky::new(n, |i| self.ridged(i, i)),
                conditioned: IncrementalCholesky::new(n, |i| self.conditioned(i, i)),
            },
        };
        ObjectiveState {
            selected: Vec::new(),
            member: vec![false; n],
            value: T::zero(),
            cache,
        }
    }

    /// `f(A ∪ {a}) − f(A)` from the state's caches.
    pub fn marginal_gain(&self, state: &ObjectiveState<T>, a: usize) -> Result<T> {
        self.check_index(&state.member, a)?;
        self.gain(state, a)
    }

    /// Gain for a candidate already known to be in bounds and unselected.
    pub(crate) fn gain(&self, state: &ObjectiveState<T>, a: usize) -> Result<T> {
        let gain = match (&state.cache, self.kind) {
            (Cache::Empty, _) => self.relevance[a],
            (Cache::Max(cur), ObjectiveKind::Fl) => {
                let col = self.uu().row(a);
                cur.iter().zip(col).map(|(&c, &s)| (s - c).max(T::zero())).sum()
            }
            (Cache::Max(cur), ObjectiveKind::Fl1mi) => {
                let col = self.uu().row(a);
                cur.iter()
                    .zip(col)
                    .zip(&self.relevance)
                    .map(|((&c, &s), &q)| c.max(s).min(q) - c.min(q))
                    .sum()
            }
            (Cache::Max(cur), ObjectiveKind::Fl2mi) => {
                let row = self.ut().row(a);
                let coverage: T = cur.iter().zip(row).map(|(&c, &s)| (s - c).max(T::zero())).sum();
                coverage + self.params.eta * self.relevance[a]
            }
            (Cache::Sum(sum), kind) => {
                let size = T::from_usize(state.selected.len()).expect("set size representable");
                match kind {
                    ObjectiveKind::Gc => {
                        let self_sim = self.uu().get(a, a);
                        self.relevance[a] - self.params.lambda_gc * (T::lit(2.0) * sum[a] + self_sim)
                    }
                    ObjectiveKind::Dsum => size - sum[a],
                    ObjectiveKind::GcmiDiv => self.relevance[a] + self.params.gamma * (size - sum[a]),
                    _ => unreachable!("sum cache only built for gc, dsum, gcmi_div"),
                }
            }
            (Cache::LogDet(chol), _) => {
                let d = chol.schur(a);
                if d > T::zero() && d.is_finite() {
                    d.ln()
                } else {
                    self.gain_from_scratch(state, a)?
                }
            }
            (Cache::LogDetMi { plain, conditioned }, _) => {
                let (p, c) = (plain.schur(a), conditioned.schur(a));
                if p > T::zero() && c > T::zero() && p.is_finite() && c.is_finite() {
                    p.ln() - c.ln()
                } else {
                    self.gain_from_scratch(state, a)?
                }
            }
            (Cache::Max(_), _) => unreachable!("max cache only built for fl, fl1mi, fl2mi"),
        };
        Ok(gain)
    }

    fn gain_from_scratch(&self, state: &ObjectiveState<T>, a: usize) -> Result<T> {
        let mut extended = state.selected.clone();
        extended.push(a);
        Ok(self.eval_unchecked(&extended)? - self.eval_unchecked(&state.selected)?)
    }

    /// Adds `a` to the selected set and updates the caches.
    pub fn commit(&self, state: &mut ObjectiveState<T>, a: usize) -> Result<()> {
        self.check_index(&state.member, a)?;
        let gain = self.gain(state, a)?;
        match &mut state.cache {
            Cache::Empty => {}
            Cache::Max(cur) => {
                let src = match self.kind {
                    ObjectiveKind::Fl2mi => self.ut().row(a),
                    _ => self.uu().row(a),
                };
                for (c, &s) in cur.iter_mut().zip(src) {
                    if s > *c {
                        *c = s;
                    }
                }
            }
            Cache::Sum(sum) => {
                for (acc, &s) in sum.iter_mut().zip(self.uu().row(a)) {
                    *acc += s;
                }
            }
            Cache::LogDet(chol) => {
                if !chol.extend(a, &state.member, |i, j| self.ridged(i, j)) {
                    *chol = self.rebuild(&state.selected, a, |i, j| self.ridged(i, j), "S_A")?;
                }
            }
            Cache::LogDetMi { plain, conditioned } => {
                if !plain.extend(a, &state.member, |i, j| self.ridged(i, j)) {
                    *plain = self.rebuild(&state.selected, a, |i, j| self.ridged(i, j), "S_A")?;
                }
                if !conditioned.extend(a, &state.member, |i, j| self.conditioned(i, j)) {
                    *conditioned =
                        self.rebuild(&state.selected, a, |i, j| self.conditioned(i, j), "conditioned kernel")?;
                }
            }
        }
        state.selected.push(a);
        state.member[a] = true;
        state.value += gain;
        Ok(())
    }

    fn rebuild(
        &self,
        selected: &[usize],
        a: usize,
        entry: impl Fn(usize, usize) -> T,
        context: &str,
    ) -> Result<IncrementalCholesky<T>> {
        let mut seq = selected.to_vec();
        seq.push(a);
        IncrementalCholesky::rebuild(self.n, &seq, |i| entry(i, i), &entry)
            .ok_or_else(|| Error::IndefiniteKernel { context: context.to_string() })
    }

    /// Whether cached values for this kind carry the looser log-det tolerance.
    pub fn is_log_det(&self) -> bool {
        self.kind.uses_log_det()
    }
}
