//! Dense similarity kernels between feature sets.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datastore::FeatureMatrix;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    #[default]
    Cosine,
    Dot,
}

/// Map applied to raw similarities. `ShiftScale` sends cosine values from
/// `[-1, 1]` to `[0, 1]` via `(1 + s) / 2`; `Clip` uses `max(0, s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transform {
    None,
    #[default]
    ShiftScale,
    Clip,
}

impl Transform {
    #[inline]
    fn apply<T: Scalar>(self, s: T) -> T {
        match self {
            Transform::None => s,
            Transform::ShiftScale => (T::one() + s) / T::lit(2.0),
            Transform::Clip => s.max(T::zero()),
        }
    }
}

macro_rules! str_enum {
    ($ty:ty { $($name:literal => $variant:expr),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($name => Ok($variant),)+
                    other => Err(format!(
                        "unknown value {other:?}; expected one of: {}",
                        [$($name),+].join(", ")
                    )),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let name = match self { $(v if *v == $variant => $name,)+ _ => unreachable!() };
                f.write_str(name)
            }
        }
    };
}

str_enum!(Metric { "cosine" => Metric::Cosine, "dot" => Metric::Dot });
str_enum!(Transform {
    "none" => Transform::None,
    "shift-scale" => Transform::ShiftScale,
    "clip" => Transform::Clip,
});

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig<T> {
    pub metric: Metric,
    pub transform: Transform,
    /// Ridge added to the diagonal of within-set kernels at build time.
    pub psd_ridge: T,
}

impl<T: Scalar> Default for KernelConfig<T> {
    fn default() -> Self {
        Self {
            metric: Metric::Cosine,
            transform: Transform::ShiftScale,
            psd_ridge: T::zero(),
        }
    }
}

impl<T: Scalar> KernelConfig<T> {
    pub fn new(metric: Metric, transform: Transform) -> Self {
        Self { metric, transform, psd_ridge: T::zero() }
    }
}

/// Dense `rows × cols` similarity matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityKernel<T> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
    symmetric: bool,
}

impl<T: Scalar> SimilarityKernel<T> {
    /// Cross-set kernel from raw values.
    pub fn new(rows: usize, cols: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "expected {} kernel entries for {rows}x{cols}, got {}",
                rows * cols,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("kernel entries must be finite".into()));
        }
        Ok(Self { rows, cols, values, symmetric: false })
    }

    /// Within-set kernel from raw values; must be exactly symmetric.
    pub fn symmetric(n: usize, values: Vec<T>) -> Result<Self> {
        let mut k = Self::new(n, n, values)?;
        for i in 0..n {
            for j in 0..i {
                if k.get(i, j) != k.get(j, i) {
                    return Err(Error::Shape(format!("entries ({i},{j}) and ({j},{i}) differ")));
                }
            }
        }
        k.symmetric = true;
        Ok(k)
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged kernel rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn symmetric_from_rows(rows: &[Vec<T>]) -> Result<Self> {
        if rows.iter().any(|r| r.len() != rows.len()) {
            return Err(Error::Shape("symmetric kernel must be square".into()));
        }
        Self::symmetric(rows.len(), rows.concat())
    }

    pub fn transpose(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                values.push(self.get(i, j));
            }
        }
        Self { rows: self.cols, cols: self.rows, values, symmetric: self.symmetric }
    }

    /// Sum of row `i`.
    pub fn row_sum(&self, i: usize) -> T {
        self.row(i).iter().copied().sum()
    }

    /// Max of row `i`; 0 for an empty row.
    pub fn row_max(&self, i: usize) -> T {
        self.row(i).iter().copied().fold(T::zero(), |m, v| if v > m { v } else { m })
    }

    /// Kernel as CSV text (debug dumps).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.rows {
            let line: Vec<String> = self.row(i).iter().map(|v| format!("{:.16e}", v)).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

impl<T: Copy> SimilarityKernel<T> {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }
}

#[inline]
fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).map(|(&a, &b)| a * b).sum()
}

fn norms<T: Scalar>(m: &FeatureMatrix<T>, metric: Metric) -> Result<Vec<T>> {
    m.iter_rows()
        .enumerate()
        .map(|(i, r)| {
            let n = dot(r, r).sqrt();
            if metric == Metric::Cosine && !(n > T::zero()) {
                Err(Error::DegenerateFeature { row: i })
            } else {
                Ok(n)
            }
        })
        .collect()
}

#[inline]
fn similarity<T: Scalar>(x: &[T], y: &[T], nx: T, ny: T, metric: Metric) -> T {
    match metric {
        Metric::Dot => dot(x, y),
        Metric::Cosine => (dot(x, y) / (nx * ny)).max(-T::one()).min(T::one()),
    }
}

/// Builds the `a.rows × b.rows` kernel `s_ij = sim(a_i, b_j)`. When `a` and
/// `b` are the same object the result is the symmetric Gram kernel from
/// [`build_gram`].
pub fn build_kernel<T: Scalar>(
    a: &FeatureMatrix<T>,
    b: &FeatureMatrix<T>,
    cfg: &KernelConfig<T>,
) -> Result<SimilarityKernel<T>> {
    if std::ptr::eq(a, b) {
        return build_gram(a, cfg);
    }
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!(
            "feature dimensions differ: {} vs {}",
            a.dims(),
            b.dims()
        )));
    }
    let na = norms(a, cfg.metric)?;
    let nb = norms(b, cfg.metric)?;
    let values: Vec<T> = (0..a.rows())
        .into_par_iter()
        .flat_map_iter(|i| {
            let x = a.row(i);
            let nx = na[i];
            let nb = &nb;
            (0..b.rows()).map(move |j| cfg.transform.apply(similarity(x, b.row(j), nx, nb[j], cfg.metric)))
        })
        .collect();
    SimilarityKernel::new(a.rows(), b.rows(), values)
}

/// Symmetric within-set kernel of `a`. Under cosine the diagonal is exactly 1
/// before the transform (so also after shift-scale and clip).
pub fn build_gram<T: Scalar>(a: &FeatureMatrix<T>, cfg: &KernelConfig<T>) -> Result<SimilarityKernel<T>> {
    let n = a.rows();
    let na = norms(a, cfg.metric)?;
    let upper: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = a.row(i);
            (i..n)
                .map(|j| {
                    let s = if i == j && cfg.metric == Metric::Cosine {
                        T::one()
                    } else {
                        similarity(x, a.row(j), na[i], na[j], cfg.metric)
                    };
                    cfg.transform.apply(s)
                })
                .collect()
        })
        .collect();
    let mut values = vec![T::zero(); n * n];
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + off;
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    let k = SimilarityKernel { rows: n, cols: n, values, symmetric: true };
    if cfg.psd_ridge > T::zero() {
        regularize_psd(&k, cfg.psd_ridge)
    } else {
        Ok(k)
    }
}

/// Adds `eps` to every diagonal entry of a symmetric kernel.
pub fn regularize_psd<T: Scalar>(k: &SimilarityKernel<T>, eps: T) -> Result<SimilarityKernel<T>> {
    if !k.symmetric {
        return Err(Error::Shape("ridge regularization requires a symmetric kernel".into()));
    }
    if !(eps >= T::zero()) {
        return Err(Error::Configuration(format!("ridge epsilon must be nonnegative, got {eps}")));
    }
    let mut out = k.clone();
    for i in 0..k.rows {
        out.values[i * k.cols + i] += eps;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Cholesky;
    use proptest::prelude::*;

    fn fm(rows: &[Vec<f64>]) -> FeatureMatrix<f64> {
        FeatureMatrix::from_rows(rows).unwrap()
    }

    fn cfg(metric: Metric, transform: Transform) -> KernelConfig<f64> {
        KernelConfig::new(metric, transform)
    }

    #[test]
    fn orthogonal_and_parallel() {
        let x = fm(&[vec![1.0, 0.0]]);
        let y = fm(&[vec![0.0, 1.0]]);
        assert_eq!(build_kernel(&x, &y, &cfg(Metric::Cosine, Transform::None)).unwrap().get(0, 0), 0.0);
        assert_eq!(build_kernel(&x, &y, &cfg(Metric::Cosine, Transform::ShiftScale)).unwrap().get(0, 0), 0.5);
        assert_eq!(build_kernel(&x, &y, &cfg(Metric::Cosine, Transform::Clip)).unwrap().get(0, 0), 0.0);
        let p = fm(&[vec![2.0, 0.0]]);
        for t in [Transform::None, Transform::ShiftScale, Transform::Clip] {
            assert_eq!(build_kernel(&p, &x, &cfg(Metric::Cosine, t)).unwrap().get(0, 0), 1.0);
        }
    }

    #[test]
    fn negative_cosine_transforms() {
        let x = fm(&[vec![1.0, 0.0]]);
        let y = fm(&[vec![-1.0, 0.0]]);
        assert_eq!(build_kernel(&x, &y, &cfg(Metric::Cosine, Transform::None)).unwrap().get(0, 0), -1.0);
        assert_eq!(build_kernel(&x, &y, &cfg(Metric::Cosine, Transform::ShiftScale)).unwrap().get(0, 0), 0.0);
        assert_eq!(build_kernel(&x, &y, &cfg(Metric::Cosine, Transform::Clip)).unwrap().get(0, 0), 0.0);
    }

    #[test]
    fn dot_metric() {
        let x = fm(&[vec![1.0, 2.0]]);
        let y = fm(&[vec![3.0, 4.0], vec![0.0, 0.0]]);
        let k = build_kernel(&x, &y, &cfg(Metric::Dot, Transform::None)).unwrap();
        assert_eq!(k.row(0), &[11.0, 0.0]);
    }

    #[test]
    fn errors() {
        let x = fm(&[vec![1.0, 0.0]]);
        let y = fm(&[vec![1.0, 0.0, 0.0]]);
        assert!(matches!(build_kernel(&x, &y, &KernelConfig::default()), Err(Error::Shape(_))));
        let z = fm(&[vec![1.0, 0.0], vec![0.0, 0.0]]);
        assert!(matches!(build_kernel(&x, &z, &KernelConfig::default()), Err(Error::DegenerateFeature { row: 1 })));
        assert!(matches!(build_gram(&z, &KernelConfig::default()), Err(Error::DegenerateFeature { row: 1 })));
    }

    #[test]
    fn same_object_sets_symmetric_flag() {
        let a = fm(&[vec![1.0, 0.5], vec![0.2, 1.0]]);
        assert!(build_kernel(&a, &a, &KernelConfig::default()).unwrap().is_symmetric());
        assert!(!build_kernel(&a, &a.clone(), &KernelConfig::default()).unwrap().is_symmetric());
    }

    #[test]
    fn ridge() {
        let id = SimilarityKernel::symmetric(2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let r = regularize_psd(&id, 1e-6).unwrap();
        assert_eq!(r.get(0, 0), 1.000001);
        assert_eq!(r.get(0, 1), 0.0);
        assert_eq!(regularize_psd(&id, 0.0).unwrap(), id);

        let ones = SimilarityKernel::<f64>::symmetric(2, vec![1.0; 4]).unwrap();
        let r = regularize_psd(&ones, 0.5).unwrap();
        assert_eq!(r.values(), &[1.5, 1.0, 1.0, 1.5]);
        // eigenvalues of [[a,b],[b,a]] are a±b
        let (a, b) = (r.get(0, 0), r.get(0, 1));
        assert_eq!((a - b).min(a + b), 0.5);

        let cross = SimilarityKernel::new(1, 2, vec![0.1, 0.2]).unwrap();
        assert!(matches!(regularize_psd(&cross, 0.1), Err(Error::Shape(_))));
    }

    #[test]
    fn generic_over_f32() {
        let a = FeatureMatrix::<f32>::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let k = build_gram(&a, &KernelConfig::default()).unwrap();
        assert_eq!(k.values(), &[1.0f32, 0.5, 0.5, 1.0]);
    }

    fn matrix_strategy(max_rows: usize, dims: usize) -> impl Strategy<Value = FeatureMatrix<f64>> {
        proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, dims), 1..max_rows)
            .prop_filter_map("nonzero rows", |rows| {
                if rows.iter().any(|r| r.iter().map(|v| v * v).sum::<f64>() < 1e-6) {
                    None
                } else {
                    FeatureMatrix::from_rows(&rows).ok()
                }
            })
    }

    proptest! {
        #[test]
        fn gram_is_symmetric_unit_diag_in_unit_interval(a in matrix_strategy(12, 4)) {
            let k = build_gram(&a, &KernelConfig::default()).unwrap();
            prop_assert!(k.is_symmetric());
            for i in 0..k.rows() {
                prop_assert_eq!(k.get(i, i), 1.0);
                for j in 0..k.cols() {
                    prop_assert_eq!(k.get(i, j), k.get(j, i));
                    prop_assert!((0.0..=1.0).contains(&k.get(i, j)));
                }
            }
        }

        #[test]
        fn cross_kernel_transpose(a in matrix_strategy(8, 3), b in matrix_strategy(8, 3)) {
            for t in [Transform::None, Transform::ShiftScale, Transform::Clip] {
                let c = cfg(Metric::Cosine, t);
                let ab = build_kernel(&a, &b, &c).unwrap();
                let ba = build_kernel(&b, &a, &c).unwrap();
                let abt = ab.transpose();
                prop_assert_eq!(abt.values(), ba.values());
            }
        }

        #[test]
        fn ridged_gram_factorizes(rows in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 8), 1..8)) {
            // random continuous rows with n <= d are full rank almost surely
            prop_assume!(rows.iter().all(|r| r.iter().map(|v| v * v).sum::<f64>() > 1e-3));
            let a = FeatureMatrix::from_rows(&rows).unwrap();
            let k = regularize_psd(&build_gram(&a, &KernelConfig::default()).unwrap(), 1e-6).unwrap();
            prop_assert!(Cholesky::factor(k.rows(), |i, j| k.get(i, j)).is_some());
        }
    }
}
