//! Two-sample t screening: per-feature Welch statistics, top-m selection, the
//! closed-form optimal feature count, and cross-validated m.

use ndarray::{Array1, ArrayView2, Axis};

use crate::data::{train_rows_excluding, Dataset, Label};
use crate::error::{Error, Result};
use crate::linalg::{largest_eigenvalue, sample_correlation, sym_eigen};
use crate::scalar::Scalar;
use crate::svm::{accuracy, FoldClassifier};

/// Per-feature t statistics plus the ranking by t² (descending, ties by index).
#[derive(Clone, Debug, PartialEq)]
pub struct TStats<T> {
    pub t: Array1<T>,
    pub order: Vec<usize>,
}

impl<T: Scalar> TStats<T> {
    pub fn from_statistics(t: Array1<T>) -> Self {
        let mut order: Vec<usize> = (0..t.len()).collect();
        order.sort_by(|&a, &b| {
            let (ta, tb) = (t[a] * t[a], t[b] * t[b]);
            tb.partial_cmp(&ta).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
        });
        TStats { t, order }
    }

    pub fn n_features(&self) -> usize {
        self.t.len()
    }
}

/// Welch statistics on the labeled rows of `ds`.
pub fn two_sample_t<T: Scalar>(ds: &Dataset<T>) -> Result<TStats<T>> {
    two_sample_t_matrix(ds.features(), ds.labels(), Some(ds.feature_names()))
}

/// `Tⱼ = (x̄₀ⱼ − x̄₁ⱼ) / sqrt(s²₀ⱼ/n₀ + s²₁ⱼ/n₁)` with class variances over n_k − 1.
/// Unlabeled rows are ignored.
pub fn two_sample_t_matrix<T: Scalar>(x: ArrayView2<'_, T>, labels: &[Label], names: Option<&[String]>) -> Result<TStats<T>> {
    if labels.len() != x.nrows() {
        return Err(Error::dim(format!("{} labels for {} rows", labels.len(), x.nrows())));
    }
    let rows0: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == Label::Class0).collect();
    let rows1: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == Label::Class1).collect();
    if rows0.len() < 2 || rows1.len() < 2 {
        return Err(Error::invalid(format!(
            "t statistics need at least 2 rows per class, got {} and {}",
            rows0.len(),
            rows1.len()
        )));
    }
    let moments = |rows: &[usize]| {
        let sub = x.select(Axis(0), rows);
        let n = T::count(rows.len());
        let mean = sub.sum_axis(Axis(0)) / n;
        let centered = &sub - &mean;
        let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / (n - T::one());
        (mean, var, n)
    };
    let (m0, v0, n0) = moments(&rows0);
    let (m1, v1, n1) = moments(&rows1);
    let mut t = Array1::zeros(x.ncols());
    for j in 0..x.ncols() {
        if v0[j] == T::zero() && v1[j] == T::zero() {
            let name = names.and_then(|n| n.get(j).cloned()).unwrap_or_else(|| format!("f{j}"));
            return Err(Error::ConstantFeature { index: j, name });
        }
        t[j] = (m0[j] - m1[j]) / (v0[j] / n0 + v1[j] / n1).sqrt();
    }
    Ok(TStats::from_statistics(t))
}

/// The `m` top-ranked features, ascending by index.
pub fn select_top_m<T: Scalar>(stats: &TStats<T>, m: usize) -> Result<Vec<usize>> {
    if m == 0 || m > stats.n_features() {
        return Err(Error::invalid(format!("m = {m} outside 1..={}", stats.n_features())));
    }
    let mut picked = stats.order[..m].to_vec();
    picked.sort_unstable();
    Ok(picked)
}

const POWER_TOL: f64 = 1e-13;
const POWER_MAX_ITER: usize = 20_000;

fn top_correlation_eigenvalue<T: Scalar>(x: ArrayView2<'_, T>, cols: &[usize]) -> Result<T> {
    if cols.len() == 1 {
        return Ok(T::one());
    }
    let r = sample_correlation(x.select(Axis(1), cols).view())?;
    match largest_eigenvalue(r.view(), T::lit(POWER_TOL), POWER_MAX_ITER) {
        Ok(v) => Ok(v),
        Err(Error::NoConvergence { .. }) => Ok(sym_eigen(r.view(), T::lit(1e-12))?.eigenvalues[0]),
        Err(e) => Err(e),
    }
}

/// The criterion maximized by [`optimal_m`], for every m = 1..=p (index m − 1):
///
/// `(1/λ_max^m) · n[Σ_{j≤m} T²₍ⱼ₎ + m(n₀ − n₁)/n]² / (m n₀ n₁ + n₀ n₁ Σ_{j≤m} T²₍ⱼ₎)`
///
/// where λ_max^m is the top eigenvalue of the sample correlation matrix of the m
/// highest-ranked columns of `x`.
pub fn optimal_m_criterion<T: Scalar>(stats: &TStats<T>, x: ArrayView2<'_, T>, n0: usize, n1: usize) -> Result<Vec<T>> {
    if x.ncols() != stats.n_features() {
        return Err(Error::dim(format!(
            "{} statistics for a {}-column matrix",
            stats.n_features(),
            x.ncols()
        )));
    }
    if n0 + n1 < 4 || n0 == 0 || n1 == 0 {
        return Err(Error::invalid(format!("need n0 + n1 >= 4 with both classes, got {n0} and {n1}")));
    }
    let n = T::count(n0 + n1);
    let (n0f, n1f) = (T::count(n0), T::count(n1));
    let imbalance = (n0f - n1f) / n;
    let mut cumulative = T::zero();
    let mut out = Vec::with_capacity(stats.n_features());
    for m in 1..=stats.n_features() {
        let j = stats.order[m - 1];
        cumulative += stats.t[j] * stats.t[j];
        let mf = T::count(m);
        let lambda = top_correlation_eigenvalue(x, &stats.order[..m])?;
        let numer = n * (cumulative + mf * imbalance).powi(2);
        let denom = mf * n0f * n1f + n0f * n1f * cumulative;
        out.push(numer / denom / lambda);
    }
    Ok(out)
}

/// argmax over m of [`optimal_m_criterion`]; ties resolve to the smallest m.
pub fn optimal_m<T: Scalar>(stats: &TStats<T>, x: ArrayView2<'_, T>, n0: usize, n1: usize) -> Result<usize> {
    let values = optimal_m_criterion(stats, x, n0, n1)?;
    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = k;
        }
    }
    Ok(best + 1)
}

/// Chooses m from `candidate_ms` by mean validation accuracy of `classifier` trained
/// on the top-m features of each fold's training rows. Ties go to the smaller m.
pub fn ttest_cv<T: Scalar, C: FoldClassifier<T> + ?Sized>(
    x: ArrayView2<'_, T>,
    labels: &[Label],
    folds: &[Vec<usize>],
    candidate_ms: &[usize],
    classifier: &C,
) -> Result<usize> {
    if candidate_ms.is_empty() {
        return Err(Error::invalid("ttest_cv needs at least one candidate m"));
    }
    if let Some(&bad) = candidate_ms.iter().find(|&&m| m == 0 || m > x.ncols()) {
        return Err(Error::invalid(format!("candidate m = {bad} outside 1..={}", x.ncols())));
    }
    if candidate_ms.len() == 1 {
        return Ok(candidate_ms[0]);
    }
    let mut score = vec![0.0f64; candidate_ms.len()];
    for (f, val_rows) in folds.iter().enumerate() {
        let train_rows = train_rows_excluding(folds, f);
        let xt = x.select(Axis(0), &train_rows);
        let yt: Vec<Label> = train_rows.iter().map(|&i| labels[i]).collect();
        let xv = x.select(Axis(0), val_rows);
        let yv: Vec<Label> = val_rows.iter().map(|&i| labels[i]).collect();
        let stats = two_sample_t_matrix(xt.view(), &yt, None)?;
        for (k, &m) in candidate_ms.iter().enumerate() {
            let cols = select_top_m(&stats, m)?;
            let pred = classifier.fit_predict(
                xt.select(Axis(1), &cols).view(),
                &yt,
                xv.select(Axis(1), &cols).view(),
            )?;
            score[k] += accuracy(&pred, &yv)? / folds.len() as f64;
        }
    }
    let mut best = 0;
    for k in 1..candidate_ms.len() {
        if score[k] > score[best] || (score[k] == score[best] && candidate_ms[k] < candidate_ms[best]) {
            best = k;
        }
    }
    Ok(candidate_ms[best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn ds(x: Array2<f64>, labels: Vec<Label>) -> Dataset<f64> {
        Dataset::new(x, labels, vec![]).unwrap()
    }

    use Label::{Class0 as A, Class1 as B};

    #[test]
    fn hand_value() {
        let d = ds(array![[0.0], [2.0], [1.0], [3.0]], vec![A, A, B, B]);
        let s = two_sample_t(&d).unwrap();
        assert!((s.t[0] + 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn identical_classes_give_zero() {
        let d = ds(array![[1.0, 5.0], [2.0, 7.0], [1.0, 5.0], [2.0, 7.0]], vec![A, A, B, B]);
        assert!(two_sample_t(&d).unwrap().t.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn scale_and_location_invariance() {
        let x = array![[0.3, 1.0], [1.7, 2.0], [2.2, 0.5], [4.1, 3.0], [0.9, 2.5]];
        let labels = vec![A, A, B, B, B];
        let base = two_sample_t(&ds(x.clone(), labels.clone())).unwrap();
        let mut scaled = x.clone();
        scaled.column_mut(0).mapv_inplace(|v| 3.5 * v + 100.0);
        let moved = two_sample_t(&ds(scaled, labels.clone())).unwrap();
        assert!((base.t[0] - moved.t[0]).abs() < 1e-12);
        let flipped: Vec<Label> = labels.iter().map(|l| l.flipped()).collect();
        let neg = two_sample_t(&ds(x, flipped)).unwrap();
        assert_eq!(neg.t, -&base.t);
    }

    #[test]
    fn zero_variance_feature_errors() {
        let d = ds(array![[1.0, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 5.0]], vec![A, A, B, B]);
        assert!(matches!(two_sample_t(&d), Err(Error::ConstantFeature { index: 0, .. })));
        let small = ds(array![[1.0], [2.0], [3.0]], vec![A, B, B]);
        assert!(two_sample_t(&small).is_err());
    }

    #[test]
    fn ordering_and_top_m() {
        let s = TStats::from_statistics(array![3.0, -1.0, 2.0]);
        assert_eq!(s.order, vec![0, 2, 1]);
        assert_eq!(select_top_m(&s, 2).unwrap(), vec![0, 2]);
        assert_eq!(select_top_m(&s, 3).unwrap(), vec![0, 1, 2]);
        assert!(select_top_m(&s, 0).is_err());
        assert!(select_top_m(&s, 4).is_err());
        let tied = TStats::from_statistics(array![1.0, -2.0, 2.0]);
        assert_eq!(tied.order, vec![1, 2, 0]);
    }

    #[test]
    fn single_feature_optimal_m() {
        let x = array![[0.0], [2.0], [1.0], [3.0]];
        let s = two_sample_t_matrix(x.view(), &[A, A, B, B], None).unwrap();
        assert_eq!(optimal_m(&s, x.view(), 2, 2).unwrap(), 1);
    }

    #[test]
    fn cv_single_and_errors() {
        let x = array![[0.0], [2.0], [1.0], [3.0]];
        let clf = |_: ArrayView2<'_, f64>, _: &[Label], v: ArrayView2<'_, f64>| Ok(vec![A; v.nrows()]);
        let folds = vec![vec![0, 2], vec![1, 3]];
        assert_eq!(ttest_cv(x.view(), &[A, A, B, B], &folds, &[1], &clf).unwrap(), 1);
        assert!(ttest_cv(x.view(), &[A, A, B, B], &folds, &[], &clf).is_err());
        assert!(ttest_cv(x.view(), &[A, A, B, B], &folds, &[2], &clf).is_err());
    }
}
