//! Datasets, CSV ingestion, standardization, splitting and synthetic data.

mod csv_io;
mod split;
mod standardize;
mod synthetic;

pub use csv_io::{load_csv, save_csv, DEFAULT_LABEL_COLUMN};
pub use split::{kfold, round_half_up, stratified_split, train_rows_excluding, SplitIndices};
pub use standardize::{standardize_apply, standardize_fit, StandardizationParams};
pub use synthetic::{append_noise_features, generate_synthetic, SyntheticSpec};

use ndarray::{concatenate, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Class membership of a single row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Class0,
    Class1,
    /// Target-unrelated row: usable for unsupervised pretraining only.
    Unlabeled,
}

impl Label {
    /// Integer code used in CSV files: 0, 1, or -1 for unlabeled.
    pub fn code(self) -> i8 {
        match self {
            Label::Class0 => 0,
            Label::Class1 => 1,
            Label::Unlabeled => -1,
        }
    }

    pub fn from_code(code: i64) -> Option<Label> {
        match code {
            0 => Some(Label::Class0),
            1 => Some(Label::Class1),
            -1 => Some(Label::Unlabeled),
            _ => None,
        }
    }

    pub fn is_labeled(self) -> bool {
        self != Label::Unlabeled
    }

    /// Signed encoding used by the SVM and the lasso response: class 0 is -1, class 1 is +1.
    pub fn sign<T: Scalar>(self) -> Option<T> {
        match self {
            Label::Class0 => Some(-T::one()),
            Label::Class1 => Some(T::one()),
            Label::Unlabeled => None,
        }
    }

    /// Index into a two-way output (softmax column).
    pub fn class_index(self) -> Option<usize> {
        match self {
            Label::Class0 => Some(0),
            Label::Class1 => Some(1),
            Label::Unlabeled => None,
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Class0 => Label::Class1,
            Label::Class1 => Label::Class0,
            Label::Unlabeled => Label::Unlabeled,
        }
    }
}

/// Maps labels to ±1, failing on unlabeled entries.
pub fn signed_labels<T: Scalar>(labels: &[Label]) -> Result<Vec<T>> {
    labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            l.sign()
                .ok_or_else(|| Error::invalid(format!("row {i} is unlabeled where a class label is required")))
        })
        .collect()
}

/// Counts of (class 0, class 1, unlabeled) entries.
pub fn count_labels(labels: &[Label]) -> (usize, usize, usize) {
    labels.iter().fold((0, 0, 0), |(a, b, c), l| match l {
        Label::Class0 => (a + 1, b, c),
        Label::Class1 => (a, b + 1, c),
        Label::Unlabeled => (a, b, c + 1),
    })
}

/// An n×p feature matrix with per-row labels and per-column names.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    features: Array2<T>,
    labels: Vec<Label>,
    feature_names: Vec<String>,
}

impl<T: Scalar> Dataset<T> {
    /// Builds a dataset, checking shape and finiteness. An empty `feature_names`
    /// list is replaced by `f0..f{p-1}`.
    pub fn new(features: Array2<T>, labels: Vec<Label>, feature_names: Vec<String>) -> Result<Self> {
        let (n, p) = features.dim();
        if n == 0 || p == 0 {
            return Err(Error::dim(format!("dataset must be at least 1x1, got {n}x{p}")));
        }
        if labels.len() != n {
            return Err(Error::dim(format!("{} labels for {n} rows", labels.len())));
        }
        let feature_names = if feature_names.is_empty() {
            default_feature_names(p)
        } else if feature_names.len() != p {
            return Err(Error::dim(format!("{} feature names for {p} columns", feature_names.len())));
        } else {
            feature_names
        };
        if let Some(((i, j), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite feature value at row {i}, column {j}")));
        }
        Ok(Dataset {
            features,
            labels,
            feature_names,
        })
    }

    pub fn features(&self) -> ArrayView2<'_, T> {
        self.features.view()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// (n₀, n₁, unlabeled)
    pub fn class_counts(&self) -> (usize, usize, usize) {
        count_labels(&self.labels)
    }

    pub fn indices_with(&self, label: Label) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| self.labels[i] == label).collect()
    }

    pub fn labeled_indices(&self) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| self.labels[i].is_labeled()).collect()
    }

    pub fn unlabeled_indices(&self) -> Vec<usize> {
        self.indices_with(Label::Unlabeled)
    }

    /// Rows `rows` in the given order.
    pub fn subset(&self, rows: &[usize]) -> Dataset<T> {
        Dataset {
            features: self.features.select(Axis(0), rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Columns `cols` in the given order.
    pub fn select_features(&self, cols: &[usize]) -> Dataset<T> {
        Dataset {
            features: self.features.select(Axis(1), cols),
            labels: self.labels.clone(),
            feature_names: cols.iter().map(|&j| self.feature_names[j].clone()).collect(),
        }
    }

    /// Same labels, new feature matrix.
    pub fn with_features(&self, features: Array2<T>, feature_names: Vec<String>) -> Result<Dataset<T>> {
        if features.nrows() != self.n_rows() {
            return Err(Error::dim(format!(
                "replacement features have {} rows, dataset has {}",
                features.nrows(),
                self.n_rows()
            )));
        }
        Dataset::new(features, self.labels.clone(), feature_names)
    }

    /// Column-wise concatenation `[self | other]`; labels must agree.
    pub fn hstack(&self, other: &Dataset<T>) -> Result<Dataset<T>> {
        if self.labels != other.labels {
            return Err(Error::dim("hstack requires identical row labels"));
        }
        let features = concatenate(Axis(1), &[self.features.view(), other.features.view()])
            .map_err(|e| Error::dim(e.to_string()))?;
        let names = self.feature_names.iter().chain(other.feature_names.iter()).cloned().collect();
        Dataset::new(features, self.labels.clone(), names)
    }

    /// Replaces every label (used for class-flip symmetry checks).
    pub fn with_labels(&self, labels: Vec<Label>) -> Result<Dataset<T>> {
        Dataset::new(self.features.clone(), labels, self.feature_names.clone())
    }

    /// Mutable access to the features for perturbation tests; finiteness is rechecked
    /// by the caller through [`Dataset::new`] if it matters.
    pub fn features_mut(&mut self) -> &mut Array2<T> {
        &mut self.features
    }
}

pub fn default_feature_names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("f{j}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_non_finite() {
        let err = Dataset::new(array![[1.0, f64::NAN]], vec![Label::Class0], vec![]).unwrap_err();
        assert!(err.to_string().contains("row 0, column 1"));
    }

    #[test]
    fn auto_names_and_counts() {
        let ds = Dataset::new(
            array![[1.0], [2.0], [3.0]],
            vec![Label::Class0, Label::Class1, Label::Unlabeled],
            vec![],
        )
        .unwrap();
        assert_eq!(ds.feature_names(), &["f0".to_string()]);
        assert_eq!(ds.class_counts(), (1, 1, 1));
        assert_eq!(ds.labeled_indices(), vec![0, 1]);
    }

    #[test]
    fn label_mismatch_is_error() {
        assert!(Dataset::new(array![[1.0], [2.0]], vec![Label::Class0], vec![]).is_err());
    }

    #[test]
    fn hstack_concatenates_columns() {
        let a = Dataset::new(array![[1.0], [2.0]], vec![Label::Class0, Label::Class1], vec![]).unwrap();
        let b = a.with_features(array![[3.0, 4.0], [5.0, 6.0]], vec!["x".into(), "y".into()]).unwrap();
        let c = a.hstack(&b).unwrap();
        assert_eq!(c.features(), array![[1.0, 3.0, 4.0], [2.0, 5.0, 6.0]]);
        assert_eq!(c.feature_names(), &["f0", "x", "y"]);
    }
}
