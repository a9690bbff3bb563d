use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-column location and scale fitted on a set of rows.
#[derive(Clone, Debug, PartialEq)]
pub struct StandardizationParams<T> {
    pub means: Array1<T>,
    /// Sample standard deviations (denominator n − 1); all strictly positive.
    pub stds: Array1<T>,
}

impl<T: Scalar> StandardizationParams<T> {
    /// Fits on the given rows of `x`. `names` is only used for error messages.
    pub fn fit_matrix(x: ArrayView2<'_, T>, rows: &[usize], names: Option<&[String]>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("standardization needs at least one row"));
        }
        let sub = x.select(Axis(0), rows);
        let n = T::count(rows.len());
        let means = sub.sum_axis(Axis(0)) / n;
        let denom = if rows.len() > 1 { n - T::one() } else { T::one() };
        let mut stds = Array1::zeros(x.ncols());
        for (j, col) in sub.columns().into_iter().enumerate() {
            let m = means[j];
            let ss: T = col.iter().map(|&v| (v - m) * (v - m)).sum();
            let sd = (ss / denom).sqrt();
            if !(sd > T::zero()) {
                let name = names
                    .and_then(|ns| ns.get(j).cloned())
                    .unwrap_or_else(|| format!("f{j}"));
                return Err(Error::ConstantFeature { index: j, name });
            }
            stds[j] = sd;
        }
        Ok(StandardizationParams { means, stds })
    }

    pub fn n_features(&self) -> usize {
        self.means.len()
    }

    /// `(x − mean) / std` column-wise.
    pub fn apply_matrix(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        if x.ncols() != self.n_features() {
            return Err(Error::dim(format!(
                "standardization fitted on {} features, input has {}",
                self.n_features(),
                x.ncols()
            )));
        }
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for ((v, &m), &s) in row.iter_mut().zip(&self.means).zip(&self.stds) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}

/// Fits standardization statistics over exactly `rows` of `ds`.
pub fn standardize_fit<T: Scalar>(ds: &Dataset<T>, rows: &[usize]) -> Result<StandardizationParams<T>> {
    if let Some(&bad) = rows.iter().find(|&&i| i >= ds.n_rows()) {
        return Err(Error::invalid(format!("row index {bad} out of range")));
    }
    StandardizationParams::fit_matrix(ds.features(), rows, Some(ds.feature_names()))
}

/// Applies fitted parameters to every row of `ds`; labels are unchanged.
pub fn standardize_apply<T: Scalar>(ds: &Dataset<T>, params: &StandardizationParams<T>) -> Result<Dataset<T>> {
    let x = params.apply_matrix(ds.features())?;
    ds.with_features(x, ds.feature_names().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Label;
    use ndarray::array;
    use proptest::prelude::*;

    fn ds(x: Array2<f64>) -> Dataset<f64> {
        let n = x.nrows();
        Dataset::new(x, vec![Label::Class0; n], vec![]).unwrap()
    }

    #[test]
    fn two_point_mean_and_std() {
        let d = ds(array![[0.0], [7.0], [2.0]]);
        let p = standardize_fit(&d, &[0, 2]).unwrap();
        assert_eq!(p.means[0], 1.0);
        assert!((p.stds[0] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn hand_value() {
        let p = StandardizationParams {
            means: array![1.0],
            stds: array![2.0],
        };
        let out = standardize_apply(&ds(array![[3.0]]), &p).unwrap();
        assert_eq!(out.features()[[0, 0]], 1.0);
    }

    #[test]
    fn identity_params() {
        let p = StandardizationParams {
            means: array![0.0, 0.0],
            stds: array![1.0, 1.0],
        };
        let d = ds(array![[3.0, -1.5], [0.25, 8.0]]);
        assert_eq!(standardize_apply(&d, &p).unwrap(), d);
    }

    #[test]
    fn constant_column_is_named() {
        let d = Dataset::new(array![[1.0, 5.0], [2.0, 5.0]], vec![Label::Class0; 2], vec!["a".into(), "b".into()])
            .unwrap();
        match standardize_fit(&d, &[0, 1]).unwrap_err() {
            Error::ConstantFeature { index, name } => {
                assert_eq!(index, 1);
                assert_eq!(name, "b");
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn dimension_mismatch() {
        let p = StandardizationParams {
            means: array![0.0],
            stds: array![1.0],
        };
        assert!(standardize_apply(&ds(array![[1.0, 2.0]]), &p).is_err());
    }

    #[test]
    fn already_standardized_is_fixed_point() {
        let d = ds(array![[-1.0], [0.0], [1.0]]);
        let p = standardize_fit(&d, &[0, 1, 2]).unwrap();
        assert!(p.means[0].abs() < 1e-10);
        assert!((p.stds[0] - 1.0).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn fit_then_apply_standardizes(
            rows in 3usize..30,
            cols in 1usize..6,
            seed in any::<u64>(),
            scale in 0.01f64..1e3,
            shift in -1e3f64..1e3,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x = Array2::from_shape_fn((rows, cols), |_| shift + scale * rng.random_range(-1.0..1.0));
            let d = ds(x);
            let all: Vec<usize> = (0..rows).collect();
            let p = standardize_fit(&d, &all).unwrap();
            let z = standardize_apply(&d, &p).unwrap();
            for col in z.features().columns() {
                let m = col.sum() / rows as f64;
                let v = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (rows - 1) as f64;
                prop_assert!(m.abs() < 1e-10);
                prop_assert!((v.sqrt() - 1.0).abs() < 1e-10);
            }
        }
    }
}
