//! Principal component analysis from the covariance eigendecomposition, with
//! projection, reconstruction error and class-discriminatory ranking of components.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::data::{Dataset, Label};
use crate::error::{Error, Result};
use crate::linalg::{column_means, sample_covariance, sym_eigen};
use crate::scalar::Scalar;

/// How the components of a [`PcaModel`] are ordered.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ComponentRanking {
    /// Descending explained variance.
    Variance,
    /// Descending discriminatory power θ; `variances` are then not sorted.
    Discriminatory,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel<T> {
    pub mean: Array1<T>,
    /// p×r, orthonormal columns.
    pub components: Array2<T>,
    /// Score variance of each component (covariance denominator n).
    pub variances: Array1<T>,
    pub ranking: ComponentRanking,
}

impl<T: Scalar> PcaModel<T> {
    pub fn n_components(&self) -> usize {
        self.components.ncols()
    }

    pub fn n_features(&self) -> usize {
        self.components.nrows()
    }

    fn check_input(&self, x: &ArrayView2<'_, T>) -> Result<()> {
        if x.ncols() != self.n_features() {
            return Err(Error::dim(format!(
                "PCA fitted on {} features, input has {}",
                self.n_features(),
                x.ncols()
            )));
        }
        Ok(())
    }

    /// `mean + scores · componentsᵀ`
    pub fn inverse_transform(&self, scores: ArrayView2<'_, T>) -> Result<Array2<T>> {
        if scores.ncols() != self.n_components() {
            return Err(Error::dim(format!(
                "{} score columns for {} components",
                scores.ncols(),
                self.n_components()
            )));
        }
        Ok(scores.dot(&self.components.t()) + &self.mean)
    }
}

fn eigen_tol<T: Scalar>() -> T {
    T::lit(1e-13).max(T::epsilon() * T::lit(64.0))
}

/// Top-`r` eigenpairs of the sample covariance of `x`.
pub fn pca_fit<T: Scalar>(x: ArrayView2<'_, T>, r: usize) -> Result<PcaModel<T>> {
    let (n, p) = x.dim();
    if r == 0 || r > p || r + 1 > n {
        return Err(Error::invalid(format!(
            "number of components {r} outside 1..=min(n - 1, p) = {}",
            p.min(n.saturating_sub(1))
        )));
    }
    let cov = sample_covariance(x)?;
    let eig = sym_eigen(cov.view(), eigen_tol())?;
    let keep: Vec<usize> = (0..r).collect();
    Ok(PcaModel {
        mean: column_means(x),
        components: eig.eigenvectors.select(Axis(1), &keep),
        variances: eig.eigenvalues.slice(ndarray::s![..r]).to_owned(),
        ranking: ComponentRanking::Variance,
    })
}

/// `(x − mean) · components`
pub fn pca_transform<T: Scalar>(model: &PcaModel<T>, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
    model.check_input(&x)?;
    Ok((&x - &model.mean).dot(&model.components))
}

/// `(1/n) Σᵢ ‖(xᵢ − x̄) − V Vᵀ (xᵢ − x̄)‖²` using the model's mean and components.
pub fn reconstruction_error<T: Scalar>(model: &PcaModel<T>, x: ArrayView2<'_, T>) -> Result<T> {
    model.check_input(&x)?;
    if x.nrows() == 0 {
        return Err(Error::invalid("reconstruction error of an empty matrix"));
    }
    let centered = &x - &model.mean;
    let projected = centered.dot(&model.components).dot(&model.components.t());
    let resid = &centered - &projected;
    Ok(resid.iter().map(|&v| v * v).sum::<T>() / T::count(x.nrows()))
}

/// `θₖ = [vₖᵀ(x̄₀ − x̄₁)]² / lₖ` with class means over the labeled rows of `x`.
pub fn discriminatory_power_matrix<T: Scalar>(model: &PcaModel<T>, x: ArrayView2<'_, T>, labels: &[Label]) -> Result<Array1<T>> {
    model.check_input(&x)?;
    if labels.len() != x.nrows() {
        return Err(Error::dim(format!("{} labels for {} rows", labels.len(), x.nrows())));
    }
    let class_mean = |target: Label| -> Result<Array1<T>> {
        let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == target).collect();
        if rows.is_empty() {
            return Err(Error::invalid(format!("no rows of {target:?}")));
        }
        Ok(column_means(x.select(Axis(0), &rows).view()))
    };
    let diff = &class_mean(Label::Class0)? - &class_mean(Label::Class1)?;
    let proj = model.components.t().dot(&diff);
    let mut theta = Array1::zeros(model.n_components());
    for k in 0..model.n_components() {
        if !(model.variances[k] > T::zero()) {
            return Err(Error::invalid(format!("component {k} has zero variance")));
        }
        theta[k] = proj[k] * proj[k] / model.variances[k];
    }
    Ok(theta)
}

pub fn discriminatory_power<T: Scalar>(model: &PcaModel<T>, ds: &Dataset<T>) -> Result<Array1<T>> {
    discriminatory_power_matrix(model, ds.features(), ds.labels())
}

/// Reorders components by θ (descending, stable) and keeps the first `r_keep`.
pub fn select_components_by_power<T: Scalar>(model: &PcaModel<T>, ds: &Dataset<T>, r_keep: usize) -> Result<PcaModel<T>> {
    select_components_by_power_matrix(model, ds.features(), ds.labels(), r_keep)
}

pub fn select_components_by_power_matrix<T: Scalar>(
    model: &PcaModel<T>,
    x: ArrayView2<'_, T>,
    labels: &[Label],
    r_keep: usize,
) -> Result<PcaModel<T>> {
    if r_keep == 0 || r_keep > model.n_components() {
        return Err(Error::invalid(format!(
            "r_keep = {r_keep} outside 1..={}",
            model.n_components()
        )));
    }
    let theta = discriminatory_power_matrix(model, x, labels)?;
    let mut order: Vec<usize> = (0..theta.len()).collect();
    order.sort_by(|&a, &b| theta[b].partial_cmp(&theta[a]).unwrap_or(std::cmp::Ordering::Equal));
    order.truncate(r_keep);
    Ok(PcaModel {
        mean: model.mean.clone(),
        components: model.components.select(Axis(1), &order),
        variances: model.variances.select(Axis(0), &order),
        ranking: ComponentRanking::Discriminatory,
    })
}
