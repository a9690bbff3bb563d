//! L1-penalized least squares by cyclic coordinate descent, used as a feature selector.
//!
//! The objective is `‖y − Xβ‖²₂ / n + λ‖β‖₁`. Coordinate `j` is minimized exactly by
//! `βⱼ = S(Xⱼᵀrⱼ / n, λ/2) / (‖Xⱼ‖² / n)` where `rⱼ` is the partial residual and
//! `S(z, t) = sign(z)·max(|z| − t, 0)`. The intercept is handled by centering.

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};

use crate::data::{signed_labels, train_rows_excluding, Label};
use crate::error::{Error, Result};
use crate::linalg::column_means;
use crate::scalar::Scalar;

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const DEFAULT_SELECTION_EPS: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct LassoFit<T> {
    pub beta: Array1<T>,
    pub lambda: T,
    /// Full coordinate sweeps performed.
    pub iterations_run: usize,
    pub converged: bool,
    pub objective: T,
}

/// `sign(z)·max(|z| − t, 0)`
#[inline]
pub fn soft_threshold<T: Scalar>(z: T, t: T) -> T {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        T::zero()
    }
}

pub fn lasso_objective<T: Scalar>(x: ArrayView2<'_, T>, y: ArrayView1<'_, T>, beta: ArrayView1<'_, T>, lambda: T) -> T {
    let resid = &y - &x.dot(&beta);
    resid.dot(&resid) / T::count(x.nrows()) + lambda * beta.iter().map(|b| b.abs()).sum::<T>()
}

/// Smallest λ with an all-zero solution: `(2/n)·maxⱼ |Xⱼᵀy|`.
pub fn lambda_max<T: Scalar>(x: ArrayView2<'_, T>, y: ArrayView1<'_, T>) -> T {
    let n = T::count(x.nrows());
    x.t()
        .dot(&y)
        .iter()
        .fold(T::zero(), |m, v| m.max(v.abs()))
        * T::lit(2.0)
        / n
}

/// Largest KKT violation of `beta` for penalty `lambda`. Zero coefficients need
/// `|gⱼ| ≤ λ`, nonzero ones `gⱼ = λ·sign(βⱼ)`, where `g = (2/n)Xᵀ(y − Xβ)`.
pub fn kkt_violation<T: Scalar>(x: ArrayView2<'_, T>, y: ArrayView1<'_, T>, beta: ArrayView1<'_, T>, lambda: T) -> T {
    let n = T::count(x.nrows());
    let resid = &y - &x.dot(&beta);
    let grad = x.t().dot(&resid) * T::lit(2.0) / n;
    grad.iter()
        .zip(beta.iter())
        .map(|(&g, &b)| {
            if b == T::zero() {
                (g.abs() - lambda).max(T::zero())
            } else {
                (g - lambda * b.signum()).abs()
            }
        })
        .fold(T::zero(), |m, v| m.max(v))
}

fn check_xy<T: Scalar>(x: &ArrayView2<'_, T>, y: &ArrayView1<'_, T>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::dim(format!("X has {} rows, y has {}", x.nrows(), y.len())));
    }
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::dim("lasso needs a non-empty design matrix"));
    }
    Ok(())
}

/// Cyclic coordinate descent from β = 0.
pub fn lasso_fit<T: Scalar>(x: ArrayView2<'_, T>, y: ArrayView1<'_, T>, lambda: T, tol: T, max_iter: usize) -> Result<LassoFit<T>> {
    lasso_fit_from(x, y, lambda, tol, max_iter, None)
}

/// Cyclic coordinate descent starting from `warm` (or zero).
///
/// Stops when the largest coordinate change in a sweep is below `tol`; a fit that hits
/// `max_iter` sweeps is returned with `converged = false`. For `lambda >= lambda_max`
/// the zero vector is returned without sweeping.
pub fn lasso_fit_from<T: Scalar>(
    x: ArrayView2<'_, T>,
    y: ArrayView1<'_, T>,
    lambda: T,
    tol: T,
    max_iter: usize,
    warm: Option<ArrayView1<'_, T>>,
) -> Result<LassoFit<T>> {
    check_xy(&x, &y)?;
    if !(lambda >= T::zero()) || !lambda.is_finite() {
        return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let (n, p) = x.dim();
    if lambda >= lambda_max(x, y) {
        // zero satisfies the KKT conditions exactly; coordinate descent could leave
        // roundoff-sized coefficients when lambda sits right at the boundary
        let beta = Array1::zeros(p);
        let objective = lasso_objective(x, y, beta.view(), lambda);
        return Ok(LassoFit {
            beta,
            lambda,
            iterations_run: 0,
            converged: true,
            objective,
        });
    }
    let nf = T::count(n);
    let mut beta = match warm {
        Some(w) if w.len() == p => w.to_owned(),
        Some(w) => return Err(Error::dim(format!("warm start has {} entries, expected {p}", w.len()))),
        None => Array1::zeros(p),
    };
    let cols = x.t().as_standard_layout().into_owned();
    let scale: Vec<T> = cols.rows().into_iter().map(|c| c.dot(&c) / nf).collect();
    let mut resid = &y - &x.dot(&beta);
    let half_lambda = lambda / T::lit(2.0);

    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < max_iter {
        sweeps += 1;
        let mut max_change = T::zero();
        for (j, col) in cols.rows().into_iter().enumerate() {
            let old = beta[j];
            let new = if scale[j] > T::zero() {
                let z = col.dot(&resid) / nf + scale[j] * old;
                soft_threshold(z, half_lambda) / scale[j]
            } else {
                T::zero()
            };
            if new != old {
                resid.scaled_add(old - new, &col);
                beta[j] = new;
                max_change = max_change.max((new - old).abs());
            }
        }
        if max_change < tol {
            converged = true;
            break;
        }
    }
    let objective = lasso_objective(x, y, beta.view(), lambda);
    Ok(LassoFit {
        beta,
        lambda,
        iterations_run: sweeps,
        converged,
        objective,
    })
}

/// `n_lambdas` log-spaced values from λ_max down to `ratio·λ_max`. An all-zero
/// correlation (λ_max = 0) gives the single-entry path `[0]`.
pub fn lambda_path<T: Scalar>(x: ArrayView2<'_, T>, y: ArrayView1<'_, T>, n_lambdas: usize, ratio: T) -> Result<Vec<T>> {
    check_xy(&x, &y)?;
    if n_lambdas < 2 {
        return Err(Error::invalid(format!("path needs at least 2 lambdas, got {n_lambdas}")));
    }
    if !(ratio > T::zero() && ratio < T::one()) {
        return Err(Error::invalid(format!("path ratio must lie in (0, 1), got {ratio}")));
    }
    let top = lambda_max(x, y);
    if top == T::zero() {
        return Ok(vec![T::zero()]);
    }
    let last = T::count(n_lambdas - 1);
    Ok((0..n_lambdas)
        .map(|k| {
            if k == 0 {
                top
            } else if k == n_lambdas - 1 {
                top * ratio
            } else {
                top * ratio.powf(T::count(k) / last)
            }
        })
        .collect())
}

/// Indices with `|βⱼ| > eps`, ascending.
pub fn selected_features<T: Scalar>(fit: &LassoFit<T>, eps: T) -> Vec<usize> {
    fit.beta
        .iter()
        .enumerate()
        .filter(|(_, b)| b.abs() > eps)
        .map(|(j, _)| j)
        .collect()
}

/// A lasso fit on column-centered `x` and centered `y`, with the centering kept for prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct CenteredLasso<T> {
    pub fit: LassoFit<T>,
    pub x_means: Array1<T>,
    pub y_mean: T,
}

impl<T: Scalar> CenteredLasso<T> {
    pub fn predict(&self, x: ArrayView2<'_, T>) -> Array1<T> {
        (&x - &self.x_means).dot(&self.fit.beta) + self.y_mean
    }
}

/// Fits each λ of `lambdas` (any order) on centered data, warm-starting along the
/// descending order. Results are returned in the order of `lambdas`.
pub fn lasso_fit_centered_path<T: Scalar>(
    x: ArrayView2<'_, T>,
    y: ArrayView1<'_, T>,
    lambdas: &[T],
    tol: T,
    max_iter: usize,
) -> Result<Vec<CenteredLasso<T>>> {
    check_xy(&x, &y)?;
    let x_means = column_means(x);
    let y_mean = y.sum() / T::count(y.len());
    let xc = &x - &x_means;
    let yc = y.mapv(|v| v - y_mean);
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[b].partial_cmp(&lambdas[a]).unwrap_or(std::cmp::Ordering::Equal));
    let mut out: Vec<Option<CenteredLasso<T>>> = vec![None; lambdas.len()];
    let mut warm: Option<Array1<T>> = None;
    for idx in order {
        let fit = lasso_fit_from(xc.view(), yc.view(), lambdas[idx], tol, max_iter, warm.as_ref().map(|w| w.view()))?;
        warm = Some(fit.beta.clone());
        out[idx] = Some(CenteredLasso {
            fit,
            x_means: x_means.clone(),
            y_mean,
        });
    }
    Ok(out.into_iter().map(|f| f.expect("every lambda fitted")).collect())
}

/// Picks λ by k-fold cross-validation of squared prediction error, with class labels
/// coded −1/+1 as the response. Ties go to the larger λ.
pub fn lasso_cv<T: Scalar>(x: ArrayView2<'_, T>, labels: &[Label], folds: &[Vec<usize>], lambdas: &[T]) -> Result<T> {
    if lambdas.is_empty() {
        return Err(Error::invalid("lasso_cv needs at least one lambda"));
    }
    if lambdas.len() == 1 {
        return Ok(lambdas[0]);
    }
    if labels.len() != x.nrows() {
        return Err(Error::dim(format!("{} labels for {} rows", labels.len(), x.nrows())));
    }
    let y = Array1::from(signed_labels::<T>(labels)?);
    let tol = T::lit(DEFAULT_TOL);
    let mut mean_err = vec![T::zero(); lambdas.len()];
    for (f, val_rows) in folds.iter().enumerate() {
        if val_rows.is_empty() {
            continue;
        }
        let train_rows = train_rows_excluding(folds, f);
        let xt = x.select(Axis(0), &train_rows);
        let yt = y.select(Axis(0), &train_rows);
        let xv = x.select(Axis(0), val_rows);
        let yv = y.select(Axis(0), val_rows);
        let fits = lasso_fit_centered_path(xt.view(), yt.view(), lambdas, tol, DEFAULT_MAX_ITER)?;
        for (k, fit) in fits.iter().enumerate() {
            let err = &fit.predict(xv.view()) - &yv;
            mean_err[k] += err.dot(&err) / T::count(val_rows.len()) / T::count(folds.len());
        }
    }
    let mut best = 0;
    for k in 1..lambdas.len() {
        let better = mean_err[k] < mean_err[best] || (mean_err[k] == mean_err[best] && lambdas[k] > lambdas[best]);
        if better {
            best = k;
        }
    }
    Ok(lambdas[best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(n: usize, p: usize, seed: u64) -> (Array2<f64>, Array1<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_simple_fn((n, p), || rng.random_range(-1.0..1.0));
        let x = &x - &column_means(x.view());
        let y = Array1::from_shape_simple_fn(n, || rng.random_range(-1.0..1.0)) + x.column(0).to_owned();
        let ym = y.mean().unwrap();
        (x, y - ym)
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
    }

    #[test]
    fn above_lambda_max_is_exactly_zero() {
        let (x, y) = random_problem(30, 6, 1);
        let lm = lambda_max(x.view(), y.view());
        for lam in [lm, lm * 1.5] {
            let fit = lasso_fit(x.view(), y.view(), lam, 1e-7, 1000).unwrap();
            assert!(fit.beta.iter().all(|&b| b == 0.0));
            assert!(fit.converged);
        }
    }

    #[test]
    fn orthogonal_design_least_squares() {
        // columns scaled so XᵀX = nI
        let x = array![[1.0f64, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]];
        let y = array![3.0, 1.0, -1.0, -3.0];
        let fit = lasso_fit(x.view(), y.view(), 0.0, 1e-12, 100).unwrap();
        let ls = x.t().dot(&y) / 4.0;
        assert!((&fit.beta - &ls).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn objective_is_consistent_and_kkt_holds() {
        let (x, y) = random_problem(40, 8, 2);
        let lm = lambda_max(x.view(), y.view());
        let fit = lasso_fit(x.view(), y.view(), 0.1 * lm, 1e-9, 10_000).unwrap();
        assert!(fit.converged);
        let recomputed = lasso_objective(x.view(), y.view(), fit.beta.view(), fit.lambda);
        assert!((fit.objective - recomputed).abs() < 1e-10);
        assert!(kkt_violation(x.view(), y.view(), fit.beta.view(), fit.lambda) < 1e-6);
    }

    #[test]
    fn non_convergence_flagged() {
        let (x, y) = random_problem(40, 8, 3);
        let fit = lasso_fit(x.view(), y.view(), 1e-4, 1e-15, 1).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations_run, 1);
    }

    #[test]
    fn negative_lambda_rejected() {
        let (x, y) = random_problem(5, 2, 4);
        assert!(lasso_fit(x.view(), y.view(), -1.0, 1e-7, 10).is_err());
    }

    #[test]
    fn path_endpoints_and_order() {
        let (x, y) = random_problem(30, 5, 5);
        let lm = lambda_max(x.view(), y.view());
        let two = lambda_path(x.view(), y.view(), 2, 0.01).unwrap();
        assert_eq!(two, vec![lm, 0.01 * lm]);
        let path = lambda_path(x.view(), y.view(), 10, 0.01).unwrap();
        assert!(path.windows(2).all(|w| w[0] > w[1]));
        let head = lasso_fit(x.view(), y.view(), path[0], 1e-7, 100).unwrap();
        assert!(selected_features(&head, 1e-10).is_empty());
        let zero = Array1::zeros(30);
        assert_eq!(lambda_path(x.view(), zero.view(), 5, 0.1).unwrap(), vec![0.0]);
        assert!(lambda_path(x.view(), y.view(), 1, 0.1).is_err());
    }

    #[test]
    fn selection_readoff() {
        let fit = LassoFit {
            beta: array![0.5, 0.0, -0.3],
            lambda: 0.1,
            iterations_run: 1,
            converged: true,
            objective: 0.0,
        };
        assert_eq!(selected_features(&fit, 1e-8), vec![0, 2]);
        assert!(selected_features(&fit, 1.0).is_empty());
        let zero = LassoFit {
            beta: Array1::zeros(3),
            ..fit
        };
        assert!(selected_features(&zero, 1e-10).is_empty());
    }

    #[test]
    fn label_flip_negates_beta() {
        let (x, _) = random_problem(20, 4, 6);
        let labels: Vec<Label> = (0..20).map(|i| if i % 3 == 0 { Label::Class1 } else { Label::Class0 }).collect();
        let y = Array1::from(signed_labels::<f64>(&labels).unwrap());
        let flipped: Vec<Label> = labels.iter().map(|l| l.flipped()).collect();
        let yf = Array1::from(signed_labels::<f64>(&flipped).unwrap());
        let a = lasso_fit_centered_path(x.view(), y.view(), &[0.05], 1e-10, 1000).unwrap();
        let b = lasso_fit_centered_path(x.view(), yf.view(), &[0.05], 1e-10, 1000).unwrap();
        assert_eq!(a[0].fit.beta, -&b[0].fit.beta);
    }

    #[test]
    fn cv_single_and_empty() {
        let (x, _) = random_problem(20, 3, 7);
        let labels: Vec<Label> = (0..20).map(|i| if i % 2 == 0 { Label::Class1 } else { Label::Class0 }).collect();
        let folds = vec![(0..10).collect::<Vec<_>>(), (10..20).collect()];
        assert_eq!(lasso_cv(x.view(), &labels, &folds, &[0.3]).unwrap(), 0.3);
        assert!(lasso_cv::<f64>(x.view(), &labels, &folds, &[]).is_err());
    }

    #[test]
    fn objective_nonincreasing_per_sweep() {
        let (x, y) = random_problem(25, 10, 8);
        let lam = 0.05 * lambda_max(x.view(), y.view());
        let mut beta = Array1::zeros(10);
        let mut last = lasso_objective(x.view(), y.view(), beta.view(), lam);
        for _ in 0..30 {
            let fit = lasso_fit_from(x.view(), y.view(), lam, 0.0, 1, Some(beta.view())).unwrap();
            assert!(fit.objective <= last + 1e-15);
            last = fit.objective;
            beta = fit.beta;
        }
    }
}
