//! Dense symmetric linear algebra: covariance and correlation matrices, a cyclic
//! Jacobi eigensolver and power iteration for the top eigenvalue.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Sweep cap for [`sym_eigen`].
pub const MAX_JACOBI_SWEEPS: usize = 50;

/// Eigendecomposition of a symmetric matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SymEigen<T> {
    /// Sorted descending.
    pub eigenvalues: Array1<T>,
    /// Column `j` is the unit eigenvector for `eigenvalues[j]`, with its
    /// largest-magnitude entry positive.
    pub eigenvectors: Array2<T>,
}

fn check_square<T: Scalar>(m: &ArrayView2<'_, T>) -> Result<usize> {
    let (r, c) = m.dim();
    if r != c || r == 0 {
        return Err(Error::dim(format!("expected a non-empty square matrix, got {r}x{c}")));
    }
    Ok(r)
}

fn check_symmetric<T: Scalar>(m: &ArrayView2<'_, T>) -> Result<()> {
    let n = check_square(m)?;
    let scale = m.iter().fold(T::one(), |acc, v| acc.max(v.abs()));
    let limit = T::lit(1e-10).max(T::epsilon() * T::lit(64.0)) * scale;
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[[i, j]] - m[[j, i]]).abs() > limit {
                return Err(Error::invalid(format!("matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// Column means of `x`.
pub fn column_means<T: Scalar>(x: ArrayView2<'_, T>) -> Array1<T> {
    x.sum_axis(Axis(0)) / T::count(x.nrows().max(1))
}

/// `S = (1/n) Σ (xᵢ − x̄)(xᵢ − x̄)ᵀ` (population denominator).
pub fn sample_covariance<T: Scalar>(x: ArrayView2<'_, T>) -> Result<Array2<T>> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::invalid(format!("covariance needs at least 2 rows, got {n}")));
    }
    let means = column_means(x);
    let centered = &x - &means;
    let mut s = centered.t().dot(&centered) / T::count(n);
    // exact symmetry
    let p = s.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            let v = s[[i, j]];
            s[[j, i]] = v;
        }
    }
    Ok(s)
}

/// `R = D^{-1/2} S D^{-1/2}` with unit diagonal and entries clamped to [−1, 1].
pub fn sample_correlation<T: Scalar>(x: ArrayView2<'_, T>) -> Result<Array2<T>> {
    let s = sample_covariance(x)?;
    let p = s.nrows();
    let mut inv_sd = Array1::zeros(p);
    for j in 0..p {
        if !(s[[j, j]] > T::zero()) {
            return Err(Error::ConstantFeature {
                index: j,
                name: format!("f{j}"),
            });
        }
        inv_sd[j] = T::one() / s[[j, j]].sqrt();
    }
    let mut r = s;
    for i in 0..p {
        for j in 0..p {
            r[[i, j]] = if i == j {
                T::one()
            } else {
                (r[[i, j]] * inv_sd[i] * inv_sd[j]).max(-T::one()).min(T::one())
            };
        }
    }
    Ok(r)
}

/// `row_p ← c·row_p − s·row_q`, `row_q ← s·row_p + c·row_q` on a row-major `n × n` buffer.
fn rotate_rows<T: Scalar>(buf: &mut [T], n: usize, p: usize, q: usize, c: T, s: T) {
    let (head, tail) = buf.split_at_mut(q * n);
    let rp = &mut head[p * n..(p + 1) * n];
    let rq = &mut tail[..n];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

fn off_diagonal_norm<T: Scalar>(a: &Array2<T>) -> T {
    let n = a.nrows();
    let mut acc = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += a[[i, j]] * a[[i, j]];
            }
        }
    }
    acc.sqrt()
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Sweeps until the off-diagonal Frobenius norm drops below `tol · max(1, ‖M‖_F)`,
/// failing after [`MAX_JACOBI_SWEEPS`] sweeps.
pub fn sym_eigen<T: Scalar>(m: ArrayView2<'_, T>, tol: T) -> Result<SymEigen<T>> {
    check_symmetric(&m)?;
    let n = m.nrows();
    let mut a = m.to_owned();
    // symmetrize to remove sub-tolerance asymmetry
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = (a[[i, j]] + a[[j, i]]) / T::lit(2.0);
            a[[i, j]] = avg;
            a[[j, i]] = avg;
        }
    }
    let frob = a.iter().map(|&x| x * x).sum::<T>().sqrt();
    let threshold = tol * frob.max(T::one());
    let huge = T::lit(1e150).min(T::max_value().sqrt());
    // row-major working copies; `vt` holds the eigenvectors as rows
    let mut w: Vec<T> = a.iter().copied().collect();
    let mut vt: Vec<T> = Array2::<T>::eye(n).into_iter().collect();

    let mut converged = off_diagonal_norm(&a) < threshold;
    let mut sweeps = 0;
    while !converged && sweeps < MAX_JACOBI_SWEEPS {
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = w[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let (app, aqq) = (w[p * n + p], w[q * n + q]);
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = if theta.abs() > huge {
                    T::one() / (T::lit(2.0) * theta)
                } else {
                    let mag = T::one() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    if theta < T::zero() {
                        -mag
                    } else {
                        mag
                    }
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                rotate_rows(&mut w, n, p, q, c, s);
                for k in 0..n {
                    w[k * n + p] = w[p * n + k];
                    w[k * n + q] = w[q * n + k];
                }
                w[p * n + p] = app - t * apq;
                w[q * n + q] = aqq + t * apq;
                w[p * n + q] = T::zero();
                w[q * n + p] = T::zero();
                rotate_rows(&mut vt, n, p, q, c, s);
            }
        }
        sweeps += 1;
        a = Array2::from_shape_vec((n, n), w.clone()).map_err(|e| Error::dim(e.to_string()))?;
        converged = off_diagonal_norm(&a) < threshold;
    }
    if !converged {
        return Err(Error::NoConvergence {
            what: "Jacobi eigensolver",
            iterations: MAX_JACOBI_SWEEPS,
        });
    }
    let v = Array2::from_shape_vec((n, n), vt)
        .map_err(|e| Error::dim(e.to_string()))?
        .reversed_axes();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[j, j]].partial_cmp(&a[[i, i]]).unwrap_or(std::cmp::Ordering::Equal));
    let eigenvalues = Array1::from_iter(order.iter().map(|&i| a[[i, i]]));
    let mut eigenvectors = v.select(Axis(1), &order);
    for mut col in eigenvectors.columns_mut() {
        let mut lead = 0;
        for (k, x) in col.iter().enumerate() {
            if x.abs() > col[lead].abs() {
                lead = k;
            }
        }
        if col[lead] < T::zero() {
            col.mapv_inplace(|x| -x);
        }
    }
    Ok(SymEigen {
        eigenvalues,
        eigenvectors,
    })
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power iteration.
///
/// Starts from a fixed vector with distinct entries. Successive Rayleigh quotients converge
/// geometrically, so besides requiring two estimates to differ by less than
/// `tol · max(1, |λ|)`, the remaining error is extrapolated from the observed
/// contraction ratio and must also fall under that bound. A start vector orthogonal
/// to the top eigenspace converges to a lower eigenvalue; callers needing a guarantee
/// should use [`sym_eigen`].
pub fn largest_eigenvalue<T: Scalar>(m: ArrayView2<'_, T>, tol: T, max_iter: usize) -> Result<T> {
    check_symmetric(&m)?;
    let n = m.nrows();
    // Not the all-ones vector: that is an eigenvector of every matrix with constant
    // row sums, including all 2 x 2 correlation matrices.
    let mut v = Array1::from_shape_fn(n, |i| T::lit(0.5 + (0.618_033_988_749_895 * (i + 1) as f64).fract()));
    v /= v.dot(&v).sqrt();
    let mut previous: Option<T> = None;
    let mut previous_step: Option<T> = None;
    for _ in 0..max_iter {
        let w = m.dot(&v);
        let lambda = v.dot(&w);
        if let Some(prev) = previous {
            let step = (lambda - prev).abs();
            let bound = tol * lambda.abs().max(T::one());
            // roundoff floor
            if step <= T::epsilon() * T::lit(16.0) * lambda.abs().max(T::one()) {
                return Ok(lambda);
            }
            if step < bound {
                if let Some(last) = previous_step {
                    let ratio = step / last;
                    if ratio < T::one() && step * ratio / (T::one() - ratio) < bound {
                        return Ok(lambda);
                    }
                }
            }
            previous_step = Some(step);
        }
        let norm = w.dot(&w).sqrt();
        if norm == T::zero() {
            return Ok(T::zero());
        }
        v = w / norm;
        previous = Some(lambda);
    }
    Err(Error::NoConvergence {
        what: "power iteration",
        iterations: max_iter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(p: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Array2::from_shape_simple_fn((p, p), || rng.random_range(-1.0..1.0));
        &a + &a.t()
    }

    fn max_abs(a: &Array2<f64>) -> f64 {
        a.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    #[test]
    fn power_iteration_negative_correlation() {
        let r = array![[1.0, -0.4], [-0.4, 1.0]];
        assert!((largest_eigenvalue(r.view(), 1e-13f64, 10_000).unwrap() - 1.4).abs() < 1e-10);
    }

    #[test]
    fn covariance_hand_cases() {
        assert_eq!(sample_covariance(array![[-1.0], [1.0]].view()).unwrap(), array![[1.0]]);
        let same = sample_covariance(array![[2.0, 3.0], [2.0, 3.0], [2.0, 3.0]].view()).unwrap();
        assert_eq!(same, Array2::<f64>::zeros((2, 2)));
        assert!(sample_covariance(array![[1.0, 2.0]].view()).is_err());
    }

    #[test]
    fn correlation_cases() {
        let r = sample_correlation(array![[1.0, 2.0], [2.0, 4.5], [3.0, 6.0]].view()).unwrap();
        assert_eq!(r[[0, 0]], 1.0);
        assert_eq!(r[[1, 1]], 1.0);
        let perfect = sample_correlation(array![[1.0f64, 2.0], [2.0, 4.0], [4.0, 8.0]].view()).unwrap();
        assert!((perfect[[0, 1]] - 1.0).abs() < 1e-10);
        assert!(sample_correlation(array![[1.0, 2.0], [1.0, 4.0]].view()).is_err());
    }

    #[test]
    fn correlation_matches_pairwise_pearson() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x = Array2::from_shape_simple_fn((5, 3), || rng.random_range(-2.0..2.0));
        let r = sample_correlation(x.view()).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let (ca, cb) = (x.column(a), x.column(b));
                let (ma, mb) = (ca.sum() / 5.0, cb.sum() / 5.0);
                let num: f64 = (0..5).map(|i| (ca[i] - ma) * (cb[i] - mb)).sum();
                let da: f64 = (0..5).map(|i| (ca[i] - ma).powi(2)).sum();
                let db: f64 = (0..5).map(|i| (cb[i] - mb).powi(2)).sum();
                assert!((r[[a, b]] - num / (da * db).sqrt()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn diagonal_matrix() {
        let e = sym_eigen(array![[1.0, 0.0], [0.0, 3.0]].view(), 1e-12).unwrap();
        assert_eq!(e.eigenvalues, array![3.0, 1.0]);
        assert_eq!(e.eigenvectors, array![[0.0, 1.0], [1.0, 0.0]]);
    }

    #[test]
    fn two_by_two_by_hand() {
        let e = sym_eigen(array![[2.0f64, 1.0], [1.0, 2.0]].view(), 1e-12).unwrap();
        assert!((e.eigenvalues[0] - 3.0).abs() < 1e-12);
        assert!((e.eigenvalues[1] - 1.0).abs() < 1e-12);
        let h = 0.5f64.sqrt();
        let v0 = e.eigenvectors.column(0);
        let v1 = e.eigenvectors.column(1);
        assert!((v0[0] - h).abs() < 1e-12 && (v0[1] - h).abs() < 1e-12);
        assert!((v1[0].abs() - h).abs() < 1e-12 && (v1[0] + v1[1]).abs() < 1e-12);
    }

    #[test]
    fn rejects_asymmetric() {
        assert!(sym_eigen(array![[1.0, 2.0], [0.0, 1.0]].view(), 1e-12).is_err());
        assert!(largest_eigenvalue(array![[1.0, 2.0], [0.0, 1.0]].view(), 1e-12, 100).is_err());
    }

    #[test]
    fn reconstructs_random_6x6() {
        let m = random_symmetric(6, 3);
        let e = sym_eigen(m.view(), 1e-12).unwrap();
        let recon = e.eigenvectors.dot(&Array2::from_diag(&e.eigenvalues)).dot(&e.eigenvectors.t());
        assert!(max_abs(&(&m - &recon)) < 1e-8);
    }

    #[test]
    fn power_iteration_cases() {
        assert!((largest_eigenvalue(Array2::<f64>::eye(4).view(), 1e-12, 100).unwrap() - 1.0).abs() < 1e-12);
        let top = largest_eigenvalue(array![[2.0f64, 1.0], [1.0, 2.0]].view(), 1e-12, 1000).unwrap();
        assert!((top - 3.0).abs() < 1e-11);
        assert_eq!(largest_eigenvalue(Array2::<f64>::zeros((3, 3)).view(), 1e-12, 10).unwrap(), 0.0);
    }

    #[test]
    fn power_iteration_reports_non_convergence() {
        let close_pair = array![[1.0, 1e-3], [1e-3, 0.999999]];
        assert!(largest_eigenvalue(close_pair.view(), 1e-15, 3).is_err());
    }

    #[test]
    fn f32_decomposition() {
        let m = array![[2.0f32, 1.0], [1.0, 2.0]];
        let e = sym_eigen(m.view(), 1e-6).unwrap();
        assert!((e.eigenvalues[0] - 3.0).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn jacobi_invariants(p in 1usize..=20, seed in any::<u64>()) {
            let m = random_symmetric(p, seed);
            let e = sym_eigen(m.view(), 1e-13).unwrap();
            for w in e.eigenvalues.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
            let vtv = e.eigenvectors.t().dot(&e.eigenvectors);
            prop_assert!(max_abs(&(&vtv - &Array2::<f64>::eye(p))) < 1e-8);
            let recon = e.eigenvectors.dot(&Array2::from_diag(&e.eigenvalues)).dot(&e.eigenvectors.t());
            prop_assert!(max_abs(&(&m - &recon)) < 1e-8);
            let trace: f64 = m.diag().sum();
            prop_assert!((trace - e.eigenvalues.sum()).abs() < 1e-8);
            for (j, v) in e.eigenvectors.columns().into_iter().enumerate() {
                let resid = m.dot(&v) - &v * e.eigenvalues[j];
                prop_assert!(resid.iter().fold(0.0f64, |a, x| a.max(x.abs())) < 1e-7 * (1.0 + e.eigenvalues[j].abs()));
            }
        }

        #[test]
        fn power_iteration_dominates_rayleigh_quotients(p in 1usize..=12, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = Array2::from_shape_simple_fn((p + 3, p), || rng.random_range(-1.0..1.0));
            let m = b.t().dot(&b);
            let e = sym_eigen(m.view(), 1e-13).unwrap();
            let tol = 1e-12f64;
            match largest_eigenvalue(m.view(), tol, 200_000) {
                Ok(top) => {
                    prop_assert!((top - e.eigenvalues[0]).abs() <= 10.0 * tol * (1.0 + e.eigenvalues[0]));
                    for _ in 0..100 {
                        let v = Array1::from_shape_simple_fn(p, || rng.random_range(-1.0..1.0));
                        let rq = v.dot(&m.dot(&v)) / v.dot(&v);
                        prop_assert!(top >= rq - 1e-6);
                    }
                }
                Err(_) => {}
            }
        }
    }
}
