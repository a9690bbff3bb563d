//! Linear soft-margin SVM, the final-level classifier of every pipeline.
//!
//! Primal problem: `min ½‖w‖² + C Σ max(0, 1 − yᵢ(wᵀxᵢ + b))` with class 0 ↦ −1 and
//! class 1 ↦ +1. Three solvers are provided:
//!
//! * [`SvmSolver::Newton`] (default): Newton steps on a smoothed hinge whose width shrinks
//!   until a duality-gap bound is below `tol` relative to the objective. Fast when the
//!   feature count is small, whatever C is.
//! * [`SvmSolver::Dual`]: sequential minimal optimization on the dual with
//!   second-order working-set selection. Converges to the KKT tolerance `tol`.
//! * [`SvmSolver::Subgradient`]: deterministic full-batch subgradient descent on the
//!   primal with step `1/(λ·t)`, `λ = 1/(C n)`, returning the best averaged iterate.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::data::{signed_labels, train_rows_excluding, Label};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_TOL: f64 = 1e-5;
pub const DEFAULT_MAX_EPOCHS: usize = 1000;
/// C grid searched by the experiment harness.
pub const DEFAULT_C_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];

/// Something that can be trained on one set of rows and asked to label another.
pub trait FoldClassifier<T> {
    fn fit_predict(&self, x_train: ArrayView2<'_, T>, y_train: &[Label], x_eval: ArrayView2<'_, T>) -> Result<Vec<Label>>;
}

impl<T, F> FoldClassifier<T> for F
where
    F: Fn(ArrayView2<'_, T>, &[Label], ArrayView2<'_, T>) -> Result<Vec<Label>>,
{
    fn fit_predict(&self, x_train: ArrayView2<'_, T>, y_train: &[Label], x_eval: ArrayView2<'_, T>) -> Result<Vec<Label>> {
        self(x_train, y_train, x_eval)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SvmSolver {
    #[default]
    Newton,
    Dual,
    Subgradient,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvmParams<T> {
    pub c: T,
    pub tol: T,
    /// Iteration budget: Newton steps, passes over the data (subgradient) or
    /// `max_epochs · n` pair updates (dual).
    pub max_epochs: usize,
    pub solver: SvmSolver,
}

impl<T: Scalar> SvmParams<T> {
    pub fn new(c: T) -> Self {
        SvmParams {
            c,
            tol: T::lit(DEFAULT_TOL),
            max_epochs: DEFAULT_MAX_EPOCHS,
            solver: SvmSolver::Newton,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearSvmModel<T> {
    pub w: Array1<T>,
    pub bias: T,
    pub c: T,
}

impl<T: Scalar> LinearSvmModel<T> {
    pub fn decision_function(&self, x: ArrayView2<'_, T>) -> Result<Array1<T>> {
        if x.ncols() != self.w.len() {
            return Err(Error::dim(format!("model has {} weights, input has {} columns", self.w.len(), x.ncols())));
        }
        Ok(x.dot(&self.w) + self.bias)
    }

    /// `½‖w‖² + C Σ hinge` on the given data.
    pub fn objective(&self, x: ArrayView2<'_, T>, labels: &[Label]) -> Result<T> {
        let y = signed_labels::<T>(labels)?;
        let f = self.decision_function(x)?;
        Ok(primal_objective(&self.w, &f, &y, self.c))
    }
}

fn primal_objective<T: Scalar>(w: &Array1<T>, decision: &Array1<T>, y: &[T], c: T) -> T {
    let hinge: T = decision
        .iter()
        .zip(y)
        .map(|(&f, &yi)| (T::one() - yi * f).max(T::zero()))
        .sum();
    w.dot(w) / T::lit(2.0) + c * hinge
}

fn check_training_input<T: Scalar>(x: &ArrayView2<'_, T>, labels: &[Label], c: T) -> Result<Vec<T>> {
    if x.nrows() != labels.len() {
        return Err(Error::dim(format!("{} labels for {} rows", labels.len(), x.nrows())));
    }
    if !(c > T::zero()) || !c.is_finite() {
        return Err(Error::invalid(format!("C must be finite and > 0, got {c}")));
    }
    let y = signed_labels::<T>(labels)?;
    let pos = y.iter().filter(|&&v| v > T::zero()).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::invalid("SVM training needs both classes"));
    }
    Ok(y)
}

/// Trains with the default (Newton) solver.
pub fn svm_train<T: Scalar>(x: ArrayView2<'_, T>, labels: &[Label], c: T, tol: T, max_epochs: usize) -> Result<LinearSvmModel<T>> {
    svm_train_with(
        x,
        labels,
        &SvmParams {
            c,
            tol,
            max_epochs,
            solver: SvmSolver::Newton,
        },
    )
}

pub fn svm_train_with<T: Scalar>(x: ArrayView2<'_, T>, labels: &[Label], params: &SvmParams<T>) -> Result<LinearSvmModel<T>> {
    let y = check_training_input(&x, labels, params.c)?;
    let model = match params.solver {
        SvmSolver::Newton => train_newton(x, &y, params, None)?,
        SvmSolver::Dual => train_dual(x, &y, params)?,
        SvmSolver::Subgradient => train_subgradient(x, &y, params)?,
    };
    if !model.bias.is_finite() || model.w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            what: "svm training",
            iteration: params.max_epochs,
        });
    }
    Ok(model)
}

/// Like [`svm_train_with`], but the Newton solver starts from `start` (a solution for
/// nearby parameters on the same rows). Other solvers ignore it.
pub fn svm_train_warm<T: Scalar>(x: ArrayView2<'_, T>, labels: &[Label], params: &SvmParams<T>, start: &LinearSvmModel<T>) -> Result<LinearSvmModel<T>> {
    if params.solver != SvmSolver::Newton {
        return svm_train_with(x, labels, params);
    }
    let y = check_training_input(&x, labels, params.c)?;
    let model = train_newton(x, &y, params, Some(start))?;
    if !model.bias.is_finite() || model.w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            what: "svm training",
            iteration: params.max_epochs,
        });
    }
    Ok(model)
}

fn train_dual<T: Scalar>(x: ArrayView2<'_, T>, y: &[T], params: &SvmParams<T>) -> Result<LinearSvmModel<T>> {
    let n = x.nrows();
    let c = params.c;
    let tau = T::lit(1e-12);
    let kernel: Array2<T> = x.dot(&x.t());
    let diag: Vec<T> = (0..n).map(|i| kernel[[i, i]]).collect();
    let mut alpha = vec![T::zero(); n];
    let mut grad = vec![-T::one(); n];
    let max_iter = params.max_epochs.saturating_mul(n.max(1));

    let is_upper = |a: T| a >= c;
    let is_lower = |a: T| a <= T::zero();

    let mut iter = 0;
    loop {
        // working set: i maximizes −y_t G_t over I_up, j by second-order gain over I_low
        let mut gmax = T::neg_infinity();
        let mut i_sel = None;
        for t in 0..n {
            let v = -y[t] * grad[t];
            let in_up = if y[t] > T::zero() { !is_upper(alpha[t]) } else { !is_lower(alpha[t]) };
            if in_up && v >= gmax {
                gmax = v;
                i_sel = Some(t);
            }
        }
        let Some(i) = i_sel else { break };
        let mut gmax2 = T::neg_infinity();
        let mut j_sel = None;
        let mut best_gain = T::infinity();
        for t in 0..n {
            let in_low = if y[t] > T::zero() { !is_lower(alpha[t]) } else { !is_upper(alpha[t]) };
            if !in_low {
                continue;
            }
            let v = y[t] * grad[t];
            if v >= gmax2 {
                gmax2 = v;
            }
            let grad_diff = gmax + v;
            if grad_diff > T::zero() {
                let mut quad = diag[i] + diag[t] - T::lit(2.0) * kernel[[i, t]];
                if quad <= T::zero() {
                    quad = tau;
                }
                let gain = -(grad_diff * grad_diff) / quad;
                if gain <= best_gain {
                    best_gain = gain;
                    j_sel = Some(t);
                }
            }
        }
        if gmax + gmax2 < params.tol {
            break;
        }
        let Some(j) = j_sel else { break };
        if iter >= max_iter {
            break;
        }
        iter += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = y[i] * y[j] * kernel[[i, j]];
        if y[i] != y[j] {
            let mut quad = diag[i] + diag[j] + T::lit(2.0) * qij;
            if quad <= T::zero() {
                quad = tau;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > T::zero() {
                if alpha[j] < T::zero() {
                    alpha[j] = T::zero();
                    alpha[i] = diff;
                }
            } else if alpha[i] < T::zero() {
                alpha[i] = T::zero();
                alpha[j] = -diff;
            }
            if diff > T::zero() {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = diag[i] + diag[j] - T::lit(2.0) * qij;
            if quad <= T::zero() {
                quad = tau;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < T::zero() {
                alpha[j] = T::zero();
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < T::zero() {
                alpha[i] = T::zero();
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * kernel[[t, i]] * di + y[j] * kernel[[t, j]] * dj);
        }
    }

    // bias from free vectors, or the midpoint of the feasible interval
    let (mut ub, mut lb) = (T::infinity(), T::neg_infinity());
    let (mut sum_free, mut n_free) = (T::zero(), 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if is_upper(alpha[t]) {
            if y[t] < T::zero() {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if is_lower(alpha[t]) {
            if y[t] > T::zero() {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / T::count(n_free)
    } else {
        (ub + lb) / T::lit(2.0)
    };
    let coef = Array1::from_iter((0..n).map(|t| alpha[t] * y[t]));
    let w = x.t().dot(&coef);
    Ok(LinearSvmModel { w, bias: -rho, c })
}

/// Cholesky factorization of a symmetric positive definite matrix, then solves `m z = rhs`.
fn cholesky_solve<T: Scalar>(m: Array2<T>, rhs: &Array1<T>) -> Option<Array1<T>> {
    let n = m.nrows();
    let mut l: Vec<T> = m.into_iter().collect();
    for j in 0..n {
        let (done, rest) = l.split_at_mut(j * n);
        let row_j = &mut rest[..n];
        for i in 0..j {
            let row_i = &done[i * n..i * n + i];
            let dot: T = row_i.iter().zip(&row_j[..i]).map(|(&a, &b)| a * b).sum();
            row_j[i] = (row_j[i] - dot) / done[i * n + i];
        }
        let sq: T = row_j[..j].iter().map(|&v| v * v).sum();
        let diag = row_j[j] - sq;
        if !(diag > T::zero()) {
            return None;
        }
        row_j[j] = diag.sqrt();
    }
    let mut z = rhs.to_vec();
    for i in 0..n {
        let dot: T = l[i * n..i * n + i].iter().zip(&z[..i]).map(|(&a, &b)| a * b).sum();
        z[i] = (z[i] - dot) / l[i * n + i];
    }
    for i in (0..n).rev() {
        let zi = z[i] / l[i * n + i];
        z[i] = zi;
        for k in 0..i {
            let t = l[i * n + k] * zi;
            z[k] -= t;
        }
    }
    Some(Array1::from(z))
}

/// Slope of the smoothed hinge in `u = 1 − margin`: 0 below 0, `u/h` inside, 1 above `h`.
fn smooth_slope<T: Scalar>(u: T, h: T) -> T {
    (u / h).max(T::zero()).min(T::one())
}

/// Newton's method on the hinge smoothed quadratically over `0 < u < h`, shrinking `h`
/// as each smoothed problem is solved. Stops once the primal objective exceeds a
/// feasible dual value by at most `tol · max(1, P)`, which certifies the result. Only rows inside the smoothing band enter the Hessian, so each
/// step costs `O(n d + |band| d² + d³)`.
fn train_newton<T: Scalar>(x: ArrayView2<'_, T>, y: &[T], params: &SvmParams<T>, start: Option<&LinearSvmModel<T>>) -> Result<LinearSvmModel<T>> {
    let (n, d) = x.dim();
    let c = params.c;
    let yv = Array1::from(y.to_vec());
    let mut w = Array1::<T>::zeros(d);
    let mut b = T::zero();
    let mut h = T::one();
    let h_min = T::epsilon().sqrt() * T::lit(0.1);
    let flat = T::epsilon() * T::lit(1e4);
    let mut steps = 0usize;
    let budget = params.max_epochs.max(1);

    let margins_u = |w: &Array1<T>, b: T| -> Array1<T> { (x.dot(w) + b) * &yv * T::lit(-1.0) + T::one() };

    if let Some(m) = start.filter(|m| m.w.len() == d) {
        // the old support often stays optimal; otherwise resume with a narrow band
        w = m.w.clone();
        b = m.bias;
        let u = margins_u(&w, b);
        let free: Vec<usize> = (0..n).filter(|&i| u[i].abs() <= T::lit(1e-6)).collect();
        if let Some((pw, pb)) = try_polish(x, y, c, &u, &free, params.tol) {
            return Ok(LinearSvmModel { w: pw, bias: pb, c });
        }
        h = T::lit(0.1);
    }

    loop {
        // Newton iterations for the current smoothing width
        loop {
            let u = margins_u(&w, b);
            let s = u.mapv(|ui| smooth_slope(ui, h));
            let sy = &s * &yv;
            let g_w = &w - &(x.t().dot(&sy) * c);
            let g_b = -sy.sum() * c;
            let band: Vec<usize> = (0..n).filter(|&i| u[i] > T::zero() && u[i] < h).collect();
            let mut hess = Array2::<T>::zeros((d + 1, d + 1));
            if !band.is_empty() {
                let mut a = Array2::<T>::ones((band.len(), d + 1));
                for (r, &i) in band.iter().enumerate() {
                    a.slice_mut(ndarray::s![r, ..d]).assign(&x.row(i));
                }
                hess = a.t().dot(&a) * (c / h);
            }
            for j in 0..d {
                hess[[j, j]] += T::one();
            }
            if band.is_empty() {
                // objective is linear in b here; any positive scale works with the exact line search
                hess[[d, d]] = T::one();
            }
            let mut rhs = Array1::<T>::zeros(d + 1);
            rhs.slice_mut(ndarray::s![..d]).assign(&g_w);
            rhs[d] = g_b;
            let mut jitter = T::zero();
            let step = loop {
                let mut m = hess.clone();
                for j in 0..=d {
                    m[[j, j]] += jitter;
                }
                if let Some(z) = cholesky_solve(m, &rhs) {
                    break z;
                }
                jitter = if jitter == T::zero() { T::epsilon() * (T::one() + hess[[d, d]]) } else { jitter * T::lit(100.0) };
                if !jitter.is_finite() {
                    return Err(Error::Divergence {
                        what: "svm newton",
                        iteration: steps,
                    });
                }
            };
            let dir = step.mapv(|v| -v);
            let decrement = -rhs.dot(&dir);
            let f = w.dot(&w) / T::lit(2.0) + c * u.iter().map(|&ui| smoothed_hinge(ui, h)).sum::<T>();
            if !(decrement > flat * f.abs().max(T::one())) || steps >= budget {
                break;
            }
            steps += 1;
            let d_w = dir.slice(ndarray::s![..d]).to_owned();
            let d_b = dir[d];
            let delta = (x.dot(&d_w) + d_b) * &yv;
            let t = exact_line_search(&w, &d_w, &u, &delta, c, h, -decrement);
            w.scaled_add(t, &d_w);
            b += t * d_b;
            if !b.is_finite() || w.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    what: "svm newton",
                    iteration: steps,
                });
            }
        }
        let u = margins_u(&w, b);
        let primal = w.dot(&w) / T::lit(2.0) + c * u.iter().map(|&ui| ui.max(T::zero())).sum::<T>();
        let smoothed_alpha = u.mapv(|ui| c * smooth_slope(ui, h));
        let lower = dual_bound(x, &smoothed_alpha, y);
        if primal - lower <= params.tol * primal.max(T::one()) {
            break;
        }
        let band: Vec<usize> = (0..n).filter(|&i| u[i] > T::zero() && u[i] < h).collect();
        if let Some((pw, pb)) = try_polish(x, y, c, &u, &band, params.tol) {
            w = pw;
            b = pb;
            break;
        }
        if h <= h_min || steps >= budget {
            break;
        }
        h = (h * T::lit(0.1)).max(h_min);
    }
    Ok(LinearSvmModel { w, bias: b, c })
}

/// Dual objective `Σα − ½‖Σ αᵢyᵢxᵢ‖²` for `α` in `[0, C]`, after scaling the larger class
/// side down so that `Σ αᵢyᵢ = 0`. Any such α is feasible, so this bounds the optimum from below.
fn dual_bound<T: Scalar>(x: ArrayView2<'_, T>, alpha: &Array1<T>, y: &[T]) -> T {
    let (mut pos, mut neg) = (T::zero(), T::zero());
    for (&a, &yi) in alpha.iter().zip(y) {
        if yi > T::zero() {
            pos += a;
        } else {
            neg += a;
        }
    }
    let (scale_pos, scale_neg) = if pos > neg {
        (neg / pos, T::one())
    } else if neg > pos {
        (T::one(), pos / neg)
    } else {
        (T::one(), T::one())
    };
    let ay = Array1::from_iter(
        alpha
            .iter()
            .zip(y)
            .map(|(&a, &yi)| if yi > T::zero() { a * scale_pos } else { -a * scale_neg }),
    );
    let v = x.t().dot(&ay);
    ay.iter().map(|a| a.abs()).sum::<T>() - v.dot(&v) / T::lit(2.0)
}

/// Solves `m z = rhs` by Gaussian elimination with partial pivoting.
fn lu_solve<T: Scalar>(m: Array2<T>, rhs: Array1<T>) -> Option<Array1<T>> {
    let n = m.nrows();
    let scale = m.iter().fold(T::zero(), |a, &v| a.max(v.abs()));
    let mut a: Vec<T> = m.into_iter().collect();
    let mut b = rhs.to_vec();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i * n + col].abs().partial_cmp(&a[j * n + col].abs()).unwrap())?;
        if !(a[piv * n + col].abs() > T::epsilon() * scale * T::count(n)) {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            b.swap(piv, col);
        }
        let (upper, lower) = a.split_at_mut((col + 1) * n);
        let pivot_row = &upper[col * n..];
        for (r, row) in lower.chunks_exact_mut(n).enumerate() {
            let f = row[col] / pivot_row[col];
            if f != T::zero() {
                for (x, &p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                    *x -= f * p;
                }
                let t = f * b[col];
                b[col + 1 + r] -= t;
            }
        }
    }
    for r in (0..n).rev() {
        let dot: T = a[r * n + r + 1..(r + 1) * n].iter().zip(&b[r + 1..]).map(|(&x, &y)| x * y).sum();
        b[r] = (b[r] - dot) / a[r * n + r];
    }
    Some(Array1::from(b))
}

/// Exact solution for a guessed partition into free (`margin = 1`) and bounded
/// (`α = C` where `u > 0`, `α = 0` otherwise) rows: solves the KKT system in
/// `(α_free, b)`. Returns the primal point and the dual vector clipped to `[0, C]`.
fn polish<T: Scalar>(x: ArrayView2<'_, T>, y: &[T], c: T, u: &Array1<T>, free: &[usize]) -> Option<(Array1<T>, T, Array1<T>)> {
    let (n, d) = x.dim();
    if free.is_empty() || free.len() > d + 1 {
        return None;
    }
    let mut alpha = Array1::<T>::zeros(n);
    let mut is_free = vec![false; n];
    for &i in free {
        is_free[i] = true;
    }
    for i in 0..n {
        if !is_free[i] && u[i] > T::zero() {
            alpha[i] = c;
        }
    }
    let ay = &alpha * &Array1::from(y.to_vec());
    let w_bound = x.t().dot(&ay);
    let f = free.len();
    let mut z = Array2::<T>::zeros((f, d));
    for (r, &i) in free.iter().enumerate() {
        z.row_mut(r).assign(&(&x.row(i) * y[i]));
    }
    let mut m = Array2::<T>::zeros((f + 1, f + 1));
    m.slice_mut(ndarray::s![..f, ..f]).assign(&z.dot(&z.t()));
    let mut rhs = Array1::<T>::zeros(f + 1);
    let zw = z.dot(&w_bound);
    for (r, &i) in free.iter().enumerate() {
        m[[r, f]] = y[i];
        m[[f, r]] = y[i];
        rhs[r] = T::one() - zw[r];
    }
    rhs[f] = -ay.sum();
    let sol = lu_solve(m, rhs)?;
    let beta = sol.slice(ndarray::s![..f]).to_owned();
    let w = w_bound + z.t().dot(&beta);
    for (r, &i) in free.iter().enumerate() {
        alpha[i] = beta[r].max(T::zero()).min(c);
    }
    Some((w, sol[f], alpha))
}

/// [`polish`] accepted only when its duality gap is within `tol`.
fn try_polish<T: Scalar>(x: ArrayView2<'_, T>, y: &[T], c: T, u: &Array1<T>, free: &[usize], tol: T) -> Option<(Array1<T>, T)> {
    let (w, b, alpha) = polish(x, y, c, u, free)?;
    let yv = ArrayView1::from(y);
    let hinge: T = ((x.dot(&w) + b) * &yv).iter().map(|&m| (T::one() - m).max(T::zero())).sum();
    let primal = w.dot(&w) / T::lit(2.0) + c * hinge;
    (primal.is_finite() && primal - dual_bound(x, &alpha, y) <= tol * primal.max(T::one())).then_some((w, b))
}

fn smoothed_hinge<T: Scalar>(u: T, h: T) -> T {
    if u <= T::zero() {
        T::zero()
    } else if u < h {
        u * u / (T::lit(2.0) * h)
    } else {
        u - h / T::lit(2.0)
    }
}

/// Minimizes the smoothed objective along `(d_w, d_b)`. Its derivative in the step
/// length is piecewise linear and nondecreasing, so bracketing plus bisection on the
/// sign of the derivative finds the minimizer; a full step is taken when it is optimal.
fn exact_line_search<T: Scalar>(w: &Array1<T>, d_w: &Array1<T>, u: &Array1<T>, delta: &Array1<T>, c: T, h: T, slope0: T) -> T {
    let ww = w.dot(d_w);
    let dd = d_w.dot(d_w);
    let slope = |t: T| -> T {
        let loss: T = u
            .iter()
            .zip(delta)
            .map(|(&ui, &di)| smooth_slope(ui - t * di, h) * di)
            .sum();
        ww + t * dd - c * loss
    };
    let tiny = T::lit(1e-12) * slope0.abs();
    let s1 = slope(T::one());
    if s1.abs() <= tiny {
        return T::one();
    }
    let (mut lo, mut hi) = if s1 < T::zero() {
        let mut lo = T::one();
        let mut hi = T::lit(2.0);
        while slope(hi) < T::zero() && hi < T::lit(1e12) {
            lo = hi;
            hi = hi * T::lit(2.0);
        }
        (lo, hi)
    } else {
        (T::zero(), T::one())
    };
    let (mut s_lo, mut s_hi) = (slope(lo), slope(hi));
    for _ in 0..200 {
        // secant inside the bracket is exact once both ends share a linear piece
        let mut t = lo - s_lo * (hi - lo) / (s_hi - s_lo);
        if !(t > lo && t < hi) {
            t = (lo + hi) / T::lit(2.0);
        }
        let st = slope(t);
        if st.abs() <= tiny || hi - lo <= T::epsilon() * hi {
            return t;
        }
        if st < T::zero() {
            lo = t;
            s_lo = st;
        } else {
            hi = t;
            s_hi = st;
        }
        let mid = (lo + hi) / T::lit(2.0);
        let sm = slope(mid);
        if sm.abs() <= tiny {
            return mid;
        }
        if sm < T::zero() {
            lo = mid;
            s_lo = sm;
        } else {
            hi = mid;
            s_hi = sm;
        }
    }
    (lo + hi) / T::lit(2.0)
}

fn train_subgradient<T: Scalar>(x: ArrayView2<'_, T>, y: &[T], params: &SvmParams<T>) -> Result<LinearSvmModel<T>> {
    let (n, q) = x.dim();
    let nf = T::count(n);
    let lambda = T::one() / (params.c * nf);
    let yv = Array1::from(y.to_vec());
    let mut w = Array1::<T>::zeros(q);
    let mut b = T::zero();
    let mut w_avg = w.clone();
    let mut b_avg = b;
    let objective = |w: &Array1<T>, b: T| primal_objective(w, &(x.dot(w) + b), y, params.c);
    let mut best = (objective(&w, b), w.clone(), b);
    let mut last_obj = best.0;
    for t in 1..=params.max_epochs {
        let margins = (x.dot(&w) + b) * &yv;
        let active = Array1::from_iter(
            margins
                .iter()
                .zip(y)
                .map(|(&m, &yi)| if m < T::one() { yi } else { T::zero() }),
        );
        let grad_w = &w * lambda - x.t().dot(&active) / nf;
        let grad_b = -active.sum() / nf;
        let step = T::one() / (lambda * T::count(t));
        w = &w - &(grad_w * step);
        b -= grad_b * step;
        let k = T::count(t);
        w_avg = (&w_avg * (k - T::one()) + &w) / k;
        b_avg = (b_avg * (k - T::one()) + b) / k;
        let obj = objective(&w_avg, b_avg);
        if !obj.is_finite() {
            return Err(Error::Divergence {
                what: "svm subgradient",
                iteration: t,
            });
        }
        if obj < best.0 {
            best = (obj, w_avg.clone(), b_avg);
        }
        if t > 1 && (last_obj - obj).abs() < params.tol * obj.abs().max(T::one()) {
            break;
        }
        last_obj = obj;
    }
    Ok(LinearSvmModel {
        w: best.1,
        bias: best.2,
        c: params.c,
    })
}

/// `sign(wᵀx + b)`, with a zero decision value mapped to class 1.
pub fn svm_predict<T: Scalar>(model: &LinearSvmModel<T>, x: ArrayView2<'_, T>) -> Result<Vec<Label>> {
    Ok(model
        .decision_function(x)?
        .iter()
        .map(|&f| if f >= T::zero() { Label::Class1 } else { Label::Class0 })
        .collect())
}

/// Fraction of positions where `pred` equals `truth`.
pub fn accuracy(pred: &[Label], truth: &[Label]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::dim(format!(
            "accuracy needs equal non-empty lengths, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Per-C mean validation accuracy over `folds`, in the order of `c_grid`.
pub fn svm_cv_scores<T: Scalar>(x: ArrayView2<'_, T>, labels: &[Label], folds: &[Vec<usize>], c_grid: &[T], base: &SvmParams<T>) -> Result<Vec<f64>> {
    let mut scores = vec![0.0; c_grid.len()];
    for (f, val_rows) in folds.iter().enumerate() {
        let train_rows = train_rows_excluding(folds, f);
        let xt = x.select(Axis(0), &train_rows);
        let yt: Vec<Label> = train_rows.iter().map(|&i| labels[i]).collect();
        let xv = x.select(Axis(0), val_rows);
        let yv: Vec<Label> = val_rows.iter().map(|&i| labels[i]).collect();
        // increasing C, each fit starting from the previous solution
        let mut order: Vec<usize> = (0..c_grid.len()).collect();
        order.sort_by(|&a, &b| c_grid[a].partial_cmp(&c_grid[b]).unwrap_or(std::cmp::Ordering::Equal));
        let mut prev: Option<LinearSvmModel<T>> = None;
        for k in order {
            let params = SvmParams { c: c_grid[k], ..*base };
            let model = match &prev {
                Some(m) => svm_train_warm(xt.view(), &yt, &params, m)?,
                None => svm_train_with(xt.view(), &yt, &params)?,
            };
            scores[k] += accuracy(&svm_predict(&model, xv.view())?, &yv)? / folds.len() as f64;
            prev = Some(model);
        }
    }
    Ok(scores)
}

/// C with the best mean validation accuracy; ties go to the smaller C.
pub fn svm_cv<T: Scalar>(x: ArrayView2<'_, T>, labels: &[Label], folds: &[Vec<usize>], c_grid: &[T]) -> Result<T> {
    svm_cv_with(x, labels, folds, c_grid, &SvmParams::new(T::one()))
}

pub fn svm_cv_with<T: Scalar>(x: ArrayView2<'_, T>, labels: &[Label], folds: &[Vec<usize>], c_grid: &[T], base: &SvmParams<T>) -> Result<T> {
    if c_grid.is_empty() {
        return Err(Error::invalid("svm_cv needs a non-empty C grid"));
    }
    if c_grid.len() == 1 {
        return Ok(c_grid[0]);
    }
    let scores = svm_cv_scores(x, labels, folds, c_grid, base)?;
    let mut best = 0;
    for k in 1..c_grid.len() {
        if scores[k] > scores[best] || (scores[k] == scores[best] && c_grid[k] < c_grid[best]) {
            best = k;
        }
    }
    Ok(c_grid[best])
}

/// A fixed-parameter SVM usable as the inner classifier of other cross-validations.
#[derive(Clone, Copy, Debug)]
pub struct SvmClassifier<T> {
    pub params: SvmParams<T>,
}

impl<T: Scalar> FoldClassifier<T> for SvmClassifier<T> {
    fn fit_predict(&self, x_train: ArrayView2<'_, T>, y_train: &[Label], x_eval: ArrayView2<'_, T>) -> Result<Vec<Label>> {
        let model = svm_train_with(x_train, y_train, &self.params)?;
        svm_predict(&model, x_eval)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use Label::{Class0 as A, Class1 as B};

    #[test]
    fn separable_pair() {
        let x = array![[-1.0f64], [1.0]];
        let m = svm_train(x.view(), &[A, B], 100.0, 1e-8, 1000).unwrap();
        assert!(m.w[0] > 0.0);
        assert_eq!(svm_predict(&m, x.view()).unwrap(), vec![A, B]);
        assert!((m.w[0] - 1.0).abs() < 1e-8 && m.bias.abs() < 1e-8);
    }

    #[test]
    fn label_flip_negates() {
        let x = array![[-2.0f64, 0.5], [-1.0, 1.0], [0.5, -0.2], [1.0, 0.3], [2.0, -1.0], [0.1, 0.1]];
        let y = [A, A, B, B, B, A];
        let flipped: Vec<Label> = y.iter().map(|l| l.flipped()).collect();
        let a = svm_train(x.view(), &y, 1.0, 1e-10, 1000).unwrap();
        let b = svm_train(x.view(), &flipped, 1.0, 1e-10, 1000).unwrap();
        assert!((&a.w + &b.w).iter().all(|d| d.abs() < 1e-6));
        assert!((a.bias + b.bias).abs() < 1e-6);
    }

    #[test]
    fn single_class_rejected() {
        let x = array![[1.0], [2.0]];
        assert!(svm_train(x.view(), &[A, A], 1.0, 1e-5, 10).is_err());
        assert!(svm_train(x.view(), &[A, B], 0.0, 1e-5, 10).is_err());
    }

    #[test]
    fn prediction_rules() {
        let m = LinearSvmModel {
            w: array![0.0, 0.0],
            bias: 1.0,
            c: 1.0,
        };
        let x = array![[1.0, -4.0], [-3.0, 2.0]];
        assert_eq!(svm_predict(&m, x.view()).unwrap(), vec![B, B]);
        let zero = LinearSvmModel { bias: 0.0, ..m.clone() };
        assert_eq!(svm_predict(&zero, x.view()).unwrap(), vec![B, B]);
        let tilted = LinearSvmModel {
            w: array![1.0, 0.5],
            bias: -0.2,
            c: 1.0,
        };
        let scaled = LinearSvmModel {
            w: &tilted.w * 7.0,
            bias: tilted.bias * 7.0,
            c: 1.0,
        };
        assert_eq!(svm_predict(&tilted, x.view()).unwrap(), svm_predict(&scaled, x.view()).unwrap());
        assert!(svm_predict(&m, array![[1.0]].view()).is_err());
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[A, B], &[A, B]).unwrap(), 1.0);
        assert_eq!(accuracy(&[A, B], &[B, A]).unwrap(), 0.0);
        assert_eq!(accuracy(&[B, B, A, A], &[B, A, A, B]).unwrap(), 0.5);
        assert!(accuracy(&[A], &[A, B]).is_err());
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn objective_not_worse_than_zero_model() {
        let x = array![[0.3, 1.0], [1.7, -2.0], [2.2, 0.5], [-4.1, 3.0], [0.9, 2.5], [-0.4, -0.4]];
        let y = [A, B, A, B, A, B];
        for solver in [SvmSolver::Newton, SvmSolver::Dual, SvmSolver::Subgradient] {
            let params = SvmParams {
                c: 2.0,
                tol: 1e-9,
                max_epochs: 2000,
                solver,
            };
            let m = svm_train_with(x.view(), &y, &params).unwrap();
            assert!(m.objective(x.view(), &y).unwrap() <= 2.0 * 6.0 + 1e-12);
        }
    }

    #[test]
    fn subgradient_separates_pair() {
        let x = array![[-1.0], [1.0]];
        let params = SvmParams {
            c: 100.0,
            tol: 1e-10,
            max_epochs: 5000,
            solver: SvmSolver::Subgradient,
        };
        let m = svm_train_with(x.view(), &[A, B], &params).unwrap();
        assert_eq!(svm_predict(&m, x.view()).unwrap(), vec![A, B]);
    }

    fn random_problem(seed: u64, n: usize, d: usize) -> (Array2<f64>, Vec<Label>) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<Label> = (0..n).map(|i| if i % 2 == 0 { A } else { B }).collect();
        let x = Array2::from_shape_fn((n, d), |(i, j)| {
            let shift = if y[i] == B && j == 0 { 0.8 } else { 0.0 };
            rng.random_range(-1.0..1.0) + shift
        });
        (x, y)
    }

    #[test]
    fn newton_agrees_with_smo() {
        for seed in 0..8 {
            let (x, y) = random_problem(seed, 40, 3);
            for &c in &[0.05, 1.0, 20.0] {
                let run = |solver| {
                    let p = SvmParams {
                        c,
                        tol: 1e-9,
                        max_epochs: 200_000,
                        solver,
                    };
                    svm_train_with(x.view(), &y, &p).unwrap().objective(x.view(), &y).unwrap()
                };
                let (newton, dual) = (run(SvmSolver::Newton), run(SvmSolver::Dual));
                assert!((newton - dual).abs() <= 1e-6 * dual.max(1.0), "seed {seed} C {c}: {newton} vs {dual}");
            }
        }
    }

    #[test]
    fn warm_start_matches_cold() {
        let (x, y) = random_problem(11, 60, 4);
        let mut prev = svm_train(x.view(), &y, 0.01, 1e-9, 1000).unwrap();
        for &c in &[0.1, 1.0, 10.0, 100.0] {
            let params = SvmParams {
                c,
                tol: 1e-9,
                max_epochs: 1000,
                solver: SvmSolver::Newton,
            };
            let warm = svm_train_warm(x.view(), &y, &params, &prev).unwrap();
            let cold = svm_train_with(x.view(), &y, &params).unwrap();
            let (ow, oc) = (warm.objective(x.view(), &y).unwrap(), cold.objective(x.view(), &y).unwrap());
            assert!((ow - oc).abs() <= 1e-7 * oc.max(1.0));
            prev = warm;
        }
    }

    #[test]
    fn dense_solvers() {
        let m = array![[4.0f64, 2.0, 0.4], [2.0, 5.0, 1.0], [0.4, 1.0, 3.0]];
        let z = array![1.0, -2.0, 0.5];
        let rhs = m.dot(&z);
        let chol = cholesky_solve(m.clone(), &rhs).unwrap();
        let lu = lu_solve(array![[0.0f64, 1.0, 2.0], [3.0, 1.0, 0.0], [1.0, 0.0, 1.0]], array![2.0, 1.0, 1.5]).unwrap();
        assert!((&chol - &z).iter().all(|e| e.abs() < 1e-12));
        assert!((&lu - &array![0.4, -0.2, 1.1]).iter().all(|e| e.abs() < 1e-12));
        assert!(cholesky_solve(array![[1.0f64, 2.0], [2.0, 1.0]], &array![1.0, 1.0]).is_none());
        assert!(lu_solve(array![[1.0f64, 2.0], [2.0, 4.0]], array![1.0, 1.0]).is_none());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]
        #[test]
        fn permutation_invariant_and_bounded(seed in 0u64..1000, c in 0.01f64..100.0, rot in 1usize..29) {
            let (x, y) = random_problem(seed, 30, 3);
            let m = svm_train(x.view(), &y, c, 1e-9, 1000).unwrap();
            let obj = m.objective(x.view(), &y).unwrap();
            proptest::prop_assert!(obj <= c * 30.0 + 1e-9);
            let perm: Vec<usize> = (0..30).map(|i| (i + rot) % 30).collect();
            let xp = x.select(Axis(0), &perm);
            let yp: Vec<Label> = perm.iter().map(|&i| y[i]).collect();
            let mp = svm_train(xp.view(), &yp, c, 1e-9, 1000).unwrap();
            let objp = mp.objective(x.view(), &y).unwrap();
            proptest::prop_assert!((obj - objp).abs() < 1e-6 * obj.max(1.0), "{} vs {}", obj, objp);
        }
    }

    #[test]
    fn cv_single_and_empty() {
        let x = array![[-1.0], [1.0], [-2.0], [2.0]];
        let folds = vec![vec![0, 1], vec![2, 3]];
        assert_eq!(svm_cv(x.view(), &[A, B, A, B], &folds, &[3.0]).unwrap(), 3.0);
        assert!(svm_cv::<f64>(x.view(), &[A, B, A, B], &folds, &[]).is_err());
    }
}
