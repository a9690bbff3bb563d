//! Self-checks against independent oracles, run by `featlearn verify`.
//!
//! Each check reports the largest error it saw next to the threshold it must stay
//! under. Instances are drawn from a seeded generator, so a report is reproducible.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::Label;
use crate::error::{Error, Result};
use crate::lasso::{kkt_violation, lambda_max, lasso_fit};
use crate::linalg::{sample_correlation, sym_eigen};
use crate::pca::{pca_fit, reconstruction_error};
use crate::sae::{fine_tune_gradient, fine_tune_loss, reconstruction_gradient, reconstruction_loss, Activation, AeLayer, SaeModel};
use crate::svm::{accuracy, svm_predict, svm_train};
use crate::ttest::{optimal_m, two_sample_t_matrix};

/// Finite-difference step of the gradient suite.
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Gradients,
    Oracles,
    All,
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradients" => Ok(Suite::Gradients),
            "oracles" => Ok(Suite::Oracles),
            "all" => Ok(Suite::All),
            other => Err(Error::invalid(format!("unknown suite {other:?} (expected gradients, oracles or all)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub instances: usize,
    pub max_error: f64,
    /// Passing means `max_error <= threshold` (or `<` when `strict`).
    pub threshold: f64,
    pub strict: bool,
}

impl Check {
    pub fn passed(&self) -> bool {
        if self.strict {
            self.max_error < self.threshold
        } else {
            self.max_error <= self.threshold
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<28} max error {:.3e} ({} {:.0e}) over {} instances",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.max_error,
            if self.strict { "<" } else { "<=" },
            self.threshold,
            self.instances
        )
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    if matches!(suite, Suite::Gradients | Suite::All) {
        out.push(reconstruction_gradient_check(seed, 24)?);
        out.push(fine_tune_gradient_check(seed, 24)?);
    }
    if matches!(suite, Suite::Oracles | Suite::All) {
        out.push(lasso_zero_check(seed, 100)?);
        out.push(lasso_orthogonal_check(seed, 50)?);
        out.push(lasso_kkt_check(seed, 50)?);
        out.push(optimal_m_check(seed, 50)?);
        out.extend(pca_checks(seed, 50)?);
        out.push(svm_grid_check()?);
        out.push(svm_separable_check(seed, 20)?);
    }
    Ok(out)
}

fn rng_for(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Both classes present, roughly balanced.
fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<Label> {
    let mut y: Vec<Label> = (0..n).map(|i| if i % 2 == 0 { Label::Class0 } else { Label::Class1 }).collect();
    for i in (1..n).rev() {
        y.swap(i, rng.random_range(0..=i));
    }
    y
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Largest relative error between `analytic` and central differences of `loss` at `theta`.
fn fd_compare(theta: &[f64], analytic: &[f64], mut loss: impl FnMut(&[f64]) -> Result<f64>) -> Result<f64> {
    let mut worst = 0.0f64;
    let mut probe = theta.to_vec();
    for k in 0..theta.len() {
        probe[k] = theta[k] + FD_STEP;
        let up = loss(&probe)?;
        probe[k] = theta[k] - FD_STEP;
        let down = loss(&probe)?;
        probe[k] = theta[k];
        worst = worst.max(relative_error(analytic[k], (up - down) / (2.0 * FD_STEP)));
    }
    Ok(worst)
}

fn reconstruction_gradient_check(seed: u64, instances: usize) -> Result<Check> {
    let mut rng = rng_for(seed, 1);
    let mut worst = 0.0f64;
    for k in 0..instances {
        let d = rng.random_range(2..7);
        let h = rng.random_range(1..d);
        let n = rng.random_range(3..9);
        let act = if k % 4 == 3 { Activation::Identity } else { Activation::Sigmoid };
        let layer = AeLayer::<f64>::init(d, h, act, rng.random())?;
        let x = gaussian(&mut rng, n, d);
        let (_, grad) = reconstruction_gradient(&layer, x.view())?;
        let mut probe = layer.clone();
        worst = worst.max(fd_compare(&layer.parameters(), &grad.flatten(), |p| {
            probe.set_parameters(p)?;
            reconstruction_loss(&probe, x.view())
        })?);
    }
    Ok(Check {
        name: "reconstruction gradient",
        instances,
        max_error: worst,
        threshold: 1e-4,
        strict: true,
    })
}

fn fine_tune_gradient_check(seed: u64, instances: usize) -> Result<Check> {
    let mut rng = rng_for(seed, 2);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let d = rng.random_range(3..7);
        let n = rng.random_range(4..10);
        let mut dims = vec![rng.random_range(2..d)];
        if dims[0] > 2 && rng.random_bool(0.5) {
            dims.push(rng.random_range(1..dims[0]));
        }
        let mut layers = Vec::new();
        let mut input = d;
        for &h in &dims {
            layers.push(AeLayer::<f64>::init(input, h, Activation::Sigmoid, rng.random())?);
            input = h;
        }
        let head_w = gaussian(&mut rng, 2, input) * 0.5;
        let head_b = Array1::from_iter((0..2).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.1));
        let model = SaeModel::from_parts(layers, head_w, head_b)?;
        let x = gaussian(&mut rng, n, d);
        let y = random_labels(&mut rng, n);
        let l2 = [0.0, 1e-3, 0.1][rng.random_range(0..3)];
        let (_, grad) = fine_tune_gradient(&model, x.view(), &y, l2)?;
        let mut probe = model.clone();
        worst = worst.max(fd_compare(&model.trainable_parameters(), &grad.flatten(), |p| {
            probe.set_trainable_parameters(p)?;
            fine_tune_loss(&probe, x.view(), &y, l2)
        })?);
    }
    Ok(Check {
        name: "fine-tuning gradient",
        instances,
        max_error: worst,
        threshold: 1e-4,
        strict: true,
    })
}

fn lasso_zero_check(seed: u64, instances: usize) -> Result<Check> {
    let mut rng = rng_for(seed, 3);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let n = rng.random_range(5..30);
        let p = rng.random_range(1..12);
        let x = gaussian(&mut rng, n, p);
        let y = Array1::from_iter((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let lam = lambda_max(x.view(), y.view()) * (1.0 + rng.random_range(0.0..2.0));
        let fit = lasso_fit(x.view(), y.view(), lam, 1e-10, 1000)?;
        worst = worst.max(fit.beta.iter().fold(0.0f64, |m, b| m.max(b.abs())));
    }
    Ok(Check {
        name: "lasso zero above lambda_max",
        instances,
        max_error: worst,
        threshold: 0.0,
        strict: false,
    })
}

/// Orthonormal columns by modified Gram-Schmidt, scaled so that `XᵀX = n·I`.
fn orthogonal_design(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
    let mut q = gaussian(rng, n, p);
    for j in 0..p {
        for k in 0..j {
            let proj = q.column(j).dot(&q.column(k));
            let qk = q.column(k).to_owned();
            q.column_mut(j).scaled_add(-proj, &qk);
        }
        let norm = q.column(j).dot(&q.column(j)).sqrt();
        q.column_mut(j).mapv_inplace(|v| v / norm);
    }
    q * (n as f64).sqrt()
}

fn lasso_orthogonal_check(seed: u64, instances: usize) -> Result<Check> {
    let mut rng = rng_for(seed, 4);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let n = rng.random_range(10..40);
        let p = rng.random_range(1..8.min(n));
        let x = orthogonal_design(&mut rng, n, p);
        let y = Array1::from_iter((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let lam = rng.random_range(0.0..1.0) * lambda_max(x.view(), y.view());
        let fit = lasso_fit(x.view(), y.view(), lam, 1e-13, 10_000)?;
        // (1/n)‖y − Xβ‖² + λ‖β‖₁ separates into β² − 2zβ + λ|β| with z = Xⱼᵀy / n
        for j in 0..p {
            let z = x.column(j).dot(&y) / n as f64;
            let closed = z.signum() * (z.abs() - lam / 2.0).max(0.0);
            worst = worst.max((fit.beta[j] - closed).abs());
        }
    }
    Ok(Check {
        name: "lasso orthogonal design",
        instances,
        max_error: worst,
        threshold: 1e-8,
        strict: false,
    })
}

fn lasso_kkt_check(seed: u64, instances: usize) -> Result<Check> {
    let mut rng = rng_for(seed, 5);
    let mut worst = 0.0f64;
    let mut used = 0;
    for _ in 0..instances {
        let n = rng.random_range(8..40);
        let p = rng.random_range(2..15);
        let x = gaussian(&mut rng, n, p);
        let y = Array1::from_iter((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let lam = rng.random_range(0.01..1.0) * lambda_max(x.view(), y.view());
        let fit = lasso_fit(x.view(), y.view(), lam, 1e-10, 10_000)?;
        if fit.converged {
            used += 1;
            worst = worst.max(kkt_violation(x.view(), y.view(), fit.beta.view(), lam));
        }
    }
    Ok(Check {
        name: "lasso KKT certificate",
        instances: used,
        max_error: worst,
        threshold: 1e-6,
        strict: false,
    })
}

/// The m̂ criterion evaluated from scratch: Welch statistics, ranking by T² with ties to
/// the lower index, correlation of the top-m columns and its largest eigenvalue.
fn optimal_m_literal(x: ArrayView2<'_, f64>, y: &[Label]) -> Result<usize> {
    let p = x.ncols();
    let rows0: Vec<usize> = (0..y.len()).filter(|&i| y[i] == Label::Class0).collect();
    let rows1: Vec<usize> = (0..y.len()).filter(|&i| y[i] == Label::Class1).collect();
    let (n0, n1) = (rows0.len() as f64, rows1.len() as f64);
    let n = n0 + n1;
    let moments = |rows: &[usize], j: usize| {
        let m = rows.iter().map(|&i| x[[i, j]]).sum::<f64>() / rows.len() as f64;
        let v = rows.iter().map(|&i| (x[[i, j]] - m).powi(2)).sum::<f64>() / (rows.len() as f64 - 1.0);
        (m, v)
    };
    let t2: Vec<f64> = (0..p)
        .map(|j| {
            let (m0, v0) = moments(&rows0, j);
            let (m1, v1) = moments(&rows1, j);
            (m0 - m1).powi(2) / (v0 / n0 + v1 / n1)
        })
        .collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| t2[b].partial_cmp(&t2[a]).unwrap().then(a.cmp(&b)));
    let mut best = (f64::NEG_INFINITY, 0);
    let mut sum = 0.0;
    for m in 1..=p {
        sum += t2[order[m - 1]];
        let lam = if m == 1 {
            1.0
        } else {
            let corr = sample_correlation(x.select(Axis(1), &order[..m]).view())?;
            sym_eigen(corr.view(), 1e-14)?.eigenvalues[0]
        };
        let mf = m as f64;
        let value = n * (sum + mf * (n0 - n1) / n).powi(2) / (mf * n0 * n1 + n0 * n1 * sum) / lam;
        if value > best.0 {
            best = (value, m);
        }
    }
    Ok(best.1)
}

fn optimal_m_check(seed: u64, instances: usize) -> Result<Check> {
    let mut rng = rng_for(seed, 6);
    let mut mismatches = 0usize;
    for _ in 0..instances {
        let y = random_labels(&mut rng, 30);
        let mut x = gaussian(&mut rng, 30, 8);
        for (i, &label) in y.iter().enumerate() {
            if label == Label::Class1 {
                for j in 0..3 {
                    x[[i, j]] += rng.random_range(0.0..1.5);
                }
            }
        }
        let stats = two_sample_t_matrix(x.view(), &y, None)?;
        let n0 = y.iter().filter(|&&l| l == Label::Class0).count();
        let got = optimal_m(&stats, x.view(), n0, 30 - n0)?;
        if got != optimal_m_literal(x.view(), &y)? {
            mismatches += 1;
        }
    }
    Ok(Check {
        name: "m_opt literal re-evaluation",
        instances,
        max_error: mismatches as f64,
        threshold: 0.0,
        strict: false,
    })
}

fn pca_checks(seed: u64, instances: usize) -> Result<Vec<Check>> {
    let mut rng = rng_for(seed, 7);
    let (mut identity, mut ortho, mut monotone) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..instances {
        let p = rng.random_range(2..=20);
        let n = rng.random_range(p + 2..p + 40);
        let mix = gaussian(&mut rng, p, p);
        let x = gaussian(&mut rng, n, p).dot(&mix);
        let full = pca_fit(x.view(), p)?;
        let centered = &x - &x.mean_axis(Axis(0)).expect("rows present");
        let trace = centered.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let mut prev = f64::INFINITY;
        for r in 1..=p {
            let model = pca_fit(x.view(), r)?;
            let err = reconstruction_error(&model, x.view())?;
            let closed = trace - full.variances.iter().take(r).sum::<f64>();
            identity = identity.max((err - closed).abs());
            monotone = monotone.max(err - prev);
            prev = err;
            let gram = model.components.t().dot(&model.components);
            let dev = (&gram - &Array2::<f64>::eye(r)).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            ortho = ortho.max(dev);
        }
    }
    let check = |name, max_error| Check {
        name,
        instances,
        max_error,
        threshold: 1e-8,
        strict: false,
    };
    Ok(vec![
        check("PCA error = trace - top eigs", identity),
        check("PCA orthonormal components", ortho),
        Check {
            threshold: 0.0,
            ..check("PCA error nonincreasing in r", monotone.max(0.0))
        },
    ])
}

/// The 1-D four-point problem and its objective at `(w, b)`.
fn toy_objective(w: f64, b: f64, c: f64) -> f64 {
    const X: [f64; 4] = [-1.0, 0.5, -0.2, 2.0];
    const Y: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];
    let hinge: f64 = X.iter().zip(Y).map(|(&x, y)| (1.0 - y * (w * x + b)).max(0.0)).sum();
    0.5 * w * w + c * hinge
}

/// Smallest objective on a coarse grid, then on finer grids around the incumbent.
pub fn toy_grid_minimum(c: f64) -> (f64, f64, f64) {
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let (mut cw, mut cb, mut half, mut step) = (0.0, 0.0, 8.0, 0.01);
    for _ in 0..4 {
        let k = (half / step) as i64;
        for i in -k..=k {
            let w = cw + i as f64 * step;
            for j in -k..=k {
                let b = cb + j as f64 * step;
                let v = toy_objective(w, b, c);
                if v < best.0 {
                    best = (v, w, b);
                }
            }
        }
        cw = best.1;
        cb = best.2;
        half = 5.0 * step;
        step /= 10.0;
    }
    best
}

fn svm_grid_check() -> Result<Check> {
    let x = Array2::from_shape_vec((4, 1), vec![-1.0, 0.5, -0.2, 2.0]).map_err(|e| Error::dim(e.to_string()))?;
    let y = [Label::Class0, Label::Class0, Label::Class1, Label::Class1];
    let mut worst = 0.0f64;
    for c in [0.1, 1.0, 10.0] {
        let model = svm_train(x.view(), &y, c, 1e-10, 1000)?;
        let grid = toy_grid_minimum(c).0;
        worst = worst.max((model.objective(x.view(), &y)? - grid).abs());
    }
    Ok(Check {
        name: "SVM objective vs grid search",
        instances: 3,
        max_error: worst,
        threshold: 1e-3,
        strict: false,
    })
}

fn svm_separable_check(seed: u64, instances: usize) -> Result<Check> {
    let mut rng = rng_for(seed, 8);
    let mut worst = 0.0f64;
    for k in 0..instances {
        let n = rng.random_range(6..40);
        let d = rng.random_range(1..6);
        let normal = gaussian(&mut rng, 1, d).row(0).to_owned();
        let norm = normal.dot(&normal).sqrt();
        let mut x = gaussian(&mut rng, n, d);
        let y = random_labels(&mut rng, n);
        for (i, &label) in y.iter().enumerate() {
            // push every point at least 0.5 away from the hyperplane on its own side
            let side = if label == Label::Class1 { 1.0 } else { -1.0 };
            let dist = x.row(i).dot(&normal) / norm;
            let shift = (0.5 - side * dist).max(0.0) * side / norm;
            x.row_mut(i).scaled_add(shift, &normal);
        }
        let c = if k % 2 == 0 { 100.0 } else { 1000.0 };
        let model = svm_train(x.view(), &y, c, 1e-8, 1000)?;
        worst = worst.max(1.0 - accuracy(&svm_predict(&model, x.view())?, &y)?);
    }
    Ok(Check {
        name: "SVM separable, C >= 100",
        instances,
        max_error: worst,
        threshold: 0.0,
        strict: false,
    })
}
