use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Activation, TrainConfig};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One tied-weight auto-encoder: encoder `act(b + W x)`, decoder `d + Wᵀ h`.
#[derive(Clone, Debug, PartialEq)]
pub struct AeLayer<T> {
    /// h×d
    pub w: Array2<T>,
    /// Encoder bias, length h.
    pub b: Array1<T>,
    /// Decoder bias, length d.
    pub d_bias: Array1<T>,
    pub activation: Activation,
}

/// Gradient of the summed reconstruction loss with respect to each parameter block.
#[derive(Clone, Debug, PartialEq)]
pub struct AeGrad<T> {
    pub w: Array2<T>,
    pub b: Array1<T>,
    pub d_bias: Array1<T>,
}

impl<T: Scalar> AeGrad<T> {
    /// Same ordering as [`AeLayer::parameters`].
    pub fn flatten(&self) -> Vec<T> {
        self.w.iter().chain(self.b.iter()).chain(self.d_bias.iter()).copied().collect()
    }
}

pub(crate) fn uniform_matrix<T: Scalar>(rows: usize, cols: usize, seed: u64) -> Array2<T> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((rows, cols), || T::lit(rng.random_range(-bound..bound)))
}

pub(crate) fn all_finite<'a, T: Scalar>(mut it: impl Iterator<Item = &'a T>) -> bool {
    it.all(|v| v.is_finite())
}

impl<T: Scalar> AeLayer<T> {
    /// Weights uniform in `±√(6/(d+h))`, biases zero.
    pub fn init(input_dim: usize, hidden: usize, activation: Activation, seed: u64) -> Result<Self> {
        if hidden == 0 || hidden >= input_dim {
            return Err(Error::invalid(format!(
                "hidden size {hidden} must lie in 1..{input_dim} (undercomplete)"
            )));
        }
        Ok(AeLayer {
            w: uniform_matrix(hidden, input_dim, seed),
            b: Array1::zeros(hidden),
            d_bias: Array1::zeros(input_dim),
            activation,
        })
    }

    /// Builds a layer from explicit parameters, checking shapes and finiteness.
    pub fn from_parts(w: Array2<T>, b: Array1<T>, d_bias: Array1<T>, activation: Activation) -> Result<Self> {
        let (h, d) = w.dim();
        if b.len() != h || d_bias.len() != d {
            return Err(Error::dim(format!(
                "W is {h}×{d} but biases have lengths {} and {}",
                b.len(),
                d_bias.len()
            )));
        }
        if h == 0 || h >= d {
            return Err(Error::invalid(format!("layer {h}×{d} is not undercomplete")));
        }
        if !all_finite(w.iter().chain(b.iter()).chain(d_bias.iter())) {
            return Err(Error::invalid("layer parameters must be finite"));
        }
        Ok(AeLayer { w, b, d_bias, activation })
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn n_parameters(&self) -> usize {
        self.w.len() + self.b.len() + self.d_bias.len()
    }

    /// `W` row-major, then `b`, then `d_bias`.
    pub fn parameters(&self) -> Vec<T> {
        self.w.iter().chain(self.b.iter()).chain(self.d_bias.iter()).copied().collect()
    }

    pub fn set_parameters(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.n_parameters() {
            return Err(Error::dim(format!(
                "{} values for {} parameters",
                values.len(),
                self.n_parameters()
            )));
        }
        let mut it = values.iter().copied();
        for v in self.w.iter_mut().chain(self.b.iter_mut()).chain(self.d_bias.iter_mut()) {
            *v = it.next().unwrap_or_else(T::zero);
        }
        Ok(())
    }

    pub(crate) fn check_input(&self, x: &ArrayView2<'_, T>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::dim(format!(
                "layer expects {} inputs, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        Ok(())
    }

    pub(crate) fn forward(&self, x: ArrayView2<'_, T>) -> Array2<T> {
        let act = self.activation;
        let mut z = x.dot(&self.w.t());
        z += &self.b;
        z.mapv_inplace(|v| act.apply(v));
        z
    }
}

/// Hidden representation, one row per input row.
pub fn ae_encode<T: Scalar>(layer: &AeLayer<T>, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
    layer.check_input(&x)?;
    Ok(layer.forward(x))
}

/// `d + Wᵀ h` for each row.
pub fn ae_reconstruct<T: Scalar>(layer: &AeLayer<T>, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
    let h = ae_encode(layer, x)?;
    Ok(h.dot(&layer.w) + &layer.d_bias)
}

/// `Σᵢ ‖xᵢ − x̂ᵢ‖²`
pub fn reconstruction_loss<T: Scalar>(layer: &AeLayer<T>, x: ArrayView2<'_, T>) -> Result<T> {
    let r = ae_reconstruct(layer, x)? - &x;
    Ok(r.iter().map(|&v| v * v).sum())
}

/// Summed reconstruction loss and its gradient. The weight gradient adds the decoder
/// term `hᵀ·2r` and the encoder term `δᵀ·x`.
pub fn reconstruction_gradient<T: Scalar>(layer: &AeLayer<T>, x: ArrayView2<'_, T>) -> Result<(T, AeGrad<T>)> {
    layer.check_input(&x)?;
    let two = T::lit(2.0);
    let h = layer.forward(x);
    let mut r = h.dot(&layer.w) + &layer.d_bias;
    r -= &x;
    let loss = r.iter().map(|&v| v * v).sum();
    r.mapv_inplace(|v| v * two);
    let act = layer.activation;
    let mut delta = r.dot(&layer.w.t());
    delta.zip_mut_with(&h, |g, &a| *g *= act.derivative_from_output(a));
    let mut gw = h.t().dot(&r);
    gw += &delta.t().dot(&x);
    Ok((
        loss,
        AeGrad {
            w: gw,
            b: delta.sum_axis(Axis(0)),
            d_bias: r.sum_axis(Axis(0)),
        },
    ))
}

/// Runs `cfg.iterations` gradient steps from `layer`. Returns the trained layer and the
/// summed loss before each step plus the final loss (`iterations + 1` entries).
pub fn ae_fit<T: Scalar>(mut layer: AeLayer<T>, x: ArrayView2<'_, T>, cfg: &TrainConfig<T>) -> Result<(AeLayer<T>, Vec<T>)> {
    cfg.validate()?;
    layer.check_input(&x)?;
    if x.nrows() == 0 {
        return Err(Error::invalid("auto-encoder training needs at least one row"));
    }
    let step = cfg.learning_rate / T::count(x.nrows());
    let mut losses = Vec::with_capacity(cfg.iterations + 1);
    for it in 0..cfg.iterations {
        let (loss, g) = reconstruction_gradient(&layer, x)?;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                what: "auto-encoder training",
                iteration: it,
            });
        }
        losses.push(loss);
        layer.w.scaled_add(-step, &g.w);
        layer.b.scaled_add(-step, &g.b);
        layer.d_bias.scaled_add(-step, &g.d_bias);
    }
    let last = reconstruction_loss(&layer, x)?;
    if !last.is_finite() || !all_finite(layer.w.iter()) {
        return Err(Error::Divergence {
            what: "auto-encoder training",
            iteration: cfg.iterations,
        });
    }
    losses.push(last);
    Ok((layer, losses))
}

/// Sigmoid auto-encoder with `h` hidden units trained on the rows of `x`.
pub fn ae_train<T: Scalar>(x: ArrayView2<'_, T>, h: usize, cfg: &TrainConfig<T>) -> Result<AeLayer<T>> {
    ae_train_with(x, h, Activation::Sigmoid, cfg)
}

pub fn ae_train_with<T: Scalar>(x: ArrayView2<'_, T>, h: usize, activation: Activation, cfg: &TrainConfig<T>) -> Result<AeLayer<T>> {
    let layer = AeLayer::init(x.ncols(), h, activation, cfg.seed)?;
    ae_fit(layer, x, cfg).map(|(l, _)| l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn cfg(lr: f64, iterations: usize, seed: u64) -> TrainConfig<f64> {
        TrainConfig {
            learning_rate: lr,
            iterations,
            l2: 0.0,
            seed,
        }
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
    }

    #[test]
    fn encode_basics() {
        let zero = AeLayer::from_parts(Array2::zeros((2, 3)), Array1::zeros(2), array![1.0, -2.0, 0.5], Activation::Sigmoid).unwrap();
        let x = array![[3.0, -1.0, 8.0], [0.0, 0.0, 0.0]];
        assert!(ae_encode(&zero, x.view()).unwrap().iter().all(|&v| v == 0.5));
        let rec = ae_reconstruct(&zero, x.view()).unwrap();
        for row in rec.rows() {
            assert_eq!(row, zero.d_bias);
        }
        let single = AeLayer::from_parts(array![[1.0, 0.0]], array![0.0], Array1::zeros(2), Activation::Sigmoid).unwrap();
        assert_eq!(ae_encode(&single, array![[0.0, 5.0]].view()).unwrap()[[0, 0]], 0.5);
        assert!(ae_encode(&single, array![[0.0, 5.0, 1.0]].view()).is_err());
    }

    #[test]
    fn shape_checks() {
        assert!(AeLayer::<f64>::init(3, 3, Activation::Sigmoid, 0).is_err());
        assert!(AeLayer::<f64>::init(3, 0, Activation::Sigmoid, 0).is_err());
        assert!(AeLayer::from_parts(Array2::<f64>::zeros((2, 3)), Array1::zeros(3), Array1::zeros(3), Activation::Sigmoid).is_err());
        let l = AeLayer::<f64>::init(5, 2, Activation::Sigmoid, 9).unwrap();
        let bound = (6.0f64 / 7.0).sqrt();
        assert!(l.w.iter().all(|v| v.abs() < bound));
        assert!(l.b.iter().chain(l.d_bias.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn loss_matches_direct_sum() {
        let l = AeLayer::<f64>::init(3, 2, Activation::Sigmoid, 4).unwrap();
        let x = array![[0.3, -1.2, 2.0], [1.0, 0.5, -0.5], [0.0, 0.1, 0.2]];
        let mut direct = 0.0;
        for row in x.rows() {
            let z = l.w.dot(&row) + &l.b;
            let h = z.mapv(|v| 1.0 / (1.0 + (-v).exp()));
            let xh = l.w.t().dot(&h) + &l.d_bias;
            direct += (&row - &xh).mapv(|v| v * v).sum();
        }
        assert!((reconstruction_loss(&l, x.view()).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn constant_rows_loss_falls() {
        let x = Array2::from_shape_fn((6, 4), |(_, j)| j as f64 - 1.5);
        let (_, losses) = ae_fit(AeLayer::init(4, 2, Activation::Sigmoid, 1).unwrap(), x.view(), &cfg(0.05, 400, 1)).unwrap();
        assert!(losses.last().unwrap() < &(0.05 * losses[0]));
    }

    #[test]
    fn deterministic() {
        let x = Array2::from_shape_fn((7, 5), |(i, j)| ((i * 5 + j) as f64).sin());
        let a = ae_train(x.view(), 3, &cfg(0.01, 30, 17)).unwrap();
        let b = ae_train(x.view(), 3, &cfg(0.01, 30, 17)).unwrap();
        assert_eq!(a, b);
        let c = ae_train(x.view(), 3, &cfg(0.01, 30, 18)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn divergence_is_reported() {
        let x = Array2::from_shape_fn((4, 3), |(i, j)| 1e3 * (i as f64 - j as f64));
        let err = ae_train_with(x.view(), 2, Activation::Identity, &cfg(10.0, 200, 0)).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }

    #[test]
    fn gradient_matches_finite_differences_4x3() {
        let x = array![[0.5, -1.0, 2.0], [1.5, 0.2, -0.3], [-0.7, 0.9, 0.1], [0.0, -2.0, 1.0]];
        for act in [Activation::Sigmoid, Activation::Identity] {
            let mut l = AeLayer::init(3, 2, act, 3).unwrap();
            let mut p = l.parameters();
            p.iter_mut().enumerate().for_each(|(k, v)| *v += 0.1 * (k as f64).cos());
            l.set_parameters(&p).unwrap();
            let (_, g) = reconstruction_gradient(&l, x.view()).unwrap();
            let analytic = g.flatten();
            let h = 1e-5;
            for k in 0..p.len() {
                let mut up = l.clone();
                let mut q = p.clone();
                q[k] += h;
                up.set_parameters(&q).unwrap();
                let fp = reconstruction_loss(&up, x.view()).unwrap();
                q[k] -= 2.0 * h;
                up.set_parameters(&q).unwrap();
                let fm = reconstruction_loss(&up, x.view()).unwrap();
                let fd = (fp - fm) / (2.0 * h);
                assert!(rel_err(analytic[k], fd) < 1e-4, "{act:?} param {k}: {} vs {fd}", analytic[k]);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn small_steps_do_not_increase_loss(seed in 0u64..1000, n in 2usize..8, d in 2usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Array2::from_shape_simple_fn((n, d), || rng.random_range(-2.0..2.0));
            let h = 1 + (seed as usize) % (d - 1);
            let (_, losses) = ae_fit(AeLayer::init(d, h, Activation::Sigmoid, seed).unwrap(), x.view(), &cfg(1e-3, 50, seed)).unwrap();
            for w in losses.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12);
            }
        }

        #[test]
        fn codes_stay_in_unit_interval(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Array2::from_shape_simple_fn((5, 4), || rng.random_range(-5.0..5.0));
            let l = AeLayer::<f64>::init(4, 3, Activation::Sigmoid, seed).unwrap();
            prop_assert!(ae_encode(&l, x.view()).unwrap().iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }
}
