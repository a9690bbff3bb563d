use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};

use super::layer::{ae_fit, all_finite, uniform_matrix, AeLayer};
use super::{Activation, TrainConfig};
use crate::data::Label;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Added to the training seed to initialize the softmax head, so the head never shares
/// a stream with the layer seeds `seed + k`.
pub const HEAD_SEED_OFFSET: u64 = 1_000_000;

/// Encoder stack plus a two-output softmax head.
#[derive(Clone, Debug, PartialEq)]
pub struct SaeModel<T> {
    pub layers: Vec<AeLayer<T>>,
    /// 2×h_top
    pub softmax_w: Array2<T>,
    pub softmax_b: Array1<T>,
}

/// Gradient of the fine-tuning loss. Decoder biases are not part of the network.
#[derive(Clone, Debug, PartialEq)]
pub struct SaeGrad<T> {
    pub layers: Vec<(Array2<T>, Array1<T>)>,
    pub softmax_w: Array2<T>,
    pub softmax_b: Array1<T>,
}

impl<T: Scalar> SaeGrad<T> {
    /// Same ordering as [`SaeModel::trainable_parameters`].
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend(w.iter().chain(b.iter()).copied());
        }
        out.extend(self.softmax_w.iter().chain(self.softmax_b.iter()).copied());
        out
    }
}

fn check_chain<T: Scalar>(layers: &[AeLayer<T>], input_dim: usize) -> Result<()> {
    let Some(first) = layers.first() else {
        return Err(Error::invalid("encoder stack is empty"));
    };
    if first.input_dim() != input_dim {
        return Err(Error::dim(format!(
            "first layer expects {} inputs, data has {input_dim} columns",
            first.input_dim()
        )));
    }
    for (k, pair) in layers.windows(2).enumerate() {
        if pair[1].input_dim() != pair[0].hidden_dim() {
            return Err(Error::dim(format!(
                "layer {} expects {} inputs but layer {k} produces {}",
                k + 1,
                pair[1].input_dim(),
                pair[0].hidden_dim()
            )));
        }
    }
    Ok(())
}

impl<T: Scalar> SaeModel<T> {
    pub fn from_parts(layers: Vec<AeLayer<T>>, softmax_w: Array2<T>, softmax_b: Array1<T>) -> Result<Self> {
        let input = layers.first().map(|l| l.input_dim()).unwrap_or(0);
        check_chain(&layers, input)?;
        let top = layers.last().map(|l| l.hidden_dim()).unwrap_or(0);
        if softmax_w.dim() != (2, top) || softmax_b.len() != 2 {
            return Err(Error::dim(format!(
                "softmax head must be 2×{top} with 2 biases, got {:?} and {}",
                softmax_w.dim(),
                softmax_b.len()
            )));
        }
        if !all_finite(softmax_w.iter().chain(softmax_b.iter())) {
            return Err(Error::invalid("softmax parameters must be finite"));
        }
        Ok(SaeModel {
            layers,
            softmax_w,
            softmax_b,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.softmax_w.ncols()
    }

    /// Hidden sizes from the first layer up.
    pub fn dims(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.hidden_dim()).collect()
    }

    /// Encoder `W`, `b` of each layer in order, then the head's `W` and `b`.
    pub fn trainable_parameters(&self) -> Vec<T> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.w.iter().chain(l.b.iter()).copied());
        }
        out.extend(self.softmax_w.iter().chain(self.softmax_b.iter()).copied());
        out
    }

    pub fn set_trainable_parameters(&mut self, values: &[T]) -> Result<()> {
        let expected = self.layers.iter().map(|l| l.w.len() + l.b.len()).sum::<usize>() + self.softmax_w.len() + 2;
        if values.len() != expected {
            return Err(Error::dim(format!("{} values for {expected} parameters", values.len())));
        }
        let mut it = values.iter().copied();
        for l in &mut self.layers {
            for v in l.w.iter_mut().chain(l.b.iter_mut()) {
                *v = it.next().unwrap_or_else(T::zero);
            }
        }
        for v in self.softmax_w.iter_mut().chain(self.softmax_b.iter_mut()) {
            *v = it.next().unwrap_or_else(T::zero);
        }
        Ok(())
    }

    fn check_input(&self, x: &ArrayView2<'_, T>) -> Result<()> {
        check_chain(&self.layers, x.ncols())
    }

    /// Activations of every layer; entry 0 is the input itself.
    fn forward_all(&self, x: ArrayView2<'_, T>) -> Vec<Array2<T>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_owned());
        for l in &self.layers {
            let next = l.forward(acts[acts.len() - 1].view());
            acts.push(next);
        }
        acts
    }

    fn logits(&self, top: ArrayView2<'_, T>) -> Array2<T> {
        top.dot(&self.softmax_w.t()) + &self.softmax_b
    }

    fn penalty(&self) -> T {
        let sq = |w: &Array2<T>| w.iter().map(|&v| v * v).sum::<T>();
        self.layers.iter().map(|l| sq(&l.w)).sum::<T>() + sq(&self.softmax_w)
    }
}

fn class_indices(labels: &[Label]) -> Result<Vec<usize>> {
    labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            l.class_index()
                .ok_or_else(|| Error::invalid(format!("row {i} is unlabeled; fine-tuning needs class labels")))
        })
        .collect()
}

/// Row-wise `log Σ exp` of a two-column logit matrix.
fn log_sum_exp<T: Scalar>(z0: T, z1: T) -> T {
    let m = z0.max(z1);
    m + ((z0 - m).exp() + (z1 - m).exp()).ln()
}

fn mean_cross_entropy<T: Scalar>(logits: &Array2<T>, y: &[usize]) -> T {
    let total: T = logits
        .rows()
        .into_iter()
        .zip(y)
        .map(|(z, &c)| log_sum_exp(z[0], z[1]) - z[c])
        .sum();
    total / T::count(y.len())
}

fn check_rows(x: &ArrayView2<'_, impl Scalar>, labels: &[Label]) -> Result<()> {
    if x.nrows() != labels.len() {
        return Err(Error::dim(format!("{} labels for {} rows", labels.len(), x.nrows())));
    }
    if labels.is_empty() {
        return Err(Error::invalid("fine-tuning needs at least one row"));
    }
    Ok(())
}

/// `(1/n) Σᵢ −log pᵢ[yᵢ] + (l2/2)·Σ‖W‖²_F` over encoder and head weights.
pub fn fine_tune_loss<T: Scalar>(model: &SaeModel<T>, x: ArrayView2<'_, T>, labels: &[Label], l2: T) -> Result<T> {
    model.check_input(&x)?;
    check_rows(&x, labels)?;
    let y = class_indices(labels)?;
    let acts = model.forward_all(x);
    let logits = model.logits(acts[acts.len() - 1].view());
    Ok(mean_cross_entropy(&logits, &y) + l2 / T::lit(2.0) * model.penalty())
}

/// Fine-tuning loss and its gradient by backpropagation through the whole stack.
pub fn fine_tune_gradient<T: Scalar>(model: &SaeModel<T>, x: ArrayView2<'_, T>, labels: &[Label], l2: T) -> Result<(T, SaeGrad<T>)> {
    let (ce, mut grad) = cross_entropy_gradient(model, x, labels)?;
    for ((gw, _), l) in grad.layers.iter_mut().zip(&model.layers) {
        gw.scaled_add(l2, &l.w);
    }
    grad.softmax_w.scaled_add(l2, &model.softmax_w);
    Ok((ce + l2 / T::lit(2.0) * model.penalty(), grad))
}

/// Mean cross-entropy and its gradient, without the weight penalty.
fn cross_entropy_gradient<T: Scalar>(model: &SaeModel<T>, x: ArrayView2<'_, T>, labels: &[Label]) -> Result<(T, SaeGrad<T>)> {
    model.check_input(&x)?;
    check_rows(&x, labels)?;
    let y = class_indices(labels)?;
    let n = T::count(y.len());
    let acts = model.forward_all(x);
    let top = &acts[acts.len() - 1];
    let logits = model.logits(top.view());
    let ce = mean_cross_entropy(&logits, &y);

    // dL/dlogits = (softmax − onehot) / n
    let mut dz = logits;
    for (mut row, &c) in dz.rows_mut().into_iter().zip(&y) {
        let lse = log_sum_exp(row[0], row[1]);
        row.mapv_inplace(|v| (v - lse).exp());
        row[c] -= T::one();
        row.mapv_inplace(|v| v / n);
    }
    let head_w = dz.t().dot(top);
    let head_b = dz.sum_axis(Axis(0));
    let mut upstream = dz.dot(&model.softmax_w);
    let mut layer_grads = Vec::with_capacity(model.layers.len());
    for (k, l) in model.layers.iter().enumerate().rev() {
        let a = &acts[k + 1];
        let act = l.activation;
        upstream.zip_mut_with(a, |g, &v| *g *= act.derivative_from_output(v));
        let gw = upstream.t().dot(&acts[k]);
        let gb = upstream.sum_axis(Axis(0));
        if k > 0 {
            upstream = upstream.dot(&l.w);
        }
        layer_grads.push((gw, gb));
    }
    layer_grads.reverse();
    Ok((
        ce,
        SaeGrad {
            layers: layer_grads,
            softmax_w: head_w,
            softmax_b: head_b,
        },
    ))
}

/// Greedy layerwise pretraining: layer `k` (seed `cfg.seed + k`) is trained on the
/// codes of layer `k − 1`.
pub fn sae_pretrain<T: Scalar>(x: ArrayView2<'_, T>, dims: &[usize], cfg: &TrainConfig<T>) -> Result<Vec<AeLayer<T>>> {
    if dims.is_empty() {
        return Err(Error::invalid("at least one hidden size is required"));
    }
    let mut prev = x.ncols();
    for &h in dims {
        if h == 0 || h >= prev {
            return Err(Error::invalid(format!(
                "hidden sizes must be strictly decreasing from the input dimension {}, got {dims:?}",
                x.ncols()
            )));
        }
        prev = h;
    }
    let mut layers = Vec::with_capacity(dims.len());
    let mut input = x.to_owned();
    for (k, &h) in dims.iter().enumerate() {
        let init = AeLayer::init(input.ncols(), h, Activation::Sigmoid, cfg.seed.wrapping_add(k as u64))?;
        let (layer, _) = ae_fit(init, input.view(), cfg)?;
        if k + 1 < dims.len() {
            input = layer.forward(input.view());
        }
        layers.push(layer);
    }
    Ok(layers)
}

/// Adds a softmax head and trains the encoders and head jointly for exactly
/// `cfg.iterations` steps.
pub fn fine_tune<T: Scalar>(layers: Vec<AeLayer<T>>, x: ArrayView2<'_, T>, labels: &[Label], cfg: &TrainConfig<T>) -> Result<SaeModel<T>> {
    fine_tune_traced(layers, x, labels, cfg).map(|(m, _)| m)
}

/// [`fine_tune`] that also returns the loss before each step and after the last one.
///
/// Each step is a gradient step on the mean cross-entropy followed by the exact
/// weight-decay shrink `W ← W / (1 + lr·l2)`; biases are not shrunk.
pub fn fine_tune_traced<T: Scalar>(
    layers: Vec<AeLayer<T>>,
    x: ArrayView2<'_, T>,
    labels: &[Label],
    cfg: &TrainConfig<T>,
) -> Result<(SaeModel<T>, Vec<T>)> {
    cfg.validate()?;
    check_chain(&layers, x.ncols())?;
    check_rows(&x, labels)?;
    class_indices(labels)?;
    let top = layers[layers.len() - 1].hidden_dim();
    let mut model = SaeModel {
        softmax_w: uniform_matrix(2, top, cfg.seed.wrapping_add(HEAD_SEED_OFFSET)),
        softmax_b: Array1::zeros(2),
        layers,
    };
    let lr = cfg.learning_rate;
    let shrink = T::one() / (T::one() + lr * cfg.l2);
    let mut losses = Vec::with_capacity(cfg.iterations + 1);
    for it in 0..cfg.iterations {
        let (ce, g) = cross_entropy_gradient(&model, x, labels)?;
        let loss = ce + cfg.l2 / T::lit(2.0) * model.penalty();
        if !loss.is_finite() {
            return Err(Error::Divergence {
                what: "fine-tuning",
                iteration: it,
            });
        }
        losses.push(loss);
        for (l, (gw, gb)) in model.layers.iter_mut().zip(&g.layers) {
            l.w.scaled_add(-lr, gw);
            l.w.mapv_inplace(|v| v * shrink);
            l.b.scaled_add(-lr, gb);
        }
        model.softmax_w.scaled_add(-lr, &g.softmax_w);
        model.softmax_w.mapv_inplace(|v| v * shrink);
        model.softmax_b.scaled_add(-lr, &g.softmax_b);
    }
    let last = fine_tune_loss(&model, x, labels, cfg.l2)?;
    if !last.is_finite() {
        return Err(Error::Divergence {
            what: "fine-tuning",
            iteration: cfg.iterations,
        });
    }
    losses.push(last);
    Ok((model, losses))
}

/// Pretraining followed by fine-tuning on the same labeled rows.
pub fn sae_train<T: Scalar>(x: ArrayView2<'_, T>, labels: &[Label], dims: &[usize], cfg: &TrainConfig<T>) -> Result<SaeModel<T>> {
    let layers = sae_pretrain(x, dims, cfg)?;
    fine_tune(layers, x, labels, cfg)
}

/// Pretrains on the labeled and unlabeled rows together, then fine-tunes on the
/// labeled rows only. With no unlabeled rows this is exactly [`sae_train`].
pub fn semi_pretrain_finetune<T: Scalar>(
    x_labeled: ArrayView2<'_, T>,
    labels: &[Label],
    x_unlabeled: ArrayView2<'_, T>,
    dims: &[usize],
    cfg: &TrainConfig<T>,
) -> Result<SaeModel<T>> {
    if x_unlabeled.nrows() == 0 {
        return sae_train(x_labeled, labels, dims, cfg);
    }
    if x_unlabeled.ncols() != x_labeled.ncols() {
        return Err(Error::dim(format!(
            "unlabeled rows have {} columns, labeled rows {}",
            x_unlabeled.ncols(),
            x_labeled.ncols()
        )));
    }
    let all = concatenate(Axis(0), &[x_labeled, x_unlabeled]).map_err(|e| Error::dim(e.to_string()))?;
    let layers = sae_pretrain(all.view(), dims, cfg)?;
    fine_tune(layers, x_labeled, labels, cfg)
}

/// Output of the top encoder layer.
pub fn sae_features<T: Scalar>(model: &SaeModel<T>, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
    model.check_input(&x)?;
    let mut h = model.layers[0].forward(x);
    for l in &model.layers[1..] {
        h = l.forward(h.view());
    }
    Ok(h)
}

/// Class probabilities, one row per input row (columns: class 0, class 1).
pub fn softmax_probabilities<T: Scalar>(model: &SaeModel<T>, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
    let mut z = model.logits(sae_features(model, x)?.view());
    for mut row in z.rows_mut() {
        let lse = log_sum_exp(row[0], row[1]);
        row.mapv_inplace(|v| (v - lse).exp());
    }
    Ok(z)
}

/// Class with the larger softmax output; equal outputs give class 0.
pub fn sae_predict<T: Scalar>(model: &SaeModel<T>, x: ArrayView2<'_, T>) -> Result<Vec<Label>> {
    let z = model.logits(sae_features(model, x)?.view());
    Ok(z.rows()
        .into_iter()
        .map(|r| if r[1] > r[0] { Label::Class1 } else { Label::Class0 })
        .collect())
}
