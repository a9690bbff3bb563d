//! Tied-weight auto-encoders, greedy layerwise stacking and a softmax head
//! fine-tuned jointly with the encoder stack.
//!
//! A layer maps `x ↦ h = act(b + W x)` and reconstructs `x̂ = d + Wᵀ h`.
//! Training is full-batch gradient descent. Losses are reported as sums over rows
//! (reconstruction) or means over rows (cross-entropy), and each step moves by
//! `learning_rate` times the gradient of the per-row mean, so the step size does not
//! grow with the number of rows.

mod io;
mod layer;
mod stack;

pub use io::{load_model, model_from_text, model_to_text, save_model, FORMAT_HEADER};
pub use layer::{
    ae_encode, ae_fit, ae_reconstruct, ae_train, ae_train_with, reconstruction_gradient, reconstruction_loss, AeGrad,
    AeLayer,
};
pub use stack::{
    fine_tune, fine_tune_gradient, fine_tune_loss, fine_tune_traced, sae_features, sae_predict, sae_pretrain,
    sae_train, semi_pretrain_finetune, softmax_probabilities, SaeGrad, SaeModel, HEAD_SEED_OFFSET,
};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_LEARNING_RATE: f64 = 0.01;
pub const DEFAULT_ITERATIONS: usize = 150;

/// `1 / (1 + e^{−x})`, evaluated without overflow for any finite `x`.
#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Hidden-unit nonlinearity. `Identity` turns a layer into a linear auto-encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation value `a = act(z)`.
    #[inline]
    pub fn derivative_from_output<T: Scalar>(self, a: T) -> T {
        match self {
            Activation::Sigmoid => a * (T::one() - a),
            Activation::Identity => T::one(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(s: &str) -> Option<Activation> {
        match s {
            "sigmoid" => Some(Activation::Sigmoid),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig<T> {
    pub learning_rate: T,
    pub iterations: usize,
    /// Weight-decay coefficient used by fine-tuning.
    pub l2: T,
    pub seed: u64,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        TrainConfig {
            learning_rate: T::lit(DEFAULT_LEARNING_RATE),
            iterations: DEFAULT_ITERATIONS,
            l2: T::zero(),
            seed: 0,
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > T::zero()) || !self.learning_rate.is_finite() {
            return Err(Error::invalid(format!("learning rate must be finite and > 0, got {}", self.learning_rate)));
        }
        if !(self.l2 >= T::zero()) || !self.l2.is_finite() {
            return Err(Error::invalid(format!("l2 must be finite and >= 0, got {}", self.l2)));
        }
        Ok(())
    }
}
