//! Value-function hypotheses: a Gaussian process on residuals around a prior
//! mean, and the binary sign error used as the learning loss.

mod gp;
mod prior;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use gp::{GpDocument, GpModel, KernelConfig, Prediction};
pub use prior::{BiasField, PriorConfig, SyntheticPrior};

/// A state paired with its ground-truth reach-avoid value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    pub value: f64,
}

/// Prior mean of the value function (the stand-in for a learned model).
pub trait ValuePrior: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
}

impl<F> ValuePrior for F
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn value(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Shared handle to a prior mean.
pub type PriorHandle = Arc<dyn ValuePrior>;

/// The zero function.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroPrior;

impl ValuePrior for ZeroPrior {
    fn value(&self, _x: &[f64]) -> f64 {
        0.0
    }
}

/// 1 when the prediction gets the sign of the value wrong, else 0.
///
/// `h * v <= 0` counts as wrong unless `h == v` (so `h = v = 0` is right).
#[inline]
pub fn sign_error(prediction: f64, value: f64) -> u8 {
    u8::from(prediction * value <= 0.0 && prediction != value)
}

/// Sign error of the model's predictive mean on a labeled sample.
pub fn error(model: &GpModel, sample: &LabeledSample) -> u8 {
    sign_error(model.mean(&sample.x), sample.value)
}
