use std::collections::HashMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{LabeledSample, PriorHandle};
use crate::env::SystemSpec;
use crate::error::{Error, Result};

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

/// Squared-exponential kernel with per-dimension length scales.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub length_scales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl KernelConfig {
    /// Length scale `factor × range` on free dimensions (fixed dimensions
    /// never vary, their scale is irrelevant and set to 1); signal variance
    /// from the sample variance of `labels`.
    pub fn for_system(system: &SystemSpec, labels: &[f64], factor: f64, noise_variance: f64) -> Self {
        let length_scales = system
            .state_bounds
            .iter()
            .zip(&system.slice)
            .map(|(b, s)| match s {
                None if b.width() > 0.0 => factor * b.width(),
                _ => 1.0,
            })
            .collect();
        Self { length_scales, signal_variance: sample_variance(labels).max(1e-6), noise_variance }
    }

    pub fn validate(&self) -> Result<()> {
        if self.length_scales.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidArgument("length scales must be positive".into()));
        }
        if !(self.signal_variance > 0.0) || !self.signal_variance.is_finite() {
            return Err(Error::InvalidArgument("signal variance must be positive".into()));
        }
        if !(self.noise_variance >= 0.0) || !self.noise_variance.is_finite() {
            return Err(Error::InvalidArgument("noise variance must be nonnegative".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut sq = 0.0;
        for ((x, y), l) in a.iter().zip(b).zip(&self.length_scales) {
            let d = (x - y) / l;
            sq += d * d;
        }
        self.signal_variance * (-0.5 * sq).exp()
    }
}

fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Predictive mean and standard deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub std: f64,
}

/// Serializable part of a fitted model; the prior mean is supplied again
/// when loading.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpDocument {
    pub kernel: KernelConfig,
    pub inputs: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

/// Exact GP posterior on `label - prior_mean(x)` residuals.
#[derive(Clone)]
pub struct GpModel {
    kernel: KernelConfig,
    prior: PriorHandle,
    inputs: Vec<Vec<f64>>,
    residuals: Vec<f64>,
    lower: DMatrix<f64>,
    weights: DVector<f64>,
    jitter: f64,
}

impl fmt::Debug for GpModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GpModel")
            .field("kernel", &self.kernel)
            .field("n_train", &self.inputs.len())
            .field("jitter", &self.jitter)
            .finish()
    }
}

impl GpModel {
    /// Fit the posterior to `samples`. Exact duplicates are merged; the same
    /// input with two different labels is rejected.
    pub fn fit(prior: PriorHandle, samples: &[LabeledSample], kernel: KernelConfig) -> Result<Self> {
        kernel.validate()?;
        let mut seen: HashMap<Vec<u64>, f64> = HashMap::with_capacity(samples.len());
        let mut inputs = Vec::with_capacity(samples.len());
        let mut residuals = Vec::with_capacity(samples.len());
        for s in samples {
            let key: Vec<u64> = s.x.iter().map(|v| v.to_bits()).collect();
            match seen.get(&key) {
                Some(&v) if v.to_bits() == s.value.to_bits() => continue,
                Some(&v) => return Err(Error::DuplicateSample { first: v, second: s.value }),
                None => {
                    seen.insert(key, s.value);
                }
            }
            residuals.push(s.value - prior.value(&s.x));
            inputs.push(s.x.clone());
        }
        Self::from_residuals(prior, inputs, residuals, kernel)
    }

    /// Rebuild a model from a saved document.
    pub fn from_document(prior: PriorHandle, doc: GpDocument) -> Result<Self> {
        doc.kernel.validate()?;
        if doc.inputs.len() != doc.residuals.len() {
            return Err(Error::InvalidArgument("inputs and residuals differ in length".into()));
        }
        Self::from_residuals(prior, doc.inputs, doc.residuals, doc.kernel)
    }

    pub fn to_document(&self) -> GpDocument {
        GpDocument {
            kernel: self.kernel.clone(),
            inputs: self.inputs.clone(),
            residuals: self.residuals.clone(),
        }
    }

    fn from_residuals(
        prior: PriorHandle,
        inputs: Vec<Vec<f64>>,
        residuals: Vec<f64>,
        kernel: KernelConfig,
    ) -> Result<Self> {
        let n = inputs.len();
        let gram = DMatrix::from_fn(n, n, |i, j| {
            let k = kernel.eval(&inputs[i], &inputs[j]);
            if i == j {
                k + kernel.noise_variance
            } else {
                k
            }
        });

        let mut jitter = 0.0;
        let chol = loop {
            let mut m = gram.clone();
            for i in 0..n {
                m[(i, i)] += jitter;
            }
            if let Some(c) = m.cholesky() {
                break c;
            }
            jitter = if jitter == 0.0 { JITTER_START } else { jitter * 10.0 };
            if jitter > JITTER_MAX * (1.0 + 1e-9) {
                return Err(Error::IllConditionedKernel { max_jitter: JITTER_MAX });
            }
            log::debug!("Cholesky failed, retrying with jitter {jitter:e}");
        };

        let weights = chol.solve(&DVector::from_column_slice(&residuals));
        Ok(Self { kernel, prior, inputs, residuals, lower: chol.unpack(), weights, jitter })
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    pub fn prior(&self) -> &PriorHandle {
        &self.prior
    }

    pub fn n_train(&self) -> usize {
        self.inputs.len()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    /// Diagonal jitter that was needed for the factorization (0 if none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Posterior mean only; `O(n)` per query.
    pub fn mean(&self, x: &[f64]) -> f64 {
        let correction: f64 = self
            .inputs
            .iter()
            .zip(self.weights.iter())
            .map(|(xi, w)| self.kernel.eval(x, xi) * w)
            .sum();
        self.prior.value(x) + correction
    }

    /// Posterior mean and standard deviation; `O(n^2)` per query.
    pub fn predict(&self, x: &[f64]) -> Prediction {
        let n = self.inputs.len();
        let kstar = DVector::from_fn(n, |i, _| self.kernel.eval(x, &self.inputs[i]));
        let mean = self.prior.value(x) + kstar.dot(&self.weights);
        let var = if n == 0 {
            self.kernel.signal_variance
        } else {
            let v = self
                .lower
                .solve_lower_triangular(&kstar)
                .expect("Cholesky factor has a positive diagonal");
            self.kernel.signal_variance - v.norm_squared()
        };
        Prediction { mean, std: var.max(0.0).sqrt() }
    }
}
