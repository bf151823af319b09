use std::f64::consts::TAU;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ValuePrior;
use crate::env::{ground_truth_label, SystemSpec};
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::rng;

/// How the synthetic prior is built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// Oracle lattice points per free dimension.
    pub resolution: usize,
    /// Peak magnitude of the smooth bias waves.
    pub bias_amplitude: f64,
    /// Constant shift added everywhere.
    pub bias_offset: f64,
    pub bias_waves: usize,
    pub bias_seed: u64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self { resolution: 9, bias_amplitude: 0.1, bias_offset: 0.0, bias_waves: 3, bias_seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Wave {
    frequency: Vec<f64>,
    phase: f64,
}

/// `offset + amplitude · mean_j cos(2π f_j·u + φ_j)` over free coordinates
/// rescaled to the unit box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasField {
    offset: f64,
    amplitude: f64,
    lo: Vec<f64>,
    width: Vec<f64>,
    waves: Vec<Wave>,
}

impl BiasField {
    pub fn new(system: &SystemSpec, config: &PriorConfig) -> Self {
        let free = system.free_dims();
        let mut r = rng::stream(config.bias_seed, "prior-bias");
        let waves = (0..config.bias_waves)
            .map(|_| Wave {
                frequency: free.iter().map(|_| r.random_range(0.3..1.2)).collect(),
                phase: r.random_range(0.0..TAU),
            })
            .collect();
        Self {
            offset: config.bias_offset,
            amplitude: config.bias_amplitude,
            lo: free.iter().map(|&d| system.state_bounds[d].lo).collect(),
            width: free.iter().map(|&d| system.state_bounds[d].width().max(f64::MIN_POSITIVE)).collect(),
            waves,
        }
    }

    pub fn value(&self, free: &[f64]) -> f64 {
        if self.waves.is_empty() || self.amplitude == 0.0 {
            return self.offset;
        }
        let sum: f64 = self
            .waves
            .iter()
            .map(|w| {
                let arg: f64 = w
                    .frequency
                    .iter()
                    .zip(free)
                    .zip(self.lo.iter().zip(&self.width))
                    .map(|((f, v), (lo, width))| f * (v - lo) / width)
                    .sum();
                (TAU * arg + w.phase).cos()
            })
            .sum();
        self.offset + self.amplitude * sum / self.waves.len() as f64
    }
}

/// Stand-in for a learned value function: the rollout oracle sampled on a
/// coarse lattice, interpolated multilinearly, plus a smooth bias field.
#[derive(Clone, Debug)]
pub struct SyntheticPrior {
    free_dims: Vec<usize>,
    lattice: Lattice,
    values: Vec<f64>,
    bias: BiasField,
}

impl SyntheticPrior {
    pub fn build(system: &SystemSpec, config: &PriorConfig) -> Result<Self> {
        let lattice = Lattice::over(system, &vec![config.resolution; system.free_dims().len()])?;
        let values = (0..lattice.len())
            .into_par_iter()
            .map(|i| {
                ground_truth_label(system, &lattice.state(system, i))
                    .map(|z| z.value)
                    .map_err(|e| Error::GridOracle { index: i, source: Box::new(e) })
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self {
            free_dims: system.free_dims(),
            lattice,
            values,
            bias: BiasField::new(system, config),
        })
    }

    /// Oracle calls spent building the prior.
    pub fn oracle_calls(&self) -> usize {
        self.values.len()
    }

    /// Interpolated oracle without the bias.
    pub fn unbiased(&self, x: &[f64]) -> f64 {
        let free: Vec<f64> = self.free_dims.iter().map(|&d| x[d]).collect();
        self.lattice.interpolate(&self.values, &free)
    }

    pub fn bias(&self, x: &[f64]) -> f64 {
        let free: Vec<f64> = self.free_dims.iter().map(|&d| x[d]).collect();
        self.bias.value(&free)
    }
}

impl ValuePrior for SyntheticPrior {
    fn value(&self, x: &[f64]) -> f64 {
        let free: Vec<f64> = self.free_dims.iter().map(|&d| x[d]).collect();
        self.lattice.interpolate(&self.values, &free) + self.bias.value(&free)
    }
}
