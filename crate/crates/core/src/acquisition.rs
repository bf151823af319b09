//! Acquisition functions, the heuristic band scale `μ` and the tie-break
//! noise `σ`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypothesis::GpModel;
use crate::rng;

/// `μ = MU_RATIO · a` before the floor.
pub const MU_RATIO: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Score points by closeness of the predicted value to zero.
    Boundary,
    /// Score points uniformly at random, redrawn each iteration.
    Random,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Boundary => "boundary",
            Strategy::Random => "random",
        }
    }
}

/// Everything the acquisition needs besides the model: strategy, decay
/// schedule position and the seeds behind `η` and `σ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionState {
    pub strategy: Strategy,
    pub iteration: u32,
    pub zeta: f64,
    pub eta_seed: u64,
    pub mu_floor: f64,
    pub sigma_scale: f64,
    /// Fixed normaliser `max |h|` for the boundary strategy. `None`
    /// normalises over whichever points are being scored.
    pub boundary_scale: Option<f64>,
}

impl AcquisitionState {
    pub fn new(strategy: Strategy, zeta: f64, eta_seed: u64) -> Self {
        Self {
            strategy,
            iteration: 0,
            zeta,
            eta_seed,
            mu_floor: 1e-6,
            sigma_scale: 1e-9,
            boundary_scale: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.zeta) {
            return Err(Error::InvalidArgument(format!("zeta {} not in [0, 1]", self.zeta)));
        }
        if !(self.mu_floor > 0.0) {
            return Err(Error::InvalidArgument("mu_floor must be positive".into()));
        }
        if !(self.sigma_scale > 0.0) {
            return Err(Error::InvalidArgument("sigma_scale must be positive".into()));
        }
        Ok(())
    }

    pub fn at_iteration(&self, iteration: u32) -> Self {
        Self { iteration, ..self.clone() }
    }

    /// `ζ^i`.
    pub fn decay(&self) -> f64 {
        self.zeta.powi(self.iteration as i32)
    }

    /// Acquisition values of `xs` under `model`.
    pub fn acquire(&self, model: &GpModel, xs: &[Vec<f64>]) -> Vec<f64> {
        match self.strategy {
            Strategy::Boundary => {
                let means: Vec<f64> = xs.par_iter().map(|x| model.mean(x)).collect();
                self.from_means(xs, &means)
            }
            Strategy::Random => self.random_values(xs),
        }
    }

    /// Acquisition values from precomputed predictive means.
    pub fn from_means(&self, xs: &[Vec<f64>], means: &[f64]) -> Vec<f64> {
        match self.strategy {
            Strategy::Boundary => {
                let decay = self.decay();
                let scale = self.boundary_scale.unwrap_or_else(|| max_abs(means));
                means
                    .iter()
                    .map(|h| {
                        if scale > 0.0 {
                            decay * (1.0 - h.abs() / scale).clamp(0.0, 1.0)
                        } else {
                            // Every point sits on the boundary.
                            decay
                        }
                    })
                    .collect()
            }
            Strategy::Random => self.random_values(xs),
        }
    }

    fn random_values(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        let decay = self.decay();
        let key = rng::mix(rng::stream_seed(self.eta_seed, "eta"), u64::from(self.iteration));
        xs.iter().map(|x| decay * rng::unit_closed_open(rng::hash_state(key, x))).collect()
    }

    /// `μ(x) = max(0.1 · a(x), mu_floor)`.
    pub fn mu(&self, a: f64) -> f64 {
        (MU_RATIO * a).max(self.mu_floor)
    }

    pub fn heuristic_mu(&self, a_values: &[f64]) -> Vec<f64> {
        a_values.iter().map(|&a| self.mu(a)).collect()
    }

    /// Tie-break noise in `(0, sigma_scale]`; depends only on `x` and the
    /// seed, never on the iteration.
    pub fn tiebreak_sigma(&self, x: &[f64]) -> f64 {
        let key = rng::stream_seed(self.eta_seed, "tiebreak");
        self.sigma_scale * rng::unit_open_closed(rng::hash_state(key, x))
    }
}

/// `max |v|`, or 0 for an empty slice.
pub fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use super::Strategy;
    use crate::hypothesis::{GpModel, KernelConfig};
    use proptest::prelude::*;

    fn prior_model(f: fn(&[f64]) -> f64) -> GpModel {
        let k = KernelConfig { length_scales: vec![1.0], signal_variance: 1.0, noise_variance: 1e-6 };
        GpModel::fit(Arc::new(f), &[], k).unwrap()
    }

    fn xs() -> Vec<Vec<f64>> {
        vec![vec![0.0], vec![0.5], vec![-1.0], vec![0.25]]
    }

    #[test]
    fn boundary_extremes() {
        let model = prior_model(|x| x[0]);
        let a = AcquisitionState::new(Strategy::Boundary, 0.95, 1).acquire(&model, &xs());
        assert_eq!(a[0], 1.0);
        assert_eq!(a[2], 0.0);
        assert_eq!(a[1], 0.5);
        assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn decay_scales_uniformly() {
        let model = prior_model(|x| x[0] - 0.1);
        let s = AcquisitionState::new(Strategy::Boundary, 0.95, 1);
        let a0 = s.acquire(&model, &xs());
        let a3 = s.at_iteration(3).acquire(&model, &xs());
        for (x0, x3) in a0.iter().zip(&a3) {
            assert!((x3 - 0.95f64.powi(3) * x0).abs() < 1e-15);
        }
    }

    #[test]
    fn all_zero_predictions_score_uniformly() {
        let model = prior_model(|_| 0.0);
        let a = AcquisitionState::new(Strategy::Boundary, 0.5, 1).at_iteration(2).acquire(&model, &xs());
        assert!(a.iter().all(|v| *v == 0.25));
    }

    #[test]
    fn fixed_scale_clamps() {
        let model = prior_model(|x| x[0]);
        let s = AcquisitionState { boundary_scale: Some(0.5), ..AcquisitionState::new(Strategy::Boundary, 0.9, 1) };
        let a = s.acquire(&model, &xs());
        assert_eq!(a, vec![1.0, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn random_values_redrawn_per_iteration_and_replayable() {
        let model = prior_model(|x| x[0]);
        let s = AcquisitionState::new(Strategy::Random, 1.0, 42);
        let a = s.acquire(&model, &xs());
        assert_eq!(a, s.acquire(&model, &xs()));
        assert_ne!(a, s.at_iteration(1).acquire(&model, &xs()));
        // Keyed by state, not position.
        let mut rev = xs();
        rev.reverse();
        let mut b = s.acquire(&model, &rev);
        b.reverse();
        assert_eq!(a, b);
    }

    #[test]
    fn mu_cases() {
        let s = AcquisitionState::new(Strategy::Boundary, 0.95, 0);
        assert_eq!(s.heuristic_mu(&[0.5, 0.0, 1.0]), vec![0.05, 1e-6, 0.1]);
    }

    #[test]
    fn sigma_is_deterministic_and_small() {
        let s = AcquisitionState::new(Strategy::Boundary, 0.95, 3);
        let x = [0.1, 0.2];
        assert_eq!(s.tiebreak_sigma(&x), s.tiebreak_sigma(&x));
        assert_eq!(s.tiebreak_sigma(&x), s.at_iteration(9).tiebreak_sigma(&x));
        assert_ne!(s.tiebreak_sigma(&x), s.tiebreak_sigma(&[0.1, 0.2000001]));
    }

    proptest! {
        #[test]
        fn sigma_in_range(x in prop::collection::vec(-10.0f64..10.0, 1..6), seed in any::<u64>()) {
            let s = AcquisitionState::new(Strategy::Random, 0.95, seed);
            let v = s.tiebreak_sigma(&x);
            prop_assert!(v > 0.0 && v <= 1e-9);
        }

        #[test]
        fn boundary_values_in_unit_interval_and_argmax_stable(
            pts in prop::collection::vec(-1.0f64..1.0, 2..30),
            i in 0u32..40,
        ) {
            let model = prior_model(|x| x[0].sin() - 0.2);
            let xs: Vec<Vec<f64>> = pts.iter().map(|p| vec![*p]).collect();
            let s = AcquisitionState::new(Strategy::Boundary, 0.95, 0);
            let a0 = s.acquire(&model, &xs);
            let ai = s.at_iteration(i).acquire(&model, &xs);
            prop_assert!(ai.iter().all(|v| (0.0..=1.0).contains(v)));
            let argmax = |v: &[f64]| v.iter().enumerate().fold(0, |b, (k, x)| if *x > v[b] { k } else { b });
            prop_assert_eq!(argmax(&a0), argmax(&ai));
            prop_assert!(s.heuristic_mu(&ai).iter().all(|m| *m > 0.0));
        }
    }
}
