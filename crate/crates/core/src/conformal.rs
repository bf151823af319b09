//! Split-conformal calibration of the acquisition into an approximate
//! error `ê = a + λμ + σ`, and calibration-set sizing.
//!
//! The nonconformity score of a labeled calibration point is
//! `s = |e_h(z) - a(z_x)| / μ(z_x)` with `e_h` the binary sign error. `λ` is
//! the `⌈(1-α)(n+1)⌉`-th smallest score, so that for a fresh exchangeable
//! point `e_h(z) ≤ a(z_x) + λ μ(z_x)` with probability at least `1 - α`.
//!
//! Conditional on the calibration draw the coverage is
//! `Beta(n + 1 - l, l)` with `l = ⌊(n + 1) α⌋`; [`size_calibration_set`]
//! picks the smallest `n` putting `1 - β` of that mass within `ε_α` of
//! `1 - α`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::AcquisitionState;
use crate::error::{Error, Result};
use crate::hypothesis::{sign_error, GpModel, LabeledSample};
use crate::special::beta_reg;

/// Labeled IID calibration samples, disjoint from the unlabeled dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSet {
    pub samples: Vec<LabeledSample>,
}

impl CalibrationSet {
    pub fn new(samples: Vec<LabeledSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("calibration set is empty".into()));
        }
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn states(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.x.clone()).collect()
    }
}

/// Calibrated band multiplier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConformalBand {
    pub lambda: f64,
    pub alpha: f64,
}

/// Smallest calibration size for which the quantile index is attainable.
pub fn min_calibration_size(alpha: f64) -> usize {
    ((1.0 - alpha) / alpha - 1e-9).ceil().max(1.0) as usize
}

/// `⌈(1 - α)(n + 1)⌉`, robust to representation error in `α`.
pub fn quantile_index(n: usize, alpha: f64) -> usize {
    (((1.0 - alpha) * (n as f64 + 1.0)) - 1e-9).ceil().max(1.0) as usize
}

#[inline]
pub fn score(error: u8, a: f64, mu: f64) -> f64 {
    (f64::from(error) - a).abs() / mu
}

/// Per-sample calibration details under the current hypothesis.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredCalibration {
    pub scores: Vec<f64>,
    pub errors: Vec<u8>,
}

impl ScoredCalibration {
    pub fn error_count(&self) -> usize {
        self.errors.iter().map(|e| usize::from(*e)).sum()
    }
}

/// Scores of every calibration sample, with their sign errors.
pub fn score_calibration(model: &GpModel, acq: &AcquisitionState, cal: &CalibrationSet) -> ScoredCalibration {
    let xs = cal.states();
    let means: Vec<f64> = xs.par_iter().map(|x| model.mean(x)).collect();
    let a = acq.from_means(&xs, &means);
    let errors: Vec<u8> = means.iter().zip(&cal.samples).map(|(h, z)| sign_error(*h, z.value)).collect();
    let scores = errors.iter().zip(&a).map(|(&e, &a)| score(e, a, acq.mu(a))).collect();
    ScoredCalibration { scores, errors }
}

pub fn scores(model: &GpModel, acq: &AcquisitionState, cal: &CalibrationSet) -> Vec<f64> {
    score_calibration(model, acq, cal).scores
}

/// `λ` as the `⌈(1-α)(n+1)⌉`-th smallest score.
pub fn calibrate_lambda(scores: &[f64], alpha: f64) -> Result<ConformalBand> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} not in (0, 1)")));
    }
    let n = scores.len();
    let k = quantile_index(n, alpha);
    if k > n {
        return Err(Error::CalibrationSetTooSmall { n, min: min_calibration_size(alpha) });
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(ConformalBand { lambda: sorted[k - 1], alpha })
}

/// `ê(x) = a(x) + λ μ(x) + σ(x)` from precomputed acquisition values.
pub fn approx_error_from_acquisition(
    acq: &AcquisitionState,
    band: &ConformalBand,
    xs: &[Vec<f64>],
    a: &[f64],
) -> Vec<f64> {
    xs.iter()
        .zip(a)
        .map(|(x, &a)| a + band.lambda * acq.mu(a) + acq.tiebreak_sigma(x))
        .collect()
}

pub fn approx_error(model: &GpModel, acq: &AcquisitionState, band: &ConformalBand, xs: &[Vec<f64>]) -> Vec<f64> {
    let a = acq.acquire(model, xs);
    approx_error_from_acquisition(acq, band, xs, &a)
}

/// Probability that `Beta(n + 1 - l, l)`, `l = ⌊(n+1)α⌋`, lands in
/// `[1 - α - ε, 1 - α + ε]`.
pub fn coverage_mass(n: usize, alpha: f64, eps_alpha: f64) -> f64 {
    let l = ((n as f64 + 1.0) * alpha + 1e-9).floor();
    let lo = 1.0 - alpha - eps_alpha;
    let hi = 1.0 - alpha + eps_alpha;
    if l < 1.0 {
        // Degenerate at coverage 1.
        return if lo <= 1.0 && 1.0 <= hi { 1.0 } else { 0.0 };
    }
    let a = n as f64 + 1.0 - l;
    let b = l;
    if a <= 0.0 {
        return if lo <= 0.0 && 0.0 <= hi { 1.0 } else { 0.0 };
    }
    (beta_reg(a, b, hi.min(1.0)) - beta_reg(a, b, lo.max(0.0))).max(0.0)
}

/// Largest calibration size searched before giving up.
pub const MAX_CALIBRATION_SIZE: usize = 10_000_000;

/// Smallest `n` whose coverage law puts at least `1 - β` mass within `ε_α`
/// of `1 - α`.
///
/// The mass is not monotone in `n` (the floor in `l` makes it saw-tooth),
/// so a doubling search finds some feasible `n` and a linear scan from 1
/// finds the first one.
pub fn size_calibration_set(alpha: f64, eps_alpha: f64, beta: f64) -> Result<usize> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} not in (0, 1)")));
    }
    if !(eps_alpha > 0.0 && eps_alpha < alpha.min(1.0 - alpha)) {
        return Err(Error::InvalidArgument(format!(
            "eps_alpha {eps_alpha} not in (0, min(alpha, 1 - alpha))"
        )));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidArgument(format!("beta {beta} not in (0, 1)")));
    }
    let ok = |n: usize| coverage_mass(n, alpha, eps_alpha) >= 1.0 - beta;

    let mut upper = 1usize;
    while !ok(upper) {
        if upper >= MAX_CALIBRATION_SIZE {
            return Err(Error::InfeasibleTolerance { limit: MAX_CALIBRATION_SIZE });
        }
        upper = (upper * 2).min(MAX_CALIBRATION_SIZE);
    }
    Ok((1..=upper).find(|&n| ok(n)).unwrap_or(upper))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn score_examples() {
        assert!((score(1, 0.8, 0.08) - 2.5).abs() < 1e-12);
        assert_eq!(score(0, 0.0, 1e-6), 0.0);
        assert!((score(0, 0.5, 0.05) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn lambda_order_statistics() {
        let s: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
        assert_eq!(quantile_index(9, 0.5), 5);
        assert_eq!(calibrate_lambda(&s, 0.5).unwrap().lambda, 0.5);
        assert_eq!(quantile_index(9, 0.1), 9);
        assert_eq!(calibrate_lambda(&s, 0.1).unwrap().lambda, 0.9);
        assert_eq!(calibrate_lambda(&[0.0; 30], 0.2).unwrap().lambda, 0.0);
        // Order of inputs is irrelevant.
        let mut r = s.clone();
        r.reverse();
        assert_eq!(calibrate_lambda(&r, 0.5).unwrap().lambda, 0.5);
    }

    #[test]
    fn too_small_calibration_names_minimum() {
        match calibrate_lambda(&[0.1; 5], 0.1) {
            Err(Error::CalibrationSetTooSmall { n, min }) => {
                assert_eq!(n, 5);
                assert_eq!(min, 9);
                assert!(calibrate_lambda(&vec![0.1; min], 0.1).is_ok());
                assert!(calibrate_lambda(&vec![0.1; min - 1], 0.1).is_err());
            }
            other => panic!("expected CalibrationSetTooSmall, got {other:?}"),
        }
    }

    #[test]
    fn sizing_is_minimal() {
        for &(a, e, b) in &[(0.1, 0.05, 0.1), (0.05, 0.03, 0.1), (0.15, 0.05, 0.1), (0.2, 0.1, 0.05)] {
            let n = size_calibration_set(a, e, b).unwrap();
            assert!(coverage_mass(n, a, e) >= 1.0 - b);
            for m in 1..n {
                assert!(coverage_mass(m, a, e) < 1.0 - b, "n={m} also feasible for {a},{e},{b}");
            }
        }
    }

    #[test]
    fn wide_tolerance_needs_few_samples() {
        // eps must stay below min(alpha, 1 - alpha); 0.49 is the widest
        // admissible window around 0.5.
        let n = size_calibration_set(0.5, 0.49, 0.1).unwrap();
        assert!(n <= 10, "n = {n}");
    }

    #[test]
    fn sizing_rejects_bad_arguments() {
        assert!(size_calibration_set(0.1, 0.2, 0.1).is_err());
        assert!(size_calibration_set(0.0, 0.01, 0.1).is_err());
        assert!(size_calibration_set(0.1, 0.05, 1.0).is_err());
    }

    #[test]
    fn sized_coverage_by_monte_carlo() {
        let (alpha, eps, beta) = (0.1, 0.05, 0.1);
        let n = size_calibration_set(alpha, eps, beta).unwrap();
        let k = quantile_index(n, alpha);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 10_000;
        let mut inside = 0;
        let mut buf = vec![0.0; n];
        for _ in 0..trials {
            // Continuous scores: coverage of the k-th order statistic is
            // the uniform CDF at it.
            buf.iter_mut().for_each(|v| *v = rng.random::<f64>());
            buf.sort_by(f64::total_cmp);
            let cov = buf[k - 1];
            if (1.0 - alpha - eps..=1.0 - alpha + eps).contains(&cov) {
                inside += 1;
            }
        }
        assert!(inside as f64 / trials as f64 >= 1.0 - beta - 0.02, "{inside}/{trials} with n={n}");
    }

    proptest! {
        #[test]
        fn lambda_nonincreasing_in_alpha(
            s in prop::collection::vec(0.0f64..50.0, 20..60),
            a1 in 0.05f64..0.5,
            da in 0.0f64..0.4,
        ) {
            let a2 = (a1 + da).min(0.95);
            let l1 = calibrate_lambda(&s, a1).unwrap().lambda;
            let l2 = calibrate_lambda(&s, a2).unwrap().lambda;
            prop_assert!(l2 <= l1);
        }

        #[test]
        fn sizing_monotone_in_tolerances(e in 0.03f64..0.09, de in 0.0f64..0.05, b in 0.05f64..0.3, db in 0.0f64..0.2) {
            let alpha = 0.15;
            let e_small = e;
            let e_big = (e + de).min(0.149);
            let b_small = b;
            let b_big = (b + db).min(0.9);
            let n_tight = size_calibration_set(alpha, e_small, b_small).unwrap();
            prop_assert!(size_calibration_set(alpha, e_big, b_small).unwrap() <= n_tight);
            prop_assert!(size_calibration_set(alpha, e_small, b_big).unwrap() <= n_tight);
        }
    }
}
