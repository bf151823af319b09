//! Level-set calibration baselines built on scenario bounds.
//!
//! Both calibrate `Ŝ = {x : prior(x) ≥ level}`. A sampled state is a
//! violation when it lies in `Ŝ` but its true value is `≤ 0`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{scenario_bound_with_violations, scenario_bound_zero_violation};
use crate::env::SystemSpec;
use crate::error::{Error, Result};
use crate::hypothesis::{LabeledSample, ValuePrior};
use crate::metrics::{fpr_fnr_mask, Rates, TruthGrid};
use crate::p2l::label_all;
use crate::rng;

pub const DEFAULT_SAMPLE_COUNTS: [usize; 8] = [50, 200, 250, 300, 350, 500, 750, 1000];
pub const DEFAULT_LEVELS: [f64; 10] = [0.0, 0.05, 0.1, 0.15, 0.2, 0.3, 0.5, 0.75, 0.9, 1.0];

/// `n` uniform states keyed by `(seed, n)`: every level sees the same draw
/// for a given `n`, different `n` get unrelated draws.
pub fn baseline_states(system: &SystemSpec, seed: u64, n: usize) -> Vec<Vec<f64>> {
    let mut r = rng::stream(rng::mix(rng::stream_seed(seed, "baseline"), n as u64), "baseline-n");
    system.sample_uniform_n(&mut r, n)
}

/// Labeled baseline samples with their prior values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineSamples {
    pub samples: Vec<LabeledSample>,
    pub prior_values: Vec<f64>,
}

impl BaselineSamples {
    pub fn draw(system: &SystemSpec, prior: &dyn ValuePrior, seed: u64, n: usize) -> Result<Self> {
        let samples = label_all(system, baseline_states(system, seed, n))?;
        let prior_values = samples.iter().map(|z| prior.value(&z.x)).collect();
        Ok(Self { samples, prior_values })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn violations(&self, level: f64) -> usize {
        self.prior_values
            .iter()
            .zip(&self.samples)
            .filter(|(p, z)| is_violation(**p, z.value, level))
            .count()
    }
}

#[inline]
pub fn is_violation(prior_value: f64, truth: f64, level: f64) -> bool {
    prior_value >= level && truth <= 0.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LbIterativeResult {
    pub n: usize,
    pub level: f64,
    pub epsilon: f64,
    /// Violations at the chosen level; nonzero only when no level in the
    /// grid reaches zero.
    pub violations: usize,
}

/// Smallest grid level with zero violations on `samples`.
pub fn lb_iterative_from_samples(samples: &BaselineSamples, levels: &[f64], beta: f64) -> Result<LbIterativeResult> {
    check_levels(levels)?;
    let mut sorted = levels.to_vec();
    sorted.sort_by(f64::total_cmp);
    let epsilon = scenario_bound_zero_violation(samples.len() as u64, beta)?;
    let n = samples.len();
    for &level in &sorted {
        if samples.violations(level) == 0 {
            return Ok(LbIterativeResult { n, level, epsilon, violations: 0 });
        }
    }
    let level = *sorted.last().expect("levels checked nonempty");
    let violations = samples.violations(level);
    log::warn!("LB Iterative: no level reaches zero violations; using {level} with {violations}");
    Ok(LbIterativeResult { n, level, epsilon, violations })
}

pub fn lb_iterative(
    system: &SystemSpec,
    prior: &dyn ValuePrior,
    n: usize,
    levels: &[f64],
    beta: f64,
    seed: u64,
) -> Result<LbIterativeResult> {
    if n == 0 {
        return Err(Error::InvalidArgument("LB Iterative needs N >= 1".into()));
    }
    lb_iterative_from_samples(&BaselineSamples::draw(system, prior, seed, n)?, levels, beta)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub n: usize,
    pub level: f64,
    pub violations: usize,
    pub epsilon_lb: f64,
    pub fpr: f64,
    pub fnr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    MinEps,
    MinN,
    MinLevel,
    MedianEps,
}

impl SelectionRule {
    pub const ALL: [SelectionRule; 4] =
        [SelectionRule::MinEps, SelectionRule::MinN, SelectionRule::MinLevel, SelectionRule::MedianEps];

    pub fn name(&self) -> &'static str {
        match self {
            SelectionRule::MinEps => "min_eps",
            SelectionRule::MinN => "min_n",
            SelectionRule::MinLevel => "min_level",
            SelectionRule::MedianEps => "median_eps",
        }
    }
}

/// Cells ordered by `n`, then level, as given by the grids.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelSweepResult {
    pub cells: Vec<SweepCell>,
}

/// FPR/FNR of `{prior ≥ level}` on the truth grid, one per level.
pub fn level_rates(grid: &TruthGrid, prior: &dyn ValuePrior, levels: &[f64]) -> Vec<Rates> {
    let values: Vec<f64> = (0..grid.len()).into_par_iter().map(|i| prior.value(&grid.state(i))).collect();
    levels
        .iter()
        .map(|&l| fpr_fnr_mask(grid, &values.iter().map(|v| *v >= l).collect::<Vec<_>>()))
        .collect()
}

/// Sweep cells from pre-drawn samples (`draws[j]` holds the samples for
/// `ns[j]`) and per-level rates.
pub fn sweep_from_samples(
    draws: &[BaselineSamples],
    levels: &[f64],
    rates: Option<&[Rates]>,
    beta: f64,
) -> Result<LevelSweepResult> {
    check_levels(levels)?;
    let mut cells = Vec::with_capacity(draws.len() * levels.len());
    for d in draws {
        for (j, &level) in levels.iter().enumerate() {
            let violations = d.violations(level);
            let epsilon_lb = scenario_bound_with_violations(d.len() as u64, violations as u64, beta)?;
            let (fpr, fnr) = rates.map_or((f64::NAN, f64::NAN), |r| (r[j].fpr, r[j].fnr));
            cells.push(SweepCell { n: d.len(), level, violations, epsilon_lb, fpr, fnr });
        }
    }
    Ok(LevelSweepResult { cells })
}

pub fn lb_robust_sweep(
    system: &SystemSpec,
    prior: &dyn ValuePrior,
    ns: &[usize],
    levels: &[f64],
    beta: f64,
    seed: u64,
    grid: Option<&TruthGrid>,
) -> Result<(LevelSweepResult, Vec<BaselineSamples>)> {
    if ns.is_empty() || ns.contains(&0) {
        return Err(Error::InvalidArgument("sample-count grid must be nonempty and positive".into()));
    }
    let draws = ns
        .iter()
        .map(|&n| BaselineSamples::draw(system, prior, seed, n))
        .collect::<Result<Vec<_>>>()?;
    let rates = grid.map(|g| level_rates(g, prior, levels));
    let sweep = sweep_from_samples(&draws, levels, rates.as_deref(), beta)?;
    Ok((sweep, draws))
}

fn check_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() || levels.iter().any(|l| !l.is_finite()) {
        return Err(Error::InvalidArgument("level grid must be nonempty and finite".into()));
    }
    Ok(())
}

impl LevelSweepResult {
    /// Index of the selected cell; `None` for an empty sweep.
    pub fn select_index(&self, rule: SelectionRule) -> Option<usize> {
        if self.cells.is_empty() {
            return None;
        }
        let key = |i: usize| {
            let c = &self.cells[i];
            (c.epsilon_lb, c.n, c.level, i)
        };
        let cmp = |a: usize, b: usize| {
            let (ea, na, la, ia) = key(a);
            let (eb, nb, lb, ib) = key(b);
            ea.total_cmp(&eb).then(na.cmp(&nb)).then(la.total_cmp(&lb)).then(ia.cmp(&ib))
        };
        let mut pool: Vec<usize> = (0..self.cells.len()).collect();
        match rule {
            SelectionRule::MinEps => {}
            SelectionRule::MinN => {
                let n_min = self.cells.iter().map(|c| c.n).min().unwrap();
                pool.retain(|&i| self.cells[i].n == n_min);
            }
            SelectionRule::MinLevel => {
                let l_min = self.cells.iter().map(|c| c.level).fold(f64::INFINITY, f64::min);
                pool.retain(|&i| self.cells[i].level == l_min);
            }
            SelectionRule::MedianEps => {
                pool.sort_by(|&a, &b| cmp(a, b));
                return Some(pool[(pool.len() - 1) / 2]);
            }
        }
        pool.into_iter().min_by(|&a, &b| cmp(a, b))
    }

    pub fn select(&self, rule: SelectionRule) -> Option<&SweepCell> {
        self.select_index(rule).map(|i| &self.cells[i])
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for c in &self.cells {
            w.serialize(c)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let cells = r.deserialize().collect::<std::result::Result<Vec<SweepCell>, _>>()?;
        Ok(Self { cells })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(prior: &[f64], truth: &[f64]) -> BaselineSamples {
        BaselineSamples {
            samples: truth.iter().map(|&v| LabeledSample { x: vec![0.0], value: v }).collect(),
            prior_values: prior.to_vec(),
        }
    }

    fn cell(n: usize, level: f64, eps: f64) -> SweepCell {
        SweepCell { n, level, violations: 0, epsilon_lb: eps, fpr: 0.0, fnr: 0.0 }
    }

    #[test]
    fn iterative_no_false_safe_picks_level_zero() {
        let s = fixture(&[0.5, -0.2, 0.1], &[0.4, -0.3, 0.2]);
        let r = lb_iterative_from_samples(&s, &DEFAULT_LEVELS, 0.1).unwrap();
        assert_eq!((r.level, r.violations), (0.0, 0));
        assert_eq!(r.epsilon, scenario_bound_zero_violation(3, 0.1).unwrap());
    }

    #[test]
    fn iterative_adversarial_sample_raises_level() {
        // Just inside the 0.05 superlevel set, truly unsafe.
        let s = fixture(&[0.5, 0.06], &[0.4, -0.1]);
        let r = lb_iterative_from_samples(&s, &DEFAULT_LEVELS, 0.1).unwrap();
        assert!(r.level >= 0.1);
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn iterative_without_feasible_level_reports_count() {
        let s = fixture(&[2.0, 3.0], &[-0.1, -0.2]);
        let r = lb_iterative_from_samples(&s, &DEFAULT_LEVELS, 0.1).unwrap();
        assert_eq!((r.level, r.violations), (1.0, 2));
    }

    #[test]
    fn zero_truth_is_a_violation() {
        assert!(is_violation(0.3, 0.0, 0.2));
        assert!(!is_violation(0.1, -1.0, 0.2));
    }

    #[test]
    fn violations_nonincreasing_in_level() {
        let sys = SystemSpec::preset("di1d").unwrap();
        let prior = |x: &[f64]| x[0] + 0.5 * x[1];
        let s = BaselineSamples::draw(&sys, &prior, 3, 200).unwrap();
        let counts: Vec<usize> = DEFAULT_LEVELS.iter().map(|l| s.violations(*l)).collect();
        assert!(counts.windows(2).all(|w| w[1] <= w[0]), "{counts:?}");
        assert!(counts[0] > 0);
    }

    #[test]
    fn single_cell_sweep() {
        let sweep = LevelSweepResult { cells: vec![cell(50, 0.1, 0.2)] };
        for rule in SelectionRule::ALL {
            assert_eq!(sweep.select_index(rule), Some(0));
        }
    }

    #[test]
    fn two_by_two_selections() {
        // ε by (n, level): (50, 0.0) 0.30, (50, 0.5) 0.20, (100, 0.0) 0.10, (100, 0.5) 0.25
        let sweep = LevelSweepResult {
            cells: vec![cell(50, 0.0, 0.30), cell(50, 0.5, 0.20), cell(100, 0.0, 0.10), cell(100, 0.5, 0.25)],
        };
        assert_eq!(sweep.select_index(SelectionRule::MinEps), Some(2));
        assert_eq!(sweep.select_index(SelectionRule::MinN), Some(1));
        assert_eq!(sweep.select_index(SelectionRule::MinLevel), Some(2));
        // Sorted ε: 0.10, 0.20, 0.25, 0.30; lower median is 0.20.
        assert_eq!(sweep.select_index(SelectionRule::MedianEps), Some(1));
    }

    #[test]
    fn ties_prefer_smaller_n_then_level() {
        let sweep = LevelSweepResult { cells: vec![cell(100, 0.0, 0.1), cell(50, 0.5, 0.1), cell(50, 0.2, 0.1)] };
        assert_eq!(sweep.select_index(SelectionRule::MinEps), Some(2));
        assert_eq!(sweep.select_index(SelectionRule::MedianEps), Some(1));
        assert_eq!(LevelSweepResult::default().select_index(SelectionRule::MinEps), None);
    }

    #[test]
    fn degenerate_top_level_is_empty_set() {
        let sys = SystemSpec::preset("di1d").unwrap();
        let grid = crate::metrics::build_truth_grid(&sys, &[15, 15]).unwrap();
        let prior = |x: &[f64]| 0.5 * x[0].tanh();
        let rates = level_rates(&grid, &prior, &[1.0]);
        assert_eq!((rates[0].fpr, rates[0].fnr), (0.0, 1.0));
        let s = BaselineSamples::draw(&sys, &prior, 1, 40).unwrap();
        assert_eq!(s.violations(1.0), 0);
    }

    #[test]
    fn sweep_csv_round_trip() {
        let sys = SystemSpec::preset("di1d").unwrap();
        let prior = |x: &[f64]| x[0] - 0.2;
        let grid = crate::metrics::build_truth_grid(&sys, &[11, 11]).unwrap();
        let (sweep, draws) = lb_robust_sweep(&sys, &prior, &[20, 40], &[0.0, 0.5], 0.1, 9, Some(&grid)).unwrap();
        assert_eq!(sweep.cells.len(), 4);
        assert_eq!(draws[1].len(), 40);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sweep.csv");
        sweep.write_csv(&p).unwrap();
        assert_eq!(LevelSweepResult::read_csv(&p).unwrap(), sweep);
    }

    #[test]
    fn draws_keyed_by_seed_and_n() {
        let sys = SystemSpec::preset("di2d").unwrap();
        assert_eq!(baseline_states(&sys, 1, 10), baseline_states(&sys, 1, 10));
        assert_ne!(baseline_states(&sys, 1, 10)[0], baseline_states(&sys, 1, 11)[0]);
        assert_ne!(baseline_states(&sys, 1, 10), baseline_states(&sys, 2, 10));
    }
}
