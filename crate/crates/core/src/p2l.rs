//! The approximate Pick-to-Learn loop.
//!
//! Starting from `h0` (prior plus initial samples) the engine repeatedly
//! labels the unlabeled state with the largest approximate error `ê`, adds
//! it to the compression set `Q`, refits, advances the acquisition and
//! recalibrates `λ` on the fixed calibration set. It stops once `ê < ω` on
//! every remaining state, or declares failure at the iteration cap.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::{max_abs, AcquisitionState, Strategy};
use crate::conformal::{
    approx_error_from_acquisition, calibrate_lambda, score_calibration, size_calibration_set, CalibrationSet,
    ConformalBand,
};
use crate::env::{ground_truth_label, SystemSpec};
use crate::error::{Error, Result};
use crate::hypothesis::{GpModel, KernelConfig, LabeledSample, PriorHandle};
use crate::rng;

/// States awaiting labels, with a mask of those already moved into `Q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnlabeledDataset {
    pub states: Vec<Vec<f64>>,
    pub selected_mask: Vec<bool>,
}

impl UnlabeledDataset {
    pub fn new(states: Vec<Vec<f64>>) -> Self {
        let n = states.len();
        Self { states, selected_mask: vec![false; n] }
    }

    /// `n` IID uniform states over the sliced subspace.
    pub fn sample(system: &SystemSpec, n: usize, seed: u64) -> Self {
        Self::new(system.sample_uniform_n(&mut rng::stream(seed, "dataset"), n))
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn selected_count(&self) -> usize {
        self.selected_mask.iter().filter(|m| **m).count()
    }

    pub fn remaining(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.selected_mask[i]).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressionEntry {
    /// Index of the state in the unlabeled dataset.
    pub index: usize,
    pub sample: LabeledSample,
}

/// The labeled compression set, in selection order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CompressionSet {
    pub entries: Vec<CompressionEntry>,
}

impl CompressionSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn samples(&self) -> Vec<LabeledSample> {
        self.entries.iter().map(|e| e.sample.clone()).collect()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.index).collect()
    }

    pub fn contains_state(&self, x: &[f64]) -> bool {
        self.entries.iter().any(|e| e.sample.x == x)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Converged,
    IterationCapFailure,
    /// Every state of the dataset was selected before `ê` dropped below `ω`.
    Exhausted,
    Error,
}

/// Calibration summary of one hypothesis before or after an iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSnapshot {
    pub lambda: f64,
    pub calibration_errors: usize,
    /// `max ê` over the unselected states (`-inf` when none remain).
    pub max_e_hat: f64,
    pub max_a: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u32,
    pub chosen_index: usize,
    /// Values at the chosen state under the hypothesis that selected it.
    pub chosen_a: f64,
    pub chosen_mu: f64,
    pub chosen_e_hat: f64,
    pub chosen_value: f64,
    /// Calibration of the refitted hypothesis.
    pub lambda: f64,
    pub calibration_errors: usize,
    pub max_e_hat: f64,
    pub max_a: f64,
    pub q_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub initial: CalibrationSnapshot,
    pub records: Vec<IterationRecord>,
    pub status: RunStatus,
}

impl RunTrace {
    /// One JSON object per iteration.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Vec<IterationRecord>> {
        let text = fs::read_to_string(path)?;
        text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
    }

    pub fn final_snapshot(&self) -> CalibrationSnapshot {
        match self.records.last() {
            None => self.initial,
            Some(r) => CalibrationSnapshot {
                lambda: r.lambda,
                calibration_errors: r.calibration_errors,
                max_e_hat: r.max_e_hat,
                max_a: r.max_a,
            },
        }
    }
}

/// Loop parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct P2lParams {
    pub omega: f64,
    pub alpha: f64,
    pub cap: u32,
}

impl Default for P2lParams {
    fn default() -> Self {
        Self { omega: 0.3, alpha: 0.05, cap: 70 }
    }
}

/// A fitted hypothesis together with the acquisition state and band that
/// define `ê` for it.
#[derive(Clone, Debug)]
pub struct Hypothesis {
    pub model: GpModel,
    pub acquisition: AcquisitionState,
    pub band: ConformalBand,
    pub calibration_errors: usize,
}

impl Hypothesis {
    pub fn acquire(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        self.acquisition.acquire(&self.model, xs)
    }

    pub fn approx_error(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        let a = self.acquire(xs);
        approx_error_from_acquisition(&self.acquisition, &self.band, xs, &a)
    }

    /// Membership of `x` in the estimated reach-avoid set `{h > 0}`.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.model.mean(x) > 0.0
    }
}

pub struct RunOutcome {
    pub status: RunStatus,
    pub hypothesis: Hypothesis,
    pub q: CompressionSet,
    pub trace: RunTrace,
}

/// Everything fixed for a run except the unlabeled dataset and the oracle.
#[derive(Clone)]
pub struct Engine {
    pub system: SystemSpec,
    pub prior: PriorHandle,
    pub kernel: KernelConfig,
    /// Samples fitting `h0`; never part of `Q`.
    pub initial: Vec<LabeledSample>,
    pub calibration: CalibrationSet,
    /// States over which the boundary acquisition normaliser `max |h|` is
    /// taken. Empty means normalise over whatever is being scored.
    pub reference: Vec<Vec<f64>>,
    pub acquisition: AcquisitionState,
    pub params: P2lParams,
}

/// Knobs for [`Engine::prepare`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetupParams {
    pub n_initial: usize,
    pub n_reference: usize,
    pub length_scale_factor: f64,
    pub noise_variance: f64,
    pub eps_alpha: f64,
    pub beta: f64,
    pub strategy: Strategy,
    pub zeta: f64,
    pub mu_floor: f64,
    pub sigma_scale: f64,
}

impl Default for SetupParams {
    fn default() -> Self {
        Self {
            n_initial: 40,
            n_reference: 512,
            length_scale_factor: 0.25,
            noise_variance: 1e-6,
            eps_alpha: 0.03,
            beta: 0.1,
            strategy: Strategy::Boundary,
            zeta: 0.95,
            mu_floor: 1e-6,
            sigma_scale: 1e-9,
        }
    }
}

/// Label states with the rollout oracle in parallel.
pub fn label_all(system: &SystemSpec, xs: Vec<Vec<f64>>) -> Result<Vec<LabeledSample>> {
    xs.into_par_iter().map(|x| ground_truth_label(system, &x)).collect()
}

impl Engine {
    /// Draw the initial samples, the calibration set (sized from
    /// `alpha`, `eps_alpha`, `beta`) and the normaliser reference states
    /// from independent streams of `seed`, and label them.
    pub fn prepare(
        system: &SystemSpec,
        prior: PriorHandle,
        params: P2lParams,
        setup: &SetupParams,
        seed: u64,
    ) -> Result<Self> {
        system.validate()?;
        let n_c = size_calibration_set(params.alpha, setup.eps_alpha, setup.beta)?;
        let initial = label_all(system, system.sample_uniform_n(&mut rng::stream(seed, "initial"), setup.n_initial))?;
        let calibration = CalibrationSet::new(label_all(
            system,
            system.sample_uniform_n(&mut rng::stream(seed, "calibration"), n_c),
        )?)?;
        let reference = system.sample_uniform_n(&mut rng::stream(seed, "normalizer"), setup.n_reference);
        let labels: Vec<f64> = initial.iter().map(|z| z.value).collect();
        let kernel = KernelConfig::for_system(system, &labels, setup.length_scale_factor, setup.noise_variance);
        let acquisition = AcquisitionState {
            mu_floor: setup.mu_floor,
            sigma_scale: setup.sigma_scale,
            ..AcquisitionState::new(setup.strategy, setup.zeta, rng::stream_seed(seed, "eta"))
        };
        Ok(Self { system: system.clone(), prior, kernel, initial, calibration, reference, acquisition, params })
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        if !(p.omega > 0.0 && p.omega < 1.0) {
            return Err(Error::InvalidArgument(format!("omega {} not in (0, 1)", p.omega)));
        }
        if p.cap < 1 {
            return Err(Error::InvalidArgument("iteration cap must be at least 1".into()));
        }
        self.kernel.validate()?;
        self.acquisition.validate()
    }

    /// Oracle calls spent outside the loop (initial fit plus calibration).
    pub fn fixed_oracle_calls(&self) -> usize {
        self.initial.len() + self.calibration.len()
    }

    /// Fit on the initial samples plus `q`, then calibrate `λ` at `iteration`.
    pub fn hypothesis(&self, q: &[LabeledSample], iteration: u32) -> Result<Hypothesis> {
        let mut train = self.initial.clone();
        train.extend_from_slice(q);
        let model = GpModel::fit(self.prior.clone(), &train, self.kernel.clone())?;
        let mut acquisition = self.acquisition.at_iteration(iteration);
        if !self.reference.is_empty() {
            let means: Vec<f64> = self.reference.par_iter().map(|x| model.mean(x)).collect();
            acquisition.boundary_scale = Some(max_abs(&means));
        }
        let scored = score_calibration(&model, &acquisition, &self.calibration);
        let band = calibrate_lambda(&scored.scores, self.params.alpha)?;
        Ok(Hypothesis { model, acquisition, band, calibration_errors: scored.error_count() })
    }

    /// Run with the rollout oracle. Running out of unlabeled states is an
    /// error here.
    pub fn run(&self, dataset: &UnlabeledDataset) -> Result<RunOutcome> {
        let out = self.run_with_oracle(dataset, |_, x| ground_truth_label(&self.system, x).map(|z| z.value))?;
        if out.status == RunStatus::Exhausted {
            return Err(Error::DatasetExhausted { selected: out.q.len() });
        }
        Ok(out)
    }

    /// Run with a caller-supplied oracle `(dataset index, state) -> value`.
    /// States already marked selected in `dataset` are never picked.
    pub fn run_with_oracle<F>(&self, dataset: &UnlabeledDataset, mut oracle: F) -> Result<RunOutcome>
    where
        F: FnMut(usize, &[f64]) -> Result<f64>,
    {
        self.validate()?;
        let mut mask = dataset.selected_mask.clone();
        let mut q = CompressionSet::default();
        let mut records = Vec::new();

        let mut hyp = self.hypothesis(&[], 0)?;
        let mut scan = self.scan(&hyp, dataset, &mask);
        let initial = scan.snapshot(&hyp);
        let mut iteration = 0u32;

        let status = loop {
            let Some(best) = scan.best else { break RunStatus::Exhausted };
            if scan.max_e_hat < self.params.omega {
                break RunStatus::Converged;
            }
            if iteration >= self.params.cap {
                break RunStatus::IterationCapFailure;
            }
            let x = &dataset.states[best];
            let value = oracle(best, x)?;
            q.entries.push(CompressionEntry { index: best, sample: LabeledSample { x: x.clone(), value } });
            mask[best] = true;
            iteration += 1;

            let chosen = (scan.best_a, hyp.acquisition.mu(scan.best_a), scan.max_e_hat);
            hyp = self.hypothesis(&q.samples(), iteration)?;
            scan = self.scan(&hyp, dataset, &mask);
            log::debug!("iteration {iteration}: picked {best}, max ê now {:.4}", scan.max_e_hat);
            records.push(IterationRecord {
                iteration,
                chosen_index: best,
                chosen_a: chosen.0,
                chosen_mu: chosen.1,
                chosen_e_hat: chosen.2,
                chosen_value: value,
                lambda: hyp.band.lambda,
                calibration_errors: hyp.calibration_errors,
                max_e_hat: scan.max_e_hat,
                max_a: scan.max_a,
                q_size: q.len(),
            });
        };

        Ok(RunOutcome { status, hypothesis: hyp, q, trace: RunTrace { initial, records, status } })
    }

    fn scan(&self, hyp: &Hypothesis, dataset: &UnlabeledDataset, mask: &[bool]) -> Scan {
        let idx: Vec<usize> = (0..dataset.len()).filter(|&i| !mask[i]).collect();
        let xs: Vec<Vec<f64>> = idx.iter().map(|&i| dataset.states[i].clone()).collect();
        let a = hyp.acquire(&xs);
        let e = approx_error_from_acquisition(&hyp.acquisition, &hyp.band, &xs, &a);
        let mut s = Scan { best: None, best_a: 0.0, max_e_hat: f64::NEG_INFINITY, max_a: f64::NEG_INFINITY };
        for (k, &i) in idx.iter().enumerate() {
            // Strict comparison: the lowest index wins exact ties.
            if e[k] > s.max_e_hat {
                s.max_e_hat = e[k];
                s.best = Some(i);
                s.best_a = a[k];
            }
            s.max_a = s.max_a.max(a[k]);
        }
        s
    }
}

struct Scan {
    best: Option<usize>,
    best_a: f64,
    max_e_hat: f64,
    max_a: f64,
}

impl Scan {
    fn snapshot(&self, hyp: &Hypothesis) -> CalibrationSnapshot {
        CalibrationSnapshot {
            lambda: hyp.band.lambda,
            calibration_errors: hyp.calibration_errors,
            max_e_hat: self.max_e_hat,
            max_a: self.max_a,
        }
    }
}

/// Rerun the engine on the dataset `Q ∪ {z}` (labels taken from `Q` and
/// `z`, no oracle calls) and report whether it selects exactly `Q`, in the
/// same order, and stops.
pub fn check_compression_stability(engine: &Engine, q: &CompressionSet, z: &LabeledSample) -> Result<bool> {
    let mut samples = q.samples();
    if !q.contains_state(&z.x) {
        samples.push(z.clone());
    }
    let dataset = UnlabeledDataset::new(samples.iter().map(|s| s.x.clone()).collect());
    let out = engine.run_with_oracle(&dataset, |i, _| Ok(samples[i].value))?;
    let same_order = out.q.indices() == (0..q.len()).collect::<Vec<_>>();
    let stopped = match out.status {
        RunStatus::Converged => true,
        // Only possible when z was already in Q: every state got picked.
        RunStatus::Exhausted => dataset.len() == q.len(),
        RunStatus::IterationCapFailure | RunStatus::Error => false,
    };
    Ok(same_order && stopped)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;

    fn small_engine(seed: u64, prior: PriorHandle) -> Engine {
        let sys = SystemSpec::preset("di1d").unwrap();
        let params = P2lParams { omega: 0.3, alpha: 0.1, cap: 70 };
        let setup = SetupParams { eps_alpha: 0.05, n_initial: 20, ..Default::default() };
        Engine::prepare(&sys, prior, params, &setup, seed).unwrap()
    }

    fn biased() -> PriorHandle {
        Arc::new(|x: &[f64]| x[0] + 0.6 * x[1] - 0.3)
    }

    #[test]
    fn converged_runs_leave_small_errors() {
        let eng = small_engine(3, biased());
        let d = UnlabeledDataset::sample(&eng.system, 300, 3);
        let out = eng.run(&d).unwrap();
        assert_eq!(out.status, RunStatus::Converged);
        assert_eq!(out.trace.records.len(), out.q.len());
        let rest: Vec<Vec<f64>> =
            (0..d.len()).filter(|i| !out.q.indices().contains(i)).map(|i| d.states[i].clone()).collect();
        assert!(out.hypothesis.approx_error(&rest).iter().all(|e| *e < eng.params.omega));
        for (k, r) in out.trace.records.iter().enumerate() {
            assert_eq!(r.q_size, k + 1);
            assert_eq!(r.iteration as usize, k + 1);
            assert!(r.chosen_e_hat >= eng.params.omega);
            assert!(r.max_a <= eng.acquisition.zeta.powi(r.iteration as i32) + 1e-15);
        }
    }

    #[test]
    fn replay_is_bitwise_identical() {
        let eng = small_engine(8, biased());
        let d = UnlabeledDataset::sample(&eng.system, 200, 8);
        let a = eng.run(&d).unwrap();
        let b = small_engine(8, biased()).run(&d).unwrap();
        assert_eq!(a.q, b.q);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.hypothesis.model.to_document(), b.hypothesis.model.to_document());
    }

    #[test]
    fn exact_prior_far_from_boundary_needs_no_labels() {
        let sys = SystemSpec::preset("di1d").unwrap();
        let oracle_sys = sys.clone();
        let exact: PriorHandle = Arc::new(move |x: &[f64]| ground_truth_label(&oracle_sys, x).unwrap().value);
        let eng = small_engine(1, exact);
        let h0 = eng.hypothesis(&[], 0).unwrap();
        assert_eq!(h0.calibration_errors, 0);
        let scale = h0.acquisition.boundary_scale.unwrap();
        let far: Vec<Vec<f64>> = UnlabeledDataset::sample(&sys, 400, 1)
            .states
            .into_iter()
            .filter(|x| h0.model.mean(x).abs() > 0.9 * scale)
            .collect();
        assert!(!far.is_empty());
        let out = eng.run(&UnlabeledDataset::new(far)).unwrap();
        assert_eq!(out.status, RunStatus::Converged);
        assert!(out.q.is_empty() && out.trace.records.is_empty());
    }

    #[test]
    fn cap_reports_failure_not_error() {
        let mut eng = small_engine(2, biased());
        eng.params.cap = 2;
        let d = UnlabeledDataset::sample(&eng.system, 200, 2);
        let out = eng.run(&d).unwrap();
        assert_eq!(out.status, RunStatus::IterationCapFailure);
        assert_eq!(out.q.len(), 2);
        assert!(out.trace.final_snapshot().max_e_hat >= eng.params.omega);
    }

    #[test]
    fn tiny_dataset_exhausts() {
        let eng = small_engine(4, biased());
        let d = UnlabeledDataset::sample(&eng.system, 3, 4);
        assert!(matches!(eng.run(&d), Err(Error::DatasetExhausted { selected: 3 })));
    }

    #[test]
    fn stability_examples() {
        let eng = small_engine(5, biased());
        let d = UnlabeledDataset::sample(&eng.system, 60, 5);
        let out = eng.run(&d).unwrap();
        assert_eq!(out.status, RunStatus::Converged);
        assert!(!out.q.is_empty());
        let inside = out.q.entries[0].sample.clone();
        assert!(check_compression_stability(&eng, &out.q, &inside).unwrap());

        let mut r = rng::stream(77, "fresh");
        let (mut low, mut high) = (0, 0);
        for _ in 0..400 {
            let z = ground_truth_label(&eng.system, &eng.system.sample_uniform(&mut r)).unwrap();
            let e = out.hypothesis.approx_error(std::slice::from_ref(&z.x))[0];
            let stable = check_compression_stability(&eng, &out.q, &z).unwrap();
            if e < eng.params.omega {
                assert!(stable);
                low += 1;
            } else {
                assert!(!stable);
                high += 1;
            }
            if low >= 5 && high >= 5 {
                break;
            }
        }
        assert!(low >= 5 && high >= 5, "low {low} high {high}");
    }

    #[test]
    fn trace_jsonl_round_trip() {
        let eng = small_engine(6, biased());
        let d = UnlabeledDataset::sample(&eng.system, 150, 6);
        let out = eng.run(&d).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("trace.jsonl");
        out.trace.write_jsonl(&p).unwrap();
        assert_eq!(RunTrace::read_jsonl(&p).unwrap(), out.trace.records);
        let qp = dir.path().join("q.json");
        out.q.write_json(&qp).unwrap();
        let back: CompressionSet = serde_json::from_slice(&fs::read(&qp).unwrap()).unwrap();
        assert_eq!(back, out.q);
    }
}
