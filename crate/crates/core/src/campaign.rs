//! Multi-seed experiment campaigns.
//!
//! Layout under `<outdir>/<name>/`:
//!
//! ```text
//! <seed>/trace.jsonl  <seed>/q.json  <seed>/report.json  <seed>/model.json
//! <seed>/calibration.json  <seed>/sweep.csv
//! aggregate.csv  seeds.csv  plotdata/*.csv
//! ```
//!
//! Comparisons only use seeds on which our method converged.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    level_rates, lb_iterative_from_samples, sweep_from_samples, BaselineSamples, LevelSweepResult, SelectionRule,
};
use crate::bounds::{compression_bound, COMPRESSION_BOUND_NAME};
use crate::config::ExperimentConfig;
use crate::env::SystemSpec;
use crate::error::Result;
use crate::hypothesis::{PriorHandle, SyntheticPrior};
use crate::metrics::{fpr_fnr_mask, Rates, TruthGrid};
use crate::p2l::{CalibrationSnapshot, Engine, RunOutcome, RunStatus, UnlabeledDataset};
use crate::plotdata::{write_points_csv, write_segments_csv, zero_contour};

pub const METHOD_OURS: &str = "ours";
pub const METHOD_PRIOR: &str = "prior";
pub const METHOD_LB_ITERATIVE: &str = "lb_iterative";

pub fn robust_method_name(rule: SelectionRule) -> String {
    format!("lb_robust_{}", rule.name())
}

/// All method names in report order.
pub fn method_names() -> Vec<String> {
    let mut out = vec![METHOD_OURS.to_string(), METHOD_PRIOR.to_string(), METHOD_LB_ITERATIVE.to_string()];
    out.extend(SelectionRule::ALL.iter().map(|r| robust_method_name(*r)));
    out
}

/// One method's outcome on one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub seed: u64,
    pub method: String,
    /// Whether our method converged on this seed.
    pub success: bool,
    /// Oracle labels used.
    pub samples: usize,
    pub epsilon: Option<f64>,
    pub level: Option<f64>,
    pub fpr: f64,
    pub fnr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub status: RunStatus,
    pub error: Option<String>,
    pub system: String,
    pub free_dims: Vec<String>,
    pub strategy: String,
    pub omega: f64,
    pub zeta: f64,
    pub alpha: f64,
    pub eps_alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub cap: u32,
    pub n_d: usize,
    pub n_c: usize,
    pub n_initial: usize,
    pub q_size: usize,
    /// `|Q| + n_C + n_initial`.
    pub sample_complexity: usize,
    pub bound_name: String,
    pub epsilon_bar: Option<f64>,
    pub initial: Option<CalibrationSnapshot>,
    pub last: Option<CalibrationSnapshot>,
    pub rows: Vec<MethodRow>,
}

/// Medians over successful seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    pub seeds: usize,
    pub successful: usize,
    pub samples: Option<f64>,
    pub epsilon: Option<f64>,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub fpr_plus_fnr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub name: String,
    pub seeds: Vec<SeedReport>,
    pub aggregate: Vec<AggregateRow>,
}

impl CampaignReport {
    pub fn success_count(&self) -> usize {
        self.seeds.iter().filter(|s| s.status == RunStatus::Converged).count()
    }

    pub fn all_failed(&self) -> bool {
        self.seeds.iter().all(|s| s.status == RunStatus::Error)
    }

    pub fn row(&self, method: &str) -> Option<&AggregateRow> {
        self.aggregate.iter().find(|r| r.method == method)
    }
}

/// Median, averaging the two middle values for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

pub fn aggregate(seeds: &[SeedReport]) -> Vec<AggregateRow> {
    method_names()
        .into_iter()
        .map(|method| {
            let rows: Vec<&MethodRow> =
                seeds.iter().flat_map(|s| s.rows.iter()).filter(|r| r.method == method && r.success).collect();
            let col = |f: &dyn Fn(&MethodRow) -> Option<f64>| median(&rows.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
            AggregateRow {
                method: method.clone(),
                seeds: seeds.len(),
                successful: rows.len(),
                samples: col(&|r| Some(r.samples as f64)),
                epsilon: col(&|r| r.epsilon),
                fpr: col(&|r| Some(r.fpr)),
                fnr: col(&|r| Some(r.fnr)),
                fpr_plus_fnr: col(&|r| Some(r.fpr + r.fnr)),
            }
        })
        .collect()
}

/// Shared per-campaign state: system, prior and truth grid.
pub struct CampaignContext {
    pub config: ExperimentConfig,
    pub system: SystemSpec,
    pub prior: PriorHandle,
    pub grid: TruthGrid,
    /// FPR/FNR of `{prior ≥ level}` per configured level.
    pub level_rates: Vec<Rates>,
}

impl CampaignContext {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        let system = config.system()?;
        let prior: PriorHandle = Arc::new(SyntheticPrior::build(&system, &config.prior)?);
        let grid = TruthGrid::load_or_build(&system, &config.resolution(&system), &config.cache_dir())?;
        let level_rates = level_rates(&grid, prior.as_ref(), &config.baselines.levels);
        Ok(Self { config, system, prior, grid, level_rates })
    }

    /// Estimated-set membership on the truth grid.
    pub fn mask<F: Fn(&[f64]) -> bool + Sync>(&self, member: F) -> Vec<bool> {
        (0..self.grid.len()).into_par_iter().map(|i| member(&self.grid.state(i))).collect()
    }

    pub fn prepare_engine(&self, seed: u64) -> Result<Engine> {
        Engine::prepare(
            &self.system,
            self.prior.clone(),
            self.config.p2l_params(&self.system),
            &self.config.setup_params(&self.system),
            seed,
        )
    }

    /// Run our method on one seed.
    pub fn run_ours(&self, seed: u64) -> Result<(Engine, UnlabeledDataset, RunOutcome)> {
        let engine = self.prepare_engine(seed)?;
        let dataset = UnlabeledDataset::sample(&self.system, self.config.n_d(&self.system), seed);
        let outcome = engine.run(&dataset)?;
        Ok((engine, dataset, outcome))
    }

    /// Baseline draws, LB Iterative samples first.
    pub fn baseline_draws(&self, seed: u64) -> Result<(BaselineSamples, Vec<BaselineSamples>)> {
        let b = &self.config.baselines;
        let it = BaselineSamples::draw(&self.system, self.prior.as_ref(), seed, b.iterative_n)?;
        let sweep = b
            .sample_counts
            .iter()
            .map(|&n| BaselineSamples::draw(&self.system, self.prior.as_ref(), seed, n))
            .collect::<Result<Vec<_>>>()?;
        Ok((it, sweep))
    }

    pub fn sweep(&self, draws: &[BaselineSamples]) -> Result<LevelSweepResult> {
        let b = &self.config.baselines;
        sweep_from_samples(draws, &b.levels, Some(&self.level_rates), b.beta)
    }

    fn level_rate(&self, level: f64) -> Rates {
        match self.config.baselines.levels.iter().position(|l| *l == level) {
            Some(i) => self.level_rates[i],
            None => level_rates(&self.grid, self.prior.as_ref(), &[level])[0],
        }
    }

    fn base_report(&self, seed: u64) -> SeedReport {
        let cfg = &self.config;
        let (alpha, eps_alpha) = cfg.alpha_schedule(&self.system);
        let names = self.system.dim_names();
        SeedReport {
            seed,
            status: RunStatus::Error,
            error: None,
            system: self.system.preset_name().into(),
            free_dims: self.system.free_dims().iter().map(|&d| names[d].to_string()).collect(),
            strategy: cfg.p2l.strategy.name().into(),
            omega: cfg.p2l.omega,
            zeta: cfg.p2l.zeta,
            alpha,
            eps_alpha,
            beta: cfg.p2l.beta,
            delta: cfg.p2l.delta,
            cap: cfg.p2l.cap,
            n_d: cfg.n_d(&self.system),
            n_c: 0,
            n_initial: cfg.p2l.n_initial,
            q_size: 0,
            sample_complexity: 0,
            bound_name: COMPRESSION_BOUND_NAME.into(),
            epsilon_bar: None,
            initial: None,
            last: None,
            rows: Vec::new(),
        }
    }

    /// Run every method on `seed`, writing per-seed files under `dir`.
    pub fn run_seed(&self, seed: u64, dir: &Path) -> SeedReport {
        let mut report = self.base_report(seed);
        if let Err(e) = self.run_seed_inner(seed, dir, &mut report) {
            log::error!("seed {seed} failed: {e}");
            report.status = RunStatus::Error;
            report.error = Some(e.to_string());
            report.rows.clear();
        }
        if let Err(e) = write_json(&dir.join("report.json"), &report) {
            log::error!("seed {seed}: cannot write report: {e}");
        }
        report
    }

    fn run_seed_inner(&self, seed: u64, dir: &Path, report: &mut SeedReport) -> Result<()> {
        fs::create_dir_all(dir)?;
        let cfg = &self.config;
        let (engine, dataset, out) = self.run_ours(seed)?;
        out.trace.write_jsonl(&dir.join("trace.jsonl"))?;
        out.q.write_json(&dir.join("q.json"))?;
        write_json(&dir.join("model.json"), &out.hypothesis.model.to_document())?;
        write_json(&dir.join("calibration.json"), &engine.calibration)?;

        let success = out.status == RunStatus::Converged;
        report.status = out.status;
        report.n_c = engine.calibration.len();
        report.n_initial = engine.initial.len();
        report.q_size = out.q.len();
        report.sample_complexity = out.q.len() + engine.fixed_oracle_calls();
        report.epsilon_bar = Some(compression_bound(dataset.len() as u64, out.q.len() as u64, cfg.p2l.delta)?);
        report.initial = Some(out.trace.initial);
        report.last = Some(out.trace.final_snapshot());

        let ours = fpr_fnr_mask(&self.grid, &self.mask(|x| out.hypothesis.contains(x)));
        let prior = fpr_fnr_mask(&self.grid, &self.mask(|x| self.prior.value(x) > 0.0));
        let row = |method: &str, samples, epsilon, level, r: Rates| MethodRow {
            seed,
            method: method.into(),
            success,
            samples,
            epsilon,
            level,
            fpr: r.fpr,
            fnr: r.fnr,
        };
        report.rows.push(row(METHOD_OURS, report.sample_complexity, report.epsilon_bar, None, ours));
        report.rows.push(row(METHOD_PRIOR, 0, None, None, prior));

        let (it_samples, draws) = self.baseline_draws(seed)?;
        let it = lb_iterative_from_samples(&it_samples, &cfg.baselines.levels, cfg.baselines.beta)?;
        report.rows.push(row(METHOD_LB_ITERATIVE, it.n, Some(it.epsilon), Some(it.level), self.level_rate(it.level)));

        let sweep = self.sweep(&draws)?;
        sweep.write_csv(&dir.join("sweep.csv"))?;
        for rule in SelectionRule::ALL {
            let c = sweep.select(rule).expect("sweep grids are nonempty");
            let rates = Rates { fpr: c.fpr, fnr: c.fnr, ..self.level_rate(c.level) };
            report.rows.push(row(&robust_method_name(rule), c.n, Some(c.epsilon_lb), Some(c.level), rates));
        }

        if self.grid.lattice.free_dims.len() == 2 {
            self.write_seed_plotdata(seed, &out, it.level)?;
        }
        Ok(())
    }

    fn plot_dir(&self) -> PathBuf {
        self.config.campaign_dir().join("plotdata")
    }

    fn write_contour(&self, name: &str, field: &[f64]) -> Result<()> {
        let axes = &self.grid.lattice.axes;
        let segs = zero_contour(&axes[0], &axes[1], field)?;
        write_segments_csv(&self.plot_dir().join(name), &segs)
    }

    fn write_seed_plotdata(&self, seed: u64, out: &RunOutcome, it_level: f64) -> Result<()> {
        fs::create_dir_all(self.plot_dir())?;
        let ours: Vec<f64> = (0..self.grid.len()).into_par_iter().map(|i| out.hypothesis.model.mean(&self.grid.state(i))).collect();
        self.write_contour(&format!("seed{seed}_ours.csv"), &ours)?;
        let shifted: Vec<f64> =
            (0..self.grid.len()).into_par_iter().map(|i| self.prior.value(&self.grid.state(i)) - it_level).collect();
        self.write_contour(&format!("seed{seed}_lb_iterative.csv"), &shifted)?;

        let free = &self.grid.lattice.free_dims;
        let names = self.system.dim_names();
        let header = ["order", names[free[0]], names[free[1]], "value"];
        let rows: Vec<Vec<f64>> = out
            .q
            .entries
            .iter()
            .enumerate()
            .map(|(k, e)| vec![(k + 1) as f64, e.sample.x[free[0]], e.sample.x[free[1]], e.sample.value])
            .collect();
        write_points_csv(&self.plot_dir().join(format!("seed{seed}_q.csv")), &header, &rows)
    }

    /// Seed-independent contours: truth and uncalibrated prior.
    pub fn write_shared_plotdata(&self) -> Result<()> {
        if self.grid.lattice.free_dims.len() != 2 {
            return Ok(());
        }
        fs::create_dir_all(self.plot_dir())?;
        self.write_contour("truth.csv", &self.grid.values)?;
        let prior: Vec<f64> = (0..self.grid.len()).into_par_iter().map(|i| self.prior.value(&self.grid.state(i))).collect();
        self.write_contour("prior.csv", &prior)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "seeds", "successful", "samples", "epsilon", "fpr", "fnr", "fpr_plus_fnr"])?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.seeds.to_string(),
            r.successful.to_string(),
            fmt_opt(r.samples),
            fmt_opt(r.epsilon),
            fmt_opt(r.fpr),
            fmt_opt(r.fnr),
            fmt_opt(r.fpr_plus_fnr),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_aggregate_csv(path: &Path) -> Result<Vec<AggregateRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<AggregateRow>, _>>()?)
}

pub fn write_seed_rows_csv(path: &Path, seeds: &[SeedReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["seed", "method", "success", "samples", "epsilon", "level", "fpr", "fnr"])?;
    for s in seeds {
        for r in &s.rows {
            w.write_record([
                r.seed.to_string(),
                r.method.clone(),
                r.success.to_string(),
                r.samples.to_string(),
                fmt_opt(r.epsilon),
                fmt_opt(r.level),
                r.fpr.to_string(),
                r.fnr.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_seed_rows_csv(path: &Path) -> Result<Vec<MethodRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<MethodRow>, _>>()?)
}

/// Run the whole campaign and write its files.
pub fn run_campaign(config: ExperimentConfig) -> Result<CampaignReport> {
    let root = config.campaign_dir();
    fs::create_dir_all(&root)?;
    let ctx = CampaignContext::new(config)?;
    ctx.write_shared_plotdata()?;

    let mut seeds: Vec<u64> = ctx.config.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    let reports: Vec<SeedReport> = seeds.par_iter().map(|&s| ctx.run_seed(s, &root.join(s.to_string()))).collect();

    let report = CampaignReport { name: ctx.config.name.clone(), aggregate: aggregate(&reports), seeds: reports };
    write_aggregate_csv(&root.join("aggregate.csv"), &report.aggregate)?;
    write_seed_rows_csv(&root.join("seeds.csv"), &report.seeds)?;
    if report.all_failed() {
        log::error!("all {} seeds failed", report.seeds.len());
    }
    Ok(report)
}

/// Paths a successful 2D campaign is expected to produce.
pub fn expected_files(config: &ExperimentConfig, two_d: bool) -> Vec<PathBuf> {
    let root = config.campaign_dir();
    let mut out = vec![root.join("aggregate.csv"), root.join("seeds.csv")];
    for s in &config.seeds {
        for f in ["trace.jsonl", "q.json", "report.json", "model.json", "calibration.json", "sweep.csv"] {
            out.push(root.join(s.to_string()).join(f));
        }
        if two_d {
            for f in ["ours", "lb_iterative", "q"] {
                out.push(root.join("plotdata").join(format!("seed{s}_{f}.csv")));
            }
        }
    }
    if two_d {
        out.push(root.join("plotdata/truth.csv"));
        out.push(root.join("plotdata/prior.csv"));
    }
    out
}
