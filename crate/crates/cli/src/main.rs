use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use reachcal::baselines::SelectionRule;
use reachcal::bounds::{compression_bound, scenario_bound_with_violations, scenario_bound_zero_violation};
use reachcal::campaign::{robust_method_name, CampaignContext};
use reachcal::metrics::{fpr_fnr_mask, TruthGrid};
use reachcal::{run_campaign, Error, ExperimentConfig};

const EXIT_CONFIG: u8 = 1;
const EXIT_ALL_FAILED: u8 = 2;

#[derive(Parser)]
#[command(name = "reachcal", version, about = "Calibrate learned reach-avoid sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CampaignArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Replace the config's seed list; repeatable.
    #[arg(long)]
    seed: Vec<u64>,
    #[arg(long)]
    outdir: Option<PathBuf>,
    /// `key.path=value`; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl CampaignArgs {
    fn load(&self) -> reachcal::Result<ExperimentConfig> {
        let mut o = self.overrides.clone();
        if !self.seed.is_empty() {
            let list: Vec<String> = self.seed.iter().map(|s| s.to_string()).collect();
            o.push(format!("seeds=[{}]", list.join(",")));
        }
        if let Some(d) = &self.outdir {
            o.push(format!("outdir={:?}", d.display().to_string()));
        }
        ExperimentConfig::load(&self.config, &o)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundKind {
    /// Compression bound for `k` picked out of `n` at confidence `δ`.
    Compression,
    /// Scenario bound with no violations.
    Scenario0,
    /// Scenario bound with `k` violations.
    ScenarioK,
}

#[derive(Subcommand)]
enum Command {
    /// Run a campaign: our method plus baselines on every seed.
    Run(CampaignArgs),
    /// Evaluate a generalization bound.
    Bounds {
        #[arg(long, value_enum)]
        kind: BoundKind,
        #[arg(long)]
        n: u64,
        #[arg(long, default_value_t = 0)]
        k: u64,
        /// δ for `compression`, β for the scenario bounds.
        #[arg(long, default_value_t = 1e-4)]
        confidence: f64,
    },
    /// Build (or load) the truth grid and summarise it.
    Grid {
        #[command(flatten)]
        args: CampaignArgs,
        /// Also write per-point CSV (prior membership) here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run only the baseline sweep for each seed.
    Baseline(CampaignArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn dispatch(cmd: Command) -> reachcal::Result<ExitCode> {
    match cmd {
        Command::Bounds { kind, n, k, confidence } => {
            let eps = match kind {
                BoundKind::Compression => compression_bound(n, k, confidence)?,
                BoundKind::Scenario0 => scenario_bound_zero_violation(n, confidence)?,
                BoundKind::ScenarioK => {
                    if k > n {
                        return Err(Error::InvalidArgument(format!("k = {k} exceeds N = {n}")));
                    }
                    scenario_bound_with_violations(n, k, confidence)?
                }
            };
            println!("{eps:.6}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Run(args) => {
            let cfg = args.load()?;
            let report = run_campaign(cfg.clone())?;
            println!("{:<24} {:>5} {:>9} {:>10} {:>8} {:>8}", "method", "ok", "samples", "epsilon", "fpr", "fnr");
            for r in &report.aggregate {
                let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
                println!(
                    "{:<24} {:>2}/{:<2} {:>9} {:>10} {:>8} {:>8}",
                    r.method,
                    r.successful,
                    r.seeds,
                    f(r.samples),
                    f(r.epsilon),
                    f(r.fpr),
                    f(r.fnr)
                );
            }
            println!("outputs in {}", cfg.campaign_dir().display());
            Ok(if report.all_failed() { ExitCode::from(EXIT_ALL_FAILED) } else { ExitCode::SUCCESS })
        }
        Command::Grid { args, csv } => {
            let cfg = args.load()?;
            let system = cfg.system()?;
            let res = cfg.resolution(&system);
            let grid = TruthGrid::load_or_build(&system, &res, &cfg.cache_dir())?;
            let truth: Vec<bool> = grid.truth_signs().iter().map(|s| *s > 0).collect();
            let rates = fpr_fnr_mask(&grid, &truth);
            println!(
                "{} points, {} inside, {} outside, cache {}",
                grid.len(),
                rates.positives,
                rates.negatives,
                TruthGrid::cache_path(&cfg.cache_dir(), &system, &res).display()
            );
            if let Some(path) = csv {
                let ctx = CampaignContext::new(cfg)?;
                let mask = ctx.mask(|x| ctx.prior.value(x) > 0.0);
                ctx.grid.write_csv(&ctx.system, &mask, &path)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Baseline(args) => {
            let cfg = args.load()?;
            let ctx = CampaignContext::new(cfg)?;
            let root = ctx.config.campaign_dir();
            let mut failures = 0;
            for &seed in &ctx.config.seeds {
                let res = ctx.baseline_draws(seed).and_then(|(_, draws)| {
                    let sweep = ctx.sweep(&draws)?;
                    let dir = root.join(seed.to_string());
                    std::fs::create_dir_all(&dir)?;
                    sweep.write_csv(&dir.join("sweep.csv"))?;
                    Ok(sweep)
                });
                match res {
                    Ok(sweep) => {
                        for rule in SelectionRule::ALL {
                            let c = sweep.select(rule).expect("nonempty sweep");
                            println!(
                                "seed {seed} {:<22} N={:<5} level={:<5} k={:<4} eps={:.6} fpr={:.4} fnr={:.4}",
                                robust_method_name(rule),
                                c.n,
                                c.level,
                                c.violations,
                                c.epsilon_lb,
                                c.fpr,
                                c.fnr
                            );
                        }
                    }
                    Err(e) => {
                        eprintln!("seed {seed} failed: {e}");
                        failures += 1;
                    }
                }
            }
            Ok(if failures == ctx.config.seeds.len() { ExitCode::from(EXIT_ALL_FAILED) } else { ExitCode::SUCCESS })
        }
    }
}
