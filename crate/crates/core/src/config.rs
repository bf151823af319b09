//! TOML experiment configuration with dotted-key overrides.
//!
//! ```toml
//! name = "di1d-demo"
//! seeds = [0, 1, 2]
//!
//! [system]
//! preset = "di1d"
//!
//! [p2l]
//! omega = 0.3
//! ```
//!
//! Unset calibration levels follow the free dimension count:
//! `(α, ε_α)` is `(0.05, 0.03)` in 2D, `(0.1, 0.05)` in 3D and
//! `(0.15, 0.05)` in 4D or more.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::acquisition::Strategy;
use crate::baselines::{DEFAULT_LEVELS, DEFAULT_SAMPLE_COUNTS};
use crate::env::{SlicePreset, SystemSpec};
use crate::error::{Error, Result};
use crate::hypothesis::PriorConfig;
use crate::p2l::{P2lParams, SetupParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    pub preset: String,
    /// Named slice preset (drone-race-lite only).
    pub slice: Option<String>,
    /// Per-dimension fixes by name.
    pub fix: BTreeMap<String, f64>,
    /// Dimensions to free, applied after `slice` and `fix`.
    pub free: Vec<String>,
    pub dt: Option<f64>,
    pub horizon: Option<usize>,
    pub gamma: Option<f64>,
    pub control_limit: Option<f64>,
    /// Overrides of the preset's physical parameters.
    pub params: toml::Table,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            preset: "di1d".into(),
            slice: None,
            fix: BTreeMap::new(),
            free: Vec::new(),
            dt: None,
            horizon: None,
            gamma: None,
            control_limit: None,
            params: toml::Table::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct P2lSection {
    pub omega: f64,
    pub zeta: f64,
    pub delta: f64,
    pub alpha: Option<f64>,
    pub eps_alpha: Option<f64>,
    pub beta: f64,
    pub n_d: Option<usize>,
    pub cap: u32,
    pub strategy: Strategy,
    pub n_initial: usize,
    pub n_reference: usize,
    pub length_scale_factor: f64,
    pub noise_variance: f64,
    pub mu_floor: f64,
    pub sigma_scale: f64,
}

impl Default for P2lSection {
    fn default() -> Self {
        let s = SetupParams::default();
        Self {
            omega: 0.3,
            zeta: s.zeta,
            delta: 1e-4,
            alpha: None,
            eps_alpha: None,
            beta: s.beta,
            n_d: None,
            cap: 70,
            strategy: s.strategy,
            n_initial: s.n_initial,
            n_reference: s.n_reference,
            length_scale_factor: s.length_scale_factor,
            noise_variance: s.noise_variance,
            mu_floor: s.mu_floor,
            sigma_scale: s.sigma_scale,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub sample_counts: Vec<usize>,
    pub levels: Vec<f64>,
    pub beta: f64,
    /// Sample count for LB Iterative.
    pub iterative_n: usize,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self {
            sample_counts: DEFAULT_SAMPLE_COUNTS.to_vec(),
            levels: DEFAULT_LEVELS.to_vec(),
            beta: 0.1,
            iterative_n: 45,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    /// Lattice points per free dimension; defaults by dimension count.
    pub resolution: Option<Vec<usize>>,
    /// Truth-grid cache directory, relative to the campaign output.
    pub cache_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seeds: Vec<u64>,
    #[serde(default = "default_outdir")]
    pub outdir: PathBuf,
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub p2l: P2lSection,
    #[serde(default)]
    pub baselines: BaselineSection,
    #[serde(default)]
    pub metrics: MetricsSection,
}

fn default_outdir() -> PathBuf {
    PathBuf::from("runs")
}

/// Parse `raw` as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Set `path` (dotted) in `table` to the TOML value `raw`, creating
/// intermediate tables.
pub fn apply_override(table: &mut toml::Table, path: &str, raw: &str) -> Result<()> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("bad override key `{path}`")));
    }
    let (last, parents) = keys.split_last().expect("split yields one key");
    let mut cur = table;
    for k in parents {
        let entry = cur.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{path}`: `{k}` is not a table")))?;
    }
    cur.insert(last.to_string(), parse_value(raw));
    Ok(())
}

/// Split `key.path=value`.
pub fn parse_override(spec: &str) -> Result<(String, String)> {
    let (k, v) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        for o in overrides {
            let (k, v) = parse_override(o)?;
            apply_override(&mut table, &k, &v)?;
        }
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::Config(format!("campaign name `{}` is not a plain directory name", self.name)));
        }
        let p = &self.p2l;
        if !(p.omega > 0.0 && p.omega < 1.0) {
            return Err(Error::Config(format!("p2l.omega {} not in (0, 1)", p.omega)));
        }
        if !(0.0..=1.0).contains(&p.zeta) {
            return Err(Error::Config(format!("p2l.zeta {} not in [0, 1]", p.zeta)));
        }
        if !(p.delta > 0.0 && p.delta < 1.0) {
            return Err(Error::Config(format!("p2l.delta {} not in (0, 1)", p.delta)));
        }
        if p.cap < 1 {
            return Err(Error::Config("p2l.cap must be at least 1".into()));
        }
        if p.n_initial < 1 {
            return Err(Error::Config("p2l.n_initial must be at least 1".into()));
        }
        let b = &self.baselines;
        if b.sample_counts.is_empty() || b.levels.is_empty() || b.sample_counts.contains(&0) || b.iterative_n == 0 {
            return Err(Error::Config("baseline grids must be nonempty with positive sample counts".into()));
        }
        let system = self.system()?;
        let (alpha, eps_alpha) = self.alpha_schedule(&system);
        if !(alpha > 0.0 && alpha < 1.0 && eps_alpha > 0.0 && eps_alpha < alpha.min(1.0 - alpha)) {
            return Err(Error::Config(format!("(alpha, eps_alpha) = ({alpha}, {eps_alpha}) out of range")));
        }
        if let Some(res) = &self.metrics.resolution {
            if res.len() != system.free_dims().len() || res.iter().any(|r| *r < 2) {
                return Err(Error::Config("metrics.resolution needs one entry >= 2 per free dimension".into()));
            }
        }
        Ok(())
    }

    /// The configured system with slice and parameter overrides applied.
    pub fn system(&self) -> Result<SystemSpec> {
        let s = &self.system;
        let mut spec = SystemSpec::preset(&s.preset)?;
        if let Some(name) = &s.slice {
            spec = spec.with_slice_preset(SlicePreset::parse(name)?)?;
        }
        for (dim, v) in &s.fix {
            let i = spec.dim_index(dim).ok_or_else(|| Error::Config(format!("unknown dimension `{dim}`")))?;
            spec.slice[i] = Some(*v);
        }
        for dim in &s.free {
            let i = spec.dim_index(dim).ok_or_else(|| Error::Config(format!("unknown dimension `{dim}`")))?;
            spec.slice[i] = None;
        }
        if let Some(v) = s.dt {
            spec.dt = v;
        }
        if let Some(v) = s.horizon {
            spec.horizon = v;
        }
        if let Some(v) = s.gamma {
            spec.gamma = v;
        }
        if let Some(v) = s.control_limit {
            spec.control_limit = v;
        }
        if !s.params.is_empty() {
            let mut kind = serde_json::to_value(&spec.kind)?;
            let obj = kind.as_object_mut().expect("system kind serializes to an object");
            for (k, v) in &s.params {
                if k == "preset" || !obj.contains_key(k) {
                    return Err(Error::Config(format!("unknown {} parameter `{k}`", spec.preset_name())));
                }
                obj.insert(k.clone(), serde_json::to_value(v)?);
            }
            spec.kind = serde_json::from_value(kind).map_err(|e| Error::Config(e.to_string()))?;
        }
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }

    /// `(α, ε_α)`, explicit values winning over the dimension schedule.
    pub fn alpha_schedule(&self, system: &SystemSpec) -> (f64, f64) {
        let (a, e) = match system.free_dims().len() {
            0..=2 => (0.05, 0.03),
            3 => (0.1, 0.05),
            _ => (0.15, 0.05),
        };
        (self.p2l.alpha.unwrap_or(a), self.p2l.eps_alpha.unwrap_or(e))
    }

    pub fn n_d(&self, system: &SystemSpec) -> usize {
        self.p2l.n_d.unwrap_or(if system.free_dims().len() <= 2 { 2000 } else { 5000 })
    }

    pub fn resolution(&self, system: &SystemSpec) -> Vec<usize> {
        let k = system.free_dims().len();
        self.metrics.resolution.clone().unwrap_or_else(|| {
            let r = match k {
                0..=2 => 101,
                3 => 41,
                _ => 21,
            };
            vec![r; k]
        })
    }

    pub fn p2l_params(&self, system: &SystemSpec) -> P2lParams {
        P2lParams { omega: self.p2l.omega, alpha: self.alpha_schedule(system).0, cap: self.p2l.cap }
    }

    pub fn setup_params(&self, system: &SystemSpec) -> SetupParams {
        let p = &self.p2l;
        SetupParams {
            n_initial: p.n_initial,
            n_reference: p.n_reference,
            length_scale_factor: p.length_scale_factor,
            noise_variance: p.noise_variance,
            eps_alpha: self.alpha_schedule(system).1,
            beta: p.beta,
            strategy: p.strategy,
            zeta: p.zeta,
            mu_floor: p.mu_floor,
            sigma_scale: p.sigma_scale,
        }
    }

    pub fn campaign_dir(&self) -> PathBuf {
        self.outdir.join(&self.name)
    }

    pub fn cache_dir(&self) -> PathBuf {
        match &self.metrics.cache_dir {
            Some(d) if d.is_absolute() => d.clone(),
            Some(d) => self.outdir.join(d),
            None => self.outdir.join("grid-cache"),
        }
    }
}
