//! Ground-truth lattices and false positive / false negative rates.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{ground_truth_label, SystemSpec};
use crate::error::{Error, Result};
use crate::lattice::Lattice;

/// Stable content hash of a system description (first 16 hex digits of
/// the SHA-256 of its JSON form).
pub fn system_hash(system: &SystemSpec) -> String {
    let json = serde_json::to_vec(system).expect("system serializes");
    let digest = Sha256::digest(&json);
    let mut out = String::with_capacity(16);
    for b in digest.iter().take(8) {
        write!(out, "{b:02x}").unwrap();
    }
    out
}

/// Oracle values on a regular lattice over the free dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthGrid {
    pub system_hash: String,
    pub lattice: Lattice,
    /// Full state with slice constants filled in; free entries are overwritten.
    pub template: Vec<f64>,
    pub values: Vec<f64>,
}

impl TruthGrid {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// +1 inside the reach-avoid set (value > 0), −1 otherwise.
    pub fn truth_sign(&self, idx: usize) -> i8 {
        if self.values[idx] > 0.0 {
            1
        } else {
            -1
        }
    }

    pub fn truth_signs(&self) -> Vec<i8> {
        (0..self.len()).map(|i| self.truth_sign(i)).collect()
    }

    pub fn state(&self, idx: usize) -> Vec<f64> {
        let mut x = self.template.clone();
        for (d, v) in self.lattice.free_dims.iter().zip(self.lattice.free_point(idx)) {
            x[*d] = v;
        }
        x
    }

    pub fn states(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.state(i)).collect()
    }

    /// Cache file for `(system, resolution)` under `dir`.
    pub fn cache_path(dir: &Path, system: &SystemSpec, resolution: &[usize]) -> PathBuf {
        let res: Vec<String> = resolution.iter().map(|r| r.to_string()).collect();
        dir.join(format!("truth-{}-{}.json", system_hash(system), res.join("x")))
    }

    /// Load the grid from `dir` if cached, otherwise build and cache it.
    pub fn load_or_build(system: &SystemSpec, resolution: &[usize], dir: &Path) -> Result<Self> {
        let path = Self::cache_path(dir, system, resolution);
        if path.exists() {
            let grid: TruthGrid = serde_json::from_slice(&fs::read(&path)?)?;
            if grid.system_hash == system_hash(system) && grid.lattice.resolution() == resolution {
                return Ok(grid);
            }
            log::warn!("ignoring stale grid cache {}", path.display());
        }
        let grid = build_truth_grid(system, resolution)?;
        fs::create_dir_all(dir)?;
        fs::write(&path, serde_json::to_vec(&grid)?)?;
        Ok(grid)
    }

    /// Per-point CSV: free coordinates, oracle value, truth sign, membership.
    pub fn write_csv(&self, system: &SystemSpec, membership: &[bool], path: &Path) -> Result<()> {
        let names = system.dim_names();
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = self.lattice.free_dims.iter().map(|&d| names[d].to_string()).collect();
        header.extend(["value", "truth", "member"].map(String::from));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.lattice.free_point(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.values[i].to_string());
            rec.push(self.truth_sign(i).to_string());
            rec.push(u8::from(membership[i]).to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Label every lattice point with the rollout oracle.
pub fn build_truth_grid(system: &SystemSpec, resolution: &[usize]) -> Result<TruthGrid> {
    system.validate()?;
    let lattice = Lattice::over(system, resolution)?;
    let values = (0..lattice.len())
        .into_par_iter()
        .map(|i| {
            ground_truth_label(system, &lattice.state(system, i))
                .map(|z| z.value)
                .map_err(|e| Error::GridOracle { index: i, source: Box::new(e) })
        })
        .collect::<Result<Vec<f64>>>()?;
    let template = system.slice.iter().map(|s| s.unwrap_or(0.0)).collect();
    Ok(TruthGrid { system_hash: system_hash(system), lattice, template, values })
}

/// Error rates of a candidate set against the truth grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub fpr: f64,
    pub fnr: f64,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub negatives: usize,
    pub positives: usize,
}

impl Rates {
    /// Set when a truth class is empty and its rate was reported as 0.
    pub fn degenerate(&self) -> bool {
        self.negatives == 0 || self.positives == 0
    }

    pub fn total(&self) -> f64 {
        self.fpr + self.fnr
    }
}

/// FPR over truly-outside points and FNR over truly-inside points.
pub fn fpr_fnr_mask(grid: &TruthGrid, membership: &[bool]) -> Rates {
    assert_eq!(membership.len(), grid.len(), "one membership flag per grid point");
    let (mut fp, mut fn_, mut neg, mut pos) = (0, 0, 0, 0);
    for (i, &m) in membership.iter().enumerate() {
        if grid.truth_sign(i) > 0 {
            pos += 1;
            fn_ += usize::from(!m);
        } else {
            neg += 1;
            fp += usize::from(m);
        }
    }
    let rate = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let rates = Rates {
        fpr: rate(fp, neg),
        fnr: rate(fn_, pos),
        false_positives: fp,
        false_negatives: fn_,
        negatives: neg,
        positives: pos,
    };
    if rates.degenerate() {
        log::warn!("truth grid has an empty class ({pos} positives, {neg} negatives)");
    }
    rates
}

pub fn fpr_fnr<F>(grid: &TruthGrid, membership: F) -> Rates
where
    F: Fn(&[f64]) -> bool + Sync,
{
    let mask: Vec<bool> = (0..grid.len()).into_par_iter().map(|i| membership(&grid.state(i))).collect();
    fpr_fnr_mask(grid, &mask)
}
