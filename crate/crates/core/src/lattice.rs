//! Regular lattices over the free dimensions of a sliced system.

use serde::{Deserialize, Serialize};

use crate::env::SystemSpec;
use crate::error::{Error, Result};

/// Tensor-product grid; the first free dimension varies fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub free_dims: Vec<usize>,
    pub axes: Vec<Vec<f64>>,
}

/// `n` evenly spaced points from `lo` to `hi`, both included exactly.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * (i as f64 / (n - 1) as f64) })
            .collect(),
    }
}

impl Lattice {
    pub fn over(system: &SystemSpec, resolution: &[usize]) -> Result<Self> {
        let free_dims = system.free_dims();
        if resolution.len() != free_dims.len() {
            return Err(Error::InvalidArgument(format!(
                "{} resolutions for {} free dimensions",
                resolution.len(),
                free_dims.len()
            )));
        }
        if let Some(r) = resolution.iter().find(|r| **r < 2) {
            return Err(Error::InvalidArgument(format!("resolution {r} below 2")));
        }
        let axes = free_dims
            .iter()
            .zip(resolution)
            .map(|(&d, &n)| linspace(system.state_bounds[d].lo, system.state_bounds[d].hi, n))
            .collect();
        Ok(Self { free_dims, axes })
    }

    pub fn resolution(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-axis indices of flat index `idx`.
    pub fn unravel(&self, mut idx: usize) -> Vec<usize> {
        self.axes
            .iter()
            .map(|a| {
                let i = idx % a.len();
                idx /= a.len();
                i
            })
            .collect()
    }

    pub fn ravel(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (i, a) in multi.iter().zip(&self.axes) {
            idx += i * stride;
            stride *= a.len();
        }
        idx
    }

    /// Free coordinates of lattice point `idx`.
    pub fn free_point(&self, idx: usize) -> Vec<f64> {
        self.unravel(idx).iter().zip(&self.axes).map(|(&i, a)| a[i]).collect()
    }

    /// Full state of lattice point `idx`.
    pub fn state(&self, system: &SystemSpec, idx: usize) -> Vec<f64> {
        system.embed(&self.free_point(idx))
    }

    /// Multilinear interpolation of lattice `values` at free coordinates
    /// `free` (clamped to the lattice hull).
    pub fn interpolate(&self, values: &[f64], free: &[f64]) -> f64 {
        let d = self.axes.len();
        let mut base = Vec::with_capacity(d);
        let mut frac = Vec::with_capacity(d);
        for (a, &v) in self.axes.iter().zip(free) {
            let (lo, hi) = (a[0], a[a.len() - 1]);
            let v = v.clamp(lo, hi);
            let h = (hi - lo) / (a.len() - 1) as f64;
            let cell = if h > 0.0 { (((v - lo) / h).floor() as usize).min(a.len() - 2) } else { 0 };
            let t = if h > 0.0 { ((v - a[cell]) / (a[cell + 1] - a[cell])).clamp(0.0, 1.0) } else { 0.0 };
            base.push(cell);
            frac.push(t);
        }
        let mut acc = 0.0;
        let mut corner = vec![0usize; d];
        for mask in 0..(1usize << d) {
            let mut w = 1.0;
            for k in 0..d {
                let bit = (mask >> k) & 1;
                corner[k] = base[k] + bit;
                w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
            }
            if w != 0.0 {
                acc += w * values[self.ravel(&corner)];
            }
        }
        acc
    }
}
