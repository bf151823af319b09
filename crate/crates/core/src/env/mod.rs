//! Dynamical systems, policies and the rollout-based reach-avoid value oracle.
//!
//! Every system is a stack of per-axis double integrators (`p' = p + v dt`,
//! `v' = v + u dt`) driven by an ego controller and, for two-agent systems,
//! an opponent controller. The ground-truth label of a state is the
//! discounted reach-avoid value of the closed-loop trajectory from it.

mod control;
mod presets;
mod rollout;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use control::{Controller, OpponentPid, PursuitController, ZeroControl};
pub use presets::{DiParams, DroneParams, SlicePreset};
pub use rollout::{
    evaluate, ground_truth_label, reach_avoid_value, rollout, RewardConstraintEval, Trajectory,
};

/// Closed interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

/// Which dynamics, reward/constraint functions and policies a system uses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum SystemKind {
    /// Two 3D double integrators racing to a gate (12D).
    DroneRaceLite(DroneParams),
    /// One 1D double integrator coasting towards a goal line past a wall (2D).
    Di1d(DiParams),
    /// One 2D double integrator coasting towards a gate line (4D).
    Di2d(DiParams),
}

/// Position/velocity block of one agent inside the full state vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AgentLayout {
    pub offset: usize,
    pub axes: usize,
}

impl AgentLayout {
    pub fn position(&self, state: &[f64], axis: usize) -> f64 {
        state[self.offset + axis]
    }

    pub fn velocity(&self, state: &[f64], axis: usize) -> f64 {
        state[self.offset + self.axes + axis]
    }
}

/// A bounded, optionally sliced, discrete-time system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub kind: SystemKind,
    pub state_bounds: Vec<Interval>,
    pub dt: f64,
    pub horizon: usize,
    pub gamma: f64,
    /// Per-axis control clamp, `|u| <= control_limit`.
    pub control_limit: f64,
    /// `Some(v)` fixes that dimension to `v`; `None` leaves it free.
    pub slice: Vec<Option<f64>>,
}

impl SystemSpec {
    /// Build a named preset: `drone-race-lite`, `di1d` or `di2d`.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "drone-race-lite" => Ok(presets::drone_race_lite()),
            "di1d" => Ok(presets::di1d()),
            "di2d" => Ok(presets::di2d()),
            other => Err(Error::Config(format!("unknown system preset `{other}`"))),
        }
    }

    pub fn preset_name(&self) -> &'static str {
        match self.kind {
            SystemKind::DroneRaceLite(_) => "drone-race-lite",
            SystemKind::Di1d(_) => "di1d",
            SystemKind::Di2d(_) => "di2d",
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_bounds.len()
    }

    /// Human-readable dimension names, in state order.
    pub fn dim_names(&self) -> Vec<&'static str> {
        match self.kind {
            SystemKind::DroneRaceLite(_) => presets::DRONE_DIM_NAMES.to_vec(),
            SystemKind::Di1d(_) => vec!["p", "v"],
            SystemKind::Di2d(_) => vec!["px", "py", "vx", "vy"],
        }
    }

    pub fn dim_index(&self, name: &str) -> Option<usize> {
        self.dim_names().iter().position(|n| *n == name)
    }

    pub fn agents(&self) -> Vec<AgentLayout> {
        match self.kind {
            SystemKind::DroneRaceLite(_) => vec![
                AgentLayout { offset: 0, axes: 3 },
                AgentLayout { offset: 6, axes: 3 },
            ],
            SystemKind::Di1d(_) => vec![AgentLayout { offset: 0, axes: 1 }],
            SystemKind::Di2d(_) => vec![AgentLayout { offset: 0, axes: 2 }],
        }
    }

    /// Indices of the dimensions not fixed by the slice.
    pub fn free_dims(&self) -> Vec<usize> {
        self.slice
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.is_none().then_some(i))
            .collect()
    }

    /// Apply a named slice preset. Only meaningful for `drone-race-lite`.
    pub fn with_slice_preset(mut self, preset: SlicePreset) -> Result<Self> {
        if !matches!(self.kind, SystemKind::DroneRaceLite(_)) {
            return Err(Error::Config(format!(
                "slice presets apply to drone-race-lite, not {}",
                self.preset_name()
            )));
        }
        self.slice = preset.assignment();
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let expected = self.dim_names().len();
        if self.state_bounds.len() != expected || self.slice.len() != expected {
            return Err(Error::InvalidSystem(format!(
                "{} needs {expected} dimensions, got {} bounds and {} slice entries",
                self.preset_name(),
                self.state_bounds.len(),
                self.slice.len()
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidSystem(format!("gamma {} not in (0, 1)", self.gamma)));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidSystem(format!("dt {} must be positive", self.dt)));
        }
        if !(self.control_limit >= 0.0) {
            return Err(Error::InvalidSystem("control limit must be nonnegative".into()));
        }
        for (i, (b, s)) in self.state_bounds.iter().zip(&self.slice).enumerate() {
            if !(b.lo <= b.hi) || !b.lo.is_finite() || !b.hi.is_finite() {
                return Err(Error::InvalidSystem(format!("empty bound on dimension {i}")));
            }
            if let Some(v) = s {
                if !b.contains(*v) {
                    return Err(Error::InvalidSystem(format!(
                        "slice value {v} outside bounds [{}, {}] on dimension {i}",
                        b.lo, b.hi
                    )));
                }
            }
        }
        if self.free_dims().is_empty() {
            return Err(Error::InvalidSystem("slice leaves no free dimension".into()));
        }
        Ok(())
    }

    /// Whether `x` has the right length, is finite, lies in bounds and
    /// agrees with the slice.
    pub fn check_state(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.state_dim() {
            return Err(Error::InvalidState(format!(
                "expected {} coordinates, got {}",
                self.state_dim(),
                x.len()
            )));
        }
        for (i, ((v, b), s)) in x.iter().zip(&self.state_bounds).zip(&self.slice).enumerate() {
            if !v.is_finite() || !b.contains(*v) {
                return Err(Error::InvalidState(format!("coordinate {i} = {v} out of bounds")));
            }
            if let Some(fixed) = s {
                if v != fixed {
                    return Err(Error::InvalidState(format!(
                        "coordinate {i} = {v} differs from slice value {fixed}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Full state from free-coordinate values (in `free_dims` order).
    pub fn embed(&self, free: &[f64]) -> Vec<f64> {
        let mut it = free.iter();
        self.slice
            .iter()
            .map(|s| match s {
                Some(v) => *v,
                None => *it.next().expect("too few free coordinates"),
            })
            .collect()
    }

    /// Free coordinates of a full state.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.free_dims().into_iter().map(|i| x[i]).collect()
    }

    /// Uniform draw over the sliced subspace.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.state_bounds
            .iter()
            .zip(&self.slice)
            .map(|(b, s)| match s {
                Some(v) => *v,
                None => b.lo + rng.random::<f64>() * b.width(),
            })
            .collect()
    }

    pub fn sample_uniform_n<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.sample_uniform(rng)).collect()
    }

    /// Target function `r`; positive inside the target set.
    pub fn reward(&self, x: &[f64]) -> f64 {
        match &self.kind {
            SystemKind::DroneRaceLite(p) => presets::drone_reward(p, x),
            SystemKind::Di1d(p) => x[0] - p.goal,
            SystemKind::Di2d(p) => (x[0] - p.goal).min(p.corridor_half_width - x[1].abs()),
        }
    }

    /// Constraint function `c`; positive where constraints hold.
    pub fn constraint(&self, x: &[f64]) -> f64 {
        match &self.kind {
            SystemKind::DroneRaceLite(p) => presets::drone_constraint(p, x),
            SystemKind::Di1d(p) | SystemKind::Di2d(p) => x[0] - p.wall,
        }
    }

    /// Fresh ego controller for one rollout.
    pub fn ego_controller(&self) -> Box<dyn Controller> {
        match &self.kind {
            SystemKind::DroneRaceLite(p) => Box::new(PursuitController::new(p.clone())),
            SystemKind::Di1d(_) | SystemKind::Di2d(_) => Box::new(ZeroControl),
        }
    }

    /// Fresh opponent controller for one rollout, if the system has one.
    pub fn opponent_controller(&self) -> Option<Box<dyn Controller>> {
        match &self.kind {
            SystemKind::DroneRaceLite(p) => Some(Box::new(OpponentPid::new(p.clone(), self.dt))),
            SystemKind::Di1d(_) | SystemKind::Di2d(_) => None,
        }
    }
}
