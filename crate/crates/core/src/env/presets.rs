use serde::{Deserialize, Serialize};

use super::{Interval, SystemKind, SystemSpec};
use crate::error::{Error, Result};

pub(crate) const DRONE_DIM_NAMES: [&str; 12] = [
    "ego_px", "ego_py", "ego_pz", "ego_vx", "ego_vy", "ego_vz", "opp_px", "opp_py", "opp_pz",
    "opp_vx", "opp_vy", "opp_vz",
];

/// Geometry, margins and controller gains of the drone race.
///
/// The race runs along +y towards a gate at `gate`. Every reward and
/// constraint term is a signed margin: positive when satisfied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DroneParams {
    pub gate: [f64; 3],
    // reward
    pub lead_margin: f64,
    pub speed_margin: f64,
    pub corridor_half_width: f64,
    pub gate_approach_distance: f64,
    // constraint
    /// Max lateral-to-forward speed ratio inside the approach zone.
    pub approach_tan: f64,
    pub approach_zone: f64,
    pub altitude_min: f64,
    pub altitude_max: f64,
    pub separation_min: f64,
    pub downwash_radius: f64,
    pub downwash_depth: f64,
    pub downwash_clearance: f64,
    // ego pursuit controller
    pub pursuit_kp: f64,
    pub pursuit_kd: f64,
    pub cruise_speed: f64,
    pub speed_gain: f64,
    pub altitude_kp: f64,
    pub altitude_kd: f64,
    // opponent PID
    pub opp_kp: f64,
    pub opp_ki: f64,
    pub opp_kd: f64,
    pub opp_speed_kp: f64,
    pub opp_speed_ki: f64,
    pub opp_cruise_speed: f64,
}

impl Default for DroneParams {
    fn default() -> Self {
        Self {
            gate: [0.0, 0.0, 0.0],
            lead_margin: 0.1,
            speed_margin: 0.1,
            corridor_half_width: 0.4,
            gate_approach_distance: 0.8,
            approach_tan: 0.6,
            approach_zone: 1.0,
            altitude_min: -0.3,
            altitude_max: 0.3,
            separation_min: 0.35,
            downwash_radius: 0.3,
            downwash_depth: 0.6,
            downwash_clearance: 0.05,
            pursuit_kp: 1.2,
            pursuit_kd: 1.0,
            cruise_speed: 1.2,
            speed_gain: 1.0,
            altitude_kp: 2.0,
            altitude_kd: 1.5,
            opp_kp: 1.0,
            opp_ki: 0.1,
            opp_kd: 0.8,
            opp_speed_kp: 1.0,
            opp_speed_ki: 0.1,
            opp_cruise_speed: 0.6,
        }
    }
}

/// Parameters of the coasting double-integrator benchmarks.
///
/// `di1d`: `r = p - goal`, `c = p - wall`. `di2d` adds a corridor on `py`
/// to the target: `r = min(px - goal, corridor_half_width - |py|)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiParams {
    pub goal: f64,
    pub wall: f64,
    pub corridor_half_width: f64,
}

impl Default for DiParams {
    fn default() -> Self {
        // Offsets of 0.01 keep the set boundary off the default lattices.
        Self { goal: 0.51, wall: -0.49, corridor_half_width: 0.51 }
    }
}

/// Named two-to-four dimensional slices of the 12D drone race.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlicePreset {
    /// Ego velocity (0, 0.7, 0), altitude 0; free ego (px, py).
    #[serde(rename = "slice1")]
    Slice1,
    /// Ego velocity (0, 0, -0.5), altitude 0.05; free ego (px, py).
    #[serde(rename = "slice2")]
    Slice2,
    /// Slice 1 with the ego altitude free.
    #[serde(rename = "slice1-3d")]
    Slice1Alt,
    /// Slice 2 with the ego altitude free.
    #[serde(rename = "slice2-3d")]
    Slice2Alt,
    /// Slice 1 with the ego altitude and x-velocity free.
    #[serde(rename = "slice1-4d")]
    Slice1AltVx,
}

impl SlicePreset {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "slice1" => Ok(Self::Slice1),
            "slice2" => Ok(Self::Slice2),
            "slice1-3d" => Ok(Self::Slice1Alt),
            "slice2-3d" => Ok(Self::Slice2Alt),
            "slice1-4d" => Ok(Self::Slice1AltVx),
            other => Err(Error::Config(format!("unknown slice preset `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Slice1 => "slice1",
            Self::Slice2 => "slice2",
            Self::Slice1Alt => "slice1-3d",
            Self::Slice2Alt => "slice2-3d",
            Self::Slice1AltVx => "slice1-4d",
        }
    }

    /// Fixed values for all twelve dimensions (`None` = free).
    pub fn assignment(&self) -> Vec<Option<f64>> {
        const OPP: [f64; 6] = [0.4, -2.2, 0.0, 0.0, 0.3, 0.0];
        let (ego_alt, ego_vel) = match self {
            Self::Slice1 | Self::Slice1Alt | Self::Slice1AltVx => (0.0, [0.0, 0.7, 0.0]),
            Self::Slice2 | Self::Slice2Alt => (0.05, [0.0, 0.0, -0.5]),
        };
        let mut out = vec![None, None, Some(ego_alt)];
        out.extend(ego_vel.iter().map(|v| Some(*v)));
        out.extend(OPP.iter().map(|v| Some(*v)));
        match self {
            Self::Slice1 | Self::Slice2 => {}
            Self::Slice1Alt | Self::Slice2Alt => out[2] = None,
            Self::Slice1AltVx => {
                out[2] = None;
                out[3] = None;
            }
        }
        out
    }
}

pub(crate) fn drone_race_lite() -> SystemSpec {
    let b = Interval::new;
    SystemSpec {
        kind: SystemKind::DroneRaceLite(DroneParams::default()),
        state_bounds: vec![
            b(-1.5, 1.5),
            b(-3.5, 0.0),
            b(-0.5, 0.5),
            b(-1.0, 1.0),
            b(-1.0, 1.5),
            b(-1.0, 1.0),
            b(-1.5, 1.5),
            b(-3.5, 0.0),
            b(-0.5, 0.5),
            b(-1.0, 1.0),
            b(-1.0, 1.5),
            b(-1.0, 1.0),
        ],
        dt: 0.1,
        horizon: 30,
        gamma: 0.95,
        control_limit: 1.0,
        slice: SlicePreset::Slice1.assignment(),
    }
}

pub(crate) fn di1d() -> SystemSpec {
    SystemSpec {
        kind: SystemKind::Di1d(DiParams::default()),
        state_bounds: vec![Interval::new(-1.0, 1.0); 2],
        dt: 0.1,
        horizon: 20,
        gamma: 0.95,
        control_limit: 1.0,
        slice: vec![None; 2],
    }
}

pub(crate) fn di2d() -> SystemSpec {
    SystemSpec {
        kind: SystemKind::Di2d(DiParams::default()),
        state_bounds: vec![Interval::new(-1.0, 1.0); 4],
        dt: 0.1,
        horizon: 20,
        gamma: 0.95,
        control_limit: 1.0,
        slice: vec![None; 4],
    }
}

pub(crate) fn drone_reward(p: &DroneParams, x: &[f64]) -> f64 {
    let (ego_px, ego_py, ego_vy) = (x[0], x[1], x[4]);
    let (opp_py, opp_vy) = (x[7], x[10]);
    let lead = (ego_py - opp_py) - p.lead_margin;
    let speed = (ego_vy - opp_vy) - p.speed_margin;
    let lateral = p.corridor_half_width - (ego_px - p.gate[0]).abs();
    let near_gate = ego_py - (p.gate[1] - p.gate_approach_distance);
    lead.min(speed).min(lateral.min(near_gate))
}

pub(crate) fn drone_constraint(p: &DroneParams, x: &[f64]) -> f64 {
    let (ego_px, ego_py, ego_pz, ego_vx, ego_vy) = (x[0], x[1], x[2], x[3], x[4]);
    let (opp_px, opp_py, opp_pz) = (x[6], x[7], x[8]);

    // Only binds within `approach_zone` of the gate plane.
    let approach =
        (p.approach_tan * ego_vy - ego_vx.abs()).max((p.gate[1] - ego_py) - p.approach_zone);
    let altitude = (ego_pz - p.altitude_min).min(p.altitude_max - ego_pz);

    let (dx, dy, dz) = (ego_px - opp_px, ego_py - opp_py, ego_pz - opp_pz);
    let horizontal = dx.hypot(dy);
    let separation = (horizontal.hypot(dz)) - p.separation_min;
    // Cylinder of disturbed air hanging below the opponent.
    let downwash = (horizontal - p.downwash_radius)
        .max((opp_pz - p.downwash_depth) - ego_pz)
        .max(ego_pz - (opp_pz - p.downwash_clearance));

    approach.min(altitude).min(separation.min(downwash))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slice_constants_match_named_presets() {
        let s1 = SlicePreset::Slice1.assignment();
        assert_eq!(&s1[2..6], &[Some(0.0), Some(0.0), Some(0.7), Some(0.0)]);
        assert_eq!(&s1[6..9], &[Some(0.4), Some(-2.2), Some(0.0)]);
        assert_eq!(&s1[9..12], &[Some(0.0), Some(0.3), Some(0.0)]);
        let s2 = SlicePreset::Slice2.assignment();
        assert_eq!(&s2[2..6], &[Some(0.05), Some(0.0), Some(0.0), Some(-0.5)]);
        assert_eq!(&s2[6..], &s1[6..]);
        for p in [
            SlicePreset::Slice1,
            SlicePreset::Slice2,
            SlicePreset::Slice1Alt,
            SlicePreset::Slice2Alt,
            SlicePreset::Slice1AltVx,
        ] {
            assert_eq!(SlicePreset::parse(p.name()).unwrap(), p);
        }
    }

    #[test]
    fn drone_margins_have_expected_signs() {
        let p = DroneParams::default();
        // Ahead, faster, centred just before the gate, far from the opponent.
        let mut x = vec![0.0, -0.5, 0.0, 0.0, 1.0, 0.0, 0.4, -2.2, 0.0, 0.0, 0.3, 0.0];
        assert!(drone_reward(&p, &x) > 0.0);
        assert!(drone_constraint(&p, &x) > 0.0);
        // Above the altitude ceiling.
        x[2] = 0.4;
        assert!(drone_constraint(&p, &x) < 0.0);
        // On top of the opponent.
        x[2] = 0.0;
        x[0] = 0.4;
        x[1] = -2.2;
        assert!(drone_constraint(&p, &x) < 0.0);
        // Inside the downwash cylinder but outside the separation sphere.
        let p = DroneParams { altitude_min: -1.0, ..p };
        x[0] = 0.6;
        x[2] = -0.4;
        assert!(drone_constraint(&p, &x) < 0.0);
    }
}
