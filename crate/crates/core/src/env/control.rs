use super::DroneParams;

/// Feedback policy for one agent. A fresh controller (or a `reset` one) is
/// used for every rollout so that rollouts stay pure functions of `x0`.
pub trait Controller {
    /// Called once with the initial state before a rollout starts.
    fn reset(&mut self, x0: &[f64]);

    /// Write this agent's (unclamped) per-axis control for `state` into `u`.
    fn control(&mut self, state: &[f64], u: &mut [f64]);
}

/// `u = 0`: the agent coasts.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroControl;

impl Controller for ZeroControl {
    fn reset(&mut self, _x0: &[f64]) {}

    fn control(&mut self, _state: &[f64], u: &mut [f64]) {
        u.fill(0.0);
    }
}

/// Ego policy: proportional pursuit of the gate centre laterally and in
/// altitude, speed tracking towards `cruise_speed` along the race axis.
#[derive(Clone, Debug)]
pub struct PursuitController {
    params: DroneParams,
}

impl PursuitController {
    pub fn new(params: DroneParams) -> Self {
        Self { params }
    }
}

impl Controller for PursuitController {
    fn reset(&mut self, _x0: &[f64]) {}

    fn control(&mut self, state: &[f64], u: &mut [f64]) {
        let p = &self.params;
        let (px, pz, vx, vy, vz) = (state[0], state[2], state[3], state[4], state[5]);
        u[0] = p.pursuit_kp * (p.gate[0] - px) - p.pursuit_kd * vx;
        u[1] = p.speed_gain * (p.cruise_speed - vy);
        u[2] = p.altitude_kp * (p.gate[2] - pz) - p.altitude_kd * vz;
    }
}

/// Opponent policy: PID hold of the initial lateral position and altitude,
/// PI tracking of a forward cruise speed.
#[derive(Clone, Debug)]
pub struct OpponentPid {
    params: DroneParams,
    dt: f64,
    hold_x: f64,
    hold_z: f64,
    integral_x: f64,
    integral_z: f64,
    integral_speed: f64,
}

impl OpponentPid {
    const OFFSET: usize = 6;

    pub fn new(params: DroneParams, dt: f64) -> Self {
        Self {
            params,
            dt,
            hold_x: 0.0,
            hold_z: 0.0,
            integral_x: 0.0,
            integral_z: 0.0,
            integral_speed: 0.0,
        }
    }
}

impl Controller for OpponentPid {
    fn reset(&mut self, x0: &[f64]) {
        self.hold_x = x0[Self::OFFSET];
        self.hold_z = x0[Self::OFFSET + 2];
        self.integral_x = 0.0;
        self.integral_z = 0.0;
        self.integral_speed = 0.0;
    }

    fn control(&mut self, state: &[f64], u: &mut [f64]) {
        let p = &self.params;
        let s = &state[Self::OFFSET..Self::OFFSET + 6];
        let (px, pz, vx, vy, vz) = (s[0], s[2], s[3], s[4], s[5]);

        let ex = self.hold_x - px;
        let ez = self.hold_z - pz;
        let ev = p.opp_cruise_speed - vy;
        self.integral_x += ex * self.dt;
        self.integral_z += ez * self.dt;
        self.integral_speed += ev * self.dt;

        u[0] = p.opp_kp * ex + p.opp_ki * self.integral_x - p.opp_kd * vx;
        u[1] = p.opp_speed_kp * ev + p.opp_speed_ki * self.integral_speed;
        u[2] = p.opp_kp * ez + p.opp_ki * self.integral_z - p.opp_kd * vz;
    }
}
