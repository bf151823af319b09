use reachcal::env::{ground_truth_label, DroneParams, SystemSpec};
use reachcal::metrics::build_truth_grid;

// Coasting double integrator: the set has a closed form.
fn di1d_inside(p: f64, v: f64, goal: f64, wall: f64, reach_time: f64) -> bool {
    p > goal || (v > 0.0 && p > wall && p + reach_time * v > goal)
}

#[test]
fn di1d_grid_matches_closed_form() {
    let sys = SystemSpec::preset("di1d").unwrap();
    let grid = build_truth_grid(&sys, &[101, 101]).unwrap();
    let reach_time = sys.horizon as f64 * sys.dt;
    let mut mismatches = Vec::new();
    for i in 0..grid.len() {
        let x = grid.state(i);
        let want = di1d_inside(x[0], x[1], 0.51, -0.49, reach_time);
        if want != (grid.truth_sign(i) > 0) {
            mismatches.push(x);
        }
    }
    assert!(mismatches.is_empty(), "{} mismatches, first {:?}", mismatches.len(), mismatches.first());
}

/// Step-by-step reimplementation of the drone closed loop.
fn reference_trajectory(p: &DroneParams, x0: &[f64], dt: f64, horizon: usize, limit: f64) -> Vec<Vec<f64>> {
    let (hold_x, hold_z) = (x0[6], x0[8]);
    let (mut ix, mut iz, mut iv) = (0.0, 0.0, 0.0);
    let mut out = vec![x0.to_vec()];
    let mut x = x0.to_vec();
    for _ in 0..horizon {
        let ego = [
            p.pursuit_kp * (p.gate[0] - x[0]) - p.pursuit_kd * x[3],
            p.speed_gain * (p.cruise_speed - x[4]),
            p.altitude_kp * (p.gate[2] - x[2]) - p.altitude_kd * x[5],
        ];
        let (ex, ez, ev) = (hold_x - x[6], hold_z - x[8], p.opp_cruise_speed - x[10]);
        ix += ex * dt;
        iz += ez * dt;
        iv += ev * dt;
        let opp = [
            p.opp_kp * ex + p.opp_ki * ix - p.opp_kd * x[9],
            p.opp_speed_kp * ev + p.opp_speed_ki * iv,
            p.opp_kp * ez + p.opp_ki * iz - p.opp_kd * x[11],
        ];
        let mut next = x.clone();
        for a in 0..3 {
            next[a] = x[a] + x[3 + a] * dt;
            next[3 + a] = x[3 + a] + ego[a].clamp(-limit, limit) * dt;
            next[6 + a] = x[6 + a] + x[9 + a] * dt;
            next[9 + a] = x[9 + a] + opp[a].clamp(-limit, limit) * dt;
        }
        out.push(next.clone());
        x = next;
    }
    out
}

fn brute_value(sys: &SystemSpec, traj: &[Vec<f64>]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for t in 0..traj.len() {
        let mut c = f64::INFINITY;
        for (tau, x) in traj.iter().enumerate().take(t + 1) {
            c = c.min(sys.gamma.powi(tau as i32) * sys.constraint(x));
        }
        best = best.max((sys.gamma.powi(t as i32) * sys.reward(&traj[t])).min(c));
    }
    best
}

#[test]
fn drone_rollout_matches_reference_integrator() {
    let sys = SystemSpec::preset("drone-race-lite").unwrap();
    let params = DroneParams::default();
    // Free (px, py) of slice 1; the ego starts behind and beside the opponent.
    for (px, py) in [(0.2, -2.6), (-0.8, -1.0), (1.4, -3.3), (0.0, -0.4)] {
        let x0 = sys.embed(&[px, py]);
        let reference = reference_trajectory(&params, &x0, sys.dt, sys.horizon, sys.control_limit);
        let mut ego = sys.ego_controller();
        let mut opp = sys.opponent_controller().unwrap();
        let traj = reachcal::env::rollout(&sys, &x0, ego.as_mut(), Some(opp.as_mut())).unwrap();
        assert_eq!(traj.states.len(), reference.len());
        for (a, b) in traj.states.iter().zip(&reference) {
            for (u, v) in a.iter().zip(b) {
                assert!((u - v).abs() < 1e-12, "state mismatch at ({px}, {py}): {u} vs {v}");
            }
        }
        let label = ground_truth_label(&sys, &x0).unwrap();
        assert!((label.value - brute_value(&sys, &reference)).abs() < 1e-12);
    }
}

#[test]
fn drone_slice1_grid_signs_match_reference() {
    let sys = SystemSpec::preset("drone-race-lite").unwrap();
    let params = DroneParams::default();
    let grid = build_truth_grid(&sys, &[41, 41]).unwrap();
    let mut inside = 0;
    for i in (0..grid.len()).step_by(7) {
        let x = grid.state(i);
        let reference = reference_trajectory(&params, &x, sys.dt, sys.horizon, sys.control_limit);
        let v = brute_value(&sys, &reference);
        assert_eq!(v > 0.0, grid.truth_sign(i) > 0, "sign differs at {x:?}");
        inside += usize::from(v > 0.0);
    }
    // Both classes appear on the slice.
    assert!(inside > 0 && inside < grid.len().div_ceil(7));
}
