use serde::{Deserialize, Serialize};

use super::{Controller, SystemSpec};
use crate::error::{Error, Result};
use crate::hypothesis::LabeledSample;

/// States `x_0 ..= x_T` of one closed-loop rollout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// `r` and `c` evaluated along a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardConstraintEval {
    pub r_values: Vec<f64>,
    pub c_values: Vec<f64>,
}

/// Simulate `horizon` steps of the double-integrator stack from `x0`.
///
/// Controls are clamped per axis to `±control_limit`; positions advance
/// with the pre-update velocity. Agents beyond the first use `opponent`,
/// or coast when it is `None`.
pub fn rollout(
    system: &SystemSpec,
    x0: &[f64],
    ego: &mut dyn Controller,
    mut opponent: Option<&mut dyn Controller>,
) -> Result<Trajectory> {
    system.check_state(x0)?;
    let agents = system.agents();
    let limit = system.control_limit;
    let dt = system.dt;

    ego.reset(x0);
    if let Some(opp) = opponent.as_deref_mut() {
        opp.reset(x0);
    }

    let mut states = Vec::with_capacity(system.horizon + 1);
    states.push(x0.to_vec());
    let mut controls: Vec<Vec<f64>> = agents.iter().map(|a| vec![0.0; a.axes]).collect();

    for step in 1..=system.horizon {
        let current = states.last().expect("trajectory starts non-empty");
        for (k, u) in controls.iter_mut().enumerate() {
            match (k, opponent.as_deref_mut()) {
                (0, _) => ego.control(current, u),
                (_, Some(opp)) => opp.control(current, u),
                (_, None) => u.fill(0.0),
            }
        }

        let mut next = current.clone();
        for (agent, u) in agents.iter().zip(&controls) {
            for axis in 0..agent.axes {
                let pi = agent.offset + axis;
                let vi = agent.offset + agent.axes + axis;
                let ua = u[axis].clamp(-limit, limit);
                next[pi] = current[pi] + current[vi] * dt;
                next[vi] = current[vi] + ua * dt;
            }
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::RolloutDivergence { step });
        }
        states.push(next);
    }
    Ok(Trajectory { states })
}

/// Evaluate `r` and `c` at every state of a trajectory.
pub fn evaluate(system: &SystemSpec, traj: &Trajectory) -> RewardConstraintEval {
    RewardConstraintEval {
        r_values: traj.states.iter().map(|x| system.reward(x)).collect(),
        c_values: traj.states.iter().map(|x| system.constraint(x)).collect(),
    }
}

/// Discounted reach-avoid value
/// `max_t min(γ^t r_t, min_{τ<=t} γ^τ c_τ)` in one pass.
pub fn reach_avoid_value(evals: &RewardConstraintEval, gamma: f64) -> f64 {
    assert_eq!(
        evals.r_values.len(),
        evals.c_values.len(),
        "reward and constraint sequences must be aligned"
    );
    let mut best = f64::NEG_INFINITY;
    let mut running_c = f64::INFINITY;
    let mut discount = 1.0;
    for (r, c) in evals.r_values.iter().zip(&evals.c_values) {
        running_c = running_c.min(discount * c);
        best = best.max((discount * r).min(running_c));
        discount *= gamma;
    }
    best
}

/// Roll out the system's policies from `x` and label it with its
/// reach-avoid value. This is the expensive oracle.
pub fn ground_truth_label(system: &SystemSpec, x: &[f64]) -> Result<LabeledSample> {
    let mut ego = system.ego_controller();
    let mut opp = system.opponent_controller();
    let traj = rollout(system, x, ego.as_mut(), opp.as_mut().map(|o| o.as_mut() as &mut dyn Controller))?;
    let evals = evaluate(system, &traj);
    Ok(LabeledSample { x: x.to_vec(), value: reach_avoid_value(&evals, system.gamma) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{SlicePreset, ZeroControl};
    use proptest::prelude::*;

    fn brute_force(r: &[f64], c: &[f64], gamma: f64) -> f64 {
        let mut discounts = Vec::with_capacity(r.len());
        let mut g = 1.0;
        for _ in 0..r.len() {
            discounts.push(g);
            g *= gamma;
        }
        let mut best = f64::NEG_INFINITY;
        for t in 0..r.len() {
            let mut cmin = f64::INFINITY;
            for tau in 0..=t {
                cmin = cmin.min(discounts[tau] * c[tau]);
            }
            best = best.max((discounts[t] * r[t]).min(cmin));
        }
        best
    }

    fn eval(r: &[f64], c: &[f64]) -> RewardConstraintEval {
        RewardConstraintEval { r_values: r.to_vec(), c_values: c.to_vec() }
    }

    #[test]
    fn constant_violation_dominates() {
        let v = reach_avoid_value(&eval(&[1.0; 3], &[-0.5; 3]), 0.9);
        assert_eq!(v, -0.5);
    }

    #[test]
    fn single_step_is_plain_min() {
        assert_eq!(reach_avoid_value(&eval(&[0.3], &[0.7]), 0.9), 0.3);
    }

    #[test]
    fn coasting_positions_are_exact_euler() {
        let mut sys = SystemSpec::preset("di1d").unwrap();
        sys.horizon = 2;
        let traj = rollout(&sys, &[0.0, 1.0], &mut ZeroControl, None).unwrap();
        let p: Vec<f64> = traj.states.iter().map(|s| s[0]).collect();
        assert_eq!(p, vec![0.0, 0.1, 0.2]);
        assert!(traj.states.iter().all(|s| s[1] == 1.0));
    }

    #[test]
    fn zero_velocity_zero_control_is_fixed_point() {
        let sys = SystemSpec::preset("di2d").unwrap();
        let x0 = vec![0.3, -0.2, 0.0, 0.0];
        let traj = rollout(&sys, &x0, &mut ZeroControl, None).unwrap();
        assert_eq!(traj.len(), sys.horizon + 1);
        assert!(traj.states.iter().all(|s| s == &x0));
    }

    #[test]
    fn out_of_bounds_start_is_rejected() {
        let sys = SystemSpec::preset("di1d").unwrap();
        assert!(rollout(&sys, &[2.0, 0.0], &mut ZeroControl, None).is_err());
    }

    struct Blowup;
    impl Controller for Blowup {
        fn reset(&mut self, _x0: &[f64]) {}
        fn control(&mut self, _state: &[f64], u: &mut [f64]) {
            u.fill(f64::NAN);
        }
    }

    #[test]
    fn divergence_reports_step() {
        let sys = SystemSpec::preset("di1d").unwrap();
        match rollout(&sys, &[0.0, 0.0], &mut Blowup, None) {
            Err(Error::RolloutDivergence { step }) => assert_eq!(step, 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn label_below_initial_constraint_violation() {
        let sys = SystemSpec::preset("drone-race-lite")
            .unwrap()
            .with_slice_preset(SlicePreset::Slice1Alt)
            .unwrap();
        // Altitude 0.45 breaks the 0.3 ceiling at t = 0.
        let x = sys.embed(&[0.0, -1.0, 0.45]);
        let c0 = sys.constraint(&x);
        assert!(c0 < 0.0);
        let z = ground_truth_label(&sys, &x).unwrap();
        assert!(z.value < 0.0 && z.value <= c0);
    }

    #[test]
    fn label_at_satisfied_start() {
        // Already past the goal with the wall behind: the t = 0 term is
        // min(r, c) and coasting forward can only discount it.
        let sys = SystemSpec::preset("di1d").unwrap();
        let x = [0.8, 0.0];
        let z = ground_truth_label(&sys, &x).unwrap();
        assert_eq!(z.value, sys.reward(&x).min(sys.constraint(&x)));
    }

    #[test]
    fn rollout_is_deterministic() {
        let sys = SystemSpec::preset("drone-race-lite").unwrap();
        let x = sys.embed(&[0.3, -1.7]);
        let a = ground_truth_label(&sys, &x).unwrap();
        let b = ground_truth_label(&sys, &x).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }

    proptest! {
        #[test]
        fn one_pass_equals_brute_force(
            pairs in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..=21),
            gamma in 0.01f64..0.999,
        ) {
            let (r, c): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let v = reach_avoid_value(&eval(&r, &c), gamma);
            prop_assert_eq!(v.to_bits(), brute_force(&r, &c, gamma).to_bits());
        }

        #[test]
        fn monotone_in_reward_and_constraint(
            pairs in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..=21),
            bumps in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 21),
            gamma in 0.01f64..0.999,
        ) {
            let (r, c): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let base = reach_avoid_value(&eval(&r, &c), gamma);
            let r_up: Vec<f64> = r.iter().zip(&bumps).map(|(v, b)| v + b.0).collect();
            let c_up: Vec<f64> = c.iter().zip(&bumps).map(|(v, b)| v + b.1).collect();
            prop_assert!(reach_avoid_value(&eval(&r_up, &c), gamma) >= base);
            prop_assert!(reach_avoid_value(&eval(&r, &c_up), gamma) >= base);
        }

        #[test]
        fn initial_violation_caps_value(
            pairs in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..=21),
            c0 in -2.0f64..-1e-6,
            gamma in 0.01f64..0.999,
        ) {
            let (r, mut c): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            c[0] = c0;
            prop_assert!(reach_avoid_value(&eval(&r, &c), gamma) <= c0);
        }
    }
}
