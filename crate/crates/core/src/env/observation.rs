use std::cmp::Ordering;

use super::{Scenario, UavState};
use crate::geometry::Vec3;

/// Fixed-length, world-normalized observation fed to the networks.
///
/// Layout: position (3), velocity in units of one slot of full
/// acceleration (3), `n_obs` nearest obstacles as relative center and
/// half-extents (6 each), relative goal (3), near-goal vector (3), distance
/// to goal (1), fraction of items still to collect (1).
///
/// The relative goal is measured in stopping distances `v_max^2 / a_max`
/// and saturates at unit norm. The near-goal vector is the same direction
/// measured in units of two collection radii, also saturating at one, so the
/// last meters of an approach stay visible. The distance entry carries the
/// magnitude in world units.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn state_dim(n_obs: usize) -> usize {
    3 + 3 + 6 * n_obs + 3 + 3 + 1 + 1
}

pub fn encode_state(state: &UavState, goal: Vec3, scenario: &Scenario, n_obs: usize) -> StateVector {
    let scale = scenario.world_scale();
    let center = scenario.world_bounds.center();
    let mut out = Vec::with_capacity(state_dim(n_obs));

    let p = state.position;
    out.extend(((p - center) * (2.0 / scale)).to_array());
    out.extend((state.velocity * (1.0 / (scenario.a_max * scenario.delta))).to_array());

    let mut ranked: Vec<(f64, usize)> = scenario
        .obstacles
        .iter()
        .enumerate()
        .map(|(i, ob)| (ob.center().distance(p), i))
        .collect();
    ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
    let sentinel = scenario.world_diagonal() / scale;
    for slot in 0..n_obs {
        match ranked.get(slot) {
            Some(&(_, i)) => {
                let ob = &scenario.obstacles[i];
                out.extend(((ob.center() - p) * (1.0 / scale)).to_array());
                out.extend((ob.half_extents() * (1.0 / scale)).to_array());
            }
            None => out.extend([sentinel; 6]),
        }
    }

    let to_goal = goal - p;
    // goal direction, with magnitude in stopping distances, saturating at one
    let stop = (scenario.v_max * scenario.v_max / scenario.a_max).max(f64::MIN_POSITIVE);
    out.extend((to_goal * (1.0 / to_goal.norm().max(stop))).to_array());
    let near = (2.0 * scenario.epsilon).max(f64::MIN_POSITIVE);
    out.extend((to_goal * (1.0 / to_goal.norm().max(near))).to_array());
    out.push(to_goal.norm() / scale);
    let k = scenario.num_items();
    out.push((k - state.collected.count()) as f64 / k as f64);
    StateVector(out)
}
