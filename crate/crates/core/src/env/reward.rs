use serde::{Deserialize, Serialize};

use super::{Event, Scenario, UavState};
use crate::geometry::Vec3;

/// Constants of the six-term reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    /// Multiplier on the distance penalties r1 and r3.
    pub scale_dist: f64,
    pub collect: f64,
    pub return_home: f64,
    pub collision: f64,
    pub out_of_bounds: f64,
}

impl RewardConfig {
    /// Unscaled distance penalties, as in the original reward design.
    pub fn unscaled() -> Self {
        Self { scale_dist: 1.0, ..Self::default() }
    }
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            scale_dist: 0.01,
            collect: 100.0,
            return_home: 100.0,
            collision: -100.0,
            out_of_bounds: -200.0,
        }
    }
}

/// Reward for arriving in `next` with `event` while pursuing `goal`.
///
/// While items remain the distance term is measured to the goal (r1); once
/// everything is collected it is measured to the depot (r3). Event terms are
/// added on top.
pub fn reward(next: &UavState, event: Event, goal: Vec3, scenario: &Scenario, cfg: &RewardConfig) -> f64 {
    let k = scenario.num_items();
    let dist_term = if next.collected.is_complete(k) {
        -next.position.distance(scenario.depot) * cfg.scale_dist
    } else {
        -next.position.distance(goal) * cfg.scale_dist
    };
    let event_term = match event {
        Event::None => 0.0,
        Event::Collected(_) => cfg.collect,
        Event::Returned => cfg.return_home,
        Event::Collided(_) => cfg.collision,
        Event::OutOfBounds => cfg.out_of_bounds,
    };
    dist_term + event_term
}
