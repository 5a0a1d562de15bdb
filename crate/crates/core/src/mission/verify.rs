use std::fmt;

use super::Trajectory;
use crate::env::{check_collision, Event, Scenario, KINEMATIC_TOL};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ViolationKind {
    NotCollected(usize),
    CollectedTwice(usize),
    /// A collection event without hovering inside the radius.
    CollectedWithoutHover(usize),
    NotReturned,
    Speed(f64),
    Accel(f64),
    /// Position does not follow from the previous position and velocity.
    Inconsistent(f64),
    Collision(usize),
    OutOfBounds,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub slot: u64,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "slot {}: ", self.slot)?;
        match self.kind {
            ViolationKind::NotCollected(i) => write!(f, "item {i} never collected"),
            ViolationKind::CollectedTwice(i) => write!(f, "item {i} collected more than once"),
            ViolationKind::CollectedWithoutHover(i) => write!(f, "item {i} collected without hovering within epsilon"),
            ViolationKind::NotReturned => write!(f, "mission does not end hovering within epsilon of the depot"),
            ViolationKind::Speed(s) => write!(f, "speed {s} exceeds v_max"),
            ViolationKind::Accel(a) => write!(f, "acceleration {a} exceeds a_max"),
            ViolationKind::Inconsistent(e) => write!(f, "position off the integrated path by {e} m"),
            ViolationKind::Collision(j) => write!(f, "segment enters obstacle {j}"),
            ViolationKind::OutOfBounds => write!(f, "position outside the world"),
        }
    }
}

/// Checks a flown trajectory against the mission constraints: (a) each item
/// collected exactly once while hovering within epsilon, (b) the last slot
/// hovers within epsilon of the depot with every item collected, (c) speed
/// and acceleration bounds, (d) no segment enters an obstacle, (e) every
/// position inside the world. Kinematic and geometric checks are
/// recomputed from positions, not read from the recorded events.
pub fn verify_mission(traj: &Trajectory, scenario: &Scenario) -> Vec<Violation> {
    let mut out = Vec::new();
    let k = scenario.num_items();
    let mut push = |slot, kind| out.push(Violation { slot, kind });
    let mut first_collect: Vec<Option<u64>> = vec![None; k];

    let mut prev_p = traj.start;
    let mut prev_v = crate::geometry::Vec3::ZERO;
    for s in &traj.samples {
        let speed = s.velocity.norm();
        if speed > scenario.v_max + KINEMATIC_TOL {
            push(s.slot, ViolationKind::Speed(speed));
        }
        let realized = (s.velocity - prev_v) * (1.0 / traj.delta);
        let accel = realized.norm().max(s.accel.norm());
        if accel > scenario.a_max + KINEMATIC_TOL {
            push(s.slot, ViolationKind::Accel(accel));
        }
        // a hover snap zeroes the velocity after a move of up to the tolerance
        let snap = if s.velocity.is_zero() { scenario.hover_speed_tol * traj.delta } else { 0.0 };
        let err = (prev_p + s.velocity * traj.delta).distance(s.position);
        if err > snap + KINEMATIC_TOL * scenario.world_scale().max(1.0) {
            push(s.slot, ViolationKind::Inconsistent(err));
        }
        if let Some(j) = check_collision(prev_p, s.position, &scenario.obstacles) {
            push(s.slot, ViolationKind::Collision(j));
        }
        if !scenario.in_bounds(s.position) {
            push(s.slot, ViolationKind::OutOfBounds);
        }
        if let Event::Collected(i) = s.event {
            if i >= k {
                push(s.slot, ViolationKind::NotCollected(i));
            } else {
                if first_collect[i].is_some() {
                    push(s.slot, ViolationKind::CollectedTwice(i));
                }
                first_collect[i].get_or_insert(s.slot);
                if !s.velocity.is_zero() || s.position.distance(scenario.items[i]) > scenario.epsilon {
                    push(s.slot, ViolationKind::CollectedWithoutHover(i));
                }
            }
        }
        prev_p = s.position;
        prev_v = s.velocity;
    }

    let last_slot = traj.samples.last().map_or(0, |s| s.slot);
    for (i, c) in first_collect.iter().enumerate() {
        if c.is_none() {
            push(last_slot, ViolationKind::NotCollected(i));
        }
    }
    let home = traj.samples.last().is_some_and(|s| {
        s.velocity.is_zero() && s.position.distance(scenario.depot) <= scenario.epsilon
    });
    if !home || first_collect.iter().any(Option::is_none) {
        push(last_slot, ViolationKind::NotReturned);
    }
    out
}
