//! World model: scenario geometry, discrete-time point-mass kinematics,
//! collision and collection predicates, and the shaped reward.
//!
//! One slot of length `delta` advances the UAV as
//!
//! ```text
//! a  = clamp_norm(accel, a_max)
//! v' = clamp_norm(v + delta * a, v_max)
//! q' = q + delta * v'
//! v' = 0 if |v'| <= hover_speed_tol            (hover snap, after the move)
//! ```
//!
//! The same function drives training, MPC rollouts and mission execution.

mod collision;
mod observation;
mod reward;

pub use collision::{check_collision, segment_collides};
pub use observation::{encode_state, state_dim, StateVector};
pub use reward::{reward, RewardConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Vec3};

/// Tolerance used when checking speed and acceleration bounds.
pub const KINEMATIC_TOL: f64 = 1e-9;

/// Maximum number of items a scenario may carry (width of the collection bitmap).
pub const MAX_ITEMS: usize = 64;

/// Static mission description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub world_bounds: Aabb,
    pub depot: Vec3,
    pub items: Vec<Vec3>,
    pub obstacles: Vec<Aabb>,
    pub v_max: f64,
    pub a_max: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub hover_speed_tol: f64,
}

impl Scenario {
    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn in_bounds(&self, p: Vec3) -> bool {
        in_bounds(p, self)
    }

    pub fn goal_position(&self, goal: Goal) -> Vec3 {
        match goal {
            Goal::Item(i) => self.items[i],
            Goal::Depot => self.depot,
        }
    }

    /// Length of the world-box diagonal.
    pub fn world_diagonal(&self) -> f64 {
        (self.world_bounds.p_max - self.world_bounds.p_min).norm()
    }

    /// Largest edge of the world box; used to normalize encoded states.
    pub fn world_scale(&self) -> f64 {
        (self.world_bounds.p_max - self.world_bounds.p_min).max_abs()
    }

    /// Checks every scenario invariant, naming the offending field.
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::scenario(name, format!("must be finite and > 0, got {v}")))
            }
        };
        positive("v_max", self.v_max)?;
        positive("a_max", self.a_max)?;
        positive("delta", self.delta)?;
        positive("epsilon", self.epsilon)?;
        if !(self.hover_speed_tol.is_finite() && self.hover_speed_tol >= 0.0) {
            return Err(Error::scenario("hover_speed_tol", "must be finite and >= 0"));
        }
        if !self.world_bounds.is_proper() {
            return Err(Error::scenario("world_bounds", "p_min must be < p_max on every axis"));
        }
        if self.items.is_empty() {
            return Err(Error::scenario("items", "at least one item is required"));
        }
        if self.items.len() > MAX_ITEMS {
            return Err(Error::scenario(
                "items",
                format!("at most {MAX_ITEMS} items are supported, got {}", self.items.len()),
            ));
        }
        for (i, ob) in self.obstacles.iter().enumerate() {
            let field = format!("obstacles[{i}]");
            if !ob.is_proper() {
                return Err(Error::scenario(field, "p_min must be < p_max on every axis"));
            }
            if !self.world_bounds.contains_box(ob) {
                return Err(Error::scenario(field, "obstacle must lie within world_bounds"));
            }
        }
        let check_point = |field: String, p: Vec3| -> Result<()> {
            if !p.is_finite() {
                return Err(Error::scenario(field, "coordinates must be finite"));
            }
            if !self.in_bounds(p) {
                return Err(Error::scenario(field, format!("{p} lies outside world_bounds")));
            }
            if let Some(j) = self.obstacles.iter().position(|ob| ob.contains(p)) {
                return Err(Error::scenario(field, format!("{p} lies inside obstacles[{j}]")));
            }
            Ok(())
        };
        check_point("depot".to_string(), self.depot)?;
        for (i, &w) in self.items.iter().enumerate() {
            check_point(format!("items[{i}]"), w)?;
        }
        for i in 0..self.items.len() {
            for j in 0..i {
                if self.items[i].distance(self.items[j]) <= self.epsilon {
                    return Err(Error::scenario(
                        format!("items[{i}]"),
                        format!("within epsilon of items[{j}]"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Componentwise containment in the world box, boundary inclusive.
pub fn in_bounds(p: Vec3, scenario: &Scenario) -> bool {
    scenario.world_bounds.contains(p)
}

/// Set of collected items, one bit per item index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
pub struct Collected(u64);

impl Collected {
    pub fn none() -> Self {
        Collected(0)
    }

    pub fn all(k: usize) -> Self {
        if k >= 64 {
            Collected(u64::MAX)
        } else {
            Collected((1u64 << k) - 1)
        }
    }

    pub fn contains(self, item: usize) -> bool {
        self.0 >> item & 1 == 1
    }

    pub fn insert(&mut self, item: usize) {
        self.0 |= 1 << item;
    }

    pub fn count(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_complete(self, k: usize) -> bool {
        self.count() == k && self == Collected::all(k)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn from_bits(bits: u64) -> Self {
        Collected(bits)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UavState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub slot: u64,
    pub collected: Collected,
}

impl UavState {
    /// Hovering at `position` before the first slot.
    pub fn at_rest(position: Vec3) -> Self {
        Self { position, velocity: Vec3::ZERO, slot: 0, collected: Collected::none() }
    }

    pub fn is_hovering(&self) -> bool {
        self.velocity.is_zero()
    }
}

/// What the UAV is currently flying towards.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Goal {
    Item(usize),
    Depot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    None,
    Collected(usize),
    Collided(usize),
    OutOfBounds,
    Returned,
}

impl Event {
    /// Events that end an episode.
    pub fn is_terminal(self) -> bool {
        matches!(self, Event::Collided(_) | Event::OutOfBounds | Event::Returned)
    }

    pub fn label(self) -> String {
        match self {
            Event::None => "none".into(),
            Event::Collected(i) => format!("collected:{i}"),
            Event::Collided(j) => format!("collided:{j}"),
            Event::OutOfBounds => "out_of_bounds".into(),
            Event::Returned => "returned".into(),
        }
    }

    pub fn parse(s: &str) -> Option<Event> {
        match s {
            "none" => Some(Event::None),
            "out_of_bounds" => Some(Event::OutOfBounds),
            "returned" => Some(Event::Returned),
            _ => {
                let (kind, idx) = s.split_once(':')?;
                let idx: usize = idx.parse().ok()?;
                match kind {
                    "collected" => Some(Event::Collected(idx)),
                    "collided" => Some(Event::Collided(idx)),
                    _ => None,
                }
            }
        }
    }
}

/// Result of integrating one slot of the kinematics, before any event logic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub position: Vec3,
    pub velocity: Vec3,
    /// Acceleration actually realized over the slot, `(v' - v) / delta`.
    pub applied_accel: Vec3,
}

/// Advances position and velocity by one slot.
///
/// The commanded acceleration is clamped to `a_max`, the new velocity to
/// `v_max`, and the position moves with the new velocity. Then, if that
/// speed is at most `hover_speed_tol` and stopping is reachable within the
/// acceleration bound, the velocity is set to exactly zero. The move uses the
/// unsnapped velocity, so commands below the tolerance still creep.
pub fn integrate(position: Vec3, velocity: Vec3, accel: Vec3, scenario: &Scenario) -> Kinematics {
    let delta = scenario.delta;
    let a = accel.clamp_norm(scenario.a_max);
    let mut v_next = (velocity + a * delta).clamp_norm(scenario.v_max);
    let position = position + v_next * delta;
    if v_next.norm() <= scenario.hover_speed_tol && velocity.norm() <= scenario.a_max * delta {
        v_next = Vec3::ZERO;
    }
    Kinematics {
        position,
        velocity: v_next,
        applied_accel: (v_next - velocity) * (1.0 / delta),
    }
}

/// Hover-to-collect predicate: zero velocity and within epsilon.
pub fn check_collection(state: &UavState, item: Vec3, scenario: &Scenario) -> bool {
    state.is_hovering() && state.position.distance(item) <= scenario.epsilon
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next_state: UavState,
    pub applied_accel: Vec3,
    pub reward: f64,
    /// True on a terminal event or when the step cap is reached.
    pub done: bool,
    pub event: Event,
}

impl StepOutcome {
    /// Episode ended because of the step cap rather than a terminal event.
    pub fn truncated(&self) -> bool {
        self.done && !self.event.is_terminal()
    }
}

/// A scenario bound to reward constants and an optional per-episode step cap.
#[derive(Debug, Clone, Copy)]
pub struct Env<'a> {
    pub scenario: &'a Scenario,
    pub rewards: RewardConfig,
    pub step_cap: Option<u64>,
}

impl<'a> Env<'a> {
    pub fn new(scenario: &'a Scenario, rewards: RewardConfig) -> Self {
        Self { scenario, rewards, step_cap: None }
    }

    pub fn with_step_cap(mut self, cap: u64) -> Self {
        self.step_cap = Some(cap);
        self
    }

    /// Executes one slot towards `goal`.
    ///
    /// Events are checked in the order out-of-bounds, collision, collection,
    /// return, so a step produces at most one of them.
    pub fn step(&self, state: &UavState, accel: Vec3, goal: Goal) -> Result<StepOutcome> {
        if !accel.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite acceleration {accel}")));
        }
        let sc = self.scenario;
        let kin = integrate(state.position, state.velocity, accel, sc);
        let mut next = UavState {
            position: kin.position,
            velocity: kin.velocity,
            slot: state.slot + 1,
            collected: state.collected,
        };

        let k = sc.num_items();
        let event = if !sc.in_bounds(next.position) {
            Event::OutOfBounds
        } else if let Some(j) = check_collision(state.position, next.position, &sc.obstacles) {
            Event::Collided(j)
        } else {
            match goal {
                Goal::Item(i)
                    if !next.collected.contains(i) && check_collection(&next, sc.items[i], sc) =>
                {
                    next.collected.insert(i);
                    Event::Collected(i)
                }
                _ if next.collected.is_complete(k) && check_collection(&next, sc.depot, sc) => {
                    Event::Returned
                }
                _ => Event::None,
            }
        };

        let r = reward(&next, event, sc.goal_position(goal), sc, &self.rewards);
        let capped = self.step_cap.is_some_and(|cap| next.slot >= cap);
        Ok(StepOutcome {
            next_state: next,
            applied_accel: kin.applied_accel,
            reward: r,
            done: event.is_terminal() || capped,
            event,
        })
    }
}

/// Continuous-time minimum flight time between two rest points at distance
/// `dist` under bang-bang acceleration with a speed cap. The discrete model
/// cannot beat it.
pub fn min_flight_time(dist: f64, v_max: f64, a_max: f64) -> f64 {
    if dist <= 0.0 {
        return 0.0;
    }
    let ramp_dist = v_max * v_max / a_max;
    if dist <= ramp_dist {
        2.0 * (dist / a_max).sqrt()
    } else {
        dist / v_max + v_max / a_max
    }
}
