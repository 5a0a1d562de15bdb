//! Receding-horizon baseline: cross-entropy search over acceleration
//! sequences, first action applied, replanned every slot.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::env::{check_collision, integrate, Goal, Scenario, UavState};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::mission::{fly_leg, Leg};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    pub horizon: usize,
    pub candidates: usize,
    pub elite_frac: f64,
    pub iterations: usize,
    pub w_goal: f64,
    /// Weight on the mean distance to the goal over the horizon. Without it
    /// the first action is nearly free and the closed loop wanders.
    pub w_path: f64,
    pub w_effort: f64,
    pub w_prox: f64,
    /// Obstacle clearance below which the proximity term starts, meters.
    pub margin: f64,
    /// Weight on terminal speed once the goal is within two collection radii.
    pub w_brake: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 8,
            candidates: 256,
            elite_frac: 0.1,
            iterations: 5,
            w_goal: 1.0,
            w_path: 1.0,
            w_effort: 1e-3,
            w_prox: 0.05,
            margin: 10.0,
            w_brake: 1.0,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.horizon >= 1
            && self.candidates >= 1
            && self.iterations >= 1
            && self.elite_frac > 0.0
            && self.elite_frac <= 1.0
            && [self.w_goal, self.w_path, self.w_effort, self.w_prox, self.w_brake, self.margin].iter().all(|w| *w >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid MPC configuration {self:?}")))
        }
    }

    fn elite_count(&self) -> usize {
        ((self.candidates as f64 * self.elite_frac).ceil() as usize).clamp(1, self.candidates)
    }
}

/// Predicted states of one candidate sequence, starting after the first slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    /// Realized accelerations, one per slot.
    pub accels: Vec<Vec3>,
    /// Obstacle clearance of each predicted position.
    pub clearances: Vec<f64>,
    /// No segment collides and no position leaves the world.
    pub feasible: bool,
    /// Smallest clearance to obstacles or world faces over the rollout.
    pub min_clearance: f64,
}

fn obstacle_clearance(p: Vec3, scenario: &Scenario) -> f64 {
    scenario.obstacles.iter().map(|ob| ob.distance_to(p)).fold(f64::INFINITY, f64::min)
}

fn wall_clearance(p: Vec3, scenario: &Scenario) -> f64 {
    let b = &scenario.world_bounds;
    let lo = p - b.p_min;
    let hi = b.p_max - p;
    [lo.x, lo.y, lo.z, hi.x, hi.y, hi.z].into_iter().fold(f64::INFINITY, f64::min)
}

/// Simulates `seq` from `(position, velocity)` with the environment's
/// kinematics, without rewards or events.
pub fn rollout(position: Vec3, velocity: Vec3, seq: &[Vec3], scenario: &Scenario) -> Rollout {
    let n = seq.len();
    let mut r = Rollout {
        positions: Vec::with_capacity(n),
        velocities: Vec::with_capacity(n),
        accels: Vec::with_capacity(n),
        clearances: Vec::with_capacity(n),
        feasible: true,
        min_clearance: f64::INFINITY,
    };
    let (mut p, mut v) = (position, velocity);
    for &a in seq {
        let kin = integrate(p, v, a, scenario);
        if !scenario.in_bounds(kin.position) || check_collision(p, kin.position, &scenario.obstacles).is_some() {
            r.feasible = false;
        }
        let c = obstacle_clearance(kin.position, scenario);
        r.min_clearance = r.min_clearance.min(c).min(wall_clearance(kin.position, scenario));
        r.clearances.push(c);
        r.positions.push(kin.position);
        r.velocities.push(kin.velocity);
        r.accels.push(kin.applied_accel);
        p = kin.position;
        v = kin.velocity;
    }
    r
}

/// Scalar cost of a rollout; infinite when it collides or leaves the world.
///
/// `braking` adds the terminal-speed term used close to the goal.
pub fn mpc_cost(r: &Rollout, goal: Vec3, cfg: &MpcConfig, braking: bool) -> f64 {
    if !r.feasible {
        return f64::INFINITY;
    }
    let Some(&end) = r.positions.last() else { return 0.0 };
    let path = r.positions.iter().map(|p| p.distance(goal)).sum::<f64>() / r.positions.len() as f64;
    let effort: f64 = r.accels.iter().map(|a| a.norm_squared()).sum();
    let prox: f64 = r.clearances.iter().map(|c| (cfg.margin - c).max(0.0).powi(2)).sum();
    let mut cost = cfg.w_goal * end.distance(goal) + cfg.w_path * path + cfg.w_effort * effort + cfg.w_prox * prox;
    if braking {
        cost += cfg.w_brake * r.velocities.last().map_or(0.0, |v| v.norm_squared());
    }
    cost
}

/// Index of the lowest-cost candidate (ties to the lower index), or, when
/// every candidate is infeasible, of the one keeping the largest clearance.
pub fn select_best(costs: &[f64], rollouts: &[Rollout]) -> usize {
    let best = (0..costs.len()).min_by(|&i, &j| costs[i].total_cmp(&costs[j]).then(i.cmp(&j))).expect("candidates");
    if costs[best].is_finite() {
        return best;
    }
    (0..rollouts.len())
        .max_by(|&i, &j| rollouts[i].min_clearance.total_cmp(&rollouts[j].min_clearance).then(j.cmp(&i)))
        .expect("candidates")
}

/// Braking sequence: cancel velocity as fast as the bound allows, then hold.
fn braking_sequence(velocity: Vec3, scenario: &Scenario, h: usize) -> Vec<Vec3> {
    let mut v = velocity;
    (0..h)
        .map(|_| {
            let a = (v * (-1.0 / scenario.delta)).clamp_norm(scenario.a_max);
            v = v + a * scenario.delta;
            a
        })
        .collect()
}

/// Damped approach: PD toward the goal with poles at 0 and 1/2.
fn approach_sequence(state: &UavState, goal: Vec3, scenario: &Scenario, h: usize) -> Vec<Vec3> {
    let d = scenario.delta;
    let (mut p, mut v) = (state.position, state.velocity);
    (0..h)
        .map(|_| {
            let a = ((goal - p) * (0.5 / (d * d)) - v * (1.0 / d)).clamp_norm(scenario.a_max);
            let kin = integrate(p, v, a, scenario);
            p = kin.position;
            v = kin.velocity;
            a
        })
        .collect()
}

/// Stateful planner: keeps its RNG and the previous best plan as a warm start.
#[derive(Debug, Clone)]
pub struct MpcPlanner {
    pub cfg: MpcConfig,
    rng: ChaCha8Rng,
    warm: Option<Vec<Vec3>>,
}

impl MpcPlanner {
    pub fn new(cfg: MpcConfig, seed: u64) -> Self {
        Self { cfg, rng: ChaCha8Rng::seed_from_u64(seed), warm: None }
    }

    /// Drops the warm start, e.g. when the goal changes.
    pub fn reset(&mut self) {
        self.warm = None;
    }

    /// First action of the best sequence found for `state` heading to `goal`.
    pub fn plan_step(&mut self, state: &UavState, goal: Vec3, scenario: &Scenario) -> Vec3 {
        let cfg = self.cfg;
        let h = cfg.horizon;
        let a_max = scenario.a_max;
        let braking = state.position.distance(goal) <= 2.0 * scenario.epsilon;

        let mut mean: Vec<Vec3> = match self.warm.take() {
            Some(prev) => prev.into_iter().skip(1).chain(std::iter::once(Vec3::ZERO)).collect(),
            None => vec![Vec3::ZERO; h],
        };
        let mut std = vec![Vec3::splat(0.5 * a_max); h];
        let toward = (goal - state.position).clamp_norm(1.0) * a_max;

        let mut best_seq = braking_sequence(state.velocity, scenario, h);
        let mut best_roll = rollout(state.position, state.velocity, &best_seq, scenario);
        let mut best_cost = mpc_cost(&best_roll, goal, &cfg, braking);

        for iter in 0..cfg.iterations {
            let mut seqs: Vec<Vec<Vec3>> = Vec::with_capacity(cfg.candidates);
            if iter == 0 {
                seqs.push(mean.clone());
                seqs.push(vec![toward; h]);
                seqs.push(approach_sequence(state, goal, scenario, h));
            }
            while seqs.len() < cfg.candidates {
                let seq = (0..h)
                    .map(|t| {
                        let z = Vec3::new(
                            StandardNormal.sample(&mut self.rng),
                            StandardNormal.sample(&mut self.rng),
                            StandardNormal.sample(&mut self.rng),
                        );
                        let s = std[t];
                        (mean[t] + Vec3::new(s.x * z.x, s.y * z.y, s.z * z.z)).clamp_axes(a_max)
                    })
                    .collect();
                seqs.push(seq);
            }
            let rolls: Vec<Rollout> =
                seqs.iter().map(|s| rollout(state.position, state.velocity, s, scenario)).collect();
            let costs: Vec<f64> = rolls.iter().map(|r| mpc_cost(r, goal, &cfg, braking)).collect();

            let i = select_best(&costs, &rolls);
            let improves = if best_cost.is_finite() || costs[i].is_finite() {
                costs[i] < best_cost
            } else {
                rolls[i].min_clearance > best_roll.min_clearance
            };
            if improves {
                best_cost = costs[i];
                best_seq = seqs[i].clone();
                best_roll = rolls[i].clone();
            }

            let mut order: Vec<usize> = (0..seqs.len()).collect();
            order.sort_by(|&a, &b| {
                costs[a]
                    .total_cmp(&costs[b])
                    .then(rolls[b].min_clearance.total_cmp(&rolls[a].min_clearance))
                    .then(a.cmp(&b))
            });
            let elites = &order[..cfg.elite_count()];
            let m = elites.len() as f64;
            for t in 0..h {
                let mu = elites.iter().fold(Vec3::ZERO, |acc, &e| acc + seqs[e][t]) * (1.0 / m);
                let var = elites.iter().fold(Vec3::ZERO, |acc, &e| {
                    let d = seqs[e][t] - mu;
                    acc + Vec3::new(d.x * d.x, d.y * d.y, d.z * d.z)
                }) * (1.0 / m);
                mean[t] = mu;
                std[t] = Vec3::new(var.x.sqrt(), var.y.sqrt(), var.z.sqrt()).component_max(Vec3::splat(1e-3 * a_max));
            }
        }
        let first = best_seq[0];
        self.warm = Some(best_seq);
        first
    }
}

/// Flies from `state` to `goal` under MPC until the goal's collection (or
/// return) event, a terminal failure, or `step_cap` slots. The final slot
/// inside the collection radius cancels the velocity outright.
pub fn run_mpc_leg(
    planner: &mut MpcPlanner,
    state: UavState,
    goal: Goal,
    scenario: &Scenario,
    step_cap: u64,
) -> Result<Leg> {
    fly_leg(planner, state, goal, scenario, step_cap, true)
}
