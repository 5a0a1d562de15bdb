//! Full missions: visiting order, leg-by-leg flight, verification and the
//! scheme comparison.

mod verify;

pub use verify::{verify_mission, Violation, ViolationKind};

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ddpg::{goal_sequence, lower_bound_slots, train, Hyperparams, PolicyParameters};
use crate::env::{Collected, Env, Event, Goal, RewardConfig, Scenario, StepOutcome, UavState};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::mpc::{MpcConfig, MpcPlanner};
use crate::tsp::{distance_matrix, solve_lk, tour_length, LkParams, Tour};

/// One executed slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub slot: u64,
    pub position: Vec3,
    pub velocity: Vec3,
    /// Acceleration realized over the slot.
    pub accel: Vec3,
    pub event: Event,
}

impl Sample {
    pub fn from_outcome(out: &StepOutcome) -> Self {
        Self {
            slot: out.next_state.slot,
            position: out.next_state.position,
            velocity: out.next_state.velocity,
            accel: out.applied_accel,
            event: out.event,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Position at slot 0, at rest.
    pub start: Vec3,
    pub delta: f64,
    pub samples: Vec<Sample>,
}

const CSV_HEADER: &str = "n,x,y,z,vx,vy,vz,ax,ay,az,event";

impl Trajectory {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.delta
    }

    /// CSV with a leading `start` row for slot 0.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.samples.len() + 2));
        out.push_str(CSV_HEADER);
        out.push('\n');
        let p = self.start;
        out.push_str(&format!("0,{},{},{},0,0,0,0,0,0,start\n", p.x, p.y, p.z));
        for s in &self.samples {
            let (p, v, a) = (s.position, s.velocity, s.accel);
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                s.slot,
                p.x,
                p.y,
                p.z,
                v.x,
                v.y,
                v.z,
                a.x,
                a.y,
                a.z,
                s.event.label()
            ));
        }
        out
    }

    pub fn from_csv(text: &str, delta: f64) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let bad = |line: usize, msg: String| Error::Parse(format!("line {}: {msg}", line + 1));
        match lines.next() {
            Some((_, h)) if h.trim() == CSV_HEADER => {}
            Some((i, h)) => return Err(bad(i, format!("expected header `{CSV_HEADER}`, got `{h}`"))),
            None => return Err(Error::Parse("trajectory file is empty".into())),
        }
        let mut start = None;
        let mut samples = Vec::new();
        for (i, line) in lines {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 11 {
                return Err(bad(i, format!("expected 11 columns, found {}", cols.len())));
            }
            let slot: u64 = cols[0].parse().map_err(|_| bad(i, format!("bad slot `{}`", cols[0])))?;
            let mut nums = [0.0; 9];
            for (k, c) in cols[1..10].iter().enumerate() {
                nums[k] = c.parse().map_err(|_| bad(i, format!("bad number `{c}`")))?;
            }
            let v3 = |o: usize| Vec3::new(nums[o], nums[o + 1], nums[o + 2]);
            if cols[10] == "start" {
                if start.is_some() || !samples.is_empty() || slot != 0 {
                    return Err(bad(i, "the start row must come first, at slot 0".into()));
                }
                start = Some(v3(0));
                continue;
            }
            let event = Event::parse(cols[10]).ok_or_else(|| bad(i, format!("unknown event `{}`", cols[10])))?;
            samples.push(Sample { slot, position: v3(0), velocity: v3(3), accel: v3(6), event });
        }
        let start = start.ok_or_else(|| Error::Parse("trajectory has no start row".into()))?;
        Ok(Self { start, delta, samples })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "lkh-ddpg")]
    LkhDdpg,
    #[serde(rename = "ddpg-random")]
    DdpgRandom,
    #[serde(rename = "mpc")]
    Mpc,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::LkhDdpg, Scheme::DdpgRandom, Scheme::Mpc];

    pub fn label(self) -> &'static str {
        match self {
            Scheme::LkhDdpg => "lkh-ddpg",
            Scheme::DdpgRandom => "ddpg-random",
            Scheme::Mpc => "mpc",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.label() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown scheme `{s}`")))
    }
}

/// Outcome of flying one leg.
#[derive(Debug, Clone, PartialEq)]
pub struct Leg {
    pub samples: Vec<Sample>,
    pub state: UavState,
    /// The leg ended with its goal's collection or return event.
    pub reached: bool,
    pub last_event: Event,
}

impl Leg {
    pub fn steps(&self) -> usize {
        self.samples.len()
    }
}

/// Anything that picks an acceleration for a state and goal.
pub trait Controller {
    fn act(&mut self, state: &UavState, goal: Goal, scenario: &Scenario) -> Result<Vec3>;
    /// Called at the start of every leg.
    fn begin_leg(&mut self) {}
}

/// Greedy (noise-free) execution of a trained policy.
pub struct PolicyController<'a>(pub &'a PolicyParameters);

impl Controller for PolicyController<'_> {
    fn act(&mut self, state: &UavState, goal: Goal, scenario: &Scenario) -> Result<Vec3> {
        self.0.act(state, goal, scenario)
    }
}

impl Controller for MpcPlanner {
    fn act(&mut self, state: &UavState, goal: Goal, scenario: &Scenario) -> Result<Vec3> {
        Ok(self.plan_step(state, scenario.goal_position(goal), scenario))
    }

    fn begin_leg(&mut self) {
        self.reset();
    }
}

/// Flies one leg until its goal event, a terminal failure or `step_cap` slots.
///
/// With `terminal_brake`, once the UAV is inside the collection radius and
/// one slot of braking can stop it, the controller is bypassed and the
/// velocity is cancelled so the hover condition holds on the next slot.
pub fn fly_leg<C: Controller + ?Sized>(
    ctrl: &mut C,
    state: UavState,
    goal: Goal,
    scenario: &Scenario,
    step_cap: u64,
    terminal_brake: bool,
) -> Result<Leg> {
    let env = Env::new(scenario, RewardConfig::default());
    let target = scenario.goal_position(goal);
    ctrl.begin_leg();
    let mut st = state;
    let mut samples = Vec::new();
    let mut last_event = Event::None;
    while (samples.len() as u64) < step_cap {
        let accel = if terminal_brake && brake_applies(&st, target, scenario) {
            st.velocity * (-1.0 / scenario.delta)
        } else {
            ctrl.act(&st, goal, scenario)?
        };
        let out = env.step(&st, accel, goal)?;
        samples.push(Sample::from_outcome(&out));
        st = out.next_state;
        last_event = out.event;
        match out.event {
            Event::Collected(_) | Event::Returned => return Ok(Leg { samples, state: st, reached: true, last_event }),
            e if e.is_terminal() => break,
            _ => {}
        }
    }
    Ok(Leg { samples, state: st, reached: false, last_event })
}

/// Inside the collection radius with a speed one slot of full braking can cancel.
pub fn brake_applies(state: &UavState, target: Vec3, scenario: &Scenario) -> bool {
    state.position.distance(target) <= scenario.epsilon && state.velocity.norm() <= scenario.a_max * scenario.delta
}

/// Slot budget for one leg: four times its lower bound.
pub fn leg_step_cap(from: Vec3, to: Vec3, scenario: &Scenario) -> u64 {
    4 * lower_bound_slots(from, &[to], scenario).max(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionResult {
    pub scheme: Scheme,
    /// Item indices in visiting order.
    pub order: Vec<usize>,
    /// Straight-line length of the closed tour in that order, meters.
    pub tour_length: f64,
    pub trajectory: Trajectory,
    pub mission_time: f64,
    pub collected: Collected,
    pub returned: bool,
    pub leg_times: Vec<f64>,
}

impl MissionResult {
    pub fn success(&self) -> bool {
        self.returned
    }

    pub fn metrics(&self, k: usize, seed: u64) -> MetricsRecord {
        MetricsRecord {
            scheme: self.scheme,
            k,
            seed,
            mission_time_s: self.mission_time,
            success: self.success(),
            tour_length_m: self.tour_length,
        }
    }
}

/// Flies the legs for `order` and the return home with `ctrl`.
pub fn run_mission<C: Controller + ?Sized>(
    scheme: Scheme,
    scenario: &Scenario,
    order: &[usize],
    ctrl: &mut C,
    terminal_brake: bool,
) -> Result<MissionResult> {
    scenario.validate()?;
    check_order(order, scenario.num_items())?;
    let d = distance_matrix(scenario.depot, &scenario.items)?;
    let tour_len = tour_length(&Tour::from_item_order(order), &d)?;

    let mut state = UavState::at_rest(scenario.depot);
    let mut samples = Vec::new();
    let mut leg_times = Vec::new();
    let mut returned = false;
    for goal in goal_sequence(order) {
        let target = scenario.goal_position(goal);
        let cap = leg_step_cap(state.position, target, scenario);
        let leg = fly_leg(ctrl, state, goal, scenario, cap, terminal_brake)?;
        leg_times.push(leg.steps() as f64 * scenario.delta);
        samples.extend_from_slice(&leg.samples);
        state = leg.state;
        if !leg.reached {
            break;
        }
        returned = leg.last_event == Event::Returned;
    }
    let trajectory = Trajectory { start: scenario.depot, delta: scenario.delta, samples };
    Ok(MissionResult {
        scheme,
        order: order.to_vec(),
        tour_length: tour_len,
        mission_time: trajectory.duration(),
        trajectory,
        collected: state.collected,
        returned,
        leg_times,
    })
}

fn check_order(order: &[usize], k: usize) -> Result<()> {
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted != (0..k).collect::<Vec<_>>() {
        return Err(Error::InvalidInput(format!("order {order:?} is not a permutation of 0..{k}")));
    }
    Ok(())
}

/// Visiting order from the Lin-Kernighan tour over depot and items.
pub fn lkh_order(scenario: &Scenario, seed: u64, lk: &LkParams) -> Result<Vec<usize>> {
    let d = distance_matrix(scenario.depot, &scenario.items)?;
    Ok(solve_lk(&d, seed, lk)?.item_order())
}

/// Uniformly random visiting order.
pub fn random_order(k: usize, order_seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(order_seed));
    order
}

/// Knobs shared by the three schemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeConfig {
    pub hp: Hyperparams,
    pub mpc: MpcConfig,
    pub lk: LkParams,
    /// Apply the terminal braking step when flying learned policies.
    pub policy_terminal_brake: bool,
    /// Fly MPC missions in nearest-neighbor order instead of the LK order.
    pub mpc_nearest_neighbor: bool,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            hp: Hyperparams::default(),
            mpc: MpcConfig::default(),
            lk: LkParams::default(),
            policy_terminal_brake: true,
            mpc_nearest_neighbor: false,
        }
    }
}

impl SchemeConfig {
    /// Default knobs with the desk training preset.
    pub fn desk() -> Self {
        Self { hp: Hyperparams::desk(), ..Self::default() }
    }
}

/// Trains the shared policy on the LK order and flies the LK order greedily.
pub fn run_lkh_ddpg(scenario: &Scenario, cfg: &SchemeConfig) -> Result<(MissionResult, PolicyParameters)> {
    let order = lkh_order(scenario, cfg.hp.seed, &cfg.lk)?;
    let (policy, _) = train(scenario, &order, &cfg.hp)?;
    let result = run_mission(Scheme::LkhDdpg, scenario, &order, &mut PolicyController(&policy), cfg.policy_terminal_brake)?;
    Ok((result, policy))
}

pub fn fly_lkh_ddpg(scenario: &Scenario, policy: &PolicyParameters, cfg: &SchemeConfig) -> Result<MissionResult> {
    let order = lkh_order(scenario, cfg.hp.seed, &cfg.lk)?;
    run_mission(Scheme::LkhDdpg, scenario, &order, &mut PolicyController(policy), cfg.policy_terminal_brake)
}

/// Same policy, uniformly random visiting order drawn from `order_seed`.
pub fn run_ddpg_random_order(
    scenario: &Scenario,
    policy: &PolicyParameters,
    order_seed: u64,
    cfg: &SchemeConfig,
) -> Result<MissionResult> {
    let order = random_order(scenario.num_items(), order_seed);
    run_mission(Scheme::DdpgRandom, scenario, &order, &mut PolicyController(policy), cfg.policy_terminal_brake)
}

pub fn run_mpc_mission(scenario: &Scenario, cfg: &MpcConfig, order: &[usize], seed: u64) -> Result<MissionResult> {
    cfg.validate()?;
    let mut planner = MpcPlanner::new(*cfg, seed);
    run_mission(Scheme::Mpc, scenario, order, &mut planner, true)
}

/// One line of the metrics output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub scheme: Scheme,
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
    pub mission_time_s: f64,
    pub success: bool,
    pub tour_length_m: f64,
}

impl MetricsRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("metrics serialize")
    }
}

/// Per-seed runs of all three schemes on one scenario.
#[derive(Debug, Clone)]
pub struct SeedRuns {
    pub seed: u64,
    pub results: Vec<MissionResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub scheme: Scheme,
    pub runs: usize,
    pub mean_time_s: f64,
    pub min_time_s: f64,
    pub max_time_s: f64,
    pub success_rate: f64,
    pub mean_tour_length_m: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ComparisonTable {
    pub rows: Vec<MetricsRecord>,
}

impl ComparisonTable {
    pub fn summary(&self) -> Vec<SchemeSummary> {
        Scheme::ALL
            .into_iter()
            .filter_map(|scheme| {
                let rows: Vec<&MetricsRecord> = self.rows.iter().filter(|r| r.scheme == scheme).collect();
                if rows.is_empty() {
                    return None;
                }
                let n = rows.len() as f64;
                let times = rows.iter().map(|r| r.mission_time_s);
                Some(SchemeSummary {
                    scheme,
                    runs: rows.len(),
                    mean_time_s: times.clone().sum::<f64>() / n,
                    min_time_s: times.clone().fold(f64::INFINITY, f64::min),
                    max_time_s: times.fold(f64::NEG_INFINITY, f64::max),
                    success_rate: rows.iter().filter(|r| r.success).count() as f64 / n,
                    mean_tour_length_m: rows.iter().map(|r| r.tour_length_m).sum::<f64>() / n,
                })
            })
            .collect()
    }

    pub fn to_json_lines(&self) -> String {
        self.rows.iter().map(|r| r.to_json_line() + "\n").collect()
    }
}

/// Runs the schemes in `schemes` for one seed. The learned policy is trained
/// once, on the LK order, and shared by both learned schemes.
pub fn run_schemes(scenario: &Scenario, seed: u64, schemes: &[Scheme], cfg: &SchemeConfig) -> Result<SeedRuns> {
    let mut cfg = cfg.clone();
    cfg.hp.seed = seed;
    let lk = lkh_order(scenario, seed, &cfg.lk)?;
    let needs_policy = schemes.iter().any(|s| matches!(s, Scheme::LkhDdpg | Scheme::DdpgRandom));
    let policy = if needs_policy { Some(train(scenario, &lk, &cfg.hp)?.0) } else { None };
    let mut results = Vec::new();
    for &scheme in schemes {
        let r = match scheme {
            Scheme::LkhDdpg => run_mission(
                scheme,
                scenario,
                &lk,
                &mut PolicyController(policy.as_ref().expect("trained")),
                cfg.policy_terminal_brake,
            )?,
            Scheme::DdpgRandom => run_ddpg_random_order(scenario, policy.as_ref().expect("trained"), seed, &cfg)?,
            Scheme::Mpc => {
                let order = if cfg.mpc_nearest_neighbor {
                    let d = distance_matrix(scenario.depot, &scenario.items)?;
                    crate::tsp::nearest_neighbor_tour(&d).item_order()
                } else {
                    lk.clone()
                };
                run_mpc_mission(scenario, &cfg.mpc, &order, seed)?
            }
        };
        results.push(r);
    }
    Ok(SeedRuns { seed, results })
}

pub fn compare_schemes(scenario: &Scenario, seeds: &[u64], cfg: &SchemeConfig) -> Result<ComparisonTable> {
    if seeds.is_empty() {
        return Err(Error::InvalidInput("compare_schemes needs at least one seed".into()));
    }
    let k = scenario.num_items();
    let mut table = ComparisonTable::default();
    for &seed in seeds {
        let runs = run_schemes(scenario, seed, &Scheme::ALL, cfg)?;
        table.rows.extend(runs.results.iter().map(|r| r.metrics(k, seed)));
    }
    Ok(table)
}
