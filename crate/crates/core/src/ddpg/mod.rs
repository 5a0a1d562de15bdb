//! DDPG training of a goal-conditioned flight controller.
//!
//! One policy is trained per scenario. Its observation carries the current
//! goal, so the same network flies every leg of a mission, whatever the
//! visiting order. Each episode alternates `collect_ops` environment steps
//! with `update_ops` minibatch updates of critic, actor and their targets.

mod agent;
mod buffer;
mod policy_io;

pub use agent::{
    actor_objective_grad, critic_loss_grad, explore, soft_update, td_target, update_actor, update_critic, Actor,
    Batch, Critic, NoiseSchedule, CRITIC_ACTION_LAYER,
};
pub use buffer::{ReplayBuffer, Transition};
pub use policy_io::{read_policy, write_policy};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{encode_state, min_flight_time, state_dim, Env, Goal, RewardConfig, Scenario, UavState};
use crate::error::{Error, Result};
use crate::mission::brake_applies;
use crate::geometry::Vec3;
use crate::nn::{Optimizer, OptimizerKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub target_rate: f64,
    pub episodes: usize,
    /// Step cap per episode; `None` uses four times the straight-line
    /// lower bound of the episode's legs.
    pub steps_per_episode: Option<usize>,
    pub collect_ops: usize,
    pub update_ops: usize,
    pub batch_size: usize,
    /// Initial exploration stddev as a fraction of `a_max`.
    pub noise_frac: f64,
    pub noise_decay: f64,
    /// Exploration floor as a fraction of `a_max`.
    pub noise_floor_frac: f64,
    pub buffer_capacity: usize,
    /// Transitions to accumulate before the first update.
    pub warmup: usize,
    pub hidden: Vec<usize>,
    /// Number of nearest obstacles in the observation.
    pub n_obs: usize,
    pub optimizer: OptimizerKind,
    pub grad_clip: Option<f64>,
    /// Probability that an episode starts partway through the mission,
    /// hovering at an earlier waypoint with the preceding items collected.
    pub random_start: f64,
    /// Probability that an episode visits the items in a fresh random order
    /// instead of the given tour.
    pub order_mix: f64,
    pub rewards: RewardConfig,
    /// Multiplier applied to environment rewards before they enter the
    /// replay buffer, keeping critic targets of order one.
    pub reward_scale: f64,
    /// Replace the action by a full stop once the UAV is inside the
    /// collection radius and slow enough to stop in one slot.
    pub terminal_brake: bool,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            gamma: 0.99,
            target_rate: 0.005,
            episodes: 500,
            steps_per_episode: None,
            collect_ops: 1,
            update_ops: 1,
            batch_size: 128,
            noise_frac: 0.3,
            noise_decay: 0.995,
            noise_floor_frac: 0.05,
            buffer_capacity: 100_000,
            warmup: 128,
            hidden: vec![128, 128],
            n_obs: 4,
            optimizer: OptimizerKind::Sgd,
            grad_clip: Some(1.0),
            random_start: 0.0,
            order_mix: 0.0,
            rewards: RewardConfig::default(),
            reward_scale: 1.0,
            terminal_brake: false,
            seed: 0,
        }
    }
}

impl Hyperparams {
    /// Settings that train reliably on small_desk-sized worlds within a
    /// minute per run. The plain defaults above are the reference values.
    pub fn desk() -> Self {
        Self {
            gamma: 0.9,
            batch_size: 64,
            hidden: vec![64, 64],
            update_ops: 4,
            optimizer: OptimizerKind::Adam,
            random_start: 0.5,
            order_mix: 0.5,
            rewards: RewardConfig { scale_dist: 0.1, ..RewardConfig::default() },
            reward_scale: 0.01,
            terminal_brake: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("hyperparameter {m}")));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.target_rate > 0.0 && self.target_rate <= 1.0) {
            return bad("target_rate must lie in (0, 1]");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be > 0");
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 || self.collect_ops == 0 {
            return bad("batch_size, buffer_capacity and collect_ops must be > 0");
        }
        if !(self.noise_frac >= 0.0 && self.noise_floor_frac >= 0.0 && self.noise_decay > 0.0) {
            return bad("noise parameters must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.random_start) || !(0.0..=1.0).contains(&self.order_mix) {
            return bad("random_start and order_mix must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Online and target networks produced by training.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParameters {
    pub actor: Actor,
    pub critic: Critic,
    pub target_actor: Actor,
    pub target_critic: Critic,
    pub n_obs: usize,
    pub seed: u64,
    pub scenario_hash: u64,
}

impl PolicyParameters {
    pub fn init(scenario: &Scenario, hp: &Hyperparams, rng: &mut impl Rng) -> Self {
        let dim = state_dim(hp.n_obs);
        let actor = Actor::new(dim, &hp.hidden, scenario.a_max, rng);
        let critic = Critic::new(dim, &hp.hidden, scenario.a_max, rng);
        Self {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            n_obs: hp.n_obs,
            seed: hp.seed,
            scenario_hash: scenario_hash(scenario),
        }
    }

    /// Greedy (noise-free) acceleration for `state` heading to `goal`.
    pub fn act(&self, state: &UavState, goal: Goal, scenario: &Scenario) -> Result<Vec3> {
        let s = encode_state(state, scenario.goal_position(goal), scenario, self.n_obs);
        self.actor.act(s.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    #[serde(rename = "return")]
    pub episode_return: f64,
    pub steps: u64,
    pub success: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeLog>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("episode,return,steps,success\n");
        for e in &self.episodes {
            out.push_str(&format!("{},{},{},{}\n", e.episode, e.episode_return, e.steps, e.success as u8));
        }
        out
    }

    /// Mean return over a trailing window ending at `episode` (inclusive).
    pub fn moving_average_return(&self, episode: usize, window: usize) -> f64 {
        let end = (episode + 1).min(self.episodes.len());
        let start = end.saturating_sub(window.max(1));
        let slice = &self.episodes[start..end];
        slice.iter().map(|e| e.episode_return).sum::<f64>() / slice.len().max(1) as f64
    }

    pub fn success_rate(&self, last: usize) -> f64 {
        let n = self.episodes.len();
        let slice = &self.episodes[n.saturating_sub(last)..];
        slice.iter().filter(|e| e.success).count() as f64 / slice.len().max(1) as f64
    }
}

/// Stable 64-bit FNV-1a hash of the scenario's JSON form.
pub fn scenario_hash(scenario: &Scenario) -> u64 {
    let text = serde_json::to_string(scenario).expect("scenario serializes");
    text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Lower bound on the slots needed to fly the waypoint chain starting at
/// `start`, including one hover slot per waypoint.
pub fn lower_bound_slots(start: Vec3, waypoints: &[Vec3], scenario: &Scenario) -> u64 {
    let mut prev = start;
    let mut slots = 0u64;
    for &w in waypoints {
        let t = min_flight_time(prev.distance(w), scenario.v_max, scenario.a_max);
        slots += (t / scenario.delta).ceil() as u64 + 1;
        prev = w;
    }
    slots
}

/// Goal sequence for visiting `order` (item indices) and returning home.
pub fn goal_sequence(order: &[usize]) -> Vec<Goal> {
    order.iter().map(|&i| Goal::Item(i)).chain(std::iter::once(Goal::Depot)).collect()
}

struct Episode {
    state: UavState,
    goals: Vec<Goal>,
    cursor: usize,
    cap: u64,
}

impl Episode {
    fn goal(&self) -> Goal {
        self.goals[self.cursor.min(self.goals.len() - 1)]
    }
}

fn start_episode(scenario: &Scenario, tour_order: &[usize], hp: &Hyperparams, rng: &mut ChaCha8Rng) -> Episode {
    let k = scenario.num_items();
    let mut order = tour_order.to_vec();
    if hp.order_mix > 0.0 && rng.random::<f64>() < hp.order_mix {
        order.shuffle(rng);
    }
    let skip = if hp.random_start > 0.0 && rng.random::<f64>() < hp.random_start {
        rng.random_range(0..=k)
    } else {
        0
    };
    let mut state = UavState::at_rest(if skip == 0 { scenario.depot } else { scenario.items[order[skip - 1]] });
    for &i in &order[..skip] {
        state.collected.insert(i);
    }
    let goals = goal_sequence(&order[skip..]);
    let waypoints: Vec<Vec3> = goals.iter().map(|&g| scenario.goal_position(g)).collect();
    let cap = match hp.steps_per_episode {
        Some(p) => p as u64,
        None => 4 * lower_bound_slots(state.position, &waypoints, scenario).max(1),
    };
    Episode { state, goals, cursor: 0, cap }
}

/// Trains a goal-conditioned actor-critic on `scenario`, flying the items
/// in `tour_order` (item indices) and returning to the depot.
///
/// Deterministic for a fixed `hp.seed`.
pub fn train(scenario: &Scenario, tour_order: &[usize], hp: &Hyperparams) -> Result<(PolicyParameters, TrainingLog)> {
    train_with_progress(scenario, tour_order, hp, |_| {})
}

pub fn train_with_progress<F>(
    scenario: &Scenario,
    tour_order: &[usize],
    hp: &Hyperparams,
    mut progress: F,
) -> Result<(PolicyParameters, TrainingLog)>
where
    F: FnMut(&EpisodeLog),
{
    hp.validate()?;
    scenario.validate()?;
    let k = scenario.num_items();
    let mut sorted = tour_order.to_vec();
    sorted.sort_unstable();
    if sorted != (0..k).collect::<Vec<_>>() {
        return Err(Error::InvalidInput(format!("tour order {tour_order:?} is not a permutation of 0..{k}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut policy = PolicyParameters::init(scenario, hp, &mut rng);
    let mut actor_opt = Optimizer::new(hp.optimizer, hp.actor_lr, hp.grad_clip, policy.actor.net.num_params());
    let mut critic_opt = Optimizer::new(hp.optimizer, hp.critic_lr, hp.grad_clip, policy.critic.net.num_params());
    let mut buffer = ReplayBuffer::new(hp.buffer_capacity);
    let noise = NoiseSchedule {
        initial: hp.noise_frac * scenario.a_max,
        decay: hp.noise_decay,
        floor: hp.noise_floor_frac * scenario.a_max,
    };
    let mut log = TrainingLog::default();

    for episode in 0..hp.episodes {
        let sigma = noise.sigma_at(episode);
        let mut ep = start_episode(scenario, tour_order, hp, &mut rng);
        let env = Env::new(scenario, hp.rewards).with_step_cap(ep.cap);
        let mut s = encode_state(&ep.state, scenario.goal_position(ep.goal()), scenario, hp.n_obs);
        let mut ret = 0.0;
        let mut success = false;
        let mut done = false;

        while !done {
            for _ in 0..hp.collect_ops {
                let greedy = policy.actor.act(s.as_slice())?;
                let mut action = explore(greedy, sigma, scenario.a_max, &mut rng);
                if hp.terminal_brake && brake_applies(&ep.state, scenario.goal_position(ep.goal()), scenario) {
                    action = ep.state.velocity * (-1.0 / scenario.delta);
                }
                let out = env.step(&ep.state, action, ep.goal())?;
                if let crate::env::Event::Collected(_) = out.event {
                    ep.cursor += 1;
                }
                let s_next = encode_state(&out.next_state, scenario.goal_position(ep.goal()), scenario, hp.n_obs);
                buffer.push(Transition {
                    state: s.0,
                    action,
                    reward: out.reward * hp.reward_scale,
                    next_state: s_next.0.clone(),
                    done: out.event.is_terminal(),
                });
                ret += out.reward;
                success |= out.event == crate::env::Event::Returned;
                ep.state = out.next_state;
                s = s_next;
                if out.done {
                    done = true;
                    break;
                }
            }
            if buffer.len() >= hp.warmup.max(1) {
                for _ in 0..hp.update_ops {
                    let sample = buffer.sample(hp.batch_size, &mut rng);
                    let batch = Batch::from_transitions(&sample, scenario.a_max);
                    let halt = |e: Error| match e {
                        Error::TrainingHalted { reason, .. } => Error::TrainingHalted { episode, reason },
                        other => other,
                    };
                    let targets = td_target(&batch, &policy.target_actor, &policy.target_critic, hp.gamma)?;
                    update_critic(&mut policy.critic, &mut critic_opt, &batch, &targets).map_err(halt)?;
                    update_actor(&mut policy.actor, &mut actor_opt, &policy.critic, batch.states.view())
                        .map_err(halt)?;
                    soft_update(&mut policy.target_critic.net, &policy.critic.net, hp.target_rate);
                    soft_update(&mut policy.target_actor.net, &policy.actor.net, hp.target_rate);
                }
            }
        }

        let entry = EpisodeLog { episode, episode_return: ret, steps: ep.state.slot, success };
        progress(&entry);
        log.episodes.push(entry);
    }
    Ok((policy, log))
}
