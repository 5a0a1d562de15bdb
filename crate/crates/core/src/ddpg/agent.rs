//! Actor and critic networks and the individual DDPG update rules.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::buffer::Transition;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::nn::{stack_rows, Mlp, Optimizer, OutputActivation};

/// Scale of the uniform initialization of both output layers.
const FINAL_LAYER_INIT: f64 = 3e-3;

/// The critic sees the action concatenated to the state at its input layer,
/// with the action divided by `a_max` so both parts are of unit scale.
pub const CRITIC_ACTION_LAYER: usize = 0;

/// Deterministic policy: state vector to acceleration, each axis squashed
/// into `[-a_max, a_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Actor {
    pub net: Mlp,
    pub a_max: f64,
}

impl Actor {
    pub fn new<R: Rng>(state_dim: usize, hidden: &[usize], a_max: f64, rng: &mut R) -> Self {
        let sizes = layer_sizes(state_dim, hidden, 3);
        Self { net: Mlp::new(&sizes, OutputActivation::Tanh, FINAL_LAYER_INIT, rng), a_max }
    }

    pub fn state_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn act(&self, state: &[f64]) -> Result<Vec3> {
        let y = self.net.forward_one(state)?;
        Ok(Vec3::new(y[0], y[1], y[2]) * self.a_max)
    }

    /// Normalized actions (`a / a_max`) for a batch of states.
    pub fn act_normalized(&self, states: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.net.forward(states)
    }
}

/// Action-value function `q(s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    pub net: Mlp,
    pub a_max: f64,
}

impl Critic {
    pub fn new<R: Rng>(state_dim: usize, hidden: &[usize], a_max: f64, rng: &mut R) -> Self {
        let sizes = layer_sizes(state_dim + 3, hidden, 1);
        Self { net: Mlp::new(&sizes, OutputActivation::Identity, FINAL_LAYER_INIT, rng), a_max }
    }

    pub fn state_dim(&self) -> usize {
        self.net.input_dim() - 3
    }

    pub fn value(&self, state: &[f64], action: Vec3) -> Result<f64> {
        if state.len() != self.state_dim() {
            return Err(Error::ShapeMismatch { expected: self.state_dim(), actual: state.len() });
        }
        let mut x = state.to_vec();
        x.extend((action * (1.0 / self.a_max)).to_array());
        Ok(self.net.forward_one(&x)?[0])
    }

    /// Values for a batch of states and normalized actions.
    pub fn values(&self, states: ArrayView2<'_, f64>, actions_norm: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        let x = concat(states, actions_norm);
        Ok(self.net.forward(x.view())?.column(0).to_owned())
    }
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut sizes = vec![input];
    sizes.extend_from_slice(hidden);
    sizes.push(output);
    sizes
}

fn concat(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    ndarray::concatenate(Axis(1), &[a, b]).expect("batch sizes agree")
}

/// A minibatch laid out as matrices.
pub struct Batch {
    pub states: Array2<f64>,
    /// Actions divided by `a_max`.
    pub actions: Array2<f64>,
    pub rewards: Vec<f64>,
    pub next_states: Array2<f64>,
    pub dones: Vec<bool>,
}

impl Batch {
    pub fn from_transitions(batch: &[&Transition], a_max: f64) -> Self {
        let dim = batch[0].state.len();
        let actions: Vec<[f64; 3]> = batch.iter().map(|t| (t.action * (1.0 / a_max)).to_array()).collect();
        Self {
            states: stack_rows(batch.iter().map(|t| t.state.as_slice()), dim),
            actions: stack_rows(actions.iter().map(|a| a.as_slice()), 3),
            rewards: batch.iter().map(|t| t.reward).collect(),
            next_states: stack_rows(batch.iter().map(|t| t.next_state.as_slice()), dim),
            dones: batch.iter().map(|t| t.done).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Temporal-difference targets `r + gamma * q'(s', pi'(s')) * (1 - done)`.
pub fn td_target(batch: &Batch, target_actor: &Actor, target_critic: &Critic, gamma: f64) -> Result<Vec<f64>> {
    let next_actions = target_actor.act_normalized(batch.next_states.view())?;
    let next_q = target_critic.values(batch.next_states.view(), next_actions.view())?;
    Ok(batch
        .rewards
        .iter()
        .zip(&batch.dones)
        .zip(next_q.iter())
        .map(|((&r, &d), &q)| if d { r } else { r + gamma * q })
        .collect())
}

/// Half mean-squared TD error and its gradient w.r.t. the critic parameters.
///
/// Returns `(mse, grad)` where `grad` is the gradient of `0.5 * mse`, i.e.
/// `(1/|B|) * sum (q - U) * dq/dw`.
pub fn critic_loss_grad(critic: &Critic, batch: &Batch, targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    let x = concat(batch.states.view(), batch.actions.view());
    let cache = critic.net.forward_cached(x.view())?;
    let q = cache.output().column(0);
    let n = batch.len() as f64;
    let err: Vec<f64> = q.iter().zip(targets).map(|(q, u)| q - u).collect();
    let mse = err.iter().map(|e| e * e).sum::<f64>() / n;
    let d_out = Array2::from_shape_fn((batch.len(), 1), |(i, _)| err[i] / n);
    let (grad, _) = critic.net.backward(&cache, d_out.view());
    Ok((mse, grad))
}

/// Mean critic value of the actor's own actions and its gradient w.r.t. the
/// actor parameters (deterministic policy gradient, chained through the
/// critic's action input).
pub fn actor_objective_grad(actor: &Actor, critic: &Critic, states: ArrayView2<'_, f64>) -> Result<(f64, Vec<f64>)> {
    let actor_cache = actor.net.forward_cached(states)?;
    let actions = actor_cache.output();
    let x = concat(states, actions.view());
    let critic_cache = critic.net.forward_cached(x.view())?;
    let n = states.nrows() as f64;
    let mean_q = critic_cache.output().sum() / n;
    let d_q = Array2::from_elem((states.nrows(), 1), 1.0 / n);
    let (_, d_x) = critic.net.backward(&critic_cache, d_q.view());
    let sd = critic.state_dim();
    let d_action = d_x.slice(s![.., sd..sd + 3]);
    let (grad, _) = actor.net.backward(&actor_cache, d_action);
    Ok((mean_q, grad))
}

fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::TrainingHalted { episode: 0, reason: format!("non-finite {what}") })
    }
}

/// One descent step on the critic's TD error. Returns the loss before the step.
pub fn update_critic(critic: &mut Critic, opt: &mut Optimizer, batch: &Batch, targets: &[f64]) -> Result<f64> {
    let (loss, mut grad) = critic_loss_grad(critic, batch, targets)?;
    if !loss.is_finite() {
        return Err(Error::TrainingHalted { episode: 0, reason: format!("critic loss is {loss}") });
    }
    ensure_finite(&grad, "critic gradient")?;
    opt.step(critic.net.params_mut(), &mut grad);
    Ok(loss)
}

/// One ascent step on the mean critic value of the policy's actions. The
/// critic is left untouched. Returns the objective before the step.
pub fn update_actor(actor: &mut Actor, opt: &mut Optimizer, critic: &Critic, states: ArrayView2<'_, f64>) -> Result<f64> {
    let (objective, grad) = actor_objective_grad(actor, critic, states)?;
    ensure_finite(&grad, "actor gradient")?;
    let mut descent: Vec<f64> = grad.iter().map(|g| -g).collect();
    opt.step(actor.net.params_mut(), &mut descent);
    Ok(objective)
}

/// `target <- (1 - rate) * target + rate * online`, parameter by parameter.
pub fn soft_update(target: &mut Mlp, online: &Mlp, rate: f64) {
    assert!(target.same_architecture(online), "soft update needs identical architectures");
    for (t, &o) in target.params_mut().iter_mut().zip(online.params()) {
        *t = (1.0 - rate) * *t + rate * o;
    }
}

/// Adds i.i.d. Gaussian noise of standard deviation `sigma` to each axis and
/// clamps back into `[-bound, bound]`.
pub fn explore<R: Rng>(action: Vec3, sigma: f64, bound: f64, rng: &mut R) -> Vec3 {
    if sigma <= 0.0 {
        return action.clamp_axes(bound);
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    let noisy = Vec3::new(
        action.x + normal.sample(rng),
        action.y + normal.sample(rng),
        action.z + normal.sample(rng),
    );
    noisy.clamp_axes(bound)
}

/// Multiplicative per-episode decay of the exploration scale with a floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSchedule {
    pub initial: f64,
    pub decay: f64,
    pub floor: f64,
}

impl NoiseSchedule {
    pub fn sigma_at(&self, episode: usize) -> f64 {
        (self.initial * self.decay.powi(episode as i32)).max(self.floor.min(self.initial))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(3)
    }

    fn batch(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Batch {
        let ts: Vec<Transition> = (0..n)
            .map(|i| Transition {
                state: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                action: Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), 1.0),
                reward: rng.random_range(-2.0..2.0),
                next_state: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                done: i % 3 == 0,
            })
            .collect();
        let refs: Vec<&Transition> = ts.iter().collect();
        Batch::from_transitions(&refs, 10.0)
    }

    #[test]
    fn zero_actor_gives_zero_action() {
        let mut actor = Actor::new(4, &[8], 10.0, &mut rng());
        actor.net.params_mut().iter_mut().for_each(|p| *p = 0.0);
        assert_eq!(actor.act(&[0.3, -0.2, 1.0, 0.5]).unwrap(), Vec3::ZERO);
    }

    #[test]
    fn actor_output_within_axis_bound() {
        let mut r = rng();
        let mut actor = Actor::new(4, &[8], 10.0, &mut r);
        actor.net.params_mut().iter_mut().for_each(|p| *p *= 1000.0);
        for _ in 0..50 {
            let s: Vec<f64> = (0..4).map(|_| r.random_range(-5.0..5.0)).collect();
            let a = actor.act(&s).unwrap();
            assert!(a.max_abs() <= 10.0);
        }
    }

    #[test]
    fn actor_rejects_wrong_shape() {
        let actor = Actor::new(4, &[8], 10.0, &mut rng());
        assert!(matches!(actor.act(&[1.0]), Err(Error::ShapeMismatch { .. })));
        let critic = Critic::new(4, &[8], 10.0, &mut rng());
        assert!(matches!(critic.value(&[1.0], Vec3::ZERO), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn zero_critic_gives_zero_value() {
        let mut critic = Critic::new(4, &[8], 10.0, &mut rng());
        critic.net.params_mut().iter_mut().for_each(|p| *p = 0.0);
        assert_eq!(critic.value(&[1.0, 2.0, 3.0, 4.0], Vec3::new(1.0, 1.0, 1.0)).unwrap(), 0.0);
    }

    #[test]
    fn critic_depends_on_action() {
        let critic = Critic::new(4, &[16, 16], 10.0, &mut rng());
        let s = [0.1, 0.2, -0.3, 0.4];
        let q0 = critic.value(&s, Vec3::ZERO).unwrap();
        let q1 = critic.value(&s, Vec3::new(5.0, -5.0, 2.0)).unwrap();
        assert_ne!(q0, q1);
    }

    #[test]
    fn td_target_formula() {
        let mut r = rng();
        let b = batch(6, 4, &mut r);
        let ta = Actor::new(4, &[8], 10.0, &mut r);
        let tc = Critic::new(4, &[8], 10.0, &mut r);
        let u = td_target(&b, &ta, &tc, 0.99).unwrap();
        for i in 0..6 {
            let s = b.next_states.row(i).to_vec();
            let q = tc.value(&s, ta.act(&s).unwrap()).unwrap();
            let expect = if b.dones[i] { b.rewards[i] } else { b.rewards[i] + 0.99 * q };
            assert!((u[i] - expect).abs() < 1e-12);
        }
        let u0 = td_target(&b, &ta, &tc, 0.0).unwrap();
        assert_eq!(u0, b.rewards);
    }

    #[test]
    fn td_target_worked_example() {
        // r = 1, gamma = 0.99, constant target critic 2.0 -> 2.98
        let mut r = rng();
        let mut b = batch(1, 4, &mut r);
        b.rewards = vec![1.0];
        b.dones = vec![false];
        let ta = Actor::new(4, &[8], 10.0, &mut r);
        let mut tc = Critic::new(4, &[8], 10.0, &mut r);
        let n = tc.net.num_params();
        tc.net.params_mut().iter_mut().for_each(|p| *p = 0.0);
        tc.net.params_mut()[n - 1] = 2.0;
        let u = td_target(&b, &ta, &tc, 0.99).unwrap();
        assert!((u[0] - 2.98).abs() < 1e-12);
    }

    #[test]
    fn critic_at_minimum_is_unchanged() {
        let mut r = rng();
        let b = batch(5, 4, &mut r);
        let mut critic = Critic::new(4, &[8], 10.0, &mut r);
        let targets = critic.values(b.states.view(), b.actions.view()).unwrap().to_vec();
        let before = critic.clone();
        let mut opt = Optimizer::new(Default::default(), 1e-3, Some(1.0), critic.net.num_params());
        let loss = update_critic(&mut critic, &mut opt, &b, &targets).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(critic, before);
    }

    #[test]
    fn critic_step_decreases_loss() {
        let mut r = rng();
        let b = batch(16, 4, &mut r);
        let mut critic = Critic::new(4, &[16, 16], 10.0, &mut r);
        let targets: Vec<f64> = (0..16).map(|_| r.random_range(-1.0..1.0)).collect();
        let mut opt = Optimizer::new(Default::default(), 1e-4, None, critic.net.num_params());
        let before = update_critic(&mut critic, &mut opt, &b, &targets).unwrap();
        let (after, _) = critic_loss_grad(&critic, &b, &targets).unwrap();
        assert!(after <= before);
    }

    #[test]
    fn actor_gradient_zero_when_critic_ignores_action() {
        let mut r = rng();
        let b = batch(8, 4, &mut r);
        let actor = Actor::new(4, &[8], 10.0, &mut r);
        let mut critic = Critic::new(4, &[8], 10.0, &mut r);
        // zero the first-layer weights attached to the three action inputs
        let n_in = 7;
        for row in 0..8 {
            for col in 4..7 {
                critic.net.params_mut()[row * n_in + col] = 0.0;
            }
        }
        let (_, grad) = actor_objective_grad(&actor, &critic, b.states.view()).unwrap();
        assert!(grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn actor_step_increases_mean_value() {
        let mut r = rng();
        let b = batch(16, 4, &mut r);
        let mut actor = Actor::new(4, &[16, 16], 10.0, &mut r);
        let critic = Critic::new(4, &[16, 16], 10.0, &mut r);
        let critic_before = critic.clone();
        let mut opt = Optimizer::new(Default::default(), 1e-4, None, actor.net.num_params());
        let before = update_actor(&mut actor, &mut opt, &critic, b.states.view()).unwrap();
        let (after, _) = actor_objective_grad(&actor, &critic, b.states.view()).unwrap();
        assert!(after >= before);
        assert_eq!(critic, critic_before);
    }

    #[test]
    fn soft_update_extremes_and_example() {
        let sizes = [2, 3, 1];
        let online = Mlp::from_params(&sizes, OutputActivation::Identity, vec![1.0; 13]).unwrap();
        let mut target = Mlp::zeros(&sizes, OutputActivation::Identity);
        soft_update(&mut target, &online, 0.0);
        assert!(target.params().iter().all(|p| *p == 0.0));
        soft_update(&mut target, &online, 0.01);
        assert!(target.params().iter().all(|p| (*p - 0.01).abs() < 1e-15));
        soft_update(&mut target, &online, 1.0);
        assert_eq!(target.params(), online.params());
    }

    #[test]
    fn explore_zero_sigma_is_identity() {
        let a = Vec3::new(1.0, -2.0, 3.0);
        assert_eq!(explore(a, 0.0, 10.0, &mut rng()), a);
    }

    #[test]
    fn explore_respects_bound() {
        let mut r = rng();
        for _ in 0..1000 {
            let a = explore(Vec3::new(9.5, -9.5, 0.0), 3.0, 10.0, &mut r);
            assert!(a.max_abs() <= 10.0);
        }
    }

    #[test]
    fn explore_noise_stddev() {
        let mut r = ChaCha8Rng::seed_from_u64(99);
        let n = 100_000;
        let sigma = 0.7;
        let xs: Vec<f64> = (0..n).map(|_| explore(Vec3::ZERO, sigma, 1e6, &mut r).x).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        assert!((var.sqrt() - sigma).abs() / sigma < 0.02);
    }

    #[test]
    fn noise_schedule_decays_to_floor() {
        let s = NoiseSchedule { initial: 3.0, decay: 0.995, floor: 0.5 };
        assert_eq!(s.sigma_at(0), 3.0);
        assert!((s.sigma_at(1) - 2.985).abs() < 1e-12);
        assert_eq!(s.sigma_at(10_000), 0.5);
    }
}
