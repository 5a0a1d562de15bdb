use proptest::prelude::*;
use uavcol_core::env::{
    check_collection, check_collision, encode_state, in_bounds, integrate, reward, state_dim, Collected, Env, Event,
    Goal, RewardConfig, Scenario, UavState,
};
use uavcol_core::{Aabb, Vec3};

fn default_world() -> Scenario {
    Scenario {
        world_bounds: Aabb::new(Vec3::ZERO, Vec3::splat(1000.0)),
        depot: Vec3::ZERO,
        items: vec![Vec3::new(100.0, 0.0, 0.0), Vec3::new(0.0, 200.0, 0.0)],
        obstacles: vec![Aabb::new(Vec3::new(300.0, 300.0, 0.0), Vec3::new(400.0, 400.0, 100.0))],
        v_max: 50.0,
        a_max: 20.0,
        delta: 1.0,
        epsilon: 5.0,
        hover_speed_tol: 0.1,
    }
}

fn cube() -> Vec<Aabb> {
    vec![Aabb::new(Vec3::ZERO, Vec3::splat(10.0))]
}

/// Point membership written out per axis, independent of `Aabb::contains`.
fn inside(p: Vec3, b: &Aabb) -> bool {
    p.x >= b.p_min.x
        && p.x <= b.p_max.x
        && p.y >= b.p_min.y
        && p.y <= b.p_max.y
        && p.z >= b.p_min.z
        && p.z <= b.p_max.z
}

/// Dense sampling along the segment.
fn sampled_hit(from: Vec3, to: Vec3, b: &Aabb, spacing: f64) -> bool {
    let n = ((to - from).norm() / spacing).ceil().max(1.0) as usize;
    (0..=n).any(|i| inside(from + (to - from) * (i as f64 / n as f64), b))
}

#[test]
fn rest_at_origin_is_fixed_point() {
    let sc = default_world();
    let out = Env::new(&sc, RewardConfig::default()).step(&UavState::at_rest(Vec3::ZERO), Vec3::ZERO, Goal::Item(0)).unwrap();
    assert_eq!(out.next_state.position, Vec3::ZERO);
    assert_eq!(out.next_state.velocity, Vec3::ZERO);
    assert_eq!(out.next_state.slot, 1);
}

#[test]
fn forward_euler_step() {
    let sc = default_world();
    let kin = integrate(Vec3::ZERO, Vec3::new(3.0, 4.0, 0.0), Vec3::ZERO, &sc);
    assert_eq!(kin.position, Vec3::new(3.0, 4.0, 0.0));
}

#[test]
fn velocity_clamped_to_v_max() {
    let sc = default_world();
    let kin = integrate(Vec3::ZERO, Vec3::new(50.0, 0.0, 0.0), Vec3::new(20.0, 0.0, 0.0), &sc);
    assert!((kin.velocity.norm() - 50.0).abs() < 1e-12);
}

#[test]
fn non_finite_acceleration_rejected() {
    let sc = default_world();
    let env = Env::new(&sc, RewardConfig::default());
    assert!(env.step(&UavState::at_rest(Vec3::ZERO), Vec3::new(f64::NAN, 0.0, 0.0), Goal::Depot).is_err());
}

#[test]
fn collision_examples() {
    assert_eq!(check_collision(Vec3::splat(5.0), Vec3::splat(5.0), &cube()), Some(0));
    let safe = Vec3::new(5.0, 5.0, 11.0);
    assert_eq!(check_collision(safe, safe, &cube()), None);
    let (a, b) = (Vec3::new(-5.0, 5.0, 5.0), Vec3::new(15.0, 5.0, 5.0));
    assert_eq!(check_collision(a, b, &cube()), Some(0));
    assert!(sampled_hit(a, b, &cube()[0], 1e-3));
}

#[test]
fn collision_reports_first_obstacle() {
    let obs = vec![Aabb::new(Vec3::splat(50.0), Vec3::splat(60.0)), Aabb::new(Vec3::ZERO, Vec3::splat(10.0))];
    assert_eq!(check_collision(Vec3::splat(-1.0), Vec3::splat(100.0), &obs), Some(0));
}

#[test]
fn collection_examples() {
    let sc = default_world();
    let item = sc.items[0];
    assert!(check_collection(&UavState::at_rest(item), item, &sc));
    assert!(check_collection(&UavState::at_rest(item + Vec3::new(0.0, 5.0, 0.0)), item, &sc));
    let moving = UavState { velocity: Vec3::new(0.5, 0.0, 0.0), ..UavState::at_rest(item + Vec3::new(1.0, 0.0, 0.0)) };
    assert!(!check_collection(&moving, item, &sc));
}

#[test]
fn reward_examples() {
    let sc = default_world();
    let cfg = RewardConfig::unscaled();
    let at = UavState::at_rest(sc.items[0] + Vec3::new(12.0, 0.0, 0.0));
    assert_eq!(reward(&at, Event::None, sc.items[0], &sc, &cfg), -12.0);
    assert_eq!(reward(&at, Event::Collected(0), sc.items[0], &sc, &cfg), -12.0 + 100.0);
    assert_eq!(reward(&at, Event::Collided(0), sc.items[0], &sc, &cfg), -12.0 - 100.0);
    assert_eq!(reward(&at, Event::OutOfBounds, sc.items[0], &sc, &cfg), -12.0 - 200.0);
}

#[test]
fn reward_uses_depot_distance_once_all_collected() {
    let sc = default_world();
    let mut s = UavState::at_rest(Vec3::new(30.0, 40.0, 0.0));
    s.collected = Collected::all(2);
    // the goal passed in is ignored in favor of the depot
    assert_eq!(reward(&s, Event::None, sc.items[1], &sc, &RewardConfig::unscaled()), -50.0);
}

#[test]
fn in_bounds_examples() {
    let sc = default_world();
    assert!(in_bounds(Vec3::ZERO, &sc));
    assert!(!in_bounds(Vec3::new(1000.01, 0.0, 0.0), &sc));
    assert!(in_bounds(Vec3::splat(500.0), &sc));
}

#[test]
fn encoding_padding_and_goal_block() {
    let mut sc = default_world();
    sc.obstacles.clear();
    let s = encode_state(&UavState::at_rest(sc.items[0]), sc.items[0], &sc, 2);
    assert_eq!(s.len(), state_dim(2));
    let sentinel = sc.world_diagonal() / sc.world_scale();
    assert!(s.as_slice()[6..18].iter().all(|&x| x == sentinel));
    assert_eq!(&s.as_slice()[18..25], &[0.0; 7]);
}

#[test]
fn near_goal_block_saturates_at_two_radii() {
    let mut sc = default_world();
    sc.obstacles.clear();
    let near_block = |offset: f64| {
        let s = encode_state(&UavState::at_rest(sc.items[0] - Vec3::new(offset, 0.0, 0.0)), sc.items[0], &sc, 0);
        s.as_slice()[9..12].to_vec()
    };
    // epsilon 5 m, so the block saturates beyond 10 m
    assert!((near_block(3.0)[0] - 0.3).abs() < 1e-12);
    assert!((near_block(50.0)[0] - 1.0).abs() < 1e-12);
    assert_eq!(near_block(50.0)[1], 0.0);
}

#[test]
fn encoding_picks_nearest_obstacle() {
    let mut sc = default_world();
    let p = Vec3::splat(500.0);
    let far = Aabb::new(Vec3::new(519.0, 499.0, 499.0), Vec3::new(521.0, 501.0, 501.0));
    let near = Aabb::new(Vec3::new(509.0, 499.0, 499.0), Vec3::new(511.0, 501.0, 501.0));
    sc.obstacles = vec![far, near];
    let s = encode_state(&UavState::at_rest(p), sc.depot, &sc, 1);
    let expected_dx = (near.center() - p).x / sc.world_scale();
    assert!((s.as_slice()[6] - expected_dx).abs() < 1e-12);
}

#[test]
fn env_event_priority() {
    // leaving the world through an obstacle reports out-of-bounds
    let mut sc = default_world();
    sc.obstacles = vec![Aabb::new(Vec3::new(5.0, -1.0, -1.0), Vec3::new(8.0, 1.0, 1.0))];
    sc.world_bounds = Aabb::new(Vec3::splat(-1.0), Vec3::splat(1000.0));
    sc.depot = Vec3::ZERO;
    let env = Env::new(&sc, RewardConfig::default());
    let s = UavState { velocity: Vec3::new(0.0, 0.0, 0.0), ..UavState::at_rest(Vec3::ZERO) };
    let out = env.step(&s, Vec3::new(-20.0, 0.0, 0.0), Goal::Item(0)).unwrap();
    assert_eq!(out.event, Event::OutOfBounds);
    assert!(out.done);
    let out = env.step(&s, Vec3::new(20.0, 0.0, 0.0), Goal::Item(0)).unwrap();
    assert_eq!(out.event, Event::Collided(0));
}

#[test]
fn collecting_then_returning() {
    let mut sc = default_world();
    sc.items = vec![Vec3::new(3.0, 0.0, 0.0)];
    let env = Env::new(&sc, RewardConfig::default());
    let s = UavState::at_rest(Vec3::ZERO);
    let out = env.step(&s, Vec3::ZERO, Goal::Item(0)).unwrap();
    assert_eq!(out.event, Event::Collected(0));
    assert!(!out.done);
    let out = env.step(&out.next_state, Vec3::ZERO, Goal::Depot).unwrap();
    assert_eq!(out.event, Event::Returned);
    assert!(out.done);
}

#[test]
fn step_cap_truncates() {
    let sc = default_world();
    let env = Env::new(&sc, RewardConfig::default()).with_step_cap(1);
    let out = env.step(&UavState::at_rest(Vec3::splat(500.0)), Vec3::ZERO, Goal::Item(0)).unwrap();
    assert!(out.done && out.truncated());
}

fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

proptest! {
    #[test]
    fn rollouts_respect_kinematic_limits(actions in prop::collection::vec(vec3(60.0), 1..40)) {
        let sc = Scenario { obstacles: vec![], world_bounds: Aabb::new(Vec3::splat(-1e6), Vec3::splat(1e6)), ..default_world() };
        let env = Env::new(&sc, RewardConfig::default());
        let mut s = UavState::at_rest(Vec3::ZERO);
        for a in actions {
            let out = env.step(&s, a, Goal::Item(0)).unwrap();
            let v = out.next_state.velocity;
            prop_assert!(v.norm() <= sc.v_max + 1e-9);
            let realized = (v - s.velocity) * (1.0 / sc.delta);
            prop_assert!(realized.norm() <= sc.a_max + 1e-9);
            // independent integrator: clamp, move, then snap
            let a = if a.norm() > sc.a_max { a * (sc.a_max / a.norm()) } else { a };
            let mut v_pre = s.velocity + a * sc.delta;
            if v_pre.norm() > sc.v_max {
                v_pre = v_pre * (sc.v_max / v_pre.norm());
            }
            let p_expected = s.position + v_pre * sc.delta;
            prop_assert!((out.next_state.position - p_expected).norm() <= 1e-9);
            let snapped = v_pre.norm() <= sc.hover_speed_tol && s.velocity.norm() <= sc.a_max * sc.delta;
            let v_expected = if snapped { Vec3::ZERO } else { v_pre };
            prop_assert!((v - v_expected).norm() <= 1e-9);
            prop_assert_eq!(out.next_state.slot, s.slot + 1);
            s = out.next_state;
        }
    }

    #[test]
    fn hover_then_zero_accel_is_fixed(p in vec3(400.0), tiny in vec3(0.05)) {
        let sc = default_world();
        let p = p + Vec3::splat(500.0);
        let kin = integrate(p, Vec3::ZERO, tiny, &sc);
        prop_assert_eq!(kin.velocity, Vec3::ZERO);
        let again = integrate(kin.position, kin.velocity, Vec3::ZERO, &sc);
        prop_assert_eq!(again.position, kin.position);
        prop_assert_eq!(again.velocity, Vec3::ZERO);
    }

    #[test]
    fn slab_agrees_with_sampling(
        from in vec3(30.0),
        to in vec3(30.0),
        lo in vec3(10.0),
        size in (0.5f64..15.0, 0.5f64..15.0, 0.5f64..15.0),
    ) {
        let b = Aabb::new(lo, lo + Vec3::new(size.0, size.1, size.2));
        // grazing contacts are excluded: both the shrunken and the grown box
        // must give the same verdict for the case to count
        let shrunk = Aabb::new(b.p_min + Vec3::splat(1e-6), b.p_max - Vec3::splat(1e-6));
        let grown = b.expanded(1e-6);
        let exact = check_collision(from, to, &[b]).is_some();
        prop_assume!(check_collision(from, to, &[shrunk]).is_some() == check_collision(from, to, &[grown]).is_some());
        prop_assert_eq!(exact, sampled_hit(from, to, &b, 1e-3));
    }

    #[test]
    fn collision_symmetric(from in vec3(30.0), to in vec3(30.0), lo in vec3(10.0)) {
        let b = [Aabb::new(lo, lo + Vec3::splat(7.0))];
        prop_assert_eq!(check_collision(from, to, &b), check_collision(to, from, &b));
    }

    #[test]
    fn or_semantics_for_points(p in vec3(20.0)) {
        let b = cube();
        let outside_some_axis = p.x < 0.0 || p.x > 10.0 || p.y < 0.0 || p.y > 10.0 || p.z < 0.0 || p.z > 10.0;
        prop_assert_eq!(check_collision(p, p, &b).is_none(), outside_some_axis);
    }

    #[test]
    fn encoding_is_pure_and_fixed_length(p in vec3(400.0), v in vec3(30.0), n_obs in 0usize..6) {
        let sc = default_world();
        let s = UavState { velocity: v, ..UavState::at_rest(p + Vec3::splat(500.0)) };
        let a = encode_state(&s, sc.items[1], &sc, n_obs);
        let b = encode_state(&s, sc.items[1], &sc, n_obs);
        prop_assert_eq!(a.len(), state_dim(n_obs));
        prop_assert_eq!(a, b);
    }
}
