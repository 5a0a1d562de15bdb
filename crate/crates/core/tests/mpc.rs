use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uavcol_core::env::{check_collision, Event, Goal, Scenario, UavState};
use uavcol_core::mpc::{mpc_cost, rollout, run_mpc_leg, select_best, MpcConfig, MpcPlanner};
use uavcol_core::{Aabb, Vec3};

fn desk(items: Vec<Vec3>, obstacles: Vec<Aabb>) -> Scenario {
    Scenario {
        world_bounds: Aabb::new(Vec3::ZERO, Vec3::splat(200.0)),
        depot: Vec3::splat(100.0),
        items,
        obstacles,
        v_max: 20.0,
        a_max: 10.0,
        delta: 1.0,
        epsilon: 5.0,
        hover_speed_tol: 0.1,
    }
}

fn unit_weights() -> MpcConfig {
    MpcConfig { w_goal: 1.0, w_path: 0.0, w_effort: 1.0, w_prox: 1.0, w_brake: 1.0, ..MpcConfig::default() }
}

/// Rest-to-rest minimum time under |a| <= a_max, |v| <= v_max.
fn bang_bang_time(d: f64, v_max: f64, a_max: f64) -> f64 {
    let t_ramp = v_max / a_max;
    if a_max * t_ramp * t_ramp >= d {
        2.0 * (d / a_max).sqrt()
    } else {
        2.0 * t_ramp + (d - a_max * t_ramp * t_ramp) / v_max
    }
}

#[test]
fn cost_zero_at_goal_with_unit_weights() {
    let sc = desk(vec![Vec3::splat(50.0)], vec![]);
    let g = Vec3::splat(100.0);
    let r = rollout(g, Vec3::ZERO, &[Vec3::ZERO; 8], &sc);
    assert_eq!(mpc_cost(&r, g, &unit_weights(), true), 0.0);
}

#[test]
fn colliding_rollout_costs_infinity() {
    let wall = Aabb::new(Vec3::new(110.0, 50.0, 50.0), Vec3::new(120.0, 150.0, 150.0));
    let sc = desk(vec![Vec3::splat(50.0)], vec![wall]);
    let r = rollout(Vec3::splat(100.0), Vec3::new(15.0, 0.0, 0.0), &[Vec3::ZERO; 4], &sc);
    assert!(!r.feasible);
    assert_eq!(mpc_cost(&r, Vec3::splat(150.0), &MpcConfig::default(), false), f64::INFINITY);
}

#[test]
fn nearer_terminal_is_cheaper_for_same_controls() {
    let sc = desk(vec![Vec3::splat(50.0)], vec![]);
    let goal = Vec3::new(150.0, 100.0, 100.0);
    let seq = vec![Vec3::new(0.5, 0.0, 0.0); 8];
    let near = rollout(Vec3::new(100.0, 100.0, 100.0), Vec3::ZERO, &seq, &sc);
    let far = rollout(Vec3::new(90.0, 100.0, 100.0), Vec3::ZERO, &seq, &sc);
    for cfg in [unit_weights(), MpcConfig::default()] {
        assert!(mpc_cost(&near, goal, &cfg, false) < mpc_cost(&far, goal, &cfg, false));
    }
}

#[test]
fn hovering_at_goal_stays_put() {
    let sc = desk(vec![Vec3::splat(50.0)], vec![]);
    let g = Vec3::splat(100.0);
    let a = MpcPlanner::new(MpcConfig::default(), 3).plan_step(&UavState::at_rest(g), g, &sc);
    assert!(a.norm() <= 0.1 * sc.a_max, "{a}");
}

#[test]
fn accelerates_toward_goal_ahead() {
    let sc = desk(vec![Vec3::splat(50.0)], vec![]);
    let s = UavState::at_rest(Vec3::new(50.0, 100.0, 100.0));
    let a = MpcPlanner::new(MpcConfig::default(), 3).plan_step(&s, Vec3::new(150.0, 100.0, 100.0), &sc);
    assert!(a.x > 0.0, "{a}");
}

#[test]
fn obstacle_in_the_way_is_avoided() {
    let block = Aabb::new(Vec3::new(90.0, 90.0, 90.0), Vec3::new(110.0, 110.0, 110.0));
    let mut sc = desk(vec![Vec3::new(150.0, 100.0, 100.0)], vec![block]);
    sc.depot = Vec3::new(50.0, 100.0, 100.0);
    let mut planner = MpcPlanner::new(MpcConfig::default(), 1);
    let leg = run_mpc_leg(&mut planner, UavState::at_rest(sc.depot), Goal::Item(0), &sc, 60).unwrap();
    let mut prev = sc.depot;
    for s in &leg.samples {
        assert_eq!(check_collision(prev, s.position, &sc.obstacles), None);
        assert!(sc.in_bounds(s.position));
        prev = s.position;
    }
    assert!(leg.reached, "last event {:?}", leg.last_event);
}

#[test]
fn goal_inside_radius_collects_on_first_slot() {
    let sc = desk(vec![Vec3::new(103.0, 100.0, 100.0)], vec![]);
    let mut planner = MpcPlanner::new(MpcConfig::default(), 1);
    let leg = run_mpc_leg(&mut planner, UavState::at_rest(sc.depot), Goal::Item(0), &sc, 10).unwrap();
    assert_eq!(leg.steps(), 1);
    assert_eq!(leg.last_event, Event::Collected(0));
}

#[test]
fn straight_leg_respects_minimum_time() {
    let mut sc = desk(vec![Vec3::new(150.0, 100.0, 100.0)], vec![]);
    sc.depot = Vec3::new(50.0, 100.0, 100.0);
    let mut planner = MpcPlanner::new(MpcConfig::default(), 2);
    let leg = run_mpc_leg(&mut planner, UavState::at_rest(sc.depot), Goal::Item(0), &sc, 60).unwrap();
    assert!(leg.reached);
    // the leg may stop anywhere within epsilon of the item
    let bound = bang_bang_time(100.0 - sc.epsilon, sc.v_max, sc.a_max);
    assert!(leg.steps() as f64 * sc.delta >= bound, "{} < {bound}", leg.steps());
}

#[test]
fn planner_is_deterministic() {
    let sc = desk(vec![Vec3::splat(50.0)], vec![]);
    let s = UavState { velocity: Vec3::new(3.0, -1.0, 2.0), ..UavState::at_rest(Vec3::splat(80.0)) };
    let plan = |seed| {
        let mut p = MpcPlanner::new(MpcConfig::default(), seed);
        (0..3).map(|_| p.plan_step(&s, Vec3::splat(140.0), &sc)).collect::<Vec<_>>()
    };
    assert_eq!(plan(7), plan(7));
}

#[test]
fn invalid_config_rejected() {
    assert!(MpcConfig { horizon: 0, ..MpcConfig::default() }.validate().is_err());
    assert!(MpcConfig { elite_frac: 0.0, ..MpcConfig::default() }.validate().is_err());
    assert!(MpcConfig { w_prox: -1.0, ..MpcConfig::default() }.validate().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dropping_effort_never_worsens_terminal_distance(seed in 0u64..10_000) {
        let sc = desk(vec![Vec3::splat(50.0)], vec![]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = Vec3::splat(100.0);
        let goal = Vec3::new(rng.random_range(40.0..160.0), rng.random_range(40.0..160.0), rng.random_range(40.0..160.0));
        let seqs: Vec<Vec<Vec3>> = (0..32)
            .map(|_| (0..6).map(|_| Vec3::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0))).collect())
            .collect();
        let rolls: Vec<_> = seqs.iter().map(|s| rollout(start, Vec3::ZERO, s, &sc)).collect();
        let pick = |w_effort: f64| {
            let cfg = MpcConfig { w_effort, w_path: 0.0, ..MpcConfig::default() };
            let costs: Vec<f64> = rolls.iter().map(|r| mpc_cost(r, goal, &cfg, false)).collect();
            rolls[select_best(&costs, &rolls)].positions.last().unwrap().distance(goal)
        };
        prop_assert!(pick(0.0) <= pick(1e-2) + 1e-12);
    }

    #[test]
    fn closed_loop_legs_stay_feasible(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let block = Aabb::new(Vec3::new(80.0, 80.0, 80.0), Vec3::new(95.0, 120.0, 120.0));
        let goal = Vec3::new(rng.random_range(20.0..60.0), rng.random_range(20.0..180.0), rng.random_range(20.0..180.0));
        let mut sc = desk(vec![goal], vec![block]);
        sc.depot = Vec3::new(150.0, 100.0, 100.0);
        let cfg = MpcConfig { candidates: 64, iterations: 3, ..MpcConfig::default() };
        let mut planner = MpcPlanner::new(cfg, seed);
        let leg = run_mpc_leg(&mut planner, UavState::at_rest(sc.depot), Goal::Item(0), &sc, 40).unwrap();
        let mut prev = UavState::at_rest(sc.depot);
        for s in &leg.samples {
            prop_assert!(s.velocity.norm() <= sc.v_max + 1e-9);
            prop_assert!((s.velocity - prev.velocity).norm() / sc.delta <= sc.a_max + 1e-9);
            prop_assert_eq!(check_collision(prev.position, s.position, &sc.obstacles), None);
            prop_assert!(sc.in_bounds(s.position));
            prev = UavState { position: s.position, velocity: s.velocity, ..prev };
        }
    }
}
