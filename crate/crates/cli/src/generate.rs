//! Seeded random scenarios.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use uavcol_core::env::Scenario;
use uavcol_core::{Aabb, Error, Result, Vec3};

use crate::scenario_file::ScenarioFile;

pub const MAX_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Template {
    PaperDefault,
    SmallDesk,
}

impl Template {
    pub fn label(self) -> &'static str {
        match self {
            Template::PaperDefault => "paper_default",
            Template::SmallDesk => "small_desk",
        }
    }

    pub fn params(self) -> TemplateParams {
        match self {
            Template::PaperDefault => TemplateParams {
                world: Aabb::new(Vec3::ZERO, Vec3::splat(1000.0)),
                depot: Vec3::ZERO,
                v_max: 50.0,
                a_max: 20.0,
                delta: 1.0,
                epsilon: 5.0,
                hover_speed_tol: 0.1,
                edge: (50.0, 300.0),
                default_obstacles: 8,
                clearance: 20.0,
            },
            Template::SmallDesk => TemplateParams {
                world: Aabb::new(Vec3::ZERO, Vec3::splat(200.0)),
                depot: Vec3::splat(100.0),
                v_max: 20.0,
                a_max: 10.0,
                delta: 1.0,
                epsilon: 5.0,
                hover_speed_tol: 0.1,
                edge: (20.0, 60.0),
                default_obstacles: 4,
                clearance: 15.0,
            },
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Template {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper_default" => Ok(Template::PaperDefault),
            "small_desk" => Ok(Template::SmallDesk),
            _ => Err(Error::InvalidInput(format!("unknown template `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateParams {
    pub world: Aabb,
    pub depot: Vec3,
    pub v_max: f64,
    pub a_max: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub hover_speed_tol: f64,
    /// Range of obstacle edge lengths, meters.
    pub edge: (f64, f64),
    pub default_obstacles: usize,
    /// Free space kept around the depot and items: distance to obstacles and
    /// walls, and half the minimum spacing between points.
    pub clearance: f64,
}

/// Draws a scenario with `k` items and `n_obstacles` cuboids. Each candidate
/// obstacle or item is redrawn until it fits; the attempt budget is shared
/// by the whole scenario.
pub fn generate_scenario(k: usize, n_obstacles: usize, seed: u64, template: Template) -> Result<ScenarioFile> {
    if k == 0 {
        return Err(Error::InvalidInput("K must be >= 1".into()));
    }
    let p = template.params();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut attempts = 0usize;
    let mut budget = |what: &str, placed: usize| {
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            Err(Error::GenerationFailed {
                attempts: MAX_ATTEMPTS,
                reason: format!("could not place {what} {placed} ({k} items, {n_obstacles} obstacles, {template})"),
            })
        } else {
            Ok(())
        }
    };

    let lo = p.world.p_min;
    let hi = p.world.p_max;
    let mut obstacles: Vec<Aabb> = Vec::with_capacity(n_obstacles);
    while obstacles.len() < n_obstacles {
        budget("obstacle", obstacles.len())?;
        let size = Vec3::new(
            rng.random_range(p.edge.0..=p.edge.1),
            rng.random_range(p.edge.0..=p.edge.1),
            rng.random_range(p.edge.0..=p.edge.1),
        );
        let span = hi - lo - size;
        let corner = lo
            + Vec3::new(
                rng.random::<f64>() * span.x,
                rng.random::<f64>() * span.y,
                rng.random::<f64>() * span.z,
            );
        let ob = Aabb::new(corner, corner + size);
        if ob.expanded(p.clearance).contains(p.depot) {
            continue;
        }
        obstacles.push(ob);
    }

    let inner = Aabb::new(lo + Vec3::splat(p.clearance), hi - Vec3::splat(p.clearance));
    let mut items: Vec<Vec3> = Vec::with_capacity(k);
    while items.len() < k {
        budget("item", items.len())?;
        let w = inner.p_min
            + Vec3::new(
                rng.random::<f64>() * (inner.p_max.x - inner.p_min.x),
                rng.random::<f64>() * (inner.p_max.y - inner.p_min.y),
                rng.random::<f64>() * (inner.p_max.z - inner.p_min.z),
            );
        let spacing = 2.0 * p.clearance;
        if obstacles.iter().any(|ob| ob.expanded(p.clearance).contains(w))
            || w.distance(p.depot) < spacing
            || items.iter().any(|&o| o.distance(w) < spacing)
        {
            continue;
        }
        items.push(w);
    }

    let scenario = Scenario {
        world_bounds: p.world,
        depot: p.depot,
        items,
        obstacles,
        v_max: p.v_max,
        a_max: p.a_max,
        delta: p.delta,
        epsilon: p.epsilon,
        hover_speed_tol: p.hover_speed_tol,
    };
    scenario.validate()?;
    Ok(ScenarioFile::from_scenario(&scenario, seed))
}
