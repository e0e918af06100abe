//! Seeded toy navigation simulator producing [`Episode`] logs.
//!
//! A point robot drives toward a goal in a square arena with circular
//! obstacles. The controller sees a noisy clearance reading,
//! `true + s * |N(0, sigma)|` with `s = +1` or `-1` equiprobable, and steers
//! tangentially around the nearest obstacle while that reading is below
//! `avoid_threshold` and the goal lies on the obstacle's side. Episodes record
//! the true clearance. Like a real range finder, a reading below `min_range`
//! (including any negative reading) is reported as "no return", which the
//! controller reads as open space.
//!
//! Obstacles are placed far enough apart that at most one of them is ever
//! inside the avoidance zone, so on clean readings a tangential step never
//! lowers the clearance and a straight step from outside the zone keeps it
//! above `avoid_threshold - robot_speed > 0`.
//!
//! Randomness: episode `i` of a run seeded with `seed` draws from
//! `ChaCha8Rng::seed_from_u64(seed)` on stream `i`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimation::{Episode, Outcome, Step};

const PLACEMENT_TRIES: usize = 1_000;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid simulator configuration: {0}")]
    Config(String),
    #[error("could not place {0} after {PLACEMENT_TRIES} attempts")]
    Placement(&'static str),
    #[error("invalid sigma grid: {0}")]
    Grid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Disturbance scale, metres.
    pub sigma: f64,
    pub episodes: usize,
    pub seed: u64,
    pub arena_width: f64,
    pub arena_height: f64,
    pub n_obstacles: usize,
    pub obstacle_radius: f64,
    pub goal_radius: f64,
    /// Metres per step.
    pub robot_speed: f64,
    pub avoid_threshold: f64,
    /// Outward component of the avoidance heading relative to its tangent.
    pub outward_bias: f64,
    /// Readings below this are discarded as "no return".
    pub min_range: f64,
    /// Minimum clearance of the start position.
    pub start_clearance: f64,
    /// Minimum straight-line distance between start and goal.
    pub min_goal_distance: f64,
    pub max_steps: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            sigma: 0.0,
            episodes: 300,
            seed: 0,
            arena_width: 20.0,
            arena_height: 20.0,
            n_obstacles: 8,
            obstacle_radius: 0.5,
            goal_radius: 0.5,
            robot_speed: 0.2,
            avoid_threshold: 1.35,
            outward_bias: 0.5,
            min_range: 0.0,
            start_clearance: 3.15,
            min_goal_distance: 10.0,
            max_steps: 1000,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be a finite value >= 0");
        }
        if self.max_steps < 1 {
            return bad("max_steps must be at least 1");
        }
        if self.n_obstacles < 1 {
            return bad("n_obstacles must be at least 1");
        }
        let positive = [
            ("arena_width", self.arena_width),
            ("arena_height", self.arena_height),
            ("obstacle_radius", self.obstacle_radius),
            ("goal_radius", self.goal_radius),
            ("robot_speed", self.robot_speed),
            ("avoid_threshold", self.avoid_threshold),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::Config(format!("{name} must be positive")));
            }
        }
        if self.robot_speed >= self.avoid_threshold {
            return bad("robot_speed must be below avoid_threshold");
        }
        if !(self.min_range >= 0.0 && self.min_range < self.avoid_threshold - self.robot_speed) {
            return bad("min_range must lie below the closest approach on clean readings");
        }
        if self.start_clearance < 0.0 || self.min_goal_distance < 0.0 {
            return bad("start_clearance and min_goal_distance must be >= 0");
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, SimError> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Minimum distance between obstacle centres.
    fn obstacle_spacing(&self) -> f64 {
        2.0 * (self.obstacle_radius + self.avoid_threshold + self.robot_speed) + 1e-3
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Vec2 {
    x: f64,
    y: f64,
}

impl Vec2 {
    fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
    fn scale(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
    fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }
    fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }
    fn unit(self) -> Vec2 {
        let n = self.norm();
        if n > 0.0 {
            self.scale(1.0 / n)
        } else {
            Vec2::new(1.0, 0.0)
        }
    }
}

/// Obstacle centres, start and goal of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub obstacles: Vec<(f64, f64)>,
    pub start: (f64, f64),
    pub goal: (f64, f64),
    pub obstacle_radius: f64,
}

impl World {
    /// Clearance to the nearest obstacle surface and that obstacle's index.
    fn nearest(&self, p: Vec2) -> (f64, Option<usize>) {
        let mut best = (f64::INFINITY, None);
        for (i, &(x, y)) in self.obstacles.iter().enumerate() {
            let c = p.sub(Vec2::new(x, y)).norm() - self.obstacle_radius;
            if c < best.0 {
                best = (c, Some(i));
            }
        }
        best
    }

    pub fn clearance(&self, x: f64, y: f64) -> f64 {
        self.nearest(Vec2::new(x, y)).0
    }
}

fn uniform_point(rng: &mut ChaCha8Rng, cfg: &SimConfig, margin: f64) -> Vec2 {
    let margin_x = margin.min(cfg.arena_width / 2.0);
    let margin_y = margin.min(cfg.arena_height / 2.0);
    Vec2::new(
        rng.gen_range(margin_x..=cfg.arena_width - margin_x),
        rng.gen_range(margin_y..=cfg.arena_height - margin_y),
    )
}

const WORLD_TRIES: usize = 100;

fn place_world(rng: &mut ChaCha8Rng, cfg: &SimConfig) -> Result<World, SimError> {
    let mut last = SimError::Placement("obstacles");
    for _ in 0..WORLD_TRIES {
        match try_place_world(rng, cfg) {
            Ok(w) => return Ok(w),
            Err(e) => last = e,
        }
    }
    Err(last)
}

fn try_place_world(rng: &mut ChaCha8Rng, cfg: &SimConfig) -> Result<World, SimError> {
    let spacing = cfg.obstacle_spacing();
    let mut obstacles: Vec<Vec2> = Vec::with_capacity(cfg.n_obstacles);
    for _ in 0..cfg.n_obstacles {
        let mut placed = false;
        for _ in 0..PLACEMENT_TRIES {
            let c = uniform_point(rng, cfg, cfg.obstacle_radius);
            if obstacles.iter().all(|o| o.sub(c).norm() >= spacing) {
                obstacles.push(c);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(SimError::Placement("obstacles"));
        }
    }
    let mut world = World {
        obstacles: obstacles.iter().map(|o| (o.x, o.y)).collect(),
        start: (0.0, 0.0),
        goal: (0.0, 0.0),
        obstacle_radius: cfg.obstacle_radius,
    };
    let start = (0..PLACEMENT_TRIES)
        .map(|_| uniform_point(rng, cfg, 0.0))
        .find(|p| world.nearest(*p).0 >= cfg.start_clearance)
        .ok_or(SimError::Placement("the start position"))?;
    let goal_clearance = cfg.avoid_threshold + cfg.robot_speed + cfg.goal_radius;
    let goal = (0..PLACEMENT_TRIES)
        .map(|_| uniform_point(rng, cfg, 0.0))
        .find(|p| world.nearest(*p).0 >= goal_clearance && p.sub(start).norm() >= cfg.min_goal_distance)
        .ok_or(SimError::Placement("the goal"))?;
    world.start = (start.x, start.y);
    world.goal = (goal.x, goal.y);
    Ok(world)
}

/// Generates the world for episode `index` (same draw order as [`simulate`]).
pub fn world(cfg: &SimConfig, index: u64) -> Result<World, SimError> {
    cfg.validate()?;
    place_world(&mut episode_rng(cfg.seed, index), cfg)
}

fn episode_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Next position under the scripted controller given a perceived clearance.
fn control_step(world: &World, cfg: &SimConfig, p: Vec2, avoid: bool, near: Option<usize>) -> Vec2 {
    let goal = Vec2::new(world.goal.0, world.goal.1);
    let to_goal = goal.sub(p);
    let dir = to_goal.unit();
    let step = cfg.robot_speed.min(to_goal.norm());
    if let (true, Some(i)) = (avoid, near) {
        let c = Vec2::new(world.obstacles[i].0, world.obstacles[i].1);
        let inward = c.sub(p).unit();
        if dir.dot(inward) > 0.0 {
            let mut tangent = Vec2::new(-inward.y, inward.x);
            if tangent.dot(dir) < 0.0 {
                tangent = tangent.scale(-1.0);
            }
            let heading = tangent.add(inward.scale(-cfg.outward_bias)).unit();
            return p.add(heading.scale(cfg.robot_speed));
        }
    }
    p.add(dir.scale(step))
}

fn run_episode(cfg: &SimConfig, index: u64) -> Result<Episode, SimError> {
    run_traced(cfg, index).map(|(_, _, ep)| ep)
}

fn run_traced(cfg: &SimConfig, index: u64) -> Result<(World, Vec<Vec2>, Episode), SimError> {
    let mut rng = episode_rng(cfg.seed, index);
    let world = place_world(&mut rng, cfg)?;
    let noise = Normal::new(0.0, cfg.sigma).map_err(|e| SimError::Config(e.to_string()))?;
    let goal = Vec2::new(world.goal.0, world.goal.1);
    let mut p = Vec2::new(world.start.0, world.start.1);
    let (mut clearance, mut near) = world.nearest(p);
    let mut steps = vec![Step { clearance, raw: None }];
    let mut path = vec![p];
    for _ in 0..cfg.max_steps {
        let magnitude: f64 = noise.sample(&mut rng);
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let perceived = clearance + sign * magnitude.abs();
        let alarm = perceived >= cfg.min_range && perceived < cfg.avoid_threshold;
        p = control_step(&world, cfg, p, alarm, near);
        (clearance, near) = world.nearest(p);
        path.push(p);
        if clearance <= 0.0 {
            steps.push(Step { clearance: 0.0, raw: None });
            return Ok((world, path, Episode { steps, outcome: Outcome::Crash }));
        }
        steps.push(Step { clearance, raw: None });
        if p.sub(goal).norm() <= cfg.goal_radius {
            return Ok((world, path, Episode { steps, outcome: Outcome::Goal }));
        }
    }
    Ok((world, path, Episode { steps, outcome: Outcome::Timeout }))
}

/// Runs `cfg.episodes` independent episodes.
pub fn simulate(cfg: &SimConfig) -> Result<Vec<Episode>, SimError> {
    cfg.validate()?;
    (0..cfg.episodes as u64).into_par_iter().map(|i| run_episode(cfg, i)).collect()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for grid point `index` of a sweep; distinct for distinct indices.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index))
}

/// `start:stop:step` inclusive, values rounded to nine decimals.
pub fn sigma_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>, SimError> {
    if !(start >= 0.0 && stop.is_finite() && start.is_finite()) {
        return Err(SimError::Grid("bounds must be finite and start >= 0".into()));
    }
    if !(step > 0.0) {
        return Err(SimError::Grid("step must be positive".into()));
    }
    if stop < start {
        return Ok(Vec::new());
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9).collect())
}

/// Parses `a:b:c` as a grid or a single value as a one-point grid.
pub fn parse_sigma_spec(spec: &str) -> Result<Vec<f64>, SimError> {
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    let num = |s: &str| s.parse::<f64>().map_err(|_| SimError::Grid(format!("not a number: {s:?}")));
    match parts.as_slice() {
        [v] => {
            let v = num(v)?;
            if v >= 0.0 && v.is_finite() {
                Ok(vec![v])
            } else {
                Err(SimError::Grid("sigma must be >= 0".into()))
            }
        }
        [a, b, c] => sigma_grid(num(a)?, num(b)?, num(c)?),
        _ => Err(SimError::Grid(format!("expected start:stop:step, got {spec:?}"))),
    }
}

/// One episode set per sigma, each seeded with [`derive_seed`] of its grid index.
pub fn sweep(sigmas: &[f64], base: &SimConfig) -> Result<Vec<(f64, Vec<Episode>)>, SimError> {
    sigmas
        .par_iter()
        .enumerate()
        .map(|(i, &sigma)| {
            let cfg = SimConfig { sigma, seed: derive_seed(base.seed, i as u64), ..base.clone() };
            Ok((sigma, simulate(&cfg)?))
        })
        .collect()
}
