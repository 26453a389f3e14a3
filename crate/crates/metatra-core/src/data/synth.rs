//! Synthetic multi-domain scene generation.
//!
//! A minimal goal-directed crowd model: each agent walks toward a goal at a
//! preferred speed, turns at a bounded rate with bounded heading noise, and
//! is pushed away from agents inside its avoidance radius. The knobs map
//! directly onto the density / speed / acceleration axes used for domain
//! statistics, so domain shift is controllable.

use rand::distributions::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::scene::{AgentTrack, AgentType, Scene};
use crate::error::{CoreError, Result};

fn default_frame_dt() -> f64 {
    0.4
}

/// Axis-aligned spawn/goal region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arena {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Arena {
    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }
    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }
}

/// Generator parameters for one synthetic domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDomainSpec {
    pub domain_id: String,
    /// Inclusive range of agents per scene.
    pub agents_min: usize,
    pub agents_max: usize,
    /// Preferred speed distribution, units/s (clipped at zero).
    pub speed_mean: f64,
    pub speed_std: f64,
    /// Maximum heading change per frame, radians. Zero freezes headings.
    pub turn_rate: f64,
    /// Dimensionless steering gain toward the goal (scaled by turn_rate).
    pub goal_attraction: f64,
    /// Pairwise repulsion gain (units/s at zero distance) and its radius.
    pub avoidance_strength: f64,
    pub avoidance_radius: f64,
    pub arena: Arena,
    #[serde(default = "default_frame_dt")]
    pub frame_dt: f64,
}

impl SynthDomainSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.speed_mean,
            self.speed_std,
            self.turn_rate,
            self.goal_attraction,
            self.avoidance_strength,
            self.avoidance_radius,
            self.arena.min_x,
            self.arena.min_y,
            self.arena.max_x,
            self.arena.max_y,
            self.frame_dt,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::Config(format!(
                "non-finite field in synth spec {:?}",
                self.domain_id
            )));
        }
        if self.agents_min < 1 || self.agents_max < self.agents_min {
            return Err(CoreError::Config(format!(
                "synth spec {:?}: need 1 <= agents_min <= agents_max, got {}..{}",
                self.domain_id, self.agents_min, self.agents_max
            )));
        }
        if !(self.avoidance_radius > 0.0) {
            return Err(CoreError::Config(format!(
                "synth spec {:?}: avoidance_radius must be > 0",
                self.domain_id
            )));
        }
        if self.speed_mean < 0.0 || self.speed_std < 0.0 || self.turn_rate < 0.0 {
            return Err(CoreError::Config(format!(
                "synth spec {:?}: speed_mean, speed_std, turn_rate must be >= 0",
                self.domain_id
            )));
        }
        if self.arena.width() <= 0.0 || self.arena.height() <= 0.0 {
            return Err(CoreError::Config(format!(
                "synth spec {:?}: arena must have positive extent",
                self.domain_id
            )));
        }
        if !(self.frame_dt > 0.0) {
            return Err(CoreError::Config(format!(
                "synth spec {:?}: frame_dt must be > 0",
                self.domain_id
            )));
        }
        Ok(())
    }
}

struct AgentState {
    pos: [f64; 2],
    heading: f64,
    speed: f64,
    goal: [f64; 2],
}

/// Generate `n_scenes` scenes of `frames_per_scene` frames each.
/// Bit-identical output for identical `(spec, n_scenes, frames_per_scene, seed)`.
pub fn synth_generate(
    spec: &SynthDomainSpec,
    n_scenes: usize,
    frames_per_scene: usize,
    seed: u64,
) -> Result<Vec<Scene>> {
    spec.validate()?;
    if n_scenes == 0 {
        return Err(CoreError::Config("n_scenes must be >= 1".into()));
    }
    if frames_per_scene < 2 {
        return Err(CoreError::Config("frames_per_scene must be >= 2".into()));
    }

    let mut scenes = Vec::with_capacity(n_scenes);
    for scene_idx in 0..n_scenes {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, scene_idx as u64));
        let n_agents = rng.gen_range(spec.agents_min..=spec.agents_max);

        let mut states: Vec<AgentState> = (0..n_agents)
            .map(|_| {
                let pos = sample_point(&spec.arena, &mut rng);
                let goal = sample_point(&spec.arena, &mut rng);
                let speed = sample_speed(spec, &mut rng);
                let heading = (goal[1] - pos[1]).atan2(goal[0] - pos[0]);
                AgentState { pos, heading, speed, goal }
            })
            .collect();

        let mut scene = Scene::new(spec.domain_id.clone(), spec.frame_dt)?;
        scene.tracks = (0..n_agents)
            .map(|i| AgentTrack::new(i as i64, AgentType::Pedestrian))
            .collect();

        for frame in 0..frames_per_scene {
            for (i, s) in states.iter().enumerate() {
                scene.tracks[i].positions.push((frame as u64, s.pos[0], s.pos[1]));
            }
            if frame + 1 == frames_per_scene {
                break;
            }
            step(spec, &mut states, &mut rng);
        }
        scenes.push(scene);
    }
    Ok(scenes)
}

fn step(spec: &SynthDomainSpec, states: &mut [AgentState], rng: &mut ChaCha8Rng) {
    let positions: Vec<[f64; 2]> = states.iter().map(|s| s.pos).collect();
    for (i, s) in states.iter_mut().enumerate() {
        // Steer toward the goal, bounded by turn_rate, then jitter.
        if spec.turn_rate > 0.0 {
            let desired = (s.goal[1] - s.pos[1]).atan2(s.goal[0] - s.pos[0]);
            let delta = wrap_angle(desired - s.heading) * spec.goal_attraction;
            s.heading += delta.clamp(-spec.turn_rate, spec.turn_rate);
            s.heading += rng.gen_range(-1.0..=1.0) * spec.turn_rate;
            let dist_to_goal = ((s.goal[0] - s.pos[0]).powi(2) + (s.goal[1] - s.pos[1]).powi(2)).sqrt();
            if dist_to_goal < s.speed * spec.frame_dt {
                s.goal = sample_point(&spec.arena, rng);
            }
        }
        let mut vel = [s.speed * s.heading.cos(), s.speed * s.heading.sin()];
        if spec.avoidance_strength != 0.0 {
            for (j, other) in positions.iter().enumerate() {
                if i == j {
                    continue;
                }
                let dx = s.pos[0] - other[0];
                let dy = s.pos[1] - other[1];
                let d = (dx * dx + dy * dy).sqrt();
                if d > 1e-12 && d < spec.avoidance_radius {
                    let push = spec.avoidance_strength * (1.0 - d / spec.avoidance_radius);
                    vel[0] += push * dx / d;
                    vel[1] += push * dy / d;
                }
            }
        }
        s.pos[0] += vel[0] * spec.frame_dt;
        s.pos[1] += vel[1] * spec.frame_dt;
    }
}

fn sample_point(arena: &Arena, rng: &mut ChaCha8Rng) -> [f64; 2] {
    [
        rng.gen_range(arena.min_x..=arena.max_x),
        rng.gen_range(arena.min_y..=arena.max_y),
    ]
}

fn sample_speed(spec: &SynthDomainSpec, rng: &mut ChaCha8Rng) -> f64 {
    if spec.speed_std == 0.0 {
        return spec.speed_mean;
    }
    let normal = rand_distr::Normal::new(spec.speed_mean, spec.speed_std)
        .expect("validated std >= 0");
    normal.sample(rng).max(0.0)
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % std::f64::consts::TAU;
    if a > std::f64::consts::PI {
        a -= std::f64::consts::TAU;
    } else if a < -std::f64::consts::PI {
        a += std::f64::consts::TAU;
    }
    a
}

fn mix_seed(seed: u64, idx: u64) -> u64 {
    // splitmix64 finalizer over (seed, idx)
    let mut z = seed
        .wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add(idx.wrapping_mul(0xbf58476d1ce4e5b9))
        .wrapping_add(0x94d049bb133111eb);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
