//! Per-domain motion statistics: density, speed, acceleration.

use serde::{Deserialize, Serialize};

use crate::data::window::TrajectoryWindow;
use crate::error::{CoreError, Result};

/// Aggregate motion statistics of a set of windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainStats {
    /// Mean valid-agent count per window.
    pub density: f64,
    /// Mean per-step displacement magnitude divided by frame_dt (units/s).
    pub speed: f64,
    /// Mean per-step velocity-change magnitude divided by frame_dt (units/s^2).
    pub acceleration: f64,
}

/// Compute [`DomainStats`] over windows, treating each valid agent's
/// past+future as one continuous `t_pre`-step trajectory.
pub fn domain_statistics(windows: &[TrajectoryWindow], frame_dt: f64) -> Result<DomainStats> {
    if windows.is_empty() {
        return Err(CoreError::Usage(
            "domain_statistics requires a non-empty window list".into(),
        ));
    }
    if !(frame_dt > 0.0) {
        return Err(CoreError::Config(format!("frame_dt must be > 0, got {frame_dt}")));
    }

    let mut agents_total = 0usize;
    let mut speed_sum = 0.0;
    let mut speed_n = 0usize;
    let mut accel_sum = 0.0;
    let mut accel_n = 0usize;

    for window in windows {
        agents_total += window.valid_count();
        for agent in window.agents.iter().filter(|a| a.valid) {
            let coords: Vec<[f64; 2]> = agent
                .past
                .rows()
                .into_iter()
                .chain(agent.future.rows())
                .map(|r| [r[0], r[1]])
                .collect();
            let mut velocities = Vec::with_capacity(coords.len().saturating_sub(1));
            for pair in coords.windows(2) {
                let vx = (pair[1][0] - pair[0][0]) / frame_dt;
                let vy = (pair[1][1] - pair[0][1]) / frame_dt;
                velocities.push([vx, vy]);
                speed_sum += (vx * vx + vy * vy).sqrt();
                speed_n += 1;
            }
            for pair in velocities.windows(2) {
                let ax = (pair[1][0] - pair[0][0]) / frame_dt;
                let ay = (pair[1][1] - pair[0][1]) / frame_dt;
                accel_sum += (ax * ax + ay * ay).sqrt();
                accel_n += 1;
            }
        }
    }

    Ok(DomainStats {
        density: agents_total as f64 / windows.len() as f64,
        speed: if speed_n > 0 { speed_sum / speed_n as f64 } else { 0.0 },
        acceleration: if accel_n > 0 { accel_sum / accel_n as f64 } else { 0.0 },
    })
}
