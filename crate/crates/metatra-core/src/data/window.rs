//! Windowing scenes into prediction instances and coordinate relativization.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::scene::{AgentType, Scene};
use crate::error::{CoreError, Result};

/// One agent slot inside a window. Invalid slots are padding: their
/// coordinates carry no meaning and must never influence valid agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowAgent {
    pub agent_id: i64,
    pub agent_type: AgentType,
    /// Observed past, `t_obs x 2`.
    pub past: Array2<f64>,
    /// Ground-truth future, `(t_pre - t_obs) x 2`.
    pub future: Array2<f64>,
    pub valid: bool,
}

/// One prediction instance: N agent slots over a fixed frame span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryWindow {
    pub domain_id: String,
    pub t_obs: usize,
    pub t_pre: usize,
    /// First frame index (on the scene's frame axis) covered by this window.
    pub start_frame: u64,
    pub agents: Vec<WindowAgent>,
}

impl TrajectoryWindow {
    pub fn future_len(&self) -> usize {
        self.t_pre - self.t_obs
    }

    pub fn valid_count(&self) -> usize {
        self.agents.iter().filter(|a| a.valid).count()
    }

    pub fn valid_indices(&self) -> Vec<usize> {
        self.agents
            .iter()
            .enumerate()
            .filter_map(|(i, a)| a.valid.then_some(i))
            .collect()
    }

    /// Append an invalid (padding) agent slot. Only used for rectangular
    /// batch layouts and masking tests.
    pub fn push_padding(&mut self) {
        self.agents.push(WindowAgent {
            agent_id: -1,
            agent_type: AgentType::Pedestrian,
            past: Array2::zeros((self.t_obs, 2)),
            future: Array2::zeros((self.future_len(), 2)),
            valid: false,
        });
    }
}

/// Cut a scene into windows of `t_pre` consecutive frames on the scene's
/// frame axis, stepping by `stride`. An agent enters a window only when it is
/// observed at every one of the window's frames; windows with no such agent
/// are dropped.
pub fn window_scene(
    scene: &Scene,
    t_obs: usize,
    t_pre: usize,
    stride: usize,
) -> Result<Vec<TrajectoryWindow>> {
    if t_obs == 0 || t_obs >= t_pre {
        return Err(CoreError::Config(format!(
            "need 0 < t_obs < t_pre, got t_obs={t_obs}, t_pre={t_pre}"
        )));
    }
    if stride == 0 {
        return Err(CoreError::Config("stride must be >= 1".into()));
    }
    scene.validate()?;

    let axis = scene.frame_axis();
    let mut windows = Vec::new();
    if axis.len() < t_pre {
        return Ok(windows);
    }
    let mut start = 0usize;
    while start + t_pre <= axis.len() {
        let frames = &axis[start..start + t_pre];
        let mut agents = Vec::new();
        for track in &scene.tracks {
            let coords: Option<Vec<(f64, f64)>> =
                frames.iter().map(|&f| track.position_at(f)).collect();
            let Some(coords) = coords else { continue };
            let mut past = Array2::zeros((t_obs, 2));
            let mut future = Array2::zeros((t_pre - t_obs, 2));
            for (t, &(x, y)) in coords.iter().enumerate() {
                if t < t_obs {
                    past[[t, 0]] = x;
                    past[[t, 1]] = y;
                } else {
                    future[[t - t_obs, 0]] = x;
                    future[[t - t_obs, 1]] = y;
                }
            }
            agents.push(WindowAgent {
                agent_id: track.agent_id,
                agent_type: track.agent_type,
                past,
                future,
                valid: true,
            });
        }
        if !agents.is_empty() {
            windows.push(TrajectoryWindow {
                domain_id: scene.domain_id.clone(),
                t_obs,
                t_pre,
                start_frame: frames[0],
                agents,
            });
        }
        start += stride;
    }
    Ok(windows)
}

/// Shift all coordinates of a window by the mean last-observed position of
/// its valid agents. Returns the shifted window and the reference point that
/// restores scene coordinates via [`derelativize_points`].
pub fn relativize(window: &TrajectoryWindow) -> Result<(TrajectoryWindow, [f64; 2])> {
    let valid = window.valid_indices();
    if valid.is_empty() {
        return Err(CoreError::Usage(
            "relativize requires at least one valid agent".into(),
        ));
    }
    let t_last = window.t_obs - 1;
    let mut reference = [0.0f64; 2];
    for &i in &valid {
        reference[0] += window.agents[i].past[[t_last, 0]];
        reference[1] += window.agents[i].past[[t_last, 1]];
    }
    reference[0] /= valid.len() as f64;
    reference[1] /= valid.len() as f64;

    let mut shifted = window.clone();
    for agent in shifted.agents.iter_mut().filter(|a| a.valid) {
        for row in agent.past.rows_mut() {
            let mut row = row;
            row[0] -= reference[0];
            row[1] -= reference[1];
        }
        for row in agent.future.rows_mut() {
            let mut row = row;
            row[0] -= reference[0];
            row[1] -= reference[1];
        }
    }
    Ok((shifted, reference))
}

/// Inverse of [`relativize`] for a set of points (in place).
pub fn derelativize_points(points: &mut Array2<f64>, reference: [f64; 2]) {
    for mut row in points.rows_mut() {
        row[0] += reference[0];
        row[1] += reference[1];
    }
}

/// Partition domains into (sources, target) by a held-out domain id.
pub fn leave_one_out_split(
    domains: Vec<(String, Vec<TrajectoryWindow>)>,
    held_out: &str,
) -> Result<(Vec<(String, Vec<TrajectoryWindow>)>, (String, Vec<TrajectoryWindow>))> {
    if domains.len() < 2 {
        return Err(CoreError::Usage(format!(
            "leave-one-out needs >= 2 domains, got {}",
            domains.len()
        )));
    }
    if !domains.iter().any(|(id, _)| id == held_out) {
        return Err(CoreError::Usage(format!(
            "held-out domain {held_out:?} not present"
        )));
    }
    let mut sources = Vec::new();
    let mut target = None;
    for (id, windows) in domains {
        if id == held_out {
            target = Some((id, windows));
        } else {
            sources.push((id, windows));
        }
    }
    Ok((sources, target.expect("checked above")))
}

/// A rectangular batch: windows packed under a valid-agent budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub windows: Vec<TrajectoryWindow>,
}

impl Batch {
    pub fn valid_agents(&self) -> usize {
        self.windows.iter().map(|w| w.valid_count()).sum()
    }

    /// Largest slot count across windows (the rectangular width N_max).
    pub fn n_max(&self) -> usize {
        self.windows.iter().map(|w| w.agents.len()).max().unwrap_or(0)
    }

    /// Pad every window to `n_max` slots with invalid agents.
    pub fn pad_rectangular(&mut self) {
        let n_max = self.n_max();
        for w in &mut self.windows {
            while w.agents.len() < n_max {
                w.push_padding();
            }
        }
    }
}

/// Greedily pack shuffled windows into batches whose valid-agent totals stay
/// within `batch_agent_budget`. Deterministic given `shuffle_seed`.
pub fn make_batches(
    windows: &[TrajectoryWindow],
    batch_agent_budget: usize,
    shuffle_seed: u64,
) -> Result<Vec<Batch>> {
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    order.shuffle(&mut rng);

    let mut batches = Vec::new();
    let mut current: Vec<TrajectoryWindow> = Vec::new();
    let mut current_count = 0usize;
    for idx in order {
        let w = &windows[idx];
        let c = w.valid_count();
        if c > batch_agent_budget {
            return Err(CoreError::Config(format!(
                "window {idx} (domain {}, start frame {}) holds {c} valid agents, \
                 exceeding the batch budget of {batch_agent_budget}",
                w.domain_id, w.start_frame
            )));
        }
        if current_count + c > batch_agent_budget && !current.is_empty() {
            let mut b = Batch { windows: std::mem::take(&mut current) };
            b.pad_rectangular();
            batches.push(b);
            current_count = 0;
        }
        current.push(w.clone());
        current_count += c;
    }
    if !current.is_empty() {
        let mut b = Batch { windows: current };
        b.pad_rectangular();
        batches.push(b);
    }
    Ok(batches)
}
