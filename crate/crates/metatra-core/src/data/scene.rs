//! Scene ingestion: plain-text trajectory files and their in-memory form.
//!
//! The canonical on-disk format is one observation per line,
//! whitespace-delimited: `frame_id agent_id x y`. Dataset variants that
//! permute these columns are handled by [`ColumnOrder`] at parse time; export
//! always writes the canonical order.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Category of a moving agent. Drives relation typing in heterogeneous scenes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentType {
    Pedestrian,
    Bike,
    Car,
    Teammate,
    Opponent,
    Ball,
}

impl fmt::Display for AgentType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AgentType::Pedestrian => "pedestrian",
            AgentType::Bike => "bike",
            AgentType::Car => "car",
            AgentType::Teammate => "teammate",
            AgentType::Opponent => "opponent",
            AgentType::Ball => "ball",
        };
        f.write_str(s)
    }
}

/// One agent's observed positions, sorted by frame index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTrack {
    pub agent_id: i64,
    pub agent_type: AgentType,
    /// `(frame_index, x, y)`, with strictly increasing frame indices.
    pub positions: Vec<(u64, f64, f64)>,
}

impl AgentTrack {
    pub fn new(agent_id: i64, agent_type: AgentType) -> Self {
        AgentTrack {
            agent_id,
            agent_type,
            positions: Vec::new(),
        }
    }

    /// Position at a given frame, if observed.
    pub fn position_at(&self, frame: u64) -> Option<(f64, f64)> {
        self.positions
            .binary_search_by_key(&frame, |&(f, _, _)| f)
            .ok()
            .map(|i| (self.positions[i].1, self.positions[i].2))
    }
}

/// A recorded scenario: all agent tracks of one domain recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub domain_id: String,
    /// Seconds between consecutive frames of the scene's frame grid.
    pub frame_dt: f64,
    pub tracks: Vec<AgentTrack>,
}

impl Scene {
    pub fn new(domain_id: impl Into<String>, frame_dt: f64) -> Result<Self> {
        if !(frame_dt > 0.0) || !frame_dt.is_finite() {
            return Err(CoreError::Config(format!(
                "frame_dt must be a positive finite number, got {frame_dt}"
            )));
        }
        Ok(Scene {
            domain_id: domain_id.into(),
            frame_dt,
            tracks: Vec::new(),
        })
    }

    /// Sorted distinct frame indices observed anywhere in the scene.
    pub fn frame_axis(&self) -> Vec<u64> {
        let mut frames: Vec<u64> = self
            .tracks
            .iter()
            .flat_map(|t| t.positions.iter().map(|&(f, _, _)| f))
            .collect();
        frames.sort_unstable();
        frames.dedup();
        frames
    }

    /// Validate the documented invariants (finite coords, strictly increasing frames).
    pub fn validate(&self) -> Result<()> {
        for track in &self.tracks {
            if track.positions.is_empty() {
                return Err(CoreError::Data(format!(
                    "agent {} in domain {} has no positions",
                    track.agent_id, self.domain_id
                )));
            }
            let mut prev: Option<u64> = None;
            for &(frame, x, y) in &track.positions {
                if !x.is_finite() || !y.is_finite() {
                    return Err(CoreError::Data(format!(
                        "non-finite coordinate for agent {} at frame {frame}",
                        track.agent_id
                    )));
                }
                if let Some(p) = prev {
                    if frame <= p {
                        return Err(CoreError::Data(format!(
                            "frames not strictly increasing for agent {} ({p} then {frame})",
                            track.agent_id
                        )));
                    }
                }
                prev = Some(frame);
            }
        }
        Ok(())
    }

    /// Write the scene in the canonical text format (frame agent x y),
    /// ordered by frame then agent id.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let mut rows: Vec<(u64, i64, f64, f64)> = self
            .tracks
            .iter()
            .flat_map(|t| {
                t.positions
                    .iter()
                    .map(move |&(f, x, y)| (f, t.agent_id, x, y))
            })
            .collect();
        rows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        for (frame, agent, x, y) in rows {
            writeln!(w, "{frame} {agent} {x} {y}")?;
        }
        Ok(())
    }

    pub fn save_text(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_text(std::io::BufWriter::new(file))
    }
}

/// Column permutation of the four fields on each input line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnOrder {
    /// `frame agent x y` (canonical).
    #[default]
    FrameAgentXy,
    /// `frame agent y x` (some ETH-UCY exports swap the coordinate pair).
    FrameAgentYx,
    /// `agent frame x y`.
    AgentFrameXy,
}

impl ColumnOrder {
    fn reorder(self, f: [f64; 4]) -> (f64, f64, f64, f64) {
        match self {
            ColumnOrder::FrameAgentXy => (f[0], f[1], f[2], f[3]),
            ColumnOrder::FrameAgentYx => (f[0], f[1], f[3], f[2]),
            ColumnOrder::AgentFrameXy => (f[1], f[0], f[2], f[3]),
        }
    }
}

/// Parse a trajectory text file into a [`Scene`].
///
/// Each non-empty, non-comment (`#`) line must hold four whitespace-delimited
/// numbers. Frame and agent ids may be written as floats (e.g. `840.0`) but
/// must be integral; frames must be non-negative. Agent types default to
/// pedestrian.
pub fn load_ethucy_file(path: &Path, frame_dt: f64) -> Result<Scene> {
    let file = std::fs::File::open(path)?;
    let domain_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "unknown".to_string());
    parse_trajectory_text(
        BufReader::new(file),
        &path.display().to_string(),
        &domain_id,
        frame_dt,
        ColumnOrder::FrameAgentXy,
    )
}

/// As [`load_ethucy_file`] but with an explicit column order.
pub fn load_trajectory_file(
    path: &Path,
    frame_dt: f64,
    order: ColumnOrder,
) -> Result<Scene> {
    let file = std::fs::File::open(path)?;
    let domain_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "unknown".to_string());
    parse_trajectory_text(
        BufReader::new(file),
        &path.display().to_string(),
        &domain_id,
        frame_dt,
        order,
    )
}

/// Reader-level parser backing the file loaders.
pub fn parse_trajectory_text<R: Read>(
    reader: BufReader<R>,
    source_name: &str,
    domain_id: &str,
    frame_dt: f64,
    order: ColumnOrder,
) -> Result<Scene> {
    let mut scene = Scene::new(domain_id, frame_dt)?;
    let mut seen: HashSet<(u64, i64)> = HashSet::new();
    // agent_id -> index into scene.tracks
    let mut track_index: Vec<(i64, usize)> = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(CoreError::Parse {
                path: source_name.to_string(),
                line: lineno,
                msg: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let mut nums = [0.0f64; 4];
        for (i, field) in fields.iter().enumerate() {
            nums[i] = field.parse::<f64>().map_err(|e| CoreError::Parse {
                path: source_name.to_string(),
                line: lineno,
                msg: format!("field {} ({field:?}): {e}", i + 1),
            })?;
        }
        let (frame_f, agent_f, x, y) = order.reorder(nums);
        let frame = integral(frame_f).ok_or_else(|| CoreError::Parse {
            path: source_name.to_string(),
            line: lineno,
            msg: format!("frame id {frame_f} is not a non-negative integer"),
        })?;
        let agent = integral_signed(agent_f).ok_or_else(|| CoreError::Parse {
            path: source_name.to_string(),
            line: lineno,
            msg: format!("agent id {agent_f} is not an integer"),
        })?;
        if !x.is_finite() || !y.is_finite() {
            return Err(CoreError::Parse {
                path: source_name.to_string(),
                line: lineno,
                msg: "non-finite coordinate".to_string(),
            });
        }
        if !seen.insert((frame, agent)) {
            return Err(CoreError::Data(format!(
                "{source_name}: duplicate observation for agent {agent} at frame {frame}"
            )));
        }
        let idx = match track_index.iter().find(|(id, _)| *id == agent) {
            Some(&(_, idx)) => idx,
            None => {
                scene
                    .tracks
                    .push(AgentTrack::new(agent, AgentType::Pedestrian));
                let idx = scene.tracks.len() - 1;
                track_index.push((agent, idx));
                idx
            }
        };
        scene.tracks[idx].positions.push((frame, x, y));
    }

    for track in &mut scene.tracks {
        track.positions.sort_by_key(|&(f, _, _)| f);
    }
    scene.validate()?;
    Ok(scene)
}

fn integral(v: f64) -> Option<u64> {
    if v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64 {
        Some(v as u64)
    } else {
        None
    }
}

fn integral_signed(v: f64) -> Option<i64> {
    if v.is_finite() && v.fract() == 0.0 && v.abs() <= i64::MAX as f64 {
        Some(v as i64)
    } else {
        None
    }
}
