//! Typed relation graphs over agents at a single timestep.

use crate::data::scene::AgentType;
use crate::dual_tt::config::ModelConfig;
use crate::error::{CoreError, Result};

/// Directed, relation-typed neighbor sets for one timestep.
///
/// `neighbors[r][i]` lists the agents j (valid, within the neighbor radius,
/// j != i) whose edge `i -> j` carries relation r. Invalid slots always have
/// empty lists.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationGraph {
    pub n_slots: usize,
    pub n_relations: usize,
    pub neighbors: Vec<Vec<Vec<usize>>>,
}

impl RelationGraph {
    /// Connected components of the undirected union over all relations,
    /// restricted to valid agents. Isolated valid agents form singleton
    /// components. Component order follows the lowest slot index.
    pub fn components(&self, valid: &[bool]) -> Vec<Vec<usize>> {
        let mut comp_of: Vec<Option<usize>> = vec![None; self.n_slots];
        let mut components = Vec::new();
        for start in 0..self.n_slots {
            if !valid[start] || comp_of[start].is_some() {
                continue;
            }
            let id = components.len();
            let mut queue = vec![start];
            comp_of[start] = Some(id);
            let mut members = Vec::new();
            while let Some(i) = queue.pop() {
                members.push(i);
                for rel in &self.neighbors {
                    for &j in &rel[i] {
                        if comp_of[j].is_none() {
                            comp_of[j] = Some(id);
                            queue.push(j);
                        }
                    }
                }
            }
            members.sort_unstable();
            components.push(members);
        }
        components
    }

    pub fn has_neighbors(&self, relation: usize, node: usize) -> bool {
        !self.neighbors[relation][node].is_empty()
    }
}

/// Build the relation graph for one timestep from agent positions.
///
/// Edges connect valid agents within `cfg.neighbor_radius`; the configured
/// scheme assigns each directed edge its relation. No self edges.
pub fn build_relation_graph(
    positions: &[[f64; 2]],
    valid: &[bool],
    agent_types: &[AgentType],
    cfg: &ModelConfig,
) -> Result<RelationGraph> {
    let n = positions.len();
    if valid.len() != n || agent_types.len() != n {
        return Err(CoreError::Usage(
            "positions, valid mask, and agent types must have equal length".into(),
        ));
    }
    let n_relations = cfg.relation_types();
    let mut neighbors = vec![vec![Vec::new(); n]; n_relations];
    for i in 0..n {
        if !valid[i] {
            continue;
        }
        for j in 0..n {
            if i == j || !valid[j] {
                continue;
            }
            let dx = positions[i][0] - positions[j][0];
            let dy = positions[i][1] - positions[j][1];
            let dist = (dx * dx + dy * dy).sqrt();
            if dist <= cfg.neighbor_radius {
                let r = cfg
                    .relation_scheme
                    .relation_of(agent_types[i], agent_types[j], dist)?;
                neighbors[r][i].push(j);
            }
        }
    }
    Ok(RelationGraph { n_slots: n, n_relations, neighbors })
}
