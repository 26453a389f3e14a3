//! Encoder configuration and relation-typing schemes.

use serde::{Deserialize, Serialize};

use crate::data::scene::AgentType;
use crate::error::{CoreError, Result};

/// Nonlinearity applied inside interacted mining's neighbor aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Elu,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp() - 1.0
                }
            }
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative given the pre-activation and the activation value.
    #[inline]
    pub fn deriv(self, pre: f64, act: f64) -> f64 {
        match self {
            Activation::Elu => {
                if pre > 0.0 {
                    1.0
                } else {
                    act + 1.0
                }
            }
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - act * act,
        }
    }
}

/// How directed edges between nearby agents are assigned a relation type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RelationScheme {
    /// Two bands for homogeneous crowds: edges at distance <= band_edge are
    /// "proximal" (relation 0), the rest up to the neighbor radius "distal"
    /// (relation 1).
    DistanceBands { band_edge: f64 },
    /// One relation per ordered (source type, target type) pair over a fixed
    /// type universe.
    TypePairs { types: Vec<AgentType> },
    /// Sport-style: same team (0), opposing team (1), ball involved (2).
    Team,
}

impl RelationScheme {
    pub fn relation_count(&self) -> usize {
        match self {
            RelationScheme::DistanceBands { .. } => 2,
            RelationScheme::TypePairs { types } => types.len() * types.len(),
            RelationScheme::Team => 3,
        }
    }

    /// Relation index for a directed edge `i -> j`, or an error when an agent
    /// type falls outside the scheme's universe.
    pub fn relation_of(
        &self,
        type_i: AgentType,
        type_j: AgentType,
        dist: f64,
    ) -> Result<usize> {
        match self {
            RelationScheme::DistanceBands { band_edge } => {
                Ok(if dist <= *band_edge { 0 } else { 1 })
            }
            RelationScheme::TypePairs { types } => {
                let a = types.iter().position(|&t| t == type_i);
                let b = types.iter().position(|&t| t == type_j);
                match (a, b) {
                    (Some(a), Some(b)) => Ok(a * types.len() + b),
                    _ => Err(CoreError::Config(format!(
                        "agent type {type_i} or {type_j} not in type-pairs universe"
                    ))),
                }
            }
            RelationScheme::Team => {
                if type_i == AgentType::Ball || type_j == AgentType::Ball {
                    Ok(2)
                } else if type_i == type_j {
                    Ok(0)
                } else {
                    Ok(1)
                }
            }
        }
    }
}

impl Default for RelationScheme {
    fn default() -> Self {
        RelationScheme::DistanceBands { band_edge: 1.0 }
    }
}

fn default_d_model() -> usize {
    32
}
fn default_heads() -> usize {
    2
}
fn default_radius() -> f64 {
    4.0
}
fn default_d_latent() -> usize {
    16
}

/// Shape and wiring of the dual-path encoder and CVAE head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default = "default_d_model")]
    pub d_model: usize,
    #[serde(default = "default_heads")]
    pub n_heads_temporal: usize,
    #[serde(default = "default_heads")]
    pub n_heads_relation: usize,
    #[serde(default)]
    pub relation_scheme: RelationScheme,
    #[serde(default = "default_radius")]
    pub neighbor_radius: f64,
    #[serde(default = "default_d_latent")]
    pub d_latent: usize,
    #[serde(default)]
    pub activation: Activation,
    /// When true the TI and IT pathways read the same attention parameters.
    #[serde(default)]
    pub shared_pathways: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: default_d_model(),
            n_heads_temporal: default_heads(),
            n_heads_relation: default_heads(),
            relation_scheme: RelationScheme::default(),
            neighbor_radius: default_radius(),
            d_latent: default_d_latent(),
            activation: Activation::default(),
            shared_pathways: false,
        }
    }
}

impl ModelConfig {
    pub fn relation_types(&self) -> usize {
        self.relation_scheme.relation_count()
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.d_latent == 0 {
            return Err(CoreError::Config("d_model and d_latent must be > 0".into()));
        }
        if self.n_heads_temporal == 0 || self.d_model % self.n_heads_temporal != 0 {
            return Err(CoreError::Config(format!(
                "d_model {} must be divisible by n_heads_temporal {}",
                self.d_model, self.n_heads_temporal
            )));
        }
        if self.n_heads_relation == 0 || self.d_model % self.n_heads_relation != 0 {
            return Err(CoreError::Config(format!(
                "d_model {} must be divisible by n_heads_relation {}",
                self.d_model, self.n_heads_relation
            )));
        }
        if self.relation_types() == 0 {
            return Err(CoreError::Config("relation scheme defines zero relations".into()));
        }
        if !(self.neighbor_radius > 0.0) {
            return Err(CoreError::Config(format!(
                "neighbor_radius must be > 0, got {}",
                self.neighbor_radius
            )));
        }
        if let RelationScheme::DistanceBands { band_edge } = self.relation_scheme {
            if !(band_edge > 0.0) || band_edge > self.neighbor_radius {
                return Err(CoreError::Config(format!(
                    "distance band edge {band_edge} must lie in (0, neighbor_radius]"
                )));
            }
        }
        Ok(())
    }
}
