//! The dual-path trajectory encoder: temporal mining (self-attention over
//! each agent's sequence) and interacted mining (relation-typed graph
//! attention), composed as the TI and IT pathways and concatenated.

pub mod attention;
pub mod config;
pub mod encoder;
pub mod graph;
pub mod relation;

pub use attention::{temporal_forward, TemporalCache, TemporalGrads, TemporalViews};
pub use config::{Activation, ModelConfig, RelationScheme};
pub use encoder::{
    attention_record, embed_positions, encode, encode_backward, encode_forward,
    encode_with_records, pathway_it, pathway_ti, positional_encoding, register_encoder,
    temporal_mine, AttentionRecord, BetaRecord, EncodeCache, EncoderInput, EncoderLayout,
    GammaRecord, PathwayLayout,
};
pub use graph::{build_relation_graph, RelationGraph};
pub use relation::{
    interacted_backward, interacted_forward, relation_attention, relation_fuse, InteractedCache,
    InteractionGrads, InteractionViews, NodeBeta,
};
