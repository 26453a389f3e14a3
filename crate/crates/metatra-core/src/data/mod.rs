//! Dataset ingestion, windowing, statistics, and synthetic generation.

pub mod scene;
pub mod stats;
pub mod synth;
pub mod window;

pub use scene::{
    load_ethucy_file, load_trajectory_file, parse_trajectory_text, AgentTrack, AgentType,
    ColumnOrder, Scene,
};
pub use stats::{domain_statistics, DomainStats};
pub use synth::{synth_generate, Arena, SynthDomainSpec};
pub use window::{
    derelativize_points, leave_one_out_split, make_batches, relativize, window_scene, Batch,
    TrajectoryWindow, WindowAgent,
};
