//! The three-phase message-passing model, its ablation baseline and the
//! feature-recovery probe.

mod checkpoint;
mod config;
mod embedding;
mod grafenne;
mod layers;
mod probe;
mod structure;
mod vanilla;

pub use checkpoint::Checkpoint;
pub use config::{Backend, GrafenneConfig, SamplingCaps};
pub use embedding::FeatureEmbeddingTable;
pub use grafenne::{GrafenneModel, LayerState};
pub use layers::{Attended, GrafenneLayer, GraphConv};
pub use probe::{recovery_probe, ProbeConfig, ProbeResult};
pub use structure::{sample_caps, EdgeList, GraphAdjacency, MessageStructure};
pub use vanilla::VanillaAltModel;
