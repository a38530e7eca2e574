//! Node classification and link prediction on top of the encoders, with the
//! training protocol and the experiment grid.

mod experiment;
mod link;
mod metrics;
mod model;
mod train;

pub use experiment::*;
pub use link::{labelled_pairs, link_score, negative_sample, LinkSplit, Pair};
pub use metrics::{accuracy, argmax_rows, auc_roc, display_std, mean_std};
pub use model::{labels_of, node_loss, Encoder, EncoderKind, GraphInput, TaskModel};
pub use train::{
    evaluate_accuracy, evaluate_auc, train_link_predictor, train_node_classifier, NodeSplit, Task, TrainConfig,
    TrainOutcome,
};
