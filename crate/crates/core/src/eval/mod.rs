//! Per-response accuracy, per-dialogue accuracy, BLEU and entity F1.

mod evaluate;
mod metrics;

pub use evaluate::{evaluate_model, evaluate_samples, Evaluation};
pub use metrics::{
    bleu_average, entity_counts, entity_f1, per_dialogue_accuracy, per_response_accuracy,
    sentence_bleu, EntityCounts, MetricsReport,
};
