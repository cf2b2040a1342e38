//! Core algorithms for attribute-based noisy multi-label learning.
//!
//! The pipeline: learn per-image virtual attributes against class name
//! embeddings ([`val`]), split samples into clean and noisy by ranking
//! agreement ([`detect`]), relabel noisy samples from their attribute-space
//! neighbours ([`graph`], [`relabel`]), then retrain a linear multi-label
//! classifier on the corrected labels ([`classifier`]) and score it
//! ([`metrics`]). [`synth`] generates controlled corpora for all of it.

pub mod classifier;
pub mod data;
pub mod detect;
pub mod error;
pub mod graph;
pub mod io;
pub mod matrix;
pub mod metrics;
pub mod num;
pub mod optim;
pub mod relabel;
pub mod rng;
pub mod synth;
pub mod val;

pub use classifier::{bce_loss, ClfConfig, MultiLabelClassifier, TrainedClassifier};
pub use data::{validate_dataset, Dataset, EmbeddingMatrix, LabelKind, LabelMatrix};
pub use detect::{is_clean, rank_labels, split_clean_noisy, split_with_rankings, CleanNoisySplit};
pub use error::{Error, Result};
pub use graph::{edge_weight, squared_distance, AttributeGraph};
pub use matrix::Matrix;
pub use metrics::{
    auc_roc, detection_metrics, evaluate, recovery_metrics, DetectionMetrics, EvalReport,
    RecoveryReport, SkippedClass,
};
pub use num::{sigmoid, softplus};
pub use optim::{cosine_lr, milestone_lr, Adam, LrSchedule};
pub use relabel::{relabel, smooth_labels, RelabelConfig};
pub use rng::{stream_rng, Stream};
pub use synth::{generate, generate_test_split, SynthConfig, SynthOutput};
pub use val::{batch_objective, class_scores, val_loss, AttributeProjector, TrainedVal, ValConfig};
