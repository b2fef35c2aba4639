//! Mini-batch Adam training, evaluation, attention profiling and the noise sweep.

mod adam;
mod fit;
mod metrics;
mod profile;
mod sweep;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use fit::{
    batch_gradient, check_compatible, evaluate, history_csv, predict, train, EpochRecord, PatchSets, TrainConfig,
    TrainOutcome,
};
pub use metrics::{argmax_classes, f1_score, ClassMetrics, Confusion, Metrics, Timing};
pub use profile::{attention_profile, majority_class, AttentionProfile};
pub use sweep::{noise_sweep, sweep_csv, SweepConfig, SweepRow};
