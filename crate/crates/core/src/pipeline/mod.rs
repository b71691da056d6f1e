//! End-user workflows behind the `autotune` command.

pub mod baseline;
pub mod clips;
pub mod config;
pub mod correct;
pub mod eval;
pub mod infer;
pub mod stats;
pub mod train;

pub use baseline::{baseline_correct, baseline_shift_cents, cmd_baseline};
pub use clips::{cmd_clips, sample_clips, Clip, ClipParams, ClipSelection};
pub use config::{parse_config_file, parse_config_str, TrainConfig};
pub use correct::{
    analyze_vocal, cmd_correct, correct_performance, read_performance, CorrectionReport, NoteReport,
};
pub use eval::{cmd_eval, evaluate, load_split, EvalReport, NoteResidual};
pub use infer::{NetPredictor, NotePredictor, ZeroPredictor};
pub use stats::{deviation_stats, summarize_deviations, DeviationStats};
pub use train::{cmd_train, train_note_step, TrainSummary, BEST_CHECKPOINT};
