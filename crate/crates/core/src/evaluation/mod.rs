//! Leave-one-group-out evaluation of selection methods.
//!
//! Each fold holds out every variant of one core dataset. Methods are fitted
//! on the remaining rows only (reads are routed through [`FoldAccess`], which
//! counts any test-row access before selection), then each held-out dataset
//! is scored by the ALC of the chosen pipeline and its regret against the
//! row's best observed cell. Reports aggregate regret, per-dataset ranks and
//! paired signed-rank tests with Holm correction.

mod folds;
mod protocol;
mod report;
mod stats;

pub use folds::{make_logo_folds, FoldSpec};
pub use protocol::{
    checkpoint_grid, choose_observed, evaluate_method, evaluate_oracle, inner_cv_epochs, monotone_distortion, regret,
    sparsity_sweep, EvalConfig, FoldAccess, N_CHECKPOINTS,
};
pub use report::{
    rank_reports, report_json, round6, significance_csv, summary_csv, sweep_csv, DatasetOutcome, EvalReport,
    TaskRecord,
};
pub use stats::{
    average_ranks, format_rank, holm_correction, mean_std, midranks, wilcoxon_signed_rank, RankTable, WilcoxonResult,
    EXACT_MAX_N, MIN_PAIRS,
};
