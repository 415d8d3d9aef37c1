//! Correlation statistics and the fold, baseline and transfer scoring built
//! on them.

mod scoring;
mod stats;

pub use scoring::{
    baseline_full, baseline_validation, distribution_dump, score_cell, score_validation,
    transfer_test, Aggregate, CellScore, DistributionRow, FoldScore,
};
pub use stats::{
    average_ranks, pearson, permutation_p_value, significance, spearman, CorrelationKind,
    CorrelationReport, MAX_EXACT_PERMUTATION_N,
};
